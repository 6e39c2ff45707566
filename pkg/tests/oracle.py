"""Ground-truth reimplementations used as test oracles.

Everything here re-derives the grouping rules from scratch: token-level
formula masking instead of AST printing, quadratic window enumeration
instead of linear scans, and its own reference-coordinate parser.  The
only production code reused is the tokenizer (the parser has its own
round-trip oracle).  Token-level masking matches the canonical
normalizer only on canonically written sources, which all generated
fixtures are.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from wia.formula import tokenize
from wia.model import Workbook

_REF_RE = re.compile(
    r"^(?:(?:'(?P<qsheet>(?:[^']|'')*)'|(?P<sheet>[A-Za-z_][A-Za-z0-9_]*))!)?"
    r"\$?(?P<col>[A-Za-z]{1,3})\$?(?P<row>[1-9][0-9]*)$")


def _col_number(letters: str) -> int:
    n = 0
    for ch in letters.upper():
        n = n * 26 + ord(ch) - ord("A") + 1
    return n


def _ref_coords(text: str, default_sheet: str) -> tuple[str, int, int]:
    m = _REF_RE.match(text)
    assert m is not None, text
    if m.group("qsheet") is not None:
        sheet = m.group("qsheet").replace("''", "'")
    elif m.group("sheet") is not None:
        sheet = m.group("sheet")
    else:
        sheet = default_sheet
    return sheet.lower(), int(m.group("row")), _col_number(m.group("col"))


def token_norm(source: str, default_sheet: str = "S1") -> str:
    """Formula text with every reference occurrence replaced by a mask,
    everything else kept verbatim (case-folded names)."""
    toks = tokenize(source, start=1)
    parts = []
    i = 0
    while i < len(toks):
        t = toks[i]
        if t.kind == "ref":
            if toks[i + 1].kind == "colon" and toks[i + 2].kind == "ref":
                parts.append("R:R")
                i += 3
                continue
            parts.append("R")
        elif t.kind != "eof":
            parts.append(t.text.upper() if t.kind == "name" else t.text)
        i += 1
    return "".join(parts)


def token_refs(source: str, default_sheet: str) -> list[tuple]:
    """Reference shapes in source order: ("r", sheet, row, col) for a
    cell, ("g", sheet, r1, c1, r2, c2) for a range (corners sorted)."""
    toks = tokenize(source, start=1)
    shapes: list[tuple] = []
    i = 0
    while i < len(toks):
        t = toks[i]
        if t.kind == "ref":
            a = _ref_coords(t.text, default_sheet)
            if toks[i + 1].kind == "colon" and toks[i + 2].kind == "ref":
                b = _ref_coords(toks[i + 2].text, a[0])
                shapes.append(("g", a[0], min(a[1], b[1]), min(a[2], b[2]),
                               max(a[1], b[1]), max(a[2], b[2])))
                i += 3
                continue
            shapes.append(("r", a[0], a[1], a[2]))
        i += 1
    return shapes


# ---------------------------------------------------------------------------
# a sheet snapshot the rule checks can work from


@dataclass
class CellFacts:
    tag: str                 # FORMULA NUMBER TEXT BOOLEAN EMPTY
    norm: str | None         # masked formula text, formulas only
    shapes: list[tuple] | None


def _facts(workbook: Workbook) -> dict[tuple[str, int, int], CellFacts]:
    out: dict[tuple[str, int, int], CellFacts] = {}
    for sheet in workbook.sheets:
        for (row, col), cell in sheet.cells.items():
            if cell.is_formula:
                out[(sheet.name, row, col)] = CellFacts(
                    "FORMULA", token_norm(cell.formula, sheet.name),
                    token_refs(cell.formula, sheet.name))
            else:
                v = cell.value
                if v.kind == "number":
                    tag = "NUMBER"
                elif v.kind == "text":
                    tag = "TEXT"
                elif v.kind == "boolean":
                    tag = "BOOLEAN"
                else:
                    tag = "EMPTY"
                out[(sheet.name, row, col)] = CellFacts(tag, None, None)
    return out


def pair_mode(prev: tuple, cur: tuple, dr: int, dc: int) -> str | None:
    """PINNED / SHIFTED / None for one reference occurrence across one
    scan step."""
    if prev[0] != cur[0] or prev[1] != cur[1]:
        return None
    body_prev, body_cur = prev[2:], cur[2:]
    if body_cur == body_prev:
        return "PINNED"
    if prev[0] == "r":
        moved = (body_prev[0] + dr, body_prev[1] + dc)
    else:
        moved = (body_prev[0] + dr, body_prev[1] + dc,
                 body_prev[2] + dr, body_prev[3] + dc)
    if body_cur == moved:
        return "SHIFTED"
    return None


def modes_between(a: CellFacts, b: CellFacts, dr: int,
                  dc: int) -> tuple[str, ...] | None:
    if a.shapes is None or b.shapes is None or len(a.shapes) != len(b.shapes):
        return None
    modes = []
    for prev, cur in zip(a.shapes, b.shapes):
        m = pair_mode(prev, cur, dr, dc)
        if m is None:
            return None
        modes.append(m)
    return tuple(modes)


# ---------------------------------------------------------------------------
# rule checkers (acceptance: R1-R4 per accepted segment, R5 partition)


def check_rules(workbook: Workbook, groups) -> None:
    """Assert R1-R4 on every segment group cell-by-cell and R5 on the
    group set; raises AssertionError with the offending detail."""
    facts = _facts(workbook)
    for g in groups:
        if g.kind.name != "SEGMENT":
            assert len(g.cells) == 1, f"{g.id}: singleton with many cells"
            continue
        cells = g.cells
        assert len(cells) >= 2, f"{g.id}: segment below minimum length"
        dr, dc = (1, 0) if g.direction.name == "VERTICAL" else (0, 1)
        member = [facts[(c.sheet, c.row, c.col)] for c in cells]
        for i, (a, b) in enumerate(zip(cells, cells[1:])):
            assert b.sheet == a.sheet, f"{g.id}: cell {i + 1} changes sheet"
            assert (b.row, b.col) == (a.row + dr, a.col + dc), \
                f"{g.id}: cells {i}..{i + 1} not contiguous"  # R1
        tags = {m.tag for m in member}
        assert len(tags) == 1, f"{g.id}: mixed data types {tags}"  # R2
        if member[0].tag == "FORMULA":
            norms = {m.norm for m in member}
            assert len(norms) == 1, f"{g.id}: mixed formulas {norms}"  # R3
            vectors = {modes_between(a, b, dr, dc)
                       for a, b in zip(member, member[1:])}
            assert None not in vectors, f"{g.id}: illegal reference move"
            assert len(vectors) == 1, f"{g.id}: mode flips {vectors}"  # R4
            if g.segment is not None and g.segment.ref_modes is not None:
                stored = tuple(m.name for m in g.segment.ref_modes)
                assert stored == next(iter(vectors)), \
                    f"{g.id}: stored modes disagree"
    counted = sum(len(g.cells) for g in groups)
    union = {c for g in groups for c in g.cells}
    everything = set(workbook.addresses())
    assert union == everything, "groups miss or invent cells"  # R5
    assert counted == len(everything), "groups overlap"  # R5


# ---------------------------------------------------------------------------
# brute-force group enumerator


@dataclass
class OracleSegment:
    sheet: str
    direction: str           # VERTICAL / HORIZONTAL
    cells: list[tuple[str, int, int]]
    tag: str
    modes: tuple[str, ...] | None = None


def _sheet_runs(positions: list[tuple[str, int, int]],
                facts: dict, direction: str) -> list[OracleSegment]:
    """All maximal R1-R3 runs of one scan line, found by testing every
    window for validity and keeping the unextendable ones."""
    n = len(positions)
    present = [p in facts for p in positions]

    def valid(i: int, j: int) -> bool:
        if not all(present[i:j + 1]):
            return False
        first = facts[positions[i]]
        for k in range(i, j + 1):
            f = facts[positions[k]]
            if f.tag != first.tag:
                return False
            if f.tag == "FORMULA" and f.norm != first.norm:
                return False
        return True

    runs = []
    for i in range(n):
        for j in range(i, n):
            if not valid(i, j):
                continue
            if i > 0 and valid(i - 1, j):
                continue
            if j < n - 1 and valid(i, j + 1):
                continue
            runs.append(OracleSegment(positions[i][0], direction,
                                      list(positions[i:j + 1]),
                                      facts[positions[i]].tag))
    return runs


def _split_run(run: OracleSegment, facts: dict, dr: int,
               dc: int) -> list[OracleSegment]:
    """Reference-consistency decomposition of one formula run: every
    window whose pair modes exist and agree competes, longest first,
    earliest start breaking ties; leftovers become length-1 pieces."""
    cells = run.cells
    n = len(cells)

    def window_modes(a: int, b: int) -> tuple[str, ...] | None:
        vectors = {modes_between(facts[cells[k]], facts[cells[k + 1]],
                                 dr, dc) for k in range(a, b)}
        if len(vectors) != 1 or None in vectors:
            return None
        return next(iter(vectors))

    windows = [(a, b) for a in range(n) for b in range(a + 1, n)
               if window_modes(a, b) is not None]
    windows.sort(key=lambda w: (-(w[1] - w[0]), w[0]))
    taken = [False] * n
    pieces = []
    for a, b in windows:
        if any(taken[a:b + 1]):
            continue
        for k in range(a, b + 1):
            taken[k] = True
        pieces.append(OracleSegment(run.sheet, run.direction,
                                    cells[a:b + 1], "FORMULA",
                                    window_modes(a, b)))
    for k in range(n):
        if not taken[k]:
            pieces.append(OracleSegment(run.sheet, run.direction,
                                        [cells[k]], "FORMULA"))
    pieces.sort(key=lambda p: p.cells[0])
    return pieces


def oracle_groups(workbook: Workbook) -> list[dict]:
    """Independent run of the whole pipeline; returns one dict per group
    with id, kind, direction, cells and referenced ids, in the
    production order."""
    facts = _facts(workbook)
    by_direction: dict[str, list[OracleSegment]] = {"VERTICAL": [],
                                                    "HORIZONTAL": []}
    for sheet in workbook.sheets:
        coords = [(r, c) for (r, c) in sheet.cells.keys()]
        if not coords:
            continue
        rows = [r for r, _ in coords]
        cols = [c for _, c in coords]
        r1, r2 = min(rows), max(rows)
        c1, c2 = min(cols), max(cols)
        for direction, lines in (
                ("VERTICAL", [[(sheet.name, r, c) for r in range(r1, r2 + 1)]
                              for c in range(c1, c2 + 1)]),
                ("HORIZONTAL", [[(sheet.name, r, c) for c in range(c1, c2 + 1)]
                                for r in range(r1, r2 + 1)])):
            dr, dc = (1, 0) if direction == "VERTICAL" else (0, 1)
            for line in lines:
                for run in _sheet_runs(line, facts, direction):
                    if run.tag == "FORMULA" and len(run.cells) >= 2:
                        by_direction[direction].extend(
                            _split_run(run, facts, dr, dc))
                    else:
                        by_direction[direction].append(run)

    def coverage(segs: list[OracleSegment]) -> int:
        return sum(len(s.cells) for s in segs if len(s.cells) >= 2)

    if coverage(by_direction["VERTICAL"]) >= coverage(
            by_direction["HORIZONTAL"]):
        preferred, other = "VERTICAL", "HORIZONTAL"
    else:
        preferred, other = "HORIZONTAL", "VERTICAL"

    accepted = [s for s in by_direction[preferred] if len(s.cells) >= 2]
    covered = {c for s in accepted for c in s.cells}
    contenders = sorted(
        (s for s in by_direction[other] if len(s.cells) >= 2),
        key=lambda s: (-len(s.cells), (s.cells[0][0].lower(),) + s.cells[0]))
    for s in contenders:
        if any(c in covered for c in s.cells):
            continue
        covered.update(s.cells)
        accepted.append(s)

    entries: list[tuple] = []
    for s in accepted:
        entries.append((s.cells, "SEGMENT", s.direction, s.modes))
    for sheet in workbook.sheets:
        for (row, col) in sheet.cells.keys():
            key = (sheet.name, row, col)
            if key not in covered:
                entries.append(([key], "SINGLETON", None, None))
    entries.sort(key=lambda e: (e[0][0][0].lower(),) + e[0][0])

    group_of: dict[tuple[str, int, int], str] = {}
    out = []
    for i, (cells, kind, direction, modes) in enumerate(entries):
        gid = f"g{i}"
        for c in cells:
            group_of[c] = gid
        out.append({"id": gid, "kind": kind, "direction": direction,
                    "cells": cells, "modes": modes, "referenced": []})

    sheets_lower = {s.name.lower(): s for s in workbook.sheets}
    for group in out:
        seen: set[str] = set()
        ordered: list[str] = []
        for (sheet_name, row, col) in group["cells"]:
            cell = sheets_lower[sheet_name.lower()].cell_at(row, col)
            if cell is None or not cell.is_formula:
                continue
            for shape in facts[(sheet_name, row, col)].shapes:
                hits: list[tuple[str, int, int]] = []
                target_sheet = sheets_lower.get(shape[1])
                if target_sheet is None:
                    continue
                if shape[0] == "r":
                    if target_sheet.cell_at(shape[2], shape[3]) is not None:
                        hits.append((target_sheet.name, shape[2], shape[3]))
                else:
                    for r in range(shape[2], shape[4] + 1):
                        for c in range(shape[3], shape[5] + 1):
                            if target_sheet.cell_at(r, c) is not None:
                                hits.append((target_sheet.name, r, c))
                for hit in hits:
                    gid = group_of[hit]
                    if gid not in seen:
                        seen.add(gid)
                        ordered.append(gid)
        group["referenced"] = ordered
    return out


def groups_to_comparable(groups) -> list[dict]:
    """Production groups in the oracle's comparison shape."""
    out = []
    for g in groups:
        modes = None
        if g.segment is not None and g.segment.ref_modes is not None:
            modes = tuple(m.name for m in g.segment.ref_modes)
        out.append({"id": g.id, "kind": g.kind.name,
                    "direction": g.direction.name if g.direction else None,
                    "cells": [(c.sheet, c.row, c.col) for c in g.cells],
                    "modes": modes, "referenced": list(g.referenced_groups)})
    return out


# ---------------------------------------------------------------------------
# grid search over genomes (evolution optimality oracle)


def grid_best_fitness(score_one, centers: list[float], span: float,
                      points_per_axis: int) -> float:
    """Exhaustive scan of a regular grid around ``centers`` (one or two
    genes); returns the best fitness seen."""
    axes = []
    for c in centers:
        width = span * max(1.0, abs(c))
        step = 2 * width / (points_per_axis - 1)
        axes.append([c - width + k * step for k in range(points_per_axis)])
    best = math.inf
    if len(axes) == 1:
        for x in axes[0]:
            best = min(best, score_one([x]))
    elif len(axes) == 2:
        for x in axes[0]:
            for y in axes[1]:
                best = min(best, score_one([x, y]))
    else:
        raise ValueError("grid oracle handles one or two genes")
    return best
