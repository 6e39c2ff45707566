"""Topology-based structure extraction.

The pipeline scans each sheet's bounding-box matrix along both axes for
maximal runs of cells that stay contiguous, share a data type, and (for
formulas) share a normalized formula.  Formula runs are then split
wherever their references stop moving consistently: along a run every
reference occurrence must either stay put (PINNED) or advance by the scan
direction's unit offset (SHIFTED), with one constant mode per reference
ordinal over the whole run.  Where the mode flips mid-run the run
decomposes greedily: all constant-mode windows of length >= 2 compete,
longest first, earliest start on ties; cells left over become length-1
pieces.  One direction is then preferred (more cells covered by length
>= 2 runs, vertical on ties), its runs are all kept, and cross-direction
runs are kept longest-first where they do not overlap anything kept
already.  Kept runs become segment groups, every remaining cell a
singleton group, so the groups partition the instantiated cells.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .dataflow import CellGraph, build_cell_graph
from .formula import Node, Range, extract_refs, parse_workbook_formulas, normalize
from .model import (CellAddress, DataType, Workbook, cell_data_type,
                    index_to_col)


class Direction(enum.Enum):
    VERTICAL = "VERTICAL"
    HORIZONTAL = "HORIZONTAL"

    @property
    def delta(self) -> tuple[int, int]:
        """(row, col) offset of one scan step."""
        return (1, 0) if self is Direction.VERTICAL else (0, 1)


class RefMode(enum.Enum):
    SHIFTED = "SHIFTED"
    PINNED = "PINNED"


class GroupKind(enum.Enum):
    SEGMENT = "SEGMENT"
    SINGLETON = "SINGLETON"


# geometric shape of one reference occurrence:
# ("r", sheet_lower, row, col) or ("g", sheet_lower, r1, c1, r2, c2)
RefShape = tuple


def _ref_shapes(ast: Node) -> tuple[RefShape, ...]:
    shapes: list[RefShape] = []
    for entry in extract_refs(ast):
        t = entry.target
        if isinstance(t, Range):
            shapes.append(("g", t.start.sheet.lower(), t.start.row,
                           t.start.col, t.end.row, t.end.col))
        else:
            a = t.address
            shapes.append(("r", a.sheet.lower(), a.row, a.col))
    return tuple(shapes)


def _shape_mode(prev: RefShape, cur: RefShape, dr: int,
                dc: int) -> RefMode | None:
    """Relation of one reference occurrence between two adjacent cells."""
    if prev[0] != cur[0] or prev[1] != cur[1]:
        return None
    if prev[0] == "r":
        if (cur[2], cur[3]) == (prev[2], prev[3]):
            return RefMode.PINNED
        if (cur[2], cur[3]) == (prev[2] + dr, prev[3] + dc):
            return RefMode.SHIFTED
        return None
    if cur[2:] == prev[2:]:
        return RefMode.PINNED
    if cur[2:] == (prev[2] + dr, prev[3] + dc, prev[4] + dr, prev[5] + dc):
        return RefMode.SHIFTED
    return None


@dataclass
class Slot:
    """One instantiated cell's footprint in the matrix."""

    data_type: DataType
    normalized: str | None = None
    ref_shapes: tuple[RefShape, ...] | None = None


@dataclass
class GridMatrix:
    """Dense 0-based window over one sheet's instantiated bounding box."""

    sheet: str
    min_row: int
    min_col: int
    n_rows: int
    n_cols: int
    slots: list[list[Slot | None]]

    def slot(self, r: int, c: int) -> Slot | None:
        return self.slots[r][c]

    def address(self, r: int, c: int) -> CellAddress:
        return CellAddress(self.sheet, self.min_row + r, self.min_col + c)


@dataclass(frozen=True)
class Segment:
    """A run of cells along one direction (length 1 allowed for the
    leftovers of run decomposition)."""

    sheet: str
    direction: Direction
    start: CellAddress
    length: int
    data_type: DataType
    normalized_formula: str | None = None
    ref_modes: tuple[RefMode, ...] | None = None

    @property
    def id(self) -> str:
        tag = "V" if self.direction is Direction.VERTICAL else "H"
        return f"{tag}:{self.start}+{self.length}"

    def cells(self) -> list[CellAddress]:
        dr, dc = self.direction.delta
        return [CellAddress(self.sheet, self.start.row + i * dr,
                            self.start.col + i * dc)
                for i in range(self.length)]

    def range_text(self) -> str:
        first = f"{index_to_col(self.start.col)}{self.start.row}"
        if self.length == 1:
            return first
        last = self.cells()[-1]
        return f"{first}:{index_to_col(last.col)}{last.row}"


@dataclass
class Group:
    id: str
    kind: GroupKind
    cells: list[CellAddress]
    referenced_groups: list[str] = field(default_factory=list)
    direction: Direction | None = None
    segment: Segment | None = None


# ---------------------------------------------------------------------------
# step 1: matrix construction


def build_matrix(workbook: Workbook,
                 asts: dict[CellAddress, Node] | None = None,
                 ) -> list[GridMatrix]:
    """One dense matrix per nonempty sheet, over its bounding box."""
    if asts is None:
        asts = parse_workbook_formulas(workbook)
    matrices = []
    for sheet in workbook.sheets:
        box = sheet.bounding_box()
        if box is None:
            continue
        min_row, min_col, max_row, max_col = box
        n_rows = max_row - min_row + 1
        n_cols = max_col - min_col + 1
        slots: list[list[Slot | None]] = [[None] * n_cols
                                          for _ in range(n_rows)]
        for (row, col), cell in sheet.cells.items():
            if cell.is_formula:
                ast = asts[cell.address]
                slot = Slot(DataType.FORMULA, normalize(ast),
                            _ref_shapes(ast))
            else:
                slot = Slot(cell_data_type(cell))
            slots[row - min_row][col - min_col] = slot
        matrices.append(GridMatrix(sheet.name, min_row, min_col,
                                   n_rows, n_cols, slots))
    return matrices


# ---------------------------------------------------------------------------
# steps 2-3: directional run scan


def _lines(matrix: GridMatrix, direction: Direction):
    """Cell positions of each scan line, in scan order."""
    if direction is Direction.VERTICAL:
        for c in range(matrix.n_cols):
            yield [(r, c) for r in range(matrix.n_rows)]
    else:
        for r in range(matrix.n_rows):
            yield [(r, c) for c in range(matrix.n_cols)]


def _compatible(a: Slot, b: Slot) -> bool:
    if a.data_type is not b.data_type:
        return False
    if a.data_type is DataType.FORMULA:
        return a.normalized == b.normalized
    return True


def generate_segments(matrix: GridMatrix,
                      direction: Direction) -> list[Segment]:
    """Maximal runs of present cells with one data type and, for formula
    runs, one normalized formula."""
    segments = []
    for line in _lines(matrix, direction):
        run: list[tuple[int, int]] = []
        prev: Slot | None = None
        for pos in line + [None]:
            slot = matrix.slot(*pos) if pos is not None else None
            if slot is not None and (prev is None or _compatible(prev, slot)):
                run.append(pos)
            else:
                if run:
                    segments.append(_run_segment(matrix, run, direction))
                run = [pos] if slot is not None else []
            prev = slot
        if run:
            segments.append(_run_segment(matrix, run, direction))
    return segments


def _run_segment(matrix: GridMatrix, run: list[tuple[int, int]],
                 direction: Direction,
                 ref_modes: tuple[RefMode, ...] | None = None) -> Segment:
    first = matrix.slot(*run[0])
    return Segment(matrix.sheet, direction, matrix.address(*run[0]),
                   len(run), first.data_type, first.normalized, ref_modes)


# ---------------------------------------------------------------------------
# step 4: reference-consistency split of formula runs


def _pair_modes(matrix: GridMatrix, a: tuple[int, int], b: tuple[int, int],
                direction: Direction) -> tuple[RefMode, ...] | None:
    """Mode vector between two adjacent cells, None when any reference
    occurrence moves illegally."""
    dr, dc = direction.delta
    sa = matrix.slot(*a)
    sb = matrix.slot(*b)
    if sa.ref_shapes is None or sb.ref_shapes is None \
            or len(sa.ref_shapes) != len(sb.ref_shapes):
        return None
    modes = []
    for prev, cur in zip(sa.ref_shapes, sb.ref_shapes):
        mode = _shape_mode(prev, cur, dr, dc)
        if mode is None:
            return None
        modes.append(mode)
    return tuple(modes)


def _decompose(matrix: GridMatrix, positions: list[tuple[int, int]],
               direction: Direction) -> list[Segment]:
    """Split one formula run into constant-mode segments.

    All windows of length >= 2 whose pair modes are constant compete
    greedily, longest first, earliest start on ties; uncovered cells
    come out as length-1 segments.
    """
    n = len(positions)
    pair = [_pair_modes(matrix, positions[i], positions[i + 1], direction)
            for i in range(n - 1)]
    windows = []
    for a in range(n - 1):
        if pair[a] is None:
            continue
        b = a + 1
        while b < n and pair[b - 1] == pair[a]:
            windows.append((a, b))
            b += 1
    windows.sort(key=lambda w: (-(w[1] - w[0]), w[0]))
    taken = [False] * n
    chosen = []
    for a, b in windows:
        if any(taken[a:b + 1]):
            continue
        for i in range(a, b + 1):
            taken[i] = True
        chosen.append((a, b))
    chosen.sort()
    out = []
    covered_to = 0
    for a, b in chosen:
        for i in range(covered_to, a):
            out.append(_run_segment(matrix, positions[i:i + 1], direction))
        out.append(_run_segment(matrix, positions[a:b + 1], direction,
                                ref_modes=pair[a]))
        covered_to = b + 1
    for i in range(covered_to, n):
        out.append(_run_segment(matrix, positions[i:i + 1], direction))
    return out


def parse_formula_segments(candidates: list[Segment],
                           matrix: GridMatrix) -> list[Segment]:
    """Apply the reference-consistency split to formula candidates;
    non-formula candidates pass through untouched."""
    out = []
    for seg in candidates:
        if seg.data_type is not DataType.FORMULA or seg.length < 2:
            out.append(seg)
            continue
        dr, dc = seg.direction.delta
        positions = [(seg.start.row - matrix.min_row + i * dr,
                      seg.start.col - matrix.min_col + i * dc)
                     for i in range(seg.length)]
        out.extend(_decompose(matrix, positions, seg.direction))
    return out


# ---------------------------------------------------------------------------
# steps 5-6: direction preference and pruning


def _coverage(segments: list[Segment]) -> int:
    return sum(s.length for s in segments if s.length >= 2)


def preferred_scan_direction(vertical: list[Segment],
                             horizontal: list[Segment]) -> Direction:
    """Direction whose length >= 2 runs cover more cells; vertical wins
    ties."""
    if _coverage(vertical) >= _coverage(horizontal):
        return Direction.VERTICAL
    return Direction.HORIZONTAL


def prune_segments(vertical: list[Segment], horizontal: list[Segment],
                   preferred: Direction) -> list[Segment]:
    """Keep every preferred-direction run of length >= 2, then fit
    cross-direction runs longest-first into the cells still free."""
    if preferred is Direction.VERTICAL:
        first, second = vertical, horizontal
    else:
        first, second = horizontal, vertical
    accepted = [s for s in first if s.length >= 2]
    covered: set[CellAddress] = set()
    for seg in accepted:
        covered.update(seg.cells())
    contenders = sorted((s for s in second if s.length >= 2),
                        key=lambda s: (-s.length, s.start.sort_key()))
    for seg in contenders:
        cells = seg.cells()
        if any(c in covered for c in cells):
            continue
        covered.update(cells)
        accepted.append(seg)
    return accepted


# ---------------------------------------------------------------------------
# steps 7-8: groups and their reference lists


def set_referenced_segments(groups: list[Group], cell_graph: CellGraph,
                            group_of: dict[CellAddress, str],
                            ) -> dict[str, list[str]]:
    """Ordered, deduplicated referenced-group list per group: scan each
    group's members in direction order and each member's reference
    occurrences in order (ranges row-major), lifting precedents to their
    groups."""
    feeds: dict[CellAddress, list[CellAddress]] = {}
    for edge in cell_graph.edges:
        feeds.setdefault(edge.dependent, []).append(edge.precedent)
    referenced: dict[str, list[str]] = {}
    for group in groups:
        seen: set[str] = set()
        ordered: list[str] = []
        for member in group.cells:
            for precedent in feeds.get(member, ()):
                gid = group_of[precedent]
                if gid not in seen:
                    seen.add(gid)
                    ordered.append(gid)
        referenced[group.id] = ordered
    return referenced


def generate_groups(workbook: Workbook) -> tuple[list[Group], CellGraph]:
    """Full pipeline: matrix, directional scans, reference split,
    direction preference, pruning, then groups (accepted runs plus
    singletons) with their referenced-group lists."""
    asts = parse_workbook_formulas(workbook)
    graph = build_cell_graph(workbook, asts)
    matrices = build_matrix(workbook, asts)
    vertical: list[Segment] = []
    horizontal: list[Segment] = []
    for matrix in matrices:
        vertical.extend(parse_formula_segments(
            generate_segments(matrix, Direction.VERTICAL), matrix))
        horizontal.extend(parse_formula_segments(
            generate_segments(matrix, Direction.HORIZONTAL), matrix))
    preferred = preferred_scan_direction(vertical, horizontal)
    accepted = prune_segments(vertical, horizontal, preferred)

    entries: list[tuple[GroupKind, list[CellAddress], Segment | None]] = []
    covered: set[CellAddress] = set()
    for seg in accepted:
        cells = seg.cells()
        covered.update(cells)
        entries.append((GroupKind.SEGMENT, cells, seg))
    for addr in workbook.addresses():
        if addr not in covered:
            entries.append((GroupKind.SINGLETON, [addr], None))
    entries.sort(key=lambda e: e[1][0].sort_key())

    groups: list[Group] = []
    group_of: dict[CellAddress, str] = {}
    for i, (kind, cells, seg) in enumerate(entries):
        gid = f"g{i}"
        groups.append(Group(gid, kind, cells,
                            direction=seg.direction if seg else None,
                            segment=seg))
        for c in cells:
            group_of[c] = gid

    referenced = set_referenced_segments(groups, graph, group_of)
    for group in groups:
        group.referenced_groups = referenced[group.id]
    return groups, graph
