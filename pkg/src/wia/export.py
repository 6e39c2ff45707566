"""Structure serialization: group/cell graph to JSON (schema wia-graph/1)
and to DOT."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .dataflow import CellGraph
from .errors import SchemaError
from .formula import normalize, parse_formula
from .model import CellAddress, CellValue, Workbook, cell_data_type, parse_address
from .segments import Group, GroupKind

SCHEMA_VERSION = "wia-graph/1"


@dataclass
class GroupSummary:
    id: str
    kind: str  # SEGMENT | SINGLETON
    direction: str | None
    sheet: str
    range_text: str
    length: int
    data_type: str
    normalized_formula: str | None
    referenced_groups: list[str]
    cells: list[str]


@dataclass
class GroupEdge:
    source: str
    target: str
    multiplicity: int


@dataclass
class StructureGraph:
    groups: list[GroupSummary] = field(default_factory=list)
    group_edges: list[GroupEdge] = field(default_factory=list)
    # cell-level extras, present when built with include_cells
    cell_edges: list[tuple[str, str, int]] | None = None
    dangling: list[tuple[str, list[str]]] | None = None
    # address text -> JSON value, present when built with values
    values: dict[str, object] | None = None


def _singleton_range(addr: CellAddress) -> str:
    return addr.ref_text()


def build_structure(workbook: Workbook, groups: list[Group],
                    graph: CellGraph,
                    values: dict[CellAddress, CellValue] | None = None,
                    include_cells: bool = False) -> StructureGraph:
    """Lift the cell graph onto the groups.  Cell edges inside one group
    surface as a self-edge so no edge is lost in the lift."""
    structure = StructureGraph()
    group_of: dict[CellAddress, str] = {}
    index_of: dict[str, int] = {}
    for i, group in enumerate(groups):
        index_of[group.id] = i
        for c in group.cells:
            group_of[c] = group.id
        if group.kind is GroupKind.SEGMENT:
            seg = group.segment
            summary = GroupSummary(
                group.id, group.kind.value, group.direction.value,
                seg.sheet, seg.range_text(), seg.length,
                seg.data_type.value, seg.normalized_formula,
                list(group.referenced_groups),
                [str(c) for c in group.cells])
        else:
            addr = group.cells[0]
            cell = workbook.cell(addr)
            norm = None
            if cell.is_formula:
                norm = normalize(parse_formula(cell.formula, addr.sheet))
            summary = GroupSummary(
                group.id, group.kind.value, None, addr.sheet,
                _singleton_range(addr), 1, cell_data_type(cell).value,
                norm, list(group.referenced_groups), [str(addr)])
        structure.groups.append(summary)

    counts: dict[tuple[str, str], int] = {}
    for edge in graph.edges:
        key = (group_of[edge.precedent], group_of[edge.dependent])
        counts[key] = counts.get(key, 0) + 1
    for (src, dst) in sorted(counts, key=lambda k: (index_of[k[0]],
                                                    index_of[k[1]])):
        structure.group_edges.append(GroupEdge(src, dst, counts[(src, dst)]))

    if include_cells:
        structure.cell_edges = [(str(e.precedent), str(e.dependent),
                                 e.ref_ordinal) for e in graph.edges]
        structure.dangling = [
            (str(dep), [str(a) for a in targets])
            for dep, targets in sorted(graph.dangling.items(),
                                       key=lambda kv: kv[0].sort_key())]
    if values is not None:
        structure.values = {
            str(addr): values[addr].to_json()
            for addr in sorted(values, key=CellAddress.sort_key)}
    return structure


# ---------------------------------------------------------------------------
# JSON


def export_json(structure: StructureGraph) -> bytes:
    doc: dict = {
        "version": SCHEMA_VERSION,
        "groups": [{
            "id": g.id,
            "kind": g.kind,
            "direction": g.direction,
            "sheet": g.sheet,
            "range": g.range_text,
            "length": g.length,
            "data_type": g.data_type,
            "normalized_formula": g.normalized_formula,
            "referenced_groups": g.referenced_groups,
            "cells": g.cells,
        } for g in structure.groups],
        "group_edges": [{
            "from": e.source,
            "to": e.target,
            "multiplicity": e.multiplicity,
        } for e in structure.group_edges],
    }
    if structure.cell_edges is not None:
        doc["cell_edges"] = [{"from": a, "to": b, "ordinal": n}
                             for a, b, n in structure.cell_edges]
        doc["dangling"] = [{"cell": dep, "missing": targets}
                           for dep, targets in structure.dangling or []]
    if structure.values is not None:
        doc["values"] = structure.values
    return (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode()


def _expect(cond: bool, message: str, path: str):
    if not cond:
        raise SchemaError(message, path)


def import_json(data: bytes | str) -> StructureGraph:
    """Inverse of export_json; validates the schema version."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    _expect(isinstance(doc, dict), "document must be an object", "$")
    _expect(doc.get("version") == SCHEMA_VERSION,
            f"unsupported version {doc.get('version')!r}", "$.version")
    structure = StructureGraph()
    for i, g in enumerate(doc.get("groups", [])):
        path = f"$.groups[{i}]"
        _expect(isinstance(g, dict), "group must be an object", path)
        structure.groups.append(GroupSummary(
            g["id"], g["kind"], g.get("direction"), g["sheet"], g["range"],
            g["length"], g["data_type"], g.get("normalized_formula"),
            list(g.get("referenced_groups", [])), list(g.get("cells", []))))
    for i, e in enumerate(doc.get("group_edges", [])):
        path = f"$.group_edges[{i}]"
        _expect(isinstance(e, dict), "edge must be an object", path)
        structure.group_edges.append(
            GroupEdge(e["from"], e["to"], e["multiplicity"]))
    if "cell_edges" in doc:
        structure.cell_edges = [(e["from"], e["to"], e["ordinal"])
                                for e in doc["cell_edges"]]
        structure.dangling = [(d["cell"], list(d["missing"]))
                              for d in doc.get("dangling", [])]
    if "values" in doc:
        structure.values = dict(doc["values"])
    return structure


# ---------------------------------------------------------------------------
# DOT


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(structure: StructureGraph, level: str = "group") -> str:
    """DOT digraph; level "group" draws one node per group (box for
    segments, ellipse for singletons), level "cell" one node per cell."""
    level = level.lower()
    if level not in ("group", "cell"):
        raise ValueError(f"level must be group or cell, not {level!r}")
    lines = ["digraph wia {"]
    if level == "group":
        for g in structure.groups:
            label = f"{g.sheet}!{g.range_text}"
            if g.normalized_formula is not None:
                label += "\\n" + g.normalized_formula
            shape = "box" if g.kind == "SEGMENT" else "ellipse"
            lines.append(f"  {_dot_quote(g.id)} [label={_dot_quote(label)}, "
                         f"shape={shape}];")
        for e in structure.group_edges:
            lines.append(f"  {_dot_quote(e.source)} -> {_dot_quote(e.target)}"
                         f" [label={_dot_quote(str(e.multiplicity))}];")
    else:
        if structure.cell_edges is None:
            raise ValueError("structure was built without cell-level data")
        cells = sorted({c for g in structure.groups for c in g.cells},
                       key=lambda s: parse_address(s, "?").sort_key())
        for c in cells:
            lines.append(f"  {_dot_quote(c)};")
        for a, b, _ in structure.cell_edges:
            lines.append(f"  {_dot_quote(a)} -> {_dot_quote(b)};")
    lines.append("}")
    return "\n".join(lines) + "\n"
