"""Cell-level dataflow graph: who feeds whom, one edge per reference
occurrence after range expansion."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import UnknownCell
from .formula import Node, Range, extract_refs, parse_workbook_formulas
from .model import Cell, CellAddress, Sheet, Workbook


@dataclass(frozen=True)
class CellEdge:
    """precedent feeds dependent through the dependent's reference
    occurrence number ref_ordinal."""

    precedent: CellAddress
    dependent: CellAddress
    ref_ordinal: int


@dataclass
class CellGraph:
    nodes: set[CellAddress] = field(default_factory=set)
    edges: list[CellEdge] = field(default_factory=list)
    # dependent -> referenced addresses with no instantiated cell behind
    # them (absent cells, or any address on an unknown sheet)
    dangling: dict[CellAddress, list[CellAddress]] = field(
        default_factory=dict)

    def edge_set(self) -> set[CellEdge]:
        return set(self.edges)


def expand_range(sheet: Sheet, rng: Range) -> list[Cell]:
    """Instantiated cells covered by the range, row-major order.

    The walk is clamped to the sheet's bounding box; outside it nothing
    is instantiated, so the clamp never changes the result.
    """
    box = sheet.bounding_box()
    if box is None:
        return []
    min_row, min_col, max_row, max_col = box
    r1 = max(rng.start.row, min_row)
    c1 = max(rng.start.col, min_col)
    r2 = min(rng.end.row, max_row)
    c2 = min(rng.end.col, max_col)
    if r1 > r2 or c1 > c2:
        return []
    return sheet.cells_in_box(r1, c1, r2, c2)


def _range_gaps(sheet: Sheet | None, rng: Range) -> list[CellAddress]:
    """Addresses inside the range with no cell behind them."""
    sheet_name = sheet.name if sheet is not None else rng.start.sheet
    gaps = []
    for row in range(rng.start.row, rng.end.row + 1):
        for col in range(rng.start.col, rng.end.col + 1):
            if sheet is None or sheet.cell_at(row, col) is None:
                gaps.append(CellAddress(sheet_name, row, col))
    return gaps


def build_cell_graph(workbook: Workbook,
                     asts: dict[CellAddress, Node] | None = None) -> CellGraph:
    """One node per instantiated cell; for each formula cell, one edge per
    reference occurrence after ranges expand to the instantiated cells
    they cover.  References that hit no cell become dangling notes."""
    if asts is None:
        asts = parse_workbook_formulas(workbook)
    graph = CellGraph(nodes=set(workbook.addresses()))
    for cell in workbook.iter_cells():
        if not cell.is_formula:
            continue
        dependent = cell.address
        gaps: list[CellAddress] = []
        for entry in extract_refs(asts[dependent]):
            target = entry.target
            if isinstance(target, Range):
                sheet = workbook.sheet(target.start.sheet)
                if sheet is not None:
                    for hit in expand_range(sheet, target):
                        graph.edges.append(CellEdge(hit.address, dependent,
                                                    entry.ordinal))
                gaps.extend(_range_gaps(sheet, target))
            else:
                resolved = workbook.resolve(target.address)
                hit = workbook.cell(target.address)
                if hit is not None:
                    graph.edges.append(CellEdge(hit.address, dependent,
                                                entry.ordinal))
                elif resolved is not None:
                    gaps.append(resolved)
                else:
                    gaps.append(target.address.plain())
        if gaps:
            seen: set[CellAddress] = set()
            unique = []
            for g in gaps:
                if g not in seen:
                    seen.add(g)
                    unique.append(g)
            graph.dangling[dependent] = unique
    return graph


def transitive_precedents(graph: CellGraph,
                          cell: CellAddress) -> set[CellAddress]:
    """Every cell whose value can flow into ``cell``, the cell itself
    excluded even when it sits on a cycle."""
    if cell not in graph.nodes:
        raise UnknownCell(f"no cell {cell}")
    feeds: dict[CellAddress, set[CellAddress]] = {}
    for edge in graph.edges:
        feeds.setdefault(edge.dependent, set()).add(edge.precedent)
    seen: set[CellAddress] = set()
    frontier = [cell]
    while frontier:
        current = frontier.pop()
        for prev in feeds.get(current, ()):
            if prev not in seen:
                seen.add(prev)
                frontier.append(prev)
    seen.discard(cell)
    return seen
