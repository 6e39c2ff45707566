"""Genomes over the numeric literals of a workbook's formulas.

Every NumberLit in every formula cell is one slot, collected in address
order then left-to-right within the formula.  A genome assigns one float
per slot.  Genes are the optimizer's view: by default one gene per slot,
or one gene shared by a whole run of structurally identical cells when
``tie_genes_by_segment`` is on (cells of one segment share a normalized
formula, hence literal spellings, so tied slots start from equal values).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..formula import (LiteralSlot, Node, extract_literal_slots,
                       parse_workbook_formulas, print_formula,
                       rewrite_literals)
from ..model import Cell, CellAddress, Sheet, Workbook
from ..segments import GroupKind, generate_groups


@dataclass(frozen=True)
class Genome:
    """Per-slot literal values; slots tuple is shared across a session."""

    slots: tuple[LiteralSlot, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.slots) != len(self.values):
            raise ValueError("genome length does not match slot count")


def collect_slots(workbook: Workbook,
                  asts: dict[CellAddress, Node] | None = None,
                  ) -> tuple[LiteralSlot, ...]:
    if asts is None:
        asts = parse_workbook_formulas(workbook)
    slots: list[LiteralSlot] = []
    for cell in workbook.iter_cells():
        if cell.is_formula:
            slots.extend(extract_literal_slots(asts[cell.address],
                                               cell.address))
    return tuple(slots)


def identity_genome(slots: tuple[LiteralSlot, ...]) -> Genome:
    return Genome(slots, tuple(s.original_value for s in slots))


@dataclass(frozen=True)
class GeneMap:
    """slot index -> gene index, plus per-gene base value and mutation
    scale (0.1 * max(1, |base|))."""

    gene_of: tuple[int, ...]
    base: tuple[float, ...]

    @property
    def n_genes(self) -> int:
        return len(self.base)

    def sigma(self) -> np.ndarray:
        return 0.1 * np.maximum(1.0, np.abs(np.asarray(self.base)))

    def expand(self, genes: np.ndarray) -> np.ndarray:
        """Gene matrix/vector to per-slot values."""
        return genes[..., np.asarray(self.gene_of, dtype=np.intp)]

    def genes_matrix(self) -> np.ndarray:
        return np.asarray(self.base, dtype=np.float64)


def build_gene_map(workbook: Workbook, slots: tuple[LiteralSlot, ...],
                   tie_by_segment: bool) -> GeneMap:
    """Untied: one gene per slot.  Tied: slots at the same literal
    position inside one segment group share a gene."""
    if not tie_by_segment:
        return GeneMap(tuple(range(len(slots))),
                       tuple(s.original_value for s in slots))
    groups, _ = generate_groups(workbook)
    segment_of: dict[CellAddress, str] = {}
    for group in groups:
        if group.kind is GroupKind.SEGMENT:
            for c in group.cells:
                segment_of[c] = group.id
    keys: dict[object, int] = {}
    gene_of: list[int] = []
    base: list[float] = []
    for i, slot in enumerate(slots):
        seg = segment_of.get(slot.owner)
        key = (seg, slot.ordinal) if seg is not None else ("cell", i)
        if key not in keys:
            keys[key] = len(base)
            base.append(slot.original_value)
        gene_of.append(keys[key])
    return GeneMap(tuple(gene_of), tuple(base))


def apply_genome(workbook: Workbook, genome: Genome,
                 asts: dict[CellAddress, Node] | None = None) -> Workbook:
    """New workbook with every formula's literals replaced by the
    genome's values; everything else (cells, sheet order, metadata)
    unchanged."""
    if asts is None:
        asts = parse_workbook_formulas(workbook)
    by_owner: dict[CellAddress, dict[int, float]] = {}
    for slot, value in zip(genome.slots, genome.values):
        by_owner.setdefault(slot.owner, {})[slot.ordinal] = value
    sheets = []
    for sheet in workbook.sheets:
        cells = {}
        for (row, col), cell in sheet.cells.items():
            assignment = by_owner.get(cell.address)
            if cell.is_formula and assignment:
                ast = rewrite_literals(asts[cell.address], assignment)
                cell = Cell(cell.address,
                            formula=print_formula(ast, cell.address.sheet))
            cells[(row, col)] = cell
        sheets.append(Sheet(sheet.name, cells))
    return Workbook(sheets, dict(workbook.metadata))
