"""Executor selection and population scoring.

The compiled kernel is used when the extension built and the
environment variable WIA_FORCE_PURE is unset; otherwise the pure
executor runs the same tapes.  Workbooks the tape cannot represent
(text comparisons) fall back to rewriting the workbook per genome and
running the ordinary evaluator.  All three paths produce bit-identical
fitness numbers.
"""

from __future__ import annotations

import os

import numpy as np

from ..evaluate import evaluate_cells
from ..formula import Node, parse_workbook_formulas
from ..model import CellAddress, Workbook
from .fitness import FitnessSpec, term_penalty_batch, value_tag
from .genome import Genome, LiteralSlot, apply_genome
from .tape import Program, TapeUnsupported, compile_program, run_pure

if os.environ.get("WIA_FORCE_PURE"):
    _kernel = None
else:
    try:
        from . import _kernel  # type: ignore[attr-defined]
    except ImportError:
        _kernel = None


def backend_name() -> str:
    """"compiled" when the extension is active, else "pure"."""
    return "pure" if _kernel is None else "compiled"


def run_program(program: Program,
                genomes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tags and numeric values of the program's targets, one row per
    genome."""
    genomes = np.ascontiguousarray(genomes, dtype=np.float64)
    if genomes.ndim != 2 or genomes.shape[1] != program.n_slots:
        raise ValueError("genome matrix shape does not match the program")
    rows = genomes.shape[0]
    n_out = len(program.out_regs)
    out_tags = np.empty((rows, n_out), dtype=np.uint8)
    out_vals = np.empty((rows, n_out), dtype=np.float64)
    if _kernel is None:
        run_pure(program, genomes, out_tags, out_vals)
    else:
        _kernel.run_population(program.code, program.arg, program.farg,
                               program.reg_tags, program.reg_vals,
                               program.out_regs, genomes,
                               program.stack_need, out_tags, out_vals)
    return out_tags, out_vals


class FitnessEngine:
    """Scores whole populations against one fitness spec.

    Genomes are rows of literal-slot values.  Scoring compiles the
    annotated cells' dependency cone once and reruns it per row; the
    mode property tells which path actually runs.
    """

    def __init__(self, workbook: Workbook, spec: FitnessSpec,
                 slots: tuple[LiteralSlot, ...],
                 asts: dict[CellAddress, Node] | None = None):
        if asts is None:
            asts = parse_workbook_formulas(workbook)
        self.workbook = workbook
        self.spec = spec
        self.slots = slots
        self.asts = asts
        targets: list[CellAddress] = []
        seen: set[CellAddress] = set()
        for cell in spec.cells:
            if cell not in seen:
                seen.add(cell)
                targets.append(cell)
        self.targets = tuple(targets)
        self._column = {cell: i for i, cell in enumerate(targets)}
        slot_index = {(s.owner, s.ordinal): i for i, s in enumerate(slots)}
        try:
            self.program: Program | None = compile_program(
                workbook, asts, slot_index, self.targets)
        except TapeUnsupported:
            self.program = None

    @property
    def mode(self) -> str:
        if self.program is None:
            return "object"
        return backend_name()

    def run_targets(self, genomes: np.ndarray) -> tuple[np.ndarray,
                                                        np.ndarray]:
        if self.program is not None:
            return run_program(self.program, genomes)
        genomes = np.asarray(genomes, dtype=np.float64)
        rows = genomes.shape[0]
        out_tags = np.empty((rows, len(self.targets)), dtype=np.uint8)
        out_vals = np.empty((rows, len(self.targets)), dtype=np.float64)
        for row in range(rows):
            genome = Genome(self.slots, tuple(float(g) for g in genomes[row]))
            model = apply_genome(self.workbook, genome, self.asts)
            result = evaluate_cells(model, set(self.targets))
            for col, cell in enumerate(self.targets):
                tag, val = value_tag(result.values[cell])
                out_tags[row, col] = tag
                out_vals[row, col] = val
        return out_tags, out_vals

    def score(self, genomes: np.ndarray) -> np.ndarray:
        """Fitness per genome row; lower is better."""
        tags, vals = self.run_targets(genomes)
        total = np.zeros(tags.shape[0], dtype=np.float64)
        for term in self.spec.terms:
            col = self._column[term.annotation.cell]
            total = total + term_penalty_batch(term, tags[:, col],
                                               vals[:, col])
        return total

    def score_one(self, values: tuple[float, ...]) -> float:
        return float(self.score(np.asarray([values], dtype=np.float64))[0])
