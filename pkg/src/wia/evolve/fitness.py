"""Annotation-driven fitness.

Each annotation contributes one penalty term, measured against the value
the user saw (the anchor): CORRECT penalizes any deviation
quadratically, TOO_HIGH is satisfied (zero) once the value drops below
anchor minus a margin and grows quadratically above that line, TOO_LOW
mirrors it.  Distances are scaled by max(1, |anchor|) so cells of very
different magnitude weigh alike; the margin is epsilon times that scale.
Values that are not numbers (errors, text, booleans, empties) take a
fixed 1e6 penalty.  Lower is better; 0 means every term is satisfied.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..errors import EmptyAnnotationSet
from ..evaluate import evaluate_cells
from ..formula import Node
from ..model import CellAddress, CellValue, Workbook
from .genome import Genome, apply_genome

NON_NUMBER_PENALTY = 1.0e6
DEFAULT_EPSILON = 0.05

# value tags shared with the evaluation tape
TAG_EMPTY = 0
TAG_NUMBER = 1
TAG_BOOLEAN = 2
TAG_TEXT = 3
TAG_ERR_DIV0 = 4
TAG_ERR_VALUE = 5
TAG_ERR_CYCLE = 6
TAG_ERR_REF = 7
TAG_ERR_NAME = 8

_ERROR_TAGS = {"DIV0": TAG_ERR_DIV0, "VALUE": TAG_ERR_VALUE,
               "CYCLE": TAG_ERR_CYCLE, "REF": TAG_ERR_REF,
               "NAME": TAG_ERR_NAME}


def value_tag(value: CellValue) -> tuple[int, float]:
    """(tag, number) pair for a cell value; the number is 0.0 unless the
    tag is TAG_NUMBER, matching what the tape executors emit."""
    if value.kind == "number":
        return TAG_NUMBER, value.number_value
    if value.kind == "text":
        return TAG_TEXT, 0.0
    if value.kind == "boolean":
        return TAG_BOOLEAN, 0.0
    if value.kind == "empty":
        return TAG_EMPTY, 0.0
    return _ERROR_TAGS[value.error_kind.name], 0.0


class Verdict(enum.Enum):
    CORRECT = "correct"
    TOO_HIGH = "too_high"
    TOO_LOW = "too_low"


@dataclass(frozen=True)
class Annotation:
    cell: CellAddress
    verdict: Verdict
    anchor: float
    round: int = 0


@dataclass(frozen=True)
class FitnessTerm:
    annotation: Annotation
    scale: float
    margin: float


@dataclass(frozen=True)
class FitnessSpec:
    terms: tuple[FitnessTerm, ...]
    epsilon: float

    @property
    def cells(self) -> list[CellAddress]:
        """Annotated cells in term order, duplicates kept."""
        return [t.annotation.cell for t in self.terms]


def build_fitness(annotations: list[Annotation],
                  epsilon: float = DEFAULT_EPSILON) -> FitnessSpec:
    if not annotations:
        raise EmptyAnnotationSet("at least one annotation is required")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    terms = []
    for a in annotations:
        scale = max(1.0, abs(a.anchor))
        terms.append(FitnessTerm(a, scale, epsilon * scale))
    return FitnessSpec(tuple(terms), epsilon)


def term_penalty(term: FitnessTerm, value: CellValue) -> float:
    """Penalty of one term against one computed cell value."""
    if value.kind != "number":
        return NON_NUMBER_PENALTY
    v = value.number_value
    a = term.annotation
    if a.verdict is Verdict.CORRECT:
        d = (v - a.anchor) / term.scale
        return d * d
    if a.verdict is Verdict.TOO_HIGH:
        limit = a.anchor - term.margin
        if v <= limit:
            return 0.0
        d = (v - limit) / term.scale
        return d * d
    limit = a.anchor + term.margin
    if v >= limit:
        return 0.0
    d = (v - limit) / term.scale
    return d * d


def term_penalty_batch(term: FitnessTerm, tags: np.ndarray,
                       values: np.ndarray) -> np.ndarray:
    """Vectorized term_penalty over one population column; bit-identical
    to the scalar version (same operations in the same order)."""
    a = term.annotation
    if a.verdict is Verdict.CORRECT:
        d = (values - a.anchor) / term.scale
        penalty = d * d
    elif a.verdict is Verdict.TOO_HIGH:
        limit = a.anchor - term.margin
        d = (values - limit) / term.scale
        penalty = np.where(values <= limit, 0.0, d * d)
    else:
        limit = a.anchor + term.margin
        d = (values - limit) / term.scale
        penalty = np.where(values >= limit, 0.0, d * d)
    return np.where(tags != TAG_NUMBER, NON_NUMBER_PENALTY, penalty)


def spec_penalty(spec: FitnessSpec,
                 values: dict[CellAddress, CellValue]) -> float:
    total = 0.0
    for term in spec.terms:
        total += term_penalty(term, values[term.annotation.cell])
    return total


def evaluate_fitness(spec: FitnessSpec, genome: Genome,
                     base: Workbook,
                     asts: dict[CellAddress, Node] | None = None) -> float:
    """Reference fitness path: rewrite the workbook, evaluate the
    annotated cells, sum the term penalties."""
    model = apply_genome(base, genome, asts)
    result = evaluate_cells(model, set(spec.cells))
    return spec_penalty(spec, result.values)
