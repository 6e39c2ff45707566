"""Round-based interactive refinement sessions.

A session pins a base workbook, accumulates annotations across rounds,
and carries one GA population forward.  The loop: the user annotates
cells of the model they are looking at, a step evolves the population
against all annotations so far and proposes candidates, the user picks
one, and the chosen genome becomes the model the next round's
annotations are anchored to (and the seed of the next population).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import (AnchorMismatch, NoAnnotations, SchemaError,
                      SessionStateError, UnknownCell, UnknownGenome)
from ..evaluate import evaluate, evaluate_cells
from ..formula import Node, parse_workbook_formulas
from ..model import CellAddress, CellValue, Workbook, parse_address
from .backend import FitnessEngine
from .fitness import Annotation, FitnessSpec, Verdict, build_fitness
from .ga import (EvolutionConfig, GAState, make_rng, run_ga,
                 seed_population)
from .genome import (Genome, GeneMap, apply_genome, build_gene_map,
                     collect_slots, identity_genome)

AWAITING_ANNOTATIONS = "AWAITING_ANNOTATIONS"
EVOLVED = "EVOLVED"
ACCEPTED = "ACCEPTED"

_ANCHOR_RTOL = 1e-9


@dataclass(frozen=True)
class Candidate:
    """One proposed model: a genome with its fitness and the values it
    gives the annotated cells."""

    genome_id: str
    genome: Genome
    genes: tuple[float, ...]
    fitness: float
    values: dict[CellAddress, CellValue]


class EvolutionSession:
    """Single-workbook refinement session; not thread-safe by itself
    (the service serializes access per session)."""

    def __init__(self, workbook: Workbook,
                 config: EvolutionConfig | None = None):
        self.config = config or EvolutionConfig()
        self.base = workbook
        self.asts: dict[CellAddress, Node] = parse_workbook_formulas(workbook)
        self.slots = collect_slots(workbook, self.asts)
        self.gene_map: GeneMap = build_gene_map(
            workbook, self.slots, self.config.tie_genes_by_segment)
        self.rng = make_rng(self.config.seed)
        self.t = 0
        self.status = AWAITING_ANNOTATIONS
        self.annotations: list[Annotation] = []
        self.spec: FitnessSpec | None = None
        self.population = seed_population(self.gene_map.genes_matrix(),
                                          self.gene_map.sigma(),
                                          self.config.population, self.rng)
        self.current_genome = identity_genome(self.slots)
        self.current_values = evaluate(workbook).values
        self.candidates: list[Candidate] = []
        self.history: list[tuple[int, float]] = []
        self._steps = 0

    # -- annotations ------------------------------------------------------

    def resolve_cell(self, address: CellAddress) -> CellAddress:
        resolved = self.base.resolve(address)
        if resolved is None or self.base.cell(resolved) is None:
            raise UnknownCell(f"no cell {address}")
        return resolved

    def add_annotations(self, annotations: list[Annotation]) -> None:
        """Validate against the current model and accumulate.

        Anchors must match the value the user is looking at (the current
        model) to within 1e-9 relative; the cell must hold a number
        there.
        """
        if self.status != AWAITING_ANNOTATIONS:
            raise SessionStateError(
                f"annotations are not accepted while {self.status}")
        stamped = []
        for a in annotations:
            cell = self.resolve_cell(a.cell)
            if not math.isfinite(a.anchor):
                raise SchemaError("'anchor' must be finite")
            if a.round != self.t:
                raise SchemaError(
                    f"'round' must be the current round ({self.t})")
            value = self.current_values.get(cell)
            if value is None or value.kind != "number":
                raise AnchorMismatch(
                    f"{cell} is not a number in the current model")
            shown = value.number_value
            if abs(a.anchor - shown) > _ANCHOR_RTOL * max(1.0, abs(shown)):
                raise AnchorMismatch(
                    f"{cell}: anchor {a.anchor!r} does not match the "
                    f"current value {shown!r}")
            stamped.append(Annotation(cell, a.verdict, a.anchor, self.t))
        self.annotations.extend(stamped)

    # -- evolution --------------------------------------------------------

    def step(self, generations: int) -> list[Candidate]:
        """Run the GA and propose candidates: the best genome plus up to
        five further distinct ones, best first."""
        if self.status == ACCEPTED:
            raise SessionStateError("session is already accepted")
        if not isinstance(generations, int) or isinstance(generations, bool) \
                or generations < 1:
            raise SchemaError("'generations' must be an integer >= 1")
        if not self.annotations:
            raise NoAnnotations("annotate at least one cell first")
        self.spec = build_fitness(self.annotations, self.config.epsilon)
        engine = FitnessEngine(self.base, self.spec, self.slots, self.asts)
        state = run_ga(engine, self.gene_map, self.population, self.config,
                       generations, self.rng)
        self.population = state.population
        self._steps += 1
        self.candidates = self._pick_candidates(state)
        self.history.append((self.t, state.best_fitness))
        self.status = EVOLVED
        return self.candidates

    def _pick_candidates(self, state: GAState) -> list[Candidate]:
        chosen: list[Candidate] = []
        seen: set[tuple[float, ...]] = set()
        cells = set(self.spec.cells)
        for idx in state.ranked():
            genes = tuple(float(g) for g in state.population[idx])
            if genes in seen:
                continue
            seen.add(genes)
            rank = len(chosen)
            genome = Genome(self.slots,
                            tuple(float(v)
                                  for v in self.gene_map.expand(
                                      np.asarray(genes))))
            model = apply_genome(self.base, genome, self.asts)
            result = evaluate_cells(model, cells)
            values = {c: result.values[c] for c in sorted(
                cells, key=CellAddress.sort_key)}
            chosen.append(Candidate(f"m{self._steps}-{rank}", genome, genes,
                                    float(state.scores[idx]), values))
            if len(chosen) == 6:
                break
        return chosen

    @property
    def best(self) -> Candidate:
        if not self.candidates:
            raise SessionStateError("no step has run yet")
        return self.candidates[0]

    def candidate(self, genome_id: str) -> Candidate:
        for c in self.candidates:
            if c.genome_id == genome_id:
                return c
        raise UnknownGenome(f"no candidate {genome_id!r}")

    # -- round transitions ------------------------------------------------

    def choose(self, genome_id: str, accept: bool = False) -> Candidate:
        """Adopt a candidate as the current model and open the next
        round, reseeding the population around it."""
        if self.status != EVOLVED:
            raise SessionStateError("choose requires a completed step")
        picked = self.candidate(genome_id)
        self.t += 1
        self.current_genome = picked.genome
        model = apply_genome(self.base, picked.genome, self.asts)
        self.current_values = evaluate(model).values
        self.population = seed_population(
            np.asarray(picked.genes, dtype=np.float64),
            self.gene_map.sigma(), self.config.population, self.rng)
        self.status = ACCEPTED if accept else AWAITING_ANNOTATIONS
        return picked

    def advance_round(self, user_annotations: list[Annotation],
                      chosen: Genome) -> "EvolutionSession":
        """choose() + add_annotations() in one call; the chosen genome
        must be one of the last step's candidates."""
        for c in self.candidates:
            if c.genome.values == chosen.values:
                self.choose(c.genome_id)
                break
        else:
            raise UnknownGenome("chosen genome is not among the candidates")
        self.add_annotations(user_annotations)
        return self

    def export_model(self, genome: Genome | None = None) -> Workbook:
        """Workbook with the genome's literals substituted (current model
        when no genome is given)."""
        return apply_genome(self.base, genome or self.current_genome,
                            self.asts)


def evolve_step(session: EvolutionSession,
                generations: int) -> tuple[Genome, list[Genome]]:
    """Best genome of the run plus a sample of distinct alternatives."""
    candidates = session.step(generations)
    return candidates[0].genome, [c.genome for c in candidates[1:]]


def annotation_from_json(data: object, default_sheet: str,
                         path: str = "$") -> Annotation:
    """One annotation from its JSON object form:
    {"cell": "C1", "verdict": "too_high", "anchor": 20.0, "round": 0}."""
    if not isinstance(data, dict):
        raise SchemaError("annotation must be an object", path)
    unknown = set(data) - {"cell", "verdict", "anchor", "round"}
    if unknown:
        raise SchemaError(
            f"unknown annotation keys: {', '.join(sorted(unknown))}", path)
    cell = data.get("cell")
    if not isinstance(cell, str):
        raise SchemaError("'cell' must be an address string", f"{path}.cell")
    verdict = data.get("verdict")
    try:
        parsed_verdict = Verdict(verdict)
    except ValueError:
        raise SchemaError("'verdict' must be one of correct/too_high/"
                          "too_low", f"{path}.verdict") from None
    anchor = data.get("anchor")
    if not isinstance(anchor, (int, float)) or isinstance(anchor, bool) \
            or not math.isfinite(float(anchor)):
        raise SchemaError("'anchor' must be a finite number",
                          f"{path}.anchor")
    round_no = data.get("round", 0)
    if not isinstance(round_no, int) or isinstance(round_no, bool) \
            or round_no < 0:
        raise SchemaError("'round' must be a non-negative integer",
                          f"{path}.round")
    return Annotation(parse_address(cell, default_sheet), parsed_verdict,
                      float(anchor), round_no)


def annotations_from_json(data: object, default_sheet: str,
                          require_round: int | None = None
                          ) -> list[Annotation]:
    """A JSON array of annotations; when require_round is given, absent
    rounds default to it (present ones must already match the session)."""
    if not isinstance(data, list):
        raise SchemaError("annotations must be an array")
    out = []
    for i, entry in enumerate(data):
        if require_round is not None and isinstance(entry, dict) \
                and "round" not in entry:
            entry = dict(entry)
            entry["round"] = require_round
        out.append(annotation_from_json(entry, default_sheet, f"$[{i}]"))
    return out
