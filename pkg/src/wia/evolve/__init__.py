"""Evolutionary refinement of workbook coefficients."""

from .backend import FitnessEngine, backend_name, run_program
from .fitness import (DEFAULT_EPSILON, NON_NUMBER_PENALTY, Annotation,
                      FitnessSpec, FitnessTerm, Verdict, build_fitness,
                      evaluate_fitness, spec_penalty, term_penalty)
from .ga import EvolutionConfig, GAState, make_rng, run_ga, seed_population
from .genome import (GeneMap, Genome, apply_genome, build_gene_map,
                     collect_slots, identity_genome)
from .session import (ACCEPTED, AWAITING_ANNOTATIONS, EVOLVED, Candidate,
                      EvolutionSession, annotation_from_json,
                      annotations_from_json, evolve_step)
from .tape import Program, TapeUnsupported, compile_program, run_pure

__all__ = [
    "ACCEPTED", "AWAITING_ANNOTATIONS", "Annotation", "Candidate",
    "DEFAULT_EPSILON", "EVOLVED", "EvolutionConfig", "EvolutionSession",
    "FitnessEngine", "FitnessSpec", "FitnessTerm", "GAState", "GeneMap",
    "Genome", "NON_NUMBER_PENALTY", "Program", "TapeUnsupported", "Verdict",
    "annotation_from_json", "annotations_from_json", "apply_genome",
    "backend_name", "build_fitness", "build_gene_map", "collect_slots",
    "compile_program", "evaluate_fitness", "evolve_step", "identity_genome",
    "make_rng", "run_ga", "run_program", "run_pure", "seed_population",
    "spec_penalty", "term_penalty",
]
