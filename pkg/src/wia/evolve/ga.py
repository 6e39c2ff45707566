"""Evolutionary refinement of a workbook's numeric literals.

Classic generational GA: stable fitness ranking, elite carry-over,
tournament parent selection, uniform crossover, per-gene Gaussian
mutation scaled to each literal's original magnitude.  Every random
draw per generation has a fixed shape regardless of outcomes, so one
seed pins the entire run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import SchemaError
from .backend import FitnessEngine
from .genome import GeneMap

_F64_MAX = float(np.finfo(np.float64).max)


@dataclass(frozen=True)
class EvolutionConfig:
    population: int = 64
    elitism: int = 2
    tournament: int = 3
    crossover_p: float = 0.9
    mutation_p: float = 0.1
    epsilon: float = 0.05
    seed: int = 0
    tie_genes_by_segment: bool = False

    def __post_init__(self):
        def bad_int(x, low):
            return not isinstance(x, int) or isinstance(x, bool) or x < low

        if bad_int(self.population, 2):
            raise SchemaError("'population' must be an integer >= 2",
                              "$.population")
        if bad_int(self.elitism, 1) or self.elitism >= self.population:
            raise SchemaError("'elitism' must be an integer in "
                              "[1, population)", "$.elitism")
        if bad_int(self.tournament, 1):
            raise SchemaError("'tournament' must be an integer >= 1",
                              "$.tournament")
        for key in ("crossover_p", "mutation_p"):
            p = getattr(self, key)
            if not isinstance(p, (int, float)) or isinstance(p, bool) \
                    or not 0.0 <= float(p) <= 1.0:
                raise SchemaError(f"'{key}' must be a number in [0, 1]",
                                  f"$.{key}")
        if not isinstance(self.epsilon, (int, float)) \
                or isinstance(self.epsilon, bool) or not self.epsilon > 0:
            raise SchemaError("'epsilon' must be a positive number",
                              "$.epsilon")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) \
                or self.seed < 0:
            raise SchemaError("'seed' must be a non-negative integer",
                              "$.seed")
        if not isinstance(self.tie_genes_by_segment, bool):
            raise SchemaError("'tie_genes_by_segment' must be a boolean",
                              "$.tie_genes_by_segment")

    @staticmethod
    def from_dict(data: dict) -> "EvolutionConfig":
        if not isinstance(data, dict):
            raise SchemaError("config must be an object")
        defaults = EvolutionConfig.__dataclass_fields__
        unknown = set(data) - set(defaults)
        if unknown:
            raise SchemaError(
                f"unknown config keys: {', '.join(sorted(unknown))}")
        clean = dict(data)
        for key in ("crossover_p", "mutation_p", "epsilon"):
            if key in clean and isinstance(clean[key], int) \
                    and not isinstance(clean[key], bool):
                clean[key] = float(clean[key])
        return EvolutionConfig(**clean)

    def to_dict(self) -> dict:
        return {"population": self.population, "elitism": self.elitism,
                "tournament": self.tournament,
                "crossover_p": self.crossover_p,
                "mutation_p": self.mutation_p, "epsilon": self.epsilon,
                "seed": self.seed,
                "tie_genes_by_segment": self.tie_genes_by_segment}


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def seed_population(center: np.ndarray, sigma: np.ndarray, population: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Row 0 is the center itself, the rest Gaussian jitters of it."""
    center = np.asarray(center, dtype=np.float64)
    n = center.shape[0]
    pop = np.empty((population, n), dtype=np.float64)
    pop[0] = center
    noise = rng.normal(0.0, 1.0, size=(population - 1, n))
    pop[1:] = center + noise * sigma
    np.clip(pop, -_F64_MAX, _F64_MAX, out=pop)
    return pop


@dataclass
class GAState:
    """Population (gene space) with its fitness, scores aligned by row."""

    population: np.ndarray
    scores: np.ndarray
    best_index: int = field(init=False)

    def __post_init__(self):
        order = np.argsort(self.scores, kind="stable")
        self.best_index = int(order[0])

    @property
    def best_fitness(self) -> float:
        return float(self.scores[self.best_index])

    def ranked(self) -> np.ndarray:
        """Row indices from best to worst, ties by row order."""
        return np.argsort(self.scores, kind="stable")


def score_population(engine: FitnessEngine, gene_map: GeneMap,
                     population: np.ndarray) -> GAState:
    scores = engine.score(gene_map.expand(population))
    return GAState(population, scores)


def run_ga(engine: FitnessEngine, gene_map: GeneMap,
           population: np.ndarray, config: EvolutionConfig,
           generations: int, rng: np.random.Generator) -> GAState:
    """Advance the population the given number of generations.

    The elite rows survive unchanged, so the best fitness never gets
    worse from one generation to the next; that invariant is checked
    every step.
    """
    if population.shape[0] != config.population:
        raise ValueError("population row count does not match the config")
    state = score_population(engine, gene_map, population)
    sigma = gene_map.sigma()
    n_children = config.population - config.elitism
    n_genes = population.shape[1]
    for _ in range(generations):
        order = state.ranked()
        elites = state.population[order[:config.elitism]].copy()

        draws = rng.integers(0, config.population,
                             size=(n_children, 2, config.tournament))
        cross_coin = rng.random(n_children)
        gene_coin = rng.random((n_children, n_genes))
        mut_coin = rng.random((n_children, n_genes))
        noise = rng.normal(0.0, 1.0, size=(n_children, n_genes))

        drawn_scores = state.scores[draws]
        winners = np.argmin(drawn_scores, axis=2)
        parents = np.take_along_axis(draws, winners[:, :, None],
                                     axis=2)[:, :, 0]
        a = state.population[parents[:, 0]]
        b = state.population[parents[:, 1]]
        crossed = cross_coin < config.crossover_p
        children = np.where((gene_coin < 0.5) & crossed[:, None], b, a)
        children = children + np.where(mut_coin < config.mutation_p,
                                       noise * sigma, 0.0)
        np.clip(children, -_F64_MAX, _F64_MAX, out=children)

        next_pop = np.vstack([elites, children])
        next_state = score_population(engine, gene_map, next_pop)
        if next_state.best_fitness > state.best_fitness:
            raise RuntimeError("elitism lost the best genome")
        state = next_state
    return state
