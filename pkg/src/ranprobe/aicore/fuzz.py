"""Genetic-algorithm fuzzing over a parameter space.

Genomes are float vectors (see Dimension.gene_bounds). Each generation keeps
its `elitism` best individuals with their known fitness and breeds the rest
by tournament selection, single-point crossover and per-gene Gaussian
mutation, so generation 0 costs pop_size queries and every later one
pop_size - elitism."""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from ..exceptions import ConfigError
from .space import ParameterSpace
from .trace import TraceRecorder

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GaParams:
    pop_size: int = 20
    mutation_rate: float = 0.1
    crossover_rate: float = 0.9
    elitism: int = 1
    tournament_k: int = 3
    # mutation sigma as a fraction of each dimension's range
    sigma_frac: float = 0.05
    # optional starting individuals (points of the space), cycled to pop_size
    initial: Optional[List[Dict[str, Any]]] = None

    def __post_init__(self):
        if self.pop_size < 2:
            raise ConfigError(f"pop_size must be >= 2, not {self.pop_size}")
        for name in ("mutation_rate", "crossover_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must be within [0, 1]")
        if not 0 <= self.elitism < self.pop_size:
            raise ConfigError("elitism must be within [0, pop_size)")
        if self.tournament_k < 1:
            raise ConfigError("tournament_k must be >= 1")
        if self.sigma_frac < 0:
            raise ConfigError("sigma_frac must be >= 0")
        if self.initial is not None and not self.initial:
            raise ConfigError("initial population must not be empty")

    @classmethod
    def from_dict(cls, data) -> "GaParams":
        data = dict(data or {})
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown ga parameter(s) {', '.join(sorted(unknown))}")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"bad ga parameters: {e}")


@dataclass(frozen=True)
class FitnessSpec:
    """Fitness of a score: -|score - target| when a target is set, the score
    itself (or its negation when minimising) otherwise"""

    target: Optional[float] = None
    maximize: bool = True

    def __call__(self, score: float) -> float:
        if self.target is not None:
            return -abs(score - self.target)
        return score if self.maximize else -score


@dataclass
class FuzzResult:
    best: Dict[str, Any]
    best_fitness: float
    history: List[float] = field(default_factory=list)
    populations: List[List[Dict[str, Any]]] = field(default_factory=list)

    @property
    def generations(self):
        return len(self.history)

    def to_dict(self):
        return {
            "best": self.best,
            "best_fitness": self.best_fitness,
            "history": list(self.history),
            "generations": self.generations,
            "populations": self.populations,
        }


def _tournament(fitness, k, rng) -> int:
    """Fittest of k distinct draws; lowest index among equals"""
    entrants = np.sort(rng.choice(len(fitness), size=min(k, len(fitness)), replace=False))
    return int(max(entrants, key=lambda i: (fitness[i], -i)))


def _elite_order(fitness) -> List[int]:
    return sorted(range(len(fitness)), key=lambda i: (-fitness[i], i))


def _breed(population, fitness, space, ga: GaParams, rng) -> np.ndarray:
    lower, upper = space.lower(), space.upper()
    sigma = ga.sigma_frac * (upper - lower)
    n_genes = population.shape[1]
    a = population[_tournament(fitness, ga.tournament_k, rng)]
    b = population[_tournament(fitness, ga.tournament_k, rng)]
    if n_genes > 1 and rng.random() < ga.crossover_rate:
        cut = int(rng.integers(1, n_genes))
        child = np.concatenate([a[:cut], b[cut:]])
    else:
        child = a.copy()
    mutate = rng.random(n_genes) < ga.mutation_rate
    child = child + mutate * rng.normal(0.0, 1.0, n_genes) * sigma
    return np.clip(child, lower, upper)


def _initial_population(space: ParameterSpace, ga: GaParams, rng) -> np.ndarray:
    if ga.initial is None:
        return space.sample_genomes(rng, ga.pop_size)
    seeds = [space.encode(p) for p in ga.initial]
    return np.array([seeds[i % len(seeds)] for i in range(ga.pop_size)])


def fuzz_genetic(
    space: ParameterSpace,
    fitness_spec: FitnessSpec,
    budget: int,
    ga: GaParams,
    recorder: TraceRecorder,
    rng: np.random.Generator,
) -> FuzzResult:
    if len(space) == 0:
        raise ConfigError("fuzzing needs at least one dimension")
    if budget < ga.pop_size:
        raise ConfigError(f"budget {budget} is smaller than pop_size {ga.pop_size}")
    if budget > recorder.remaining:
        raise ConfigError(f"budget {budget} exceeds the recorder's remaining {recorder.remaining}")

    def evaluate(genomes, generation):
        points = [space.decode(g) for g in genomes]
        scores = [
            fitness_spec(recorder.query(p, generation=generation).score) for p in points
        ]
        return points, scores

    population = _initial_population(space, ga, rng)
    points, fitness = evaluate(population, 0)
    used = ga.pop_size
    result = FuzzResult(best={}, best_fitness=float("-inf"))

    def close_generation():
        top = _elite_order(fitness)[0]
        if fitness[top] > result.best_fitness:
            result.best, result.best_fitness = points[top], fitness[top]
        result.history.append(result.best_fitness if ga.elitism else fitness[top])
        result.populations.append(points)

    close_generation()
    step = ga.pop_size - ga.elitism
    while used + step <= budget:
        generation = len(result.history)
        elites = _elite_order(fitness)[: ga.elitism]
        children = np.array([_breed(population, fitness, space, ga, rng) for _ in range(step)])
        child_points, child_fitness = evaluate(children, generation)
        used += step
        population = np.concatenate([population[elites], children]) if elites else children
        points = [points[i] for i in elites] + child_points
        fitness = [fitness[i] for i in elites] + child_fitness
        close_generation()

    logger.debug(f"GA finished {result.generations} generations, best fitness {result.best_fitness}")
    return result
