"""Evolution strategy over the unit hypercube.

A multivariate normal is sampled (coordinates clipped to [0, 1]), invalid
samples are rejected until a full population is collected, and the
distribution is re-centred on the best quarter of each generation with a
rank-mu style covariance blend.  This is deliberately a reduced CMA-ES:
no evolution paths and no step-size control.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Iterable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "EvolutionState", "ScoredCandidate", "GenerationRecord", "SampleBatch", "BudgetExhausted",
    "es_init", "es_sample", "es_update", "es_minimize", "random_search", "write_history_csv",
    "read_history_csv", "OptimizeResult",
]

COV_BLEND = 0.3
PSD_EPS = 1e-8


class BudgetExhausted(RuntimeError):
    """Too many consecutive rejected samples; the space looks over-constrained."""


@dataclass
class EvolutionState:
    mean: np.ndarray
    covariance: np.ndarray
    population_size: int
    parent_count: int
    generation: int
    rng_seed: int
    best_vector: np.ndarray | None = None
    best_fitness: float = math.inf
    c_cov: float = COV_BLEND

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass
class ScoredCandidate:
    """``fitness`` is minimised; ``math.inf`` marks an infeasible candidate.

    ``violation`` (> 0) ranks infeasible candidates among themselves so the
    distribution can still move when a whole generation is infeasible.
    """

    vector: np.ndarray
    fitness: float
    violation: float = 0.0
    payload: Any = None

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.fitness)


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    fitness_mean: float
    fitness_min: float
    rejection_count: int


class SampleBatch(list):
    """Accepted vectors of one generation plus sampling counters."""

    def __init__(self, vectors=(), draws: int = 0, rejections: int = 0):
        super().__init__(vectors)
        self.draws = draws
        self.rejections = rejections


class OptimizeResult(NamedTuple):
    x: np.ndarray | None
    fitness: float
    history: list
    state: EvolutionState | None = None


def es_init(dim: int, popsize: int, seed: int, *, sigma: float = 0.1,
            mean: Sequence[float] | None = None, parent_count: int | None = None,
            c_cov: float = COV_BLEND) -> EvolutionState:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if popsize < 4:
        raise ValueError("population size must be >= 4")
    mu = parent_count if parent_count is not None else max(2, popsize // 4)
    if not 1 <= mu <= popsize:
        raise ValueError(f"parent count {mu} must be in [1, {popsize}]")
    m = np.full(dim, 0.5) if mean is None else np.clip(np.asarray(mean, dtype=float), 0.0, 1.0)
    return EvolutionState(m, sigma ** 2 * np.eye(dim), popsize, mu, 0, int(seed), c_cov=c_cov)


def _rng(state: EvolutionState) -> np.random.Generator:
    return np.random.default_rng([state.rng_seed, state.generation])


def es_sample(state: EvolutionState, validity: Callable[[np.ndarray], bool] | None = None,
              max_rejections: int = 10_000, *, uniform: bool = False) -> SampleBatch:
    """Draw a full population of acceptable vectors.

    The draw sequence depends only on ``(rng_seed, generation)``.  With
    ``uniform=True`` the vectors come from the uniform distribution on the
    cube instead (random-search baseline).
    """
    rng = _rng(state)
    dim, lam = state.dim, state.population_size
    chol = None if uniform else np.linalg.cholesky(state.covariance)
    batch = SampleBatch()
    consecutive = 0
    while len(batch) < lam:
        if uniform:
            block = rng.random((lam, dim))
        else:
            block = np.clip(state.mean + rng.standard_normal((lam, dim)) @ chol.T, 0.0, 1.0)
        for x in block:
            batch.draws += 1
            if validity is None or validity(x):
                batch.append(x)
                consecutive = 0
                if len(batch) == lam:
                    break
            else:
                batch.rejections += 1
                consecutive += 1
                if consecutive >= max_rejections:
                    raise BudgetExhausted(
                        f"{consecutive} consecutive rejected samples at generation {state.generation}")
    return batch


def _repair_psd(cov: np.ndarray) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    eps = PSD_EPS
    while True:
        try:
            np.linalg.cholesky(cov)
            return cov
        except np.linalg.LinAlgError:
            cov = cov + eps * np.eye(cov.shape[0])
            eps *= 10


def _rank_key(item):
    index, cand = item
    if cand.feasible:
        return (0, cand.fitness, index)
    return (1, cand.violation, index)


def es_update(state: EvolutionState, scored: Sequence[ScoredCandidate]) -> EvolutionState:
    """Move the distribution toward the best ``parent_count`` candidates."""
    if len(scored) != state.population_size:
        raise ValueError(f"expected {state.population_size} scored candidates, got {len(scored)}")
    eligible = [(i, c) for i, c in enumerate(scored) if c.feasible or c.violation > 0]
    eligible.sort(key=_rank_key)
    parents = np.array([c.vector for _, c in eligible[:state.parent_count]])

    best_vector, best_fitness = state.best_vector, state.best_fitness
    for c in scored:
        if c.feasible and c.fitness < best_fitness:
            best_vector, best_fitness = np.array(c.vector, dtype=float), c.fitness

    if len(parents) == 0:
        return replace(state, generation=state.generation + 1,
                       best_vector=best_vector, best_fitness=best_fitness)
    steps = parents - state.mean
    spread = steps.T @ steps / len(parents)
    cov = _repair_psd((1 - state.c_cov) * state.covariance + state.c_cov * spread)
    mean = np.clip(parents.mean(axis=0), 0.0, 1.0)
    return replace(state, mean=mean, covariance=cov, generation=state.generation + 1,
                   best_vector=best_vector, best_fitness=best_fitness)


def _record(generation: int, scored: Iterable[ScoredCandidate], rejections: int) -> GenerationRecord:
    finite = [c.fitness for c in scored if c.feasible]
    if finite:
        return GenerationRecord(generation, float(np.mean(finite)), float(min(finite)), rejections)
    return GenerationRecord(generation, math.inf, math.inf, rejections)


def es_minimize(objective: Callable, dim: int, popsize: int, generations: int, seed: int, *,
                validity: Callable[[np.ndarray], bool] | None = None, max_rejections: int = 10_000,
                map_fn: Callable = map, **init_kwargs) -> OptimizeResult:
    """Minimise ``objective`` over [0, 1]^dim.

    ``objective(x)`` returns a fitness (``math.inf`` when infeasible) or a
    ``(fitness, violation)`` pair.  ``map_fn`` evaluates one generation and
    may be a process-pool ``map``; results must come back in order.
    """
    state = es_init(dim, popsize, seed, **init_kwargs)
    history = []
    for _ in range(generations):
        batch = es_sample(state, validity, max_rejections)
        values = list(map_fn(objective, list(batch)))
        scored = [ScoredCandidate(x, *_unpack(v)) for x, v in zip(batch, values)]
        history.append(_record(state.generation, scored, batch.rejections))
        state = es_update(state, scored)
    return OptimizeResult(state.best_vector, state.best_fitness, history, state)


def _unpack(value) -> tuple[float, float]:
    if isinstance(value, tuple):
        return float(value[0]), float(value[1])
    return float(value), 0.0


def random_search(objective: Callable, dim: int, popsize: int, generations: int, seed: int, *,
                  validity: Callable[[np.ndarray], bool] | None = None, max_rejections: int = 10_000,
                  map_fn: Callable = map) -> OptimizeResult:
    """Uniform random sampling with the same budget and bookkeeping as :func:`es_minimize`."""
    state = es_init(dim, max(popsize, 4), seed)
    state.population_size = popsize
    history = []
    best_x, best_f = None, math.inf
    for g in range(generations):
        state.generation = g
        batch = es_sample(state, validity, max_rejections, uniform=True)
        values = list(map_fn(objective, list(batch)))
        scored = [ScoredCandidate(x, *_unpack(v)) for x, v in zip(batch, values)]
        history.append(_record(g, scored, batch.rejections))
        for c in scored:
            if c.feasible and c.fitness < best_f:
                best_x, best_f = c.vector, c.fitness
    return OptimizeResult(best_x, best_f, history, None)


HISTORY_FIELDS = ("generation", "fitness_mean", "fitness_min", "rejection_count")


def write_history_csv(history: Sequence[GenerationRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_FIELDS)
        for rec in history:
            writer.writerow([rec.generation, repr(rec.fitness_mean), repr(rec.fitness_min),
                             rec.rejection_count])


def read_history_csv(path: str | Path) -> list[GenerationRecord]:
    with open(path, newline="") as fh:
        return [GenerationRecord(int(row["generation"]), float(row["fitness_mean"]),
                                 float(row["fitness_min"]), int(row["rejection_count"]))
                for row in csv.DictReader(fh)]
