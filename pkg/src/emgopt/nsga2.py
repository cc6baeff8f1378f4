"""Elitist multi-objective evolutionary engine (NSGA-II).

Real-coded genomes inside box bounds, canonical minimization objectives,
fast non-dominated sorting, crowding-distance diversity, crowded binary
tournament selection, simulated binary crossover, polynomial mutation, and
elitist survivor selection over the merged parent+offspring population.

Reproducibility contract: every stochastic operator draws from a generator
derived from (seed, generation, operator-tag, index), never from execution
order, so concurrent objective evaluation cannot change results.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

# operator tags for derived random streams
_TAG_INIT = 0
_TAG_SELECT = 1
_TAG_CROSS = 2
_TAG_MUT = 3


class EvaluationError(RuntimeError):
    """Objective evaluation failed; carries the offending genome."""

    def __init__(self, genome: np.ndarray, cause: BaseException):
        super().__init__(f"objective evaluation failed for genome {genome.tolist()}: {cause}")
        self.genome = genome
        self.cause = cause


@dataclass
class Bounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("lower and upper must be 1-D vectors of equal length")
        if not np.all(self.lower < self.upper):
            raise ValueError("bounds must satisfy lower < upper component-wise")

    @property
    def dim(self) -> int:
        return self.lower.size

    def clip(self, genome: np.ndarray) -> np.ndarray:
        return np.clip(genome, self.lower, self.upper)

    def contains(self, genome: np.ndarray) -> bool:
        return bool(np.all(genome >= self.lower) and np.all(genome <= self.upper))


@dataclass
class OperatorParams:
    pc: float = 0.6
    eta_c: float = 15.0
    pm: float = 0.4
    eta_m: float = 20.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.pc <= 1.0 and 0.0 <= self.pm <= 1.0):
            raise ValueError("crossover/mutation probabilities must be in [0, 1]")
        if self.eta_c <= 0 or self.eta_m <= 0:
            raise ValueError("distribution indices must be positive")


@dataclass
class EvolutionConfig:
    population_size: int = 98
    generations: int = 10
    seed: int = 0
    operators: OperatorParams = field(default_factory=OperatorParams)

    def __post_init__(self) -> None:
        if self.population_size < 2 or self.population_size % 2 != 0:
            raise ValueError("population_size must be an even integer >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")


@dataclass
class Individual:
    genome: np.ndarray
    objectives: np.ndarray | None = None
    rank: int | None = None
    crowding: float | None = None

    def copy(self) -> "Individual":
        return Individual(
            genome=self.genome.copy(),
            objectives=None if self.objectives is None else self.objectives.copy(),
            rank=self.rank,
            crowding=self.crowding,
        )


@dataclass
class EvolutionResult:
    final_population: list[Individual]
    front_history: list[list[Individual]]  # one snapshot per generation
    n_evaluations: int
    seed: int

    @property
    def final_front(self) -> list[Individual]:
        return self.front_history[-1]


def _op_rng(seed: int, generation: int, tag: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, generation, tag, index])


def dominates(a: np.ndarray, b: np.ndarray) -> bool:
    """True iff a <= b everywhere and a < b somewhere (minimization)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"objective length mismatch: {a.shape} vs {b.shape}")
    return bool(np.all(a <= b) and np.any(a < b))


def _objective_matrix(pop: Sequence[Individual]) -> np.ndarray:
    rows = []
    for ind in pop:
        if ind.objectives is None:
            raise ValueError("population contains unevaluated individuals")
        rows.append(ind.objectives)
    return np.asarray(rows, dtype=np.float64)


def _domination_matrix(F: np.ndarray) -> np.ndarray:
    """dom[i, j] = True iff row i dominates row j. O(M N^2) time, O(N^2) space."""
    le = (F[:, None, :] <= F[None, :, :]).all(axis=2)
    lt = (F[:, None, :] < F[None, :, :]).any(axis=2)
    return le & lt


def fast_nondominated_sort(pop: Sequence[Individual]) -> list[list[int]]:
    """Partition indices into dominance-depth fronts and set 1-based ranks."""
    F = _objective_matrix(pop)
    n = F.shape[0]
    dom = _domination_matrix(F)
    n_dominators = dom.sum(axis=0).astype(np.int64)
    fronts: list[list[int]] = []
    assigned = np.zeros(n, dtype=bool)
    while not assigned.all():
        current = np.flatnonzero((n_dominators == 0) & ~assigned)
        fronts.append(current.tolist())
        assigned[current] = True
        n_dominators -= dom[current].sum(axis=0)
        n_dominators[assigned] = -1
    for rank, front in enumerate(fronts, start=1):
        for idx in front:
            pop[idx].rank = rank
    return fronts


def crowding_distance(front: Sequence[Individual]) -> np.ndarray:
    """Per-individual crowding distances for one front, in input order.

    For each objective the sorted front's endpoints get infinity; interior
    members accumulate the normalized gap between their neighbours. An
    objective with zero spread over the front contributes nothing.
    """
    if len(front) == 0:
        raise ValueError("front must be non-empty")
    F = _objective_matrix(front)
    n, m = F.shape
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for k in range(m):
        order = np.argsort(F[:, k], kind="stable")
        values = F[order, k]
        spread = values[-1] - values[0]
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        if spread > 0:
            interior = order[1:-1]
            dist[interior] += (values[2:] - values[:-2]) / spread
    return dist


def _assign_crowding(pop: Sequence[Individual], fronts: Sequence[Sequence[int]]) -> None:
    for front in fronts:
        members = [pop[i] for i in front]
        for ind, d in zip(members, crowding_distance(members)):
            ind.crowding = float(d)


def _tournament_winner(a: Individual, b: Individual, rng: np.random.Generator) -> Individual:
    if a.rank is None or b.rank is None or a.crowding is None or b.crowding is None:
        raise ValueError("tournament requires rank and crowding to be set")
    if a.rank != b.rank:                      # case I: better (lower) rank
        return a if a.rank < b.rank else b
    if a.crowding != b.crowding:              # case II: larger crowding
        return a if a.crowding > b.crowding else b
    return a if rng.random() < 0.5 else b     # case III: random pick


def crowded_tournament_select(pop: Sequence[Individual],
                              rng: np.random.Generator) -> list[Individual]:
    """Mating pool of len(pop) winners: two passes of N/2 pairwise tournaments.

    Each pass shuffles the population into disjoint pairs and keeps one winner
    per pair.
    """
    n = len(pop)
    if n % 2 != 0:
        raise ValueError("population size must be even")
    pool = []
    for _ in range(2):
        perm = rng.permutation(n)
        for k in range(n // 2):
            a = pop[perm[2 * k]]
            b = pop[perm[2 * k + 1]]
            pool.append(_tournament_winner(a, b, rng))
    return pool


def sbx_spread_factor(u: np.ndarray, eta_c: float) -> np.ndarray:
    """Inverse-CDF sample of the SBX spread factor beta from u ~ U[0,1)."""
    u = np.asarray(u, dtype=np.float64)
    exponent = 1.0 / (eta_c + 1.0)
    return np.where(u <= 0.5,
                    (2.0 * u) ** exponent,
                    (1.0 / (2.0 * (1.0 - u))) ** exponent)


def sbx_crossover(p1: np.ndarray, p2: np.ndarray, params: OperatorParams,
                  bounds: Bounds, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Simulated binary crossover of two parent genomes.

    With probability pc the pair is crossed component-wise via the spread
    factor beta, which preserves the pair midpoint before clamping; otherwise
    the children are copies of the parents.
    """
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    if not (bounds.contains(p1) and bounds.contains(p2)):
        raise ValueError("parents must lie within bounds")
    if rng.random() >= params.pc:
        return p1.copy(), p2.copy()
    u = rng.random(p1.size)
    beta = sbx_spread_factor(u, params.eta_c)
    # c1/2 = 0.5[(1 +- beta) p1 + (1 -+ beta) p2], written so the pair
    # midpoint is preserved exactly and p1 == p2 is an exact fixed point
    mid = 0.5 * (p1 + p2)
    half_spread = 0.5 * beta * (p1 - p2)
    return bounds.clip(mid + half_spread), bounds.clip(mid - half_spread)


def polynomial_delta(u: np.ndarray, eta_m: float) -> np.ndarray:
    """Perturbation fraction delta in (-1, 1) from u ~ U[0,1)."""
    u = np.asarray(u, dtype=np.float64)
    exponent = 1.0 / (eta_m + 1.0)
    return np.where(u < 0.5,
                    (2.0 * u) ** exponent - 1.0,
                    1.0 - (2.0 * (1.0 - u)) ** exponent)


def polynomial_mutation(x: np.ndarray, params: OperatorParams, bounds: Bounds,
                        rng: np.random.Generator) -> np.ndarray:
    """Perturb each component with probability pm by delta * (upper - lower)."""
    x = np.asarray(x, dtype=np.float64)
    if not bounds.contains(x):
        raise ValueError("genome must lie within bounds")
    out = x.copy()
    hit = rng.random(x.size) < params.pm
    if np.any(hit):
        u = rng.random(int(hit.sum()))
        delta = polynomial_delta(u, params.eta_m)
        out[hit] = out[hit] + delta * (bounds.upper[hit] - bounds.lower[hit])
        out = bounds.clip(out)
    return out


def survivor_select(merged: Sequence[Individual], n_select: int | None = None) -> list[Individual]:
    """Elitist selection: fill whole fronts, truncate the last by crowding.

    Re-sorts and re-computes crowding on the merged population, then takes
    fronts in order; the first front that overflows is cut to the members
    with the greatest crowding distance.
    """
    merged = list(merged)
    if n_select is None:
        n_select = len(merged) // 2
    fronts = fast_nondominated_sort(merged)
    _assign_crowding(merged, fronts)
    chosen: list[Individual] = []
    for front in fronts:
        members = [merged[i] for i in front]
        if len(chosen) + len(members) <= n_select:
            chosen.extend(members)
        else:
            room = n_select - len(chosen)
            crowd = np.array([m.crowding for m in members])
            order = np.argsort(-crowd, kind="stable")[:room]
            chosen.extend(members[i] for i in sorted(order))
        if len(chosen) >= n_select:
            break
    return chosen


def initial_genomes(n: int, bounds: Bounds, seed: int) -> list[np.ndarray]:
    """Deterministic starting points: a lattice over the bounds (when the
    dimension allows), topped up with seeded Latin-hypercube samples."""
    dim = bounds.dim
    structured: list[np.ndarray] = []
    g = 2
    best_g = 0
    while g ** dim <= max(n // 2, 1):
        best_g = g
        g += 1
    if best_g >= 2:
        axes = [np.linspace(bounds.lower[d], bounds.upper[d], best_g) for d in range(dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        lattice = np.stack([m.ravel() for m in mesh], axis=1)
        structured = [row.copy() for row in lattice[:n]]
    remaining = n - len(structured)
    if remaining > 0:
        sampler = qmc.LatinHypercube(d=dim, seed=np.random.default_rng([seed, _TAG_INIT]))
        unit = sampler.random(remaining)
        scaled = qmc.scale(unit, bounds.lower, bounds.upper)
        structured.extend(row.copy() for row in scaled)
    return structured[:n]


def evolve(evaluator: Callable[[np.ndarray], Sequence[float]],
           config: EvolutionConfig, bounds: Bounds,
           on_generation: Callable[[int, list[Individual]], None] | None = None,
           jobs: int = 1) -> EvolutionResult:
    """Run the generational loop and return the front history.

    ``evaluator`` maps a genome to a minimization objective vector; duplicate
    genomes are evaluated once per run. ``on_generation`` receives
    (generation_number, front_snapshot) after each survivor selection, which
    lets callers flush partial results before a failing evaluation aborts the
    run. With ``jobs > 1`` the per-generation evaluations run in a thread
    pool; results are identical to sequential execution.
    """
    memo: dict[bytes, np.ndarray] = {}
    n_evaluations = 0

    def evaluate(individuals: list[Individual]) -> None:
        nonlocal n_evaluations
        pending = [ind for ind in individuals if ind.genome.tobytes() not in memo]
        todo: list[Individual] = []
        seen = set()
        for ind in pending:
            key = ind.genome.tobytes()
            if key not in seen:
                seen.add(key)
                todo.append(ind)

        def run_one(ind: Individual) -> np.ndarray:
            try:
                objs = np.asarray(evaluator(ind.genome), dtype=np.float64)
            except Exception as exc:  # noqa: BLE001 - re-raised with genome context
                raise EvaluationError(ind.genome, exc) from exc
            if objs.ndim != 1 or not np.all(np.isfinite(objs)):
                raise EvaluationError(ind.genome,
                                      ValueError(f"non-finite objectives {objs!r}"))
            return objs

        if jobs > 1 and len(todo) > 1:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(run_one, todo))
        else:
            results = [run_one(ind) for ind in todo]
        for ind, objs in zip(todo, results):
            memo[ind.genome.tobytes()] = objs
            n_evaluations += 1
        for ind in individuals:
            ind.objectives = memo[ind.genome.tobytes()].copy()

    n = config.population_size
    params = config.operators
    parents = [Individual(genome=g) for g in initial_genomes(n, bounds, config.seed)]
    evaluate(parents)
    fronts = fast_nondominated_sort(parents)
    _assign_crowding(parents, fronts)

    history: list[list[Individual]] = []
    for gen in range(1, config.generations + 1):
        pool = crowded_tournament_select(parents, _op_rng(config.seed, gen, _TAG_SELECT, 0))
        offspring: list[Individual] = []
        for k in range(n // 2):
            c1, c2 = sbx_crossover(pool[2 * k].genome, pool[2 * k + 1].genome,
                                   params, bounds, _op_rng(config.seed, gen, _TAG_CROSS, k))
            c1 = polynomial_mutation(c1, params, bounds, _op_rng(config.seed, gen, _TAG_MUT, 2 * k))
            c2 = polynomial_mutation(c2, params, bounds, _op_rng(config.seed, gen, _TAG_MUT, 2 * k + 1))
            offspring.append(Individual(genome=c1))
            offspring.append(Individual(genome=c2))
        evaluate(offspring)
        merged = [ind.copy() for ind in parents] + offspring
        parents = survivor_select(merged, n)
        snapshot = [ind.copy() for ind in parents if ind.rank == 1]
        history.append(snapshot)
        if on_generation is not None:
            on_generation(gen, snapshot)

    final_front = history[-1]
    F = _objective_matrix(final_front)
    if np.any(_domination_matrix(F)):
        raise AssertionError("internal error: final front is not mutually non-dominated")
    return EvolutionResult(final_population=parents, front_history=history,
                           n_evaluations=n_evaluations, seed=config.seed)
