"""NSGA-II over design vectors, with constraint domination and Pareto analysis helpers.

Objectives are minimized. Constraint domination: a feasible design beats any
infeasible one, infeasible designs compare by total violation, and feasible
designs compare by Pareto dominance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .doe import DesignSpace, DesignVector, lhs_sample

__all__ = [
    "OBJECTIVES",
    "EvaluatedDesign",
    "GaConfig",
    "EvolveResult",
    "domination_matrix",
    "non_dominated_sort",
    "crowding_distance",
    "evolve",
    "extract_pareto",
    "front_projection",
]

log = logging.getLogger(__name__)

OBJECTIVES = ("rmse_mob", "rmse_vessel", "cost")


@dataclass
class EvaluatedDesign:
    design: DesignVector
    objectives: tuple[float, ...]
    violation: float = 0.0
    generation: int = 0
    result: Any = None

    def __post_init__(self):
        self.objectives = tuple(float(v) for v in self.objectives)
        self.violation = float(self.violation)
        if not self.violation >= 0:
            raise ValueError("violation must be >= 0")
        if self.feasible and not all(math.isfinite(v) for v in self.objectives):
            raise ValueError("feasible designs need finite objectives")

    @property
    def feasible(self) -> bool:
        return self.violation == 0.0


@dataclass(frozen=True)
class GaConfig:
    population: int = 40
    generations: int = 30
    crossover_prob: float = 0.9
    crossover_eta: float = 15.0
    mutation_prob: float | None = None           # per continuous gene; None -> 1 / n_continuous
    mutation_eta: float = 20.0
    discrete_mutation_prob: float | None = None  # per discrete gene; None -> 1 / n_genes
    seed: int = 0
    constraint_mode: str = "constraint-domination"
    objectives: tuple[int, ...] = (0, 1, 2)

    def __post_init__(self):
        if self.population < 4 or self.population % 2:
            raise ValueError("population must be even and >= 4")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        for name in ("crossover_prob", "mutation_prob", "discrete_mutation_prob"):
            p = getattr(self, name)
            if p is not None and not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.crossover_eta < 0 or self.mutation_eta < 0:
            raise ValueError("distribution indices must be >= 0")
        if self.constraint_mode not in ("constraint-domination", "discard"):
            raise ValueError("constraint_mode must be 'constraint-domination' or 'discard'")
        if not self.objectives:
            raise ValueError("need at least one objective")


# --- sorting ---------------------------------------------------------------------------


def _as_arrays(pop, violation=None, mask=None):
    if len(pop) == 0:
        raise ValueError("empty population")
    if isinstance(pop[0], EvaluatedDesign):
        F = np.array([d.objectives for d in pop], float)
        viol = np.array([d.violation for d in pop], float)
    else:
        F = np.atleast_2d(np.asarray(pop, float))
        viol = np.zeros(len(F)) if violation is None else np.asarray(violation, float)
    if mask is not None:
        F = F[:, list(mask)]
    return F, viol


def domination_matrix(F, violation=None) -> np.ndarray:
    """``D[i, j]`` is True when design i constraint-dominates design j."""
    F = np.atleast_2d(np.asarray(F, float))
    viol = np.zeros(len(F)) if violation is None else np.asarray(violation, float)
    feas = viol == 0
    with np.errstate(invalid="ignore"):
        pareto = np.all(F[:, None, :] <= F[None, :, :], axis=2) & np.any(F[:, None, :] < F[None, :, :], axis=2)
    both_feas = feas[:, None] & feas[None, :]
    both_infeas = ~feas[:, None] & ~feas[None, :]
    return (both_feas & pareto) | (feas[:, None] & ~feas[None, :]) | (both_infeas & (viol[:, None] < viol[None, :]))


def non_dominated_sort(pop, violation=None, mask=None) -> list[list[int]]:
    """Fronts of indices, best first.

    ``pop`` is a sequence of ``EvaluatedDesign`` or an (n, m) objective array
    with an optional ``violation`` vector.
    """
    F, viol = _as_arrays(pop, violation, mask)
    D = domination_matrix(F, viol)
    count = D.sum(axis=0)
    fronts = []
    current = np.flatnonzero(count == 0)
    while current.size:
        fronts.append(current.tolist())
        count = count - D[current].sum(axis=0)
        count[current] = -1
        current = np.flatnonzero(count == 0)
    return fronts


def crowding_distance(front) -> np.ndarray:
    """Crowding distance of each member of one front (objective array or designs)."""
    F = _as_arrays(front)[0] if len(front) and isinstance(front[0], EvaluatedDesign) \
        else np.atleast_2d(np.asarray(front, float))
    n, m = F.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for k in range(m):
        order = np.argsort(F[:, k], kind="stable")
        f = F[order, k]
        dist[order[0]] = dist[order[-1]] = np.inf
        span = f[-1] - f[0]
        if span > 0 and np.isfinite(span):
            dist[order[1:-1]] += (f[2:] - f[:-2]) / span
    return dist


# --- variation operators ---------------------------------------------------------------


def _sbx_pair(rng, a, b, lo, hi, eta):
    """Bounded simulated binary crossover applied gene by gene with probability 1/2."""
    c1, c2 = a.copy(), b.copy()
    for i in range(len(a)):
        if rng.random() > 0.5 or abs(a[i] - b[i]) < 1e-14 or hi[i] <= lo[i]:
            continue
        y1, y2 = min(a[i], b[i]), max(a[i], b[i])
        u = rng.random()
        children = []
        for beta_edge in (1.0 + 2.0 * (y1 - lo[i]) / (y2 - y1), 1.0 + 2.0 * (hi[i] - y2) / (y2 - y1)):
            alpha = 2.0 - beta_edge ** -(eta + 1.0)
            if u <= 1.0 / alpha:
                betaq = (u * alpha) ** (1.0 / (eta + 1.0))
            else:
                betaq = (1.0 / (2.0 - u * alpha)) ** (1.0 / (eta + 1.0))
            children.append(betaq)
        k1 = 0.5 * ((y1 + y2) - children[0] * (y2 - y1))
        k2 = 0.5 * ((y1 + y2) + children[1] * (y2 - y1))
        k1, k2 = min(max(k1, lo[i]), hi[i]), min(max(k2, lo[i]), hi[i])
        if rng.random() < 0.5:
            k1, k2 = k2, k1
        c1[i], c2[i] = k1, k2
    return c1, c2


def _polynomial_mutation(rng, x, lo, hi, eta, prob):
    y = x.copy()
    for i in range(len(x)):
        if rng.random() >= prob or hi[i] <= lo[i]:
            continue
        span = hi[i] - lo[i]
        d1, d2 = (y[i] - lo[i]) / span, (hi[i] - y[i]) / span
        u = rng.random()
        p = 1.0 / (eta + 1.0)
        if u < 0.5:
            val = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta + 1.0)
            dq = val**p - 1.0
        else:
            val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta + 1.0)
            dq = 1.0 - val**p
        y[i] = min(max(y[i] + dq * span, lo[i]), hi[i])
    return y


# --- evolution -------------------------------------------------------------------------


@dataclass
class EvolveResult:
    population: list[EvaluatedDesign]
    archive: list[EvaluatedDesign]
    history: list[list[EvaluatedDesign]] = field(default_factory=list)


def _key(space: DesignSpace, design: DesignVector):
    d, c = space.encode(design)
    return tuple(int(v) for v in d), tuple(float(v) for v in c)


class _SafeEvaluator:
    """Picklable wrapper that turns evaluator exceptions into infeasible records."""

    def __init__(self, evaluator, n_obj):
        self.evaluator = evaluator
        self.n_obj = n_obj

    def __call__(self, item):
        design, generation = item
        try:
            ev = self.evaluator(design)
        except Exception as exc:  # noqa: BLE001 - any evaluator failure is recorded, not raised
            log.warning("evaluation failed for %s: %s", design, exc)
            return EvaluatedDesign(design, (math.nan,) * self.n_obj, math.inf, generation, repr(exc))
        ev.generation = generation
        return ev


def _rank_and_crowd(pop, config):
    F, viol = _as_arrays(pop, mask=config.objectives)
    if config.constraint_mode == "discard":
        viol = np.where(viol > 0, np.inf, 0.0)
    fronts = non_dominated_sort(F, viol)
    rank = np.empty(len(pop), int)
    crowd = np.empty(len(pop))
    for r, front in enumerate(fronts):
        rank[front] = r
        crowd[front] = crowding_distance(F[front])
    return fronts, rank, crowd


def _better(i, j, rank, crowd, rng):
    if rank[i] != rank[j]:
        return i if rank[i] < rank[j] else j
    if crowd[i] != crowd[j]:
        return i if crowd[i] > crowd[j] else j
    return i if rng.random() < 0.5 else j


def _select(pool, n, config):
    fronts, _, _ = _rank_and_crowd(pool, config)
    F = _as_arrays(pool, mask=config.objectives)[0]
    chosen = []
    for front in fronts:
        if len(chosen) + len(front) <= n:
            chosen.extend(front)
            continue
        cd = crowding_distance(F[front])
        order = np.argsort(-cd, kind="stable")
        chosen.extend(front[k] for k in order[: n - len(chosen)])
        break
    return [pool[i] for i in chosen]


def evolve(space: DesignSpace, initial: Sequence[DesignVector], config: GaConfig,
           evaluator: Callable[[DesignVector], EvaluatedDesign], map_fn=map,
           on_generation: Callable[[int, list[EvaluatedDesign]], None] | None = None) -> EvolveResult:
    """Run NSGA-II from ``initial`` (padded by LHS if short).

    ``map_fn`` evaluates a batch in order and may run in parallel; all random
    draws happen serially here, so results depend only on the seed. Offspring
    that repeat a design already in the population or the batch are dropped,
    and repeats of earlier archive entries reuse the stored evaluation.
    """
    rng = np.random.default_rng(config.seed)
    N = config.population
    designs = list(initial)[:N]
    if len(designs) < N:
        designs += lhs_sample(space, N - len(designs), int(rng.integers(2**31)))
    n_obj = max(config.objectives) + 1
    safe = _SafeEvaluator(evaluator, max(n_obj, len(OBJECTIVES)))
    cache: dict = {}
    archive: list[EvaluatedDesign] = []

    def evaluate(batch, generation):
        todo = []
        for d in batch:
            k = _key(space, d)
            if k not in cache and k not in {kk for kk, _ in todo}:
                todo.append((k, d))
        results = list(map_fn(safe, [(d, generation) for _, d in todo]))
        for (k, _), ev in zip(todo, results):
            cache[k] = ev
            archive.append(ev)
        return [cache[_key(space, d)] for d in batch]

    pop = evaluate(designs, 0)
    history = [list(pop)]
    if on_generation:
        on_generation(0, pop)
    lo, hi = space.continuous_bounds()
    n_cont = len(lo)
    levels = space.discrete_levels
    pm = config.mutation_prob if config.mutation_prob is not None else 1.0 / max(n_cont, 1)
    pd = config.discrete_mutation_prob if config.discrete_mutation_prob is not None \
        else 1.0 / (n_cont + len(levels))

    for gen in range(1, config.generations + 1):
        _, rank, crowd = _rank_and_crowd(pop, config)
        genomes = [space.encode(e.design) for e in pop]
        parents = []
        for _ in range(N):
            i, j = rng.integers(N), rng.integers(N)
            parents.append(_better(int(i), int(j), rank, crowd, rng))
        offspring = []
        for a, b in zip(parents[0::2], parents[1::2]):
            (d1, c1), (d2, c2) = genomes[a], genomes[b]
            d1, d2, c1, c2 = d1.copy(), d2.copy(), c1.copy(), c2.copy()
            if rng.random() < config.crossover_prob:
                c1, c2 = _sbx_pair(rng, c1, c2, lo, hi, config.crossover_eta)
                swap = rng.random(len(levels)) < 0.5
                d1[swap], d2[swap] = d2[swap], d1[swap].copy()
            for d, c in ((d1, c1), (d2, c2)):
                c = _polynomial_mutation(rng, c, lo, hi, config.mutation_eta, pm)
                for g, nl in enumerate(levels):
                    if rng.random() < pd:
                        d[g] = rng.integers(nl)
                offspring.append(space.decode(d, c))
        seen = {_key(space, e.design) for e in pop}
        fresh = []
        for d in offspring:
            k = _key(space, d)
            if k not in seen:
                seen.add(k)
                fresh.append(d)
        children = evaluate(fresh, gen)
        pop = _select(pop + children, N, config)
        history.append(list(pop))
        if on_generation:
            on_generation(gen, pop)
        log.info("generation %d: %d new designs, archive %d", gen, len(fresh), len(archive))
    return EvolveResult(pop, archive, history)


# --- analysis --------------------------------------------------------------------------


def extract_pareto(archive: Sequence[EvaluatedDesign], objectives_mask=(0, 1, 2)) -> list[EvaluatedDesign]:
    """Feasible non-dominated designs under the chosen objectives, sorted by the first."""
    if len(archive) == 0:
        raise ValueError("empty archive")
    mask = _mask_indices(objectives_mask, len(archive[0].objectives))
    feasible = [d for d in archive if d.feasible]
    if not feasible:
        log.warning("no feasible designs in the archive")
        return []
    F = np.array([[d.objectives[k] for k in mask] for d in feasible])
    front = non_dominated_sort(F)[0]
    front.sort(key=lambda i: (F[i, 0], i))
    return [feasible[i] for i in front]


def _mask_indices(mask, m):
    mask = list(mask)
    if mask and all(isinstance(v, (bool, np.bool_)) for v in mask):
        if len(mask) != m:
            raise ValueError("boolean mask length must match the objective count")
        return [i for i, keep in enumerate(mask) if keep]
    if not mask or any(not 0 <= int(i) < m for i in mask):
        raise ValueError("objective mask selects nothing or is out of range")
    return [int(i) for i in mask]


def front_projection(front: Sequence[EvaluatedDesign], x: int, y: int) -> np.ndarray:
    """Non-dominated (x, y) pairs of a front, sorted by x; rows are (x, y)."""
    F = np.array([[d.objectives[x], d.objectives[y]] for d in front], float)
    if len(F) == 0:
        return F.reshape(0, 2)
    keep = non_dominated_sort(F)[0]
    P = F[keep]
    return P[np.lexsort((P[:, 1], P[:, 0]))]
