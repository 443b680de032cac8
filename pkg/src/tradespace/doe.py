"""Latin hypercube sampling over the mixed discrete/continuous design space.

A design is a team size, a catalog camera index, a boresight angle (shared by
the team, or one per UAV slot when ``per_uav_boresight`` is set) and, in the
flattened trajectory mode, the raw trajectory decision vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["DesignSpace", "DesignVector", "lhs_sample"]


@dataclass(frozen=True)
class DesignSpace:
    team_size_options: tuple[int, ...] = (1, 3)
    n_cameras: int = 10
    boresight_range: tuple[float, float] = (0.0, math.pi / 2)
    per_uav_boresight: bool = False
    # flattened mode: (lower, upper) per trajectory gene
    trajectory_bounds: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def __post_init__(self):
        opts = tuple(int(n) for n in self.team_size_options)
        if not opts:
            raise ValueError("team_size_options must be non-empty")
        if any(n < 1 for n in opts) or len(set(opts)) != len(opts):
            raise ValueError("team sizes must be distinct and >= 1")
        object.__setattr__(self, "team_size_options", opts)
        if self.n_cameras < 1:
            raise ValueError("need at least one camera")
        lo, hi = (float(b) for b in self.boresight_range)
        if not 0.0 <= lo <= hi <= math.pi / 2 + 1e-12:
            raise ValueError("boresight bounds must lie within [0, pi/2]")
        object.__setattr__(self, "boresight_range", (lo, min(hi, math.pi / 2)))
        if self.trajectory_bounds is not None:
            tlo, thi = (tuple(float(v) for v in b) for b in self.trajectory_bounds)
            if len(tlo) != len(thi) or not tlo or any(a > b for a, b in zip(tlo, thi)):
                raise ValueError("trajectory bounds must be matching non-empty (lower, upper) tuples")
            object.__setattr__(self, "trajectory_bounds", (tlo, thi))

    @property
    def max_team(self) -> int:
        return max(self.team_size_options)

    @property
    def n_boresight_genes(self) -> int:
        return self.max_team if self.per_uav_boresight else 1

    @property
    def n_trajectory_genes(self) -> int:
        return 0 if self.trajectory_bounds is None else len(self.trajectory_bounds[0])

    @property
    def discrete_levels(self) -> tuple[int, int]:
        """Level counts of the (team size, camera) genes."""
        return len(self.team_size_options), self.n_cameras

    def continuous_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = [self.boresight_range[0]] * self.n_boresight_genes
        hi = [self.boresight_range[1]] * self.n_boresight_genes
        if self.trajectory_bounds is not None:
            lo += list(self.trajectory_bounds[0])
            hi += list(self.trajectory_bounds[1])
        return np.array(lo), np.array(hi)

    def encode(self, design: "DesignVector") -> tuple[np.ndarray, np.ndarray]:
        design.validate(self)
        discrete = np.array([self.team_size_options.index(design.n_uav), design.camera_index])
        angles = list(design.boresights)
        angles += [angles[-1]] * (self.n_boresight_genes - len(angles))
        genes = angles[: self.n_boresight_genes]
        if self.trajectory_bounds is not None:
            genes += list(design.trajectory_genes)
        return discrete, np.array(genes, float)

    def decode(self, discrete, continuous) -> "DesignVector":
        n_uav = self.team_size_options[int(discrete[0])]
        continuous = np.asarray(continuous, float)
        nb = self.n_boresight_genes
        if self.per_uav_boresight:
            angles = tuple(float(a) for a in continuous[:n_uav])
            boresight = angles[0]
        else:
            angles = None
            boresight = float(continuous[0])
        traj = tuple(float(g) for g in continuous[nb:]) if self.trajectory_bounds is not None else None
        return DesignVector(n_uav, int(discrete[1]), boresight, angles, traj)


@dataclass(frozen=True)
class DesignVector:
    n_uav: int
    camera_index: int
    boresight: float
    per_uav: tuple[float, ...] | None = None
    trajectory_genes: tuple[float, ...] | None = None

    @property
    def boresights(self) -> tuple[float, ...]:
        """One angle per UAV."""
        if self.per_uav is not None:
            return tuple(self.per_uav)
        return (self.boresight,) * self.n_uav

    def validate(self, space: DesignSpace) -> None:
        if self.n_uav not in space.team_size_options:
            raise ValueError(f"team size {self.n_uav} not in {space.team_size_options}")
        if not 0 <= self.camera_index < space.n_cameras:
            raise ValueError(f"camera index {self.camera_index} out of range")
        lo, hi = space.boresight_range
        if any(not lo - 1e-12 <= a <= hi + 1e-12 for a in self.boresights):
            raise ValueError("boresight outside the design space")
        if self.per_uav is not None and len(self.per_uav) != self.n_uav:
            raise ValueError("need one boresight per UAV")
        if (self.trajectory_genes is None) != (space.trajectory_bounds is None):
            raise ValueError("trajectory genes present iff the space is in flattened mode")
        if self.trajectory_genes is not None and len(self.trajectory_genes) != space.n_trajectory_genes:
            raise ValueError("wrong number of trajectory genes")


def _stratified(rng: np.random.Generator, n: int, jitter: bool) -> np.ndarray:
    """One point per interval [k/n, (k+1)/n), randomly permuted."""
    offset = rng.random(n) if jitter else np.full(n, 0.5)
    return (rng.permutation(n) + offset) / n


def lhs_sample(space: DesignSpace, n: int, seed: int) -> list[DesignVector]:
    """Latin hypercube sample of ``n`` designs.

    Continuous genes get one uniform draw per stratum. Discrete genes use
    stratum midpoints mapped onto the levels by floor, which keeps level
    counts within one of each other.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    discrete = np.column_stack([
        np.floor(_stratified(rng, n, jitter=False) * levels).astype(int)
        for levels in space.discrete_levels
    ])
    lo, hi = space.continuous_bounds()
    unit = np.column_stack([_stratified(rng, n, jitter=True) for _ in range(len(lo))])
    continuous = lo + unit * (hi - lo)
    return [space.decode(d, c) for d, c in zip(discrete, continuous)]
