"""Slowed-down Brownian motion observed on a time partition.

``SlowedBM(op, start, t_scale)`` is the heat-kernel Markov process started at
``start`` and run at speed ``t_scale``: its transition over ``[s, s']`` is
``p_{t_scale (s' - s)}``. Only partition nodes are ever evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from heatldp.heat import HeatOperator, ResolutionError, resolution_floor
from heatldp.ldp import fit_limit
from heatldp.mmspace import DiscreteSpace, SpaceError


@dataclass(frozen=True, eq=False)
class Partition:
    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a partition needs at least the two endpoints")
        if t[0] != 0.0 or t[-1] != 1.0:
            raise ValueError("partitions must start at 0 and end at 1")
        if np.any(np.diff(t) <= 0):
            raise ValueError("partition times must be strictly increasing")
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, m: int) -> "Partition":
        return cls(np.linspace(0.0, 1.0, m + 1))

    @property
    def m(self) -> int:
        return self.times.size - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)


@dataclass(frozen=True, eq=False)
class PartitionPath:
    partition: Partition
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=int)
        if pts.shape != (self.partition.m + 1,):
            raise ValueError(f"expected {self.partition.m + 1} points, got {pts.shape}")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True, eq=False)
class SlowedBM:
    op: HeatOperator
    start: int
    t_scale: float

    def __post_init__(self):
        if not self.t_scale > 0:
            raise ValueError("t_scale must be positive")

    @property
    def space(self) -> DiscreteSpace:
        return self.op.space

    def log_transition(self, dt: float) -> np.ndarray:
        """Log of the transition probabilities ``p_{t dt}[i](j) weight_j``."""
        s = self.t_scale * dt
        if s < resolution_floor(self.space):
            raise ResolutionError(f"time increment {s:.3g} is below the grid resolution")
        return self.op.log_kernel(s) + np.log(self.space.weight)[None, :]


def marginal_log_density(bm: SlowedBM, partition: Partition, points) -> float:
    """Log density of ``(gamma_{t_1}, ..., gamma_{t_m})`` against the product
    of the weights, evaluated at ``points[1:]``; ``points[0]`` must be the start."""
    pts = PartitionPath(partition, points).points
    if pts[0] != bm.start:
        return float("-inf")
    total = 0.0
    for k, dt in enumerate(partition.steps):
        total += bm.op.log_kernel(bm.t_scale * dt)[pts[k], pts[k + 1]]
    return float(total)


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def sample_path(bm: SlowedBM, partition: Partition, seed: int, index: int = 0) -> PartitionPath:
    """Draw one path; the stream depends only on ``(seed, index)``."""
    rng = _stream(seed, index)
    pts = [bm.start]
    for dt in partition.steps:
        prob = np.exp(bm.log_transition(dt)[pts[-1]])
        pts.append(int(rng.choice(bm.space.n, p=prob / prob.sum())))
    return PartitionPath(partition, np.array(pts))


def sample_paths(bm: SlowedBM, partition: Partition, n_paths: int, seed: int) -> np.ndarray:
    """``(n_paths, m + 1)`` array of sampled node indices, reproducible per path."""
    return np.stack([sample_path(bm, partition, seed, k).points for k in range(n_paths)])


def kinetic_rate(space: DiscreteSpace, path: PartitionPath, start: int | None = None) -> float:
    """``(1/4) sum d(gamma_i, gamma_{i+1})**2 / (t_{i+1} - t_i)``; ``inf`` if the
    path does not begin at ``start``."""
    pts = path.points
    if start is not None and pts[0] != start:
        return float("inf")
    d = space.dist[pts[:-1], pts[1:]]
    return float(np.sum(d**2 / path.partition.steps) / 4)


def tube_log_probability(bm: SlowedBM, ref_path: PartitionPath, r: float) -> float:
    """``log P(gamma_{t_i} in B_r(ref_{t_i}) for all i)`` by masked forward recursion."""
    space = bm.space
    if r < space.mesh * (1 - 1e-12):
        raise SpaceError(f"tube radius {r:.3g} is below the mesh {space.mesh:.3g}")
    balls = [space.ball(c, r) for c in ref_path.points]
    if any(b.size == 0 for b in balls):
        raise SpaceError("empty tube section")
    if bm.start not in balls[0]:
        return float("-inf")
    v = np.full(space.n, -np.inf)
    v[bm.start] = 0.0
    for k, dt in enumerate(ref_path.partition.steps):
        lt = bm.log_transition(dt)
        nxt = np.full(space.n, -np.inf)
        src = balls[k]
        nxt[balls[k + 1]] = logsumexp(v[src][:, None] + lt[np.ix_(src, balls[k + 1])], axis=0)
        v = nxt
    return float(logsumexp(v))


def tube_constants(space: DiscreteSpace, ref_path: PartitionPath) -> tuple[float, float]:
    """``(ell, C)``: the partition kinetic rate and the first-order ball slack
    ``sum d_i / dt_i``."""
    d = space.dist[ref_path.points[:-1], ref_path.points[1:]]
    if np.any(d <= 0):
        raise SpaceError("reference path has a zero-length segment")
    ell = kinetic_rate(space, ref_path)
    return ell, float(np.sum(d / ref_path.partition.steps))


def tube_ldp_check(op: HeatOperator, start: int, ref_path: PartitionPath, r: float, t_grid, slack: float = 0.15):
    """Fit ``lim t log B_t(U_r)`` and report the window
    ``[-ell - delta, -ell + C r + delta]`` with ``delta = slack * ell``."""
    space = op.space
    if ref_path.points[0] != start:
        raise SpaceError("reference path must start at the Brownian start point")
    ell, C = tube_constants(space, ref_path)
    t = np.asarray(t_grid, dtype=float)
    logs = np.array([tube_log_probability(SlowedBM(op, start, s), ref_path, r) for s in t])
    delta = slack * ell
    window = (-ell - delta, -ell + C * r + delta)
    return fit_limit(t, t * logs, target=-ell, window=window, extras={"ell": ell, "C": C, "r": r, "log_prob": logs})
