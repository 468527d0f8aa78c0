"""Finite metric measure spaces and their metric calculus.

A :class:`DiscreteSpace` is a finite point set with a dense distance matrix,
positive point weights (the reference measure) and a declared lower Ricci
bound ``k_lower``. Three builders are provided: an equispaced interval with
trapezoid weights, an equispaced circle with the arc metric, and a weighted
graph with shortest-path distances.

Scalar fields and densities are plain length-``n`` numpy arrays; the helpers
:func:`as_field` and :func:`as_density` validate them against a space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

KINDS = ("interval", "circle", "graph")

DENSITY_ATOL = 1e-12
NEIGHBOR_RTOL = 1e-9


class SpaceError(ValueError):
    """Invalid space parameters or a field that does not fit its space."""


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteSpace:
    kind: str
    dist: np.ndarray
    weight: np.ndarray
    k_lower: float
    mesh: float
    edges: np.ndarray
    edge_length: np.ndarray
    coords: np.ndarray | None = None
    extent: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.weight.shape[0]

    @property
    def diam(self) -> float:
        return float(self.dist.max())

    @property
    def total_mass(self) -> float:
        return float(self.weight.sum())

    @property
    def k_minus(self) -> float:
        return max(0.0, -self.k_lower)

    @property
    def topology_tag(self) -> str:
        return self.kind

    def nearest(self, x: float) -> int:
        """Index of the grid point closest to coordinate ``x`` (interval/circle)."""
        if self.coords is None:
            raise SpaceError("graph spaces have no coordinates")
        if self.kind == "circle":
            d = np.abs(self.coords - x) % self.extent
            d = np.minimum(d, self.extent - d)
        else:
            d = np.abs(self.coords - x)
        return int(np.argmin(d))

    def ball(self, center: int, r: float) -> np.ndarray:
        """Indices of the closed ball of radius ``r`` around point ``center``."""
        return np.nonzero(self.dist[center] <= r * (1 + NEIGHBOR_RTOL))[0]


def _metric_closure(d: np.ndarray) -> np.ndarray:
    # Min-plus passes until d[i,j] <= fl(d[i,k] + d[k,j]) holds bit-exactly.
    d = d.copy()
    while True:
        changed = False
        for k in range(d.shape[0]):
            cand = d[:, k : k + 1] + d[k : k + 1, :]
            mask = cand < d
            if mask.any():
                d[mask] = cand[mask]
                changed = True
        if not changed:
            return d


def _mesh(d: np.ndarray) -> float:
    off = d + np.diag(np.full(d.shape[0], np.inf))
    return float(off.min(axis=1).max())


def _grid_space(kind, n, extent, k_lower):
    idx = np.arange(n)
    gap = np.abs(idx[:, None] - idx[None, :])
    if kind == "interval":
        h = extent / (n - 1)
        coords = np.linspace(0.0, extent, n)
        weight = np.full(n, h)
        weight[0] = weight[-1] = h / 2
        edges = np.stack([idx[:-1], idx[1:]], axis=1)
    else:
        h = extent / n
        coords = idx * h
        weight = np.full(n, h)
        gap = np.minimum(gap, n - gap)
        edges = np.stack([idx, (idx + 1) % n], axis=1)
    dist = _metric_closure(gap * h)
    return DiscreteSpace(
        kind=kind,
        dist=_frozen(dist),
        weight=_frozen(weight),
        k_lower=float(k_lower),
        mesh=_mesh(dist),
        edges=np.asarray(edges, dtype=int),
        edge_length=_frozen(np.full(len(edges), h)),
        coords=_frozen(coords),
        extent=float(extent),
    )


def build_space(kind: str, **params) -> DiscreteSpace:
    """Build a discrete model space.

    Parameters
    ----------
    kind : {"interval", "circle", "graph"}
    n : int
        Number of points (interval and circle).
    length : float
        Interval length ``L`` (interval).
    circumference : float
        Circumference ``C`` (circle).
    k_lower : float, optional
        Declared lower Ricci bound; defaults to 0 for interval and circle,
        required for graphs.
    edges : sequence of (i, j, length)
        Undirected edge list (graph).
    weights : sequence of float
        Per-node measure weights (graph).
    """
    if kind == "interval":
        n, length = int(params["n"]), float(params.get("length", 1.0))
        if n < 2:
            raise SpaceError("interval needs n >= 2")
        if not length > 0:
            raise SpaceError("interval length must be positive")
        return _grid_space("interval", n, length, params.get("k_lower", 0.0))
    if kind == "circle":
        n, circ = int(params["n"]), float(params.get("circumference", 2 * np.pi))
        if n < 3:
            raise SpaceError("circle needs n >= 3")
        if not circ > 0:
            raise SpaceError("circumference must be positive")
        return _grid_space("circle", n, circ, params.get("k_lower", 0.0))
    if kind == "graph":
        return _graph_space(params)
    raise SpaceError(f"unknown space kind {kind!r}; expected one of {KINDS}")


def _graph_space(params) -> DiscreteSpace:
    if "k_lower" not in params:
        raise SpaceError("graph spaces need an explicit k_lower")
    weight = np.asarray(params["weights"], dtype=float)
    n = weight.shape[0]
    if n < 2:
        raise SpaceError("graph needs at least 2 nodes")
    if np.any(~np.isfinite(weight)) or np.any(weight <= 0):
        raise SpaceError("node weights must be positive and finite")
    raw = [tuple(e) for e in params["edges"]]
    if not raw:
        raise SpaceError("graph has no edges")
    ii = np.array([int(e[0]) for e in raw])
    jj = np.array([int(e[1]) for e in raw])
    ln = np.array([float(e[2]) for e in raw])
    if np.any(ii == jj) or ii.min() < 0 or max(ii.max(), jj.max()) >= n:
        raise SpaceError("edge endpoints must be distinct node indices in range")
    if np.any(~np.isfinite(ln)) or np.any(ln <= 0):
        raise SpaceError("edge lengths must be positive and finite")
    adj = csr_matrix((ln, (ii, jj)), shape=(n, n))
    ncomp, _ = connected_components(adj, directed=False)
    if ncomp != 1:
        raise SpaceError(f"graph is disconnected ({ncomp} components)")
    dist = shortest_path(adj, method="D", directed=False)
    dist = _metric_closure(0.5 * (dist + dist.T))
    # Parallel edges: keep the shortest.
    best = {}
    for a, b, l in zip(ii, jj, ln):
        key = (min(a, b), max(a, b))
        best[key] = min(best.get(key, np.inf), l)
    keys = sorted(best)
    return DiscreteSpace(
        kind="graph",
        dist=_frozen(dist),
        weight=_frozen(weight),
        k_lower=float(params["k_lower"]),
        mesh=_mesh(dist),
        edges=np.array(keys, dtype=int).reshape(-1, 2),
        edge_length=_frozen([best[k] for k in keys]),
    )


def refine_space(space: DiscreteSpace) -> tuple[DiscreteSpace, np.ndarray]:
    """Double the resolution of an interval or circle grid.

    Returns the refined space and the indices, in the refined space, of the
    original points.
    """
    if space.kind == "interval":
        fine = _grid_space("interval", 2 * space.n - 1, space.extent, space.k_lower)
    elif space.kind == "circle":
        fine = _grid_space("circle", 2 * space.n, space.extent, space.k_lower)
    else:
        raise SpaceError("only interval and circle grids can be refined")
    return fine, 2 * np.arange(space.n)


def as_field(space: DiscreteSpace, values) -> np.ndarray:
    f = np.asarray(values, dtype=float)
    if f.shape != (space.n,):
        raise SpaceError(f"field has shape {f.shape}, expected ({space.n},)")
    if not np.all(np.isfinite(f)):
        raise SpaceError("field has non-finite entries")
    return f


def as_density(space: DiscreteSpace, values, atol: float = DENSITY_ATOL) -> np.ndarray:
    rho = as_field(space, values)
    if np.any(rho < 0):
        raise SpaceError("density has negative entries")
    mass = float(rho @ space.weight)
    if abs(mass - 1.0) > atol:
        raise SpaceError(f"density integrates to {mass!r}, not 1")
    return rho


def normalize_density(space: DiscreteSpace, values) -> np.ndarray:
    """Scale a nonnegative field so that it integrates to one against the weights."""
    rho = as_field(space, values)
    if np.any(rho < 0):
        raise SpaceError("density has negative entries")
    mass = float(rho @ space.weight)
    if not mass > 0:
        raise SpaceError("cannot normalize a field with zero mass")
    return rho / mass


def lipschitz_constant(space: DiscreteSpace, f) -> float:
    f = as_field(space, f)
    diff = np.abs(f[:, None] - f[None, :])
    off = ~np.eye(space.n, dtype=bool)
    return float((diff[off] / space.dist[off]).max())


def neighbor_mask(space: DiscreteSpace) -> np.ndarray:
    mask = space.dist <= (1 + NEIGHBOR_RTOL) * space.mesh
    np.fill_diagonal(mask, False)
    return mask


def local_slope(space: DiscreteSpace, f) -> np.ndarray:
    """Largest difference quotient of ``f`` towards mesh-scale neighbours."""
    f = as_field(space, f)
    mask = neighbor_mask(space)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.abs(f[:, None] - f[None, :]) / space.dist
    q = np.where(mask, q, 0.0)
    return q.max(axis=1)


def dist_to_set(space: DiscreteSpace, i: int, A, mode: str = "inf") -> float:
    A = np.atleast_1d(np.asarray(A, dtype=int))
    if A.size == 0:
        raise SpaceError("distance to an empty set is undefined")
    row = space.dist[i, A]
    if mode == "inf":
        return float(row.min())
    if mode == "sup":
        return float(row.max())
    raise SpaceError(f"mode must be 'inf' or 'sup', got {mode!r}")
