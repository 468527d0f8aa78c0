"""Exact discrete optimal transport.

:func:`transport_simplex` solves the balanced transportation problem by the
primal simplex on spanning-tree bases (MODI potentials, Bland's rule for
both the entering and the leaving cell). :func:`w2_squared_1d` is the
closed-form monotone coupling on the line, used as an independent check.
"""

from __future__ import annotations

from collections import deque

import numpy as np


class TransportError(RuntimeError):
    pass


def _northwest_corner(a, b, tol):
    m, n = a.size, b.size
    a, b = a.copy(), b.copy()
    x = np.zeros((m, n))
    basis = []
    i = j = 0
    while True:
        q = min(a[i], b[j])
        x[i, j] = q
        basis.append((i, j))
        a[i] -= q
        b[j] -= q
        if i == m - 1 and j == n - 1:
            break
        # Advance exactly one index per step so the basis has m + n - 1 cells.
        if i == m - 1:
            j += 1
        elif j == n - 1:
            i += 1
        elif a[i] <= tol:
            i += 1
        else:
            j += 1
    return x, basis


def _potentials(cost, basis, m, n):
    rows = [[] for _ in range(m)]
    cols = [[] for _ in range(n)]
    for i, j in basis:
        rows[i].append(j)
        cols[j].append(i)
    u = np.full(m, np.nan)
    v = np.full(n, np.nan)
    u[0] = 0.0
    queue = deque([("r", 0)])
    while queue:
        side, k = queue.popleft()
        if side == "r":
            for j in rows[k]:
                if np.isnan(v[j]):
                    v[j] = cost[k, j] - u[k]
                    queue.append(("c", j))
        else:
            for i in cols[k]:
                if np.isnan(u[i]):
                    u[i] = cost[i, k] - v[k]
                    queue.append(("r", i))
    if np.isnan(u).any() or np.isnan(v).any():
        raise TransportError("basis is not a spanning tree")
    return u, v


def _tree_path(basis, m, n, i0, j0):
    """Cells on the tree path from row node ``i0`` to column node ``j0``."""
    adj = {}
    for i, j in basis:
        adj.setdefault(("r", i), []).append(("c", j))
        adj.setdefault(("c", j), []).append(("r", i))
    start, goal = ("r", i0), ("c", j0)
    prev = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for nb in adj.get(node, []):
            if nb not in prev:
                prev[nb] = node
                queue.append(nb)
    if goal not in prev:
        raise TransportError("entering cell does not close a cycle")
    nodes = [goal]
    while prev[nodes[-1]] is not None:
        nodes.append(prev[nodes[-1]])
    nodes.reverse()
    cells = []
    for p, q in zip(nodes, nodes[1:]):
        cells.append((p[1], q[1]) if p[0] == "r" else (q[1], p[1]))
    return cells


def transport_simplex(a, b, cost, max_pivots: int = 200_000):
    """Minimize ``<x, cost>`` over ``x >= 0`` with row sums ``a`` and column sums ``b``.

    Returns ``(plan, value, n_pivots)``. ``a`` and ``b`` must have equal totals.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cost = np.asarray(cost, dtype=float)
    m, n = a.size, b.size
    if cost.shape != (m, n):
        raise ValueError("cost shape does not match marginals")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("marginals must be nonnegative")
    scale = max(a.sum(), b.sum(), 1e-300)
    if abs(a.sum() - b.sum()) > 1e-9 * scale:
        raise ValueError("unbalanced marginals")
    tol = 1e-14 * scale
    x, basis = _northwest_corner(a, b, tol)
    ctol = 1e-12 * max(1.0, np.abs(cost).max())
    in_basis = np.zeros((m, n), dtype=bool)
    for cell in basis:
        in_basis[cell] = True
    for pivots in range(max_pivots):
        u, v = _potentials(cost, basis, m, n)
        reduced = cost - u[:, None] - v[None, :]
        reduced[in_basis] = 0.0
        cand = np.flatnonzero(reduced < -ctol)
        if cand.size == 0:
            return x, float(np.sum(x * cost)), pivots
        ie, je = divmod(int(cand[0]), n)
        path = _tree_path(basis, m, n, ie, je)
        # Cycle: entering (+), then alternate -, + along the tree path from row ie.
        minus = path[0::2]
        plus = path[1::2]
        theta = min(x[c] for c in minus)
        leaving = min((c for c in minus if x[c] <= theta + tol), key=lambda c: c[0] * n + c[1])
        for c in minus:
            x[c] -= theta
        for c in plus:
            x[c] += theta
        x[ie, je] = theta
        x[leaving] = 0.0
        basis.remove(leaving)
        basis.append((ie, je))
        in_basis[leaving] = False
        in_basis[ie, je] = True
        np.maximum(x, 0.0, out=x)
    raise TransportError(f"no optimum after {max_pivots} pivots")


def w2_squared_1d(x, a, y, b) -> float:
    """Squared 2-Wasserstein distance between weighted point sets on the line
    via the monotone (quantile) coupling."""
    x, a, y, b = (np.asarray(v, dtype=float) for v in (x, a, y, b))
    ox, oy = np.argsort(x, kind="stable"), np.argsort(y, kind="stable")
    x, a, y, b = x[ox], a[ox], y[oy], b[oy]
    ca, cb = np.cumsum(a), np.cumsum(b)
    total = min(ca[-1], cb[-1])
    levels = np.unique(np.concatenate([[0.0], ca, cb]))
    levels = levels[levels <= total]
    levels[-1] = total
    mids = 0.5 * (levels[:-1] + levels[1:])
    widths = np.diff(levels)
    ix = np.minimum(np.searchsorted(ca, mids), x.size - 1)
    iy = np.minimum(np.searchsorted(cb, mids), y.size - 1)
    return float(np.sum(widths * (x[ix] - y[iy]) ** 2))
