"""Static Schrödinger problem with a heat-kernel reference coupling.

The reference is ``R(dx dy) = p_{eps/2}[x](y) m(dy) mu0(dx)`` and the
entropic cost ``C_eps(mu0, mu1)`` is the smallest ``H(gamma | R)`` over
couplings of ``mu0`` and ``mu1``. Since ``log p_{eps/2} ~ -d**2 / (2 eps)``,
``eps * C_eps`` approaches ``W_2**2 / 2``. The dynamic (path-space) cost
coincides with the static one, so only the static problem is solved.

Densities are taken against the space weights; plans are masses on pairs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from heatldp.heat import HeatOperator, ResolutionError, ResolutionWarning
from heatldp.ldp import check_window
from heatldp.mmspace import DiscreteSpace, as_density
from heatldp.transport import TransportError, transport_simplex, w2_squared_1d


class SinkhornError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ReferenceCoupling:
    log_entries: np.ndarray
    eps: float


@dataclass(frozen=True, eq=False)
class Coupling:
    plan: np.ndarray
    log_plan: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    f: np.ndarray
    g: np.ndarray
    iterations: int
    marginal_defect: float
    dual_trace: list = field(default_factory=list)


def reference_coupling(op: HeatOperator, mu0, eps: float) -> ReferenceCoupling:
    space = op.space
    mu0 = as_density(space, mu0, atol=1e-9)
    check_window(space, [eps], scale=0.5)
    lw = np.log(space.weight)
    with np.errstate(divide="ignore"):
        lmu = np.log(mu0)
    log_r = lmu[:, None] + lw[:, None] + op.log_kernel(eps / 2) + lw[None, :]
    return ReferenceCoupling(log_r, float(eps))


def sinkhorn(
    ref: ReferenceCoupling,
    mu0,
    mu1,
    weight,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    init: tuple | None = None,
):
    """Log-domain Sinkhorn for ``min H(gamma | R)`` with prescribed marginals.

    Alternately sets the column and row potentials so that
    ``gamma = exp(f_i + log R_ij + g_j)`` matches one marginal exactly; stops
    once the other marginal's sup defect is at most ``tol``. The dual
    objective ``<a, f> + <b, g> - gamma.sum() + 1`` is nondecreasing and is
    recorded per iteration.

    Returns ``(coupling, cost)``; the cost is ``inf`` when ``mu1`` charges a
    point that ``R`` cannot reach from the support of ``mu0``.
    """
    w = np.asarray(weight, dtype=float)
    a = np.asarray(mu0, dtype=float) * w
    b = np.asarray(mu1, dtype=float) * w
    I = np.flatnonzero(a > 0)
    J = np.flatnonzero(b > 0)
    lr = ref.log_entries[np.ix_(I, J)]
    la, lb = np.log(a[I]), np.log(b[J])
    if np.any(np.all(np.isneginf(lr), axis=0)) or np.any(np.all(np.isneginf(lr), axis=1)):
        n = w.size
        empty = np.zeros((n, n))
        with np.errstate(divide="ignore"):
            coupling = Coupling(empty, np.log(empty), mu0, mu1, np.zeros(n), np.zeros(n), 0, float("inf"))
        return coupling, float("inf")
    f = np.zeros(I.size) if init is None else np.asarray(init[0], dtype=float)[I].copy()
    g = np.zeros(J.size) if init is None else np.asarray(init[1], dtype=float)[J].copy()
    trace = []
    defect = float("inf")
    it = 0
    for it in range(1, max_iter + 1):
        g = lb - logsumexp(lr + f[:, None], axis=0)
        f = la - logsumexp(lr + g[None, :], axis=1)
        lp = f[:, None] + lr + g[None, :]
        plan = np.exp(lp)
        trace.append(float(a[I] @ f + b[J] @ g - plan.sum() + 1.0))
        defect = float(np.abs(plan.sum(axis=0) - b[J]).max())
        if defect <= tol:
            break
    else:
        raise SinkhornError(f"marginal defect {defect:.3e} above tol {tol:.1e} after {max_iter} iterations")
    n = w.size
    log_plan = np.full((n, n), -np.inf)
    log_plan[np.ix_(I, J)] = lp
    full_f = np.full(n, -np.inf)
    full_g = np.full(n, -np.inf)
    full_f[I] = f
    full_g[J] = g
    full_plan = np.exp(log_plan)
    defect = max(
        float(np.abs(full_plan.sum(axis=1) - a).max()),
        float(np.abs(full_plan.sum(axis=0) - b).max()),
    )
    cost = float(np.sum(plan * (lp - lr)))
    coupling = Coupling(full_plan, log_plan, np.asarray(mu0), np.asarray(mu1), full_f, full_g, it, defect, trace)
    return coupling, cost


def exact_w2(space: DiscreteSpace, mu0, mu1, crosscheck: bool = True) -> float:
    """Squared 2-Wasserstein distance by the transportation simplex.

    On intervals the value is checked against the monotone coupling and a
    disagreement above ``1e-9`` raises :class:`TransportError`.
    """
    w = space.weight
    a = np.asarray(mu0, dtype=float) * w
    b = np.asarray(mu1, dtype=float) * w
    I, J = np.flatnonzero(a > 0), np.flatnonzero(b > 0)
    cost = space.dist[np.ix_(I, J)] ** 2
    _, value, _ = transport_simplex(a[I], b[J], cost)
    if crosscheck and space.kind == "interval":
        q = w2_squared_1d(space.coords[I], a[I], space.coords[J], b[J])
        if abs(q - value) > 1e-9 * max(1.0, value):
            raise TransportError(f"simplex {value!r} disagrees with monotone coupling {q!r}")
    return value


@dataclass(frozen=True)
class SweepRow:
    eps: float
    cost: float
    eps_cost: float
    half_w2sq: float
    gap: float
    iters: int
    marginal_defect: float
    skipped: bool = False


def gamma_sweep(op: HeatOperator, mu0, mu1, eps_list, tol: float = 1e-10, max_iter: int = 100_000) -> list:
    """``eps * C_eps`` against ``W_2**2 / 2`` along ``eps_list``.

    Potentials are warm-started from the previous solve, rescaled by the
    ratio of regularizations. Values of ``eps`` whose kernel time ``eps/2``
    leaves the resolution window produce a skipped row and a warning.
    """
    space = op.space
    half_w2 = 0.5 * exact_w2(space, mu0, mu1)
    rows = []
    init, prev = None, None
    for eps in eps_list:
        eps = float(eps)
        try:
            ref = reference_coupling(op, mu0, eps)
        except ResolutionError as exc:
            warnings.warn(f"skipping eps={eps}: {exc}", ResolutionWarning, stacklevel=2)
            nan = float("nan")
            rows.append(SweepRow(eps, nan, nan, half_w2, nan, 0, nan, skipped=True))
            continue
        if init is not None:
            init = tuple(np.where(np.isfinite(v), v * prev / eps, 0.0) for v in init)
        coupling, cost = sinkhorn(ref, mu0, mu1, space.weight, tol=tol, max_iter=max_iter, init=init)
        init, prev = (coupling.f, coupling.g), eps
        rows.append(
            SweepRow(eps, cost, eps * cost, half_w2, abs(eps * cost - half_w2), coupling.iterations, coupling.marginal_defect)
        )
    return rows
