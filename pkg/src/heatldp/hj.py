"""Hopf-Lax and Hopf-Cole semigroups and their contraction estimates.

Sign bookkeeping: ``hopf_lax_inf`` is the inf-convolution
``Q_t f(x) = min_y f(y) + d(x,y)**2 / (2t)`` and ``hopf_lax_sup`` the
sup-convolution ``max_y f(y) - d(x,y)**2 / (2t) = -Q_t(-f)(x)``, which is the
vanishing-viscosity limit of ``eps * log h_{eps t/2}(exp(f/eps))``.

The small-time LDP of the heat kernel uses kernel time ``t`` with rate
``d**2/4``; setting ``eps := t`` and evaluating the viscous semigroup at time
2 turns one into the other, since ``h_{t*2/2}`` is then the kernel at time
``t`` and ``d**2/(2*2) = d**2/4``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from heatldp.heat import HeatOperator, ResolutionWarning, resolution_floor
from heatldp.mmspace import DiscreteSpace, SpaceError, as_field, lipschitz_constant, local_slope, refine_space


def hopf_lax_inf(space: DiscreteSpace, f, t: float, return_argmin: bool = False):
    f = as_field(space, f)
    if not t > 0:
        raise ValueError("t must be positive")
    cand = f[None, :] + space.dist**2 / (2 * t)
    arg = np.argmin(cand, axis=1)  # first occurrence: ties go to the lowest index
    val = cand[np.arange(space.n), arg]
    return (val, arg) if return_argmin else val


def hopf_lax_sup(space: DiscreteSpace, f, t: float) -> np.ndarray:
    return -hopf_lax_inf(space, -as_field(space, f), t)


@dataclass(frozen=True, eq=False)
class ViscousSolution:
    phi0: np.ndarray
    t: float
    eps: float
    values: np.ndarray
    log_weights: np.ndarray


def viscous_semigroup(op: HeatOperator, phi, t: float, eps: float) -> ViscousSolution:
    """Hopf-Cole solution ``eps * log h_{eps t/2}(exp(phi/eps))``.

    Evaluated as a per-row shifted log-sum-exp over the log kernel, so
    ``exp(phi/eps)`` is never formed. ``log_weights`` holds the row shift.
    """
    space = op.space
    phi = as_field(space, phi)
    if not (t > 0 and eps > 0):
        raise ValueError("t and eps must be positive")
    s = eps * t / 2
    if s < resolution_floor(space):
        warnings.warn(
            f"kernel time eps*t/2={s:.3g} is below the grid resolution {resolution_floor(space):.3g}",
            ResolutionWarning,
            stacklevel=2,
        )
    expo = phi[None, :] / eps + op.log_kernel(s) + np.log(space.weight)[None, :]
    shift = expo.max(axis=1)
    val = eps * (shift + np.log(np.exp(expo - shift[:, None]).sum(axis=1)))
    return ViscousSolution(phi, float(t), float(eps), val, shift)


@dataclass(frozen=True)
class SweepRow:
    eps: float
    t: float
    sup_err: float
    mean_err: float


@dataclass(frozen=True)
class SweepTable:
    rows: list
    floor: float

    def errors(self) -> np.ndarray:
        return np.array([r.sup_err for r in self.rows])


def _discretization_floor(space, phi_fn, t):
    fine, keep = refine_space(space)
    coarse = hopf_lax_sup(space, phi_fn(space.coords), t)
    refined = hopf_lax_sup(fine, phi_fn(fine.coords), t)[keep]
    return float(np.abs(coarse - refined).max())


def convergence_sweep(op: HeatOperator, phi, t: float, eps_list) -> SweepTable:
    """Sup and mean distance between the viscous solution and the Hopf-Lax limit.

    ``phi`` may be an array or a callable of the grid coordinates; with a
    callable on an interval or circle the discretization floor is measured by
    recomputing the Hopf-Lax target on the doubled grid. Otherwise the floor
    is NaN.
    """
    space = op.space
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list) or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be positive and strictly decreasing")
    if callable(phi):
        phi_fn = phi
        values = as_field(space, phi_fn(space.coords))
    else:
        phi_fn = None
        values = as_field(space, phi)
    target = hopf_lax_sup(space, values, t)
    rows = []
    for e in eps_list:
        err = np.abs(viscous_semigroup(op, values, t, e).values - target)
        rows.append(SweepRow(e, float(t), float(err.max()), float(err.mean())))
    floor = float("nan")
    if phi_fn is not None and space.kind in ("interval", "circle"):
        floor = _discretization_floor(space, phi_fn, t)
    return SweepTable(rows, floor)


def negative_part_sup(v: np.ndarray) -> float:
    return float(np.maximum(-v, 0.0).max())


@dataclass(frozen=True)
class ContractionReport:
    t: float
    eps: float
    sup_initial: float
    sup_evolved: float
    lip_initial: float
    lip_evolved: float
    lap_neg_initial: float
    lap_neg_evolved: float
    bound_lip: float
    bound_lap: float
    rtol: float
    lip_limit: float
    lap_limit: float
    pass_sup: bool
    pass_lip: bool
    pass_lap: bool

    @property
    def passed(self) -> bool:
        return self.pass_sup and self.pass_lip and self.pass_lap


def contraction_check(
    op: HeatOperator, phi, t: float, eps: float, rtol: float = 1e-6, mesh_coef: float = 0.0
) -> ContractionReport:
    """Compare Lipschitz and Laplacian bounds of the viscous solution.

    Bounds: ``Lip(phi_t) <= exp(-K eps t/2) Lip(phi)`` and
    ``(L phi_t)^- <= |(L phi)^-|_inf + K^- t exp(K^- eps t) Lip(phi)**2``,
    with ``Lip`` standing in for the sup of the gradient. Checks use the
    relative tolerance ``rtol + mesh_coef * mesh``; the Laplacian slack is
    measured against ``|L phi|_inf``. Both limits also absorb rounding of
    size ``64 eps_mach (1 + |phi|_inf)`` amplified by ``1/mesh`` and by the
    generator norm respectively, so that constant data pass.
    """
    space = op.space
    gen = op.generator
    phi = as_field(space, phi)
    sol = viscous_semigroup(op, phi, t, eps)
    K, Km = space.k_lower, space.k_minus
    lip0 = lipschitz_constant(space, phi)
    lip1 = lipschitz_constant(space, sol.values)
    lap0 = gen.action @ phi
    neg0 = negative_part_sup(lap0)
    neg1 = negative_part_sup(gen.action @ sol.values)
    bound_lip = np.exp(-K * eps * t / 2) * lip0
    bound_lap = neg0 + Km * t * np.exp(Km * eps * t) * lip0**2
    tol = rtol + mesh_coef * space.mesh
    sup0 = float(np.abs(phi).max())
    sup1 = float(np.abs(sol.values).max())
    noise = 64 * np.finfo(float).eps * (1 + sup0)
    lip_limit = float(bound_lip * (1 + tol) + noise / space.mesh)
    lap_limit = float(bound_lap + tol * float(np.abs(lap0).max()) + noise * np.abs(gen.action).sum(axis=1).max())
    return ContractionReport(
        t=float(t),
        eps=float(eps),
        sup_initial=sup0,
        sup_evolved=sup1,
        lip_initial=lip0,
        lip_evolved=lip1,
        lap_neg_initial=neg0,
        lap_neg_evolved=neg1,
        bound_lip=float(bound_lip),
        bound_lap=float(bound_lap),
        rtol=tol,
        lip_limit=lip_limit,
        lap_limit=lap_limit,
        pass_sup=bool(sup1 <= sup0 + 1e-10),
        pass_lip=bool(lip1 <= lip_limit),
        pass_lap=bool(neg1 <= lap_limit),
    )


def laplacian_bound_integrated(op: HeatOperator, phi, t: float, eta) -> tuple[float, float]:
    """Both sides of ``sum Q_t(-phi) (L eta) w <= C(t, phi) sum eta w``.

    ``C(t, phi) = |(L phi)^-|_inf + K^- t Lip(phi)**2``.
    """
    space = op.space
    phi = as_field(space, phi)
    eta = as_field(space, eta)
    if np.any(eta < 0):
        raise SpaceError("eta must be nonnegative")
    w = space.weight
    q = hopf_lax_inf(space, -phi, t)
    lhs = float(np.sum(q * (op.generator.action @ eta) * w))
    const = negative_part_sup(op.generator.action @ phi) + space.k_minus * t * lipschitz_constant(space, phi) ** 2
    rhs = float(const * np.sum(eta * w))
    return lhs, rhs


def hopflax_residual(space: DiscreteSpace, f, t: float, dt: float) -> float:
    """Sup residual of ``d/dt Q_t f + |lip Q_t f|**2 / 2 = 0`` by central differences."""
    if not 0 < dt < t:
        raise ValueError("need 0 < dt < t")
    f = as_field(space, f)
    dq = (hopf_lax_inf(space, f, t + dt) - hopf_lax_inf(space, f, t - dt)) / (2 * dt)
    slope = local_slope(space, hopf_lax_inf(space, f, t))
    return float(np.abs(dq + 0.5 * slope**2).max())
