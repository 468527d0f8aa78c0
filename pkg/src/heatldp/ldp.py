"""Small-time large deviations of the heat kernel measures ``mu_t[x] = p_t[x] m``.

Every limit ``t -> 0`` is estimated by sampling ``t`` inside the resolution
window ``[10 mesh**2, diam**2]`` and extrapolating an affine fit
``v(t) ~ a + b t`` through the three smallest times; the intercept ``a`` is
the fitted limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from heatldp.heat import HeatOperator, ResolutionError
from heatldp.mmspace import DiscreteSpace, SpaceError, as_field

FIT_POINTS = 3


@dataclass(frozen=True, eq=False)
class RateFunction:
    base_point: int
    values: np.ndarray


def rate_function(space: DiscreteSpace, x: int) -> RateFunction:
    return RateFunction(int(x), space.dist[x] ** 2 / 4)


@dataclass(frozen=True, eq=False)
class LimitFit:
    t_grid: np.ndarray
    values: np.ndarray
    fitted_limit: float
    fit_residual: float
    slope: float
    target: float = float("nan")
    window: tuple = (float("nan"), float("nan"))
    extras: dict = field(default_factory=dict)

    @property
    def rel_err(self) -> float:
        if self.target == 0:
            return abs(self.fitted_limit)
        return abs(self.fitted_limit - self.target) / abs(self.target)

    def rows(self):
        """One ``(t, value, fitted_limit, target, rel_err, window_lo, window_hi)`` per time."""
        return [
            (float(t), float(v), self.fitted_limit, self.target, self.rel_err, *self.window)
            for t, v in zip(self.t_grid, self.values)
        ]


def resolution_window(space: DiscreteSpace) -> tuple[float, float]:
    return 10 * space.mesh**2, space.diam**2


def check_window(space: DiscreteSpace, t_grid, scale: float = 1.0) -> np.ndarray:
    """Validate times against the resolution window; ``scale`` multiplies each
    time to give the kernel time actually used."""
    t = np.asarray(t_grid, dtype=float)
    lo, hi = resolution_window(space)
    bad = t[(t * scale < lo * (1 - 1e-12)) | (t * scale > hi * (1 + 1e-12))]
    if bad.size:
        raise ResolutionError(f"times {bad.tolist()} fall outside the resolution window [{lo:.3g}, {hi:.3g}]")
    return t


def fit_limit(t_grid, values, target: float = float("nan"), window=None, extras=None) -> LimitFit:
    t = np.asarray(t_grid, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.size < FIT_POINTS:
        raise ValueError(f"need at least {FIT_POINTS} times to fit a limit")
    if np.unique(t).size != t.size:
        raise ValueError("times must be distinct")
    order = np.argsort(-t)
    t, v = t[order], v[order]
    ts, vs = t[-FIT_POINTS:], v[-FIT_POINTS:]
    if np.all(vs == vs[0]):
        slope, intercept, resid = 0.0, float(vs[0]), 0.0
    else:
        slope, intercept = np.polyfit(ts, vs, 1)
        resid = float(np.sqrt(np.mean((vs - (intercept + slope * ts)) ** 2)))
    if window is None:
        window = (target, target)
    return LimitFit(t, v, float(intercept), resid, float(slope), float(target), tuple(window), extras or {})


def _log_mass(op: HeatOperator, t: float, x: int, A) -> float:
    lw = np.log(op.space.weight)
    return float(logsumexp(op.log_kernel(t)[x, A] + lw[A]))


def varadhan_pointwise(op: HeatOperator, x: int, y: int, t_grid) -> LimitFit:
    """Fit ``lim t log p_t[x](y)``; the target is ``-d(x, y)**2 / 4``."""
    t = check_window(op.space, t_grid)
    vals = [s * op.log_kernel(s)[x, y] for s in t]
    return fit_limit(t, vals, target=-op.space.dist[x, y] ** 2 / 4)


def _as_subset(space: DiscreteSpace, A) -> np.ndarray:
    A = np.unique(np.atleast_1d(np.asarray(A, dtype=int)))
    if A.size == 0:
        raise SpaceError("the set A is empty")
    if A.min() < 0 or A.max() >= space.n:
        raise SpaceError("set indices out of range")
    return A


def ldp_set_bounds(op: HeatOperator, x: int, A, t_grid, A_is: str = "open") -> LimitFit:
    """Fit ``lim t log mu_t[x](A)`` against ``-min_A I``.

    Every subset of a finite space is clopen, so the lower bound for open sets
    and the upper bound for closed sets share one target.
    """
    if A_is not in ("open", "closed"):
        raise ValueError("A_is must be 'open' or 'closed'")
    space = op.space
    A = _as_subset(space, A)
    t = check_window(space, t_grid)
    vals = [s * _log_mass(op, s, x, A) for s in t]
    target = -float((space.dist[x, A] ** 2).min()) / 4
    return fit_limit(t, vals, target=target, extras={"A_is": A_is, "set_size": int(A.size)})


def varadhan_lemma_check(op: HeatOperator, x: int, phi, t_grid) -> LimitFit:
    """Fit ``lim t log sum_j exp(phi_j / t) mu_t[x](j)`` against ``max(phi - I)``."""
    space = op.space
    phi = as_field(space, phi)
    t = check_window(space, t_grid)
    lw = np.log(space.weight)
    vals = [s * logsumexp(phi / s + op.log_kernel(s)[x] + lw) for s in t]
    target = float(np.max(phi - space.dist[x] ** 2 / 4))
    return fit_limit(t, vals, target=target)


def relative_entropy(sigma, nu, weight=None, null_floor: float = 1e-300) -> float:
    """``sum sigma log(sigma / nu) weight`` for densities against ``weight``.

    Uses ``0 log 0 = 0``; returns ``inf`` when ``sigma`` charges a point where
    ``nu`` is below ``null_floor``.
    """
    sigma = np.asarray(sigma, dtype=float)
    nu = np.asarray(nu, dtype=float)
    w = np.ones_like(sigma) if weight is None else np.asarray(weight, dtype=float)
    if sigma.shape != nu.shape or sigma.shape != w.shape:
        raise SpaceError("sigma, nu and weight must share a shape")
    charged = sigma > 0
    if np.any(charged & (nu < null_floor)):
        return float("inf")
    s, n, ww = sigma[charged], nu[charged], w[charged]
    return float(np.sum(s * (np.log(s) - np.log(n)) * ww))


def default_radius_rule(space: DiscreteSpace):
    return lambda t: max(4 * space.mesh, t**0.25 * space.diam / 8)


def gamma_dirac_check(op: HeatOperator, x: int, z: int, t_grid, radius_rule=None) -> LimitFit:
    """Recovery family for the Gamma-limsup at ``delta_z``.

    ``nu_t`` is ``mu_t[x]`` conditioned on the ball ``B_{r(t)}(z)``, so
    ``t H(nu_t | mu_t) = -t log mu_t[x](B)``; the fit targets ``I(z)``. The
    conditioned densities and radii are returned in ``extras``.
    """
    space = op.space
    t = check_window(space, t_grid)
    rule = radius_rule or default_radius_rule(space)
    lw = np.log(space.weight)
    vals, radii, conditioned, entropies = [], [], [], []
    for s in t:
        r = float(rule(s))
        if r < space.mesh:
            raise SpaceError(f"radius {r:.3g} at t={s:.3g} is below the mesh {space.mesh:.3g}")
        B = space.ball(z, r)
        lk = op.log_kernel(s)[x]
        log_mass = float(logsumexp(lk[B] + lw[B]))
        nu = np.zeros(space.n)
        nu[B] = np.exp(lk[B] - log_mass)
        vals.append(-s * log_mass)
        radii.append(r)
        conditioned.append(nu)
        entropies.append(relative_entropy(nu, np.exp(lk), space.weight))
    return fit_limit(
        t,
        vals,
        target=space.dist[x, z] ** 2 / 4,
        extras={"radii": radii, "conditioned": conditioned, "entropy": entropies},
    )
