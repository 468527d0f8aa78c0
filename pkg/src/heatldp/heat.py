"""Heat semigroup on a discrete space.

Time convention: the generator is the Laplacian itself (no factor 1/2), so
the kernel solves ``d/dt p_t = L p_t`` and the small-time rate is
``d(x, y)**2 / 4``. Every other module relies on this single convention; the
Hopf-Cole transform uses kernel time ``eps * t / 2`` and the Schrödinger
reference coupling kernel time ``eps / 2``.

Kernels are densities with respect to the space's weights:
``h_t f(i) = sum_j p_t[i, j] f(j) weight[j]``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from heatldp._logexp import log_expm_metzler
from heatldp.mmspace import DiscreteSpace, SpaceError, as_field, local_slope

DEFAULT_CAP = 2048
TINY = 1e-300


class ResolutionError(ValueError):
    """A requested time lies outside the range the grid can resolve."""


class ResolutionWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class Generator:
    space: DiscreteSpace
    action: np.ndarray
    conductance: np.ndarray
    stencil: str

    @property
    def positive_rates(self) -> bool:
        off = self.action - np.diag(np.diag(self.action))
        return bool(np.all(off >= 0))

    def __call__(self, f) -> np.ndarray:
        return self.action @ as_field(self.space, f)


def _fourier_laplacian(n: int, circumference: float) -> np.ndarray:
    k = np.fft.fftfreq(n, d=1.0 / n) * (2 * np.pi / circumference)
    symbol = -(k**2)
    if n % 2 == 0:
        symbol[n // 2] = -((np.pi * n / circumference) ** 2)
    col = np.real(np.fft.ifft(symbol))
    idx = np.arange(n)
    return col[(idx[:, None] - idx[None, :]) % n]


def assemble_generator(space: DiscreteSpace, stencil: str = "fd") -> Generator:
    """Measure-symmetric discrete Laplacian.

    ``stencil="fd"`` gives ``(Lf)_i = sum_j c_ij (f_j - f_i) / weight_i`` with
    nearest-neighbour conductances: ``1/h`` on interval and circle grids
    (standard second difference, reflecting interval ends, periodic circle)
    and ``(weight_i + weight_j) / (2 len_ij**2)`` on graph edges.
    ``stencil="spectral"`` (circle only) is the Fourier second derivative,
    whose eigenvalues are exactly ``(2 pi k / C)**2``; its off-diagonal
    entries change sign, so its kernel matrices come from the image sum
    rather than from squaring.
    """
    n = space.n
    if stencil == "spectral":
        if space.kind != "circle":
            raise SpaceError("the spectral stencil is only defined on the circle")
        action = _fourier_laplacian(n, space.extent)
        cond = action * space.weight[:, None]
        np.fill_diagonal(cond, 0.0)
        return Generator(space, action, cond, stencil)
    if stencil != "fd":
        raise SpaceError(f"unknown stencil {stencil!r}")
    i, j = space.edges[:, 0], space.edges[:, 1]
    if space.kind == "graph":
        c = (space.weight[i] + space.weight[j]) / (2 * space.edge_length**2)
    else:
        c = 1.0 / space.edge_length
    cond = np.zeros((n, n))
    cond[i, j] += c
    cond[j, i] += c
    action = (cond - np.diag(cond.sum(axis=1))) / space.weight[:, None]
    return Generator(space, action, cond, stencil)


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    t: float
    entries: np.ndarray
    log_entries: np.ndarray
    n_flagged: int
    method: str

    def row_measure(self, i: int, weight: np.ndarray) -> np.ndarray:
        """The probability vector ``p_t[i](j) * weight[j]``."""
        return self.entries[i] * weight


@dataclass(eq=False)
class HeatOperator:
    generator: Generator
    eigenvalues: np.ndarray
    eigenfields: np.ndarray
    residual: float
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def space(self) -> DiscreteSpace:
        return self.generator.space

    @property
    def gap(self) -> float:
        return float(self.eigenvalues[1])

    def kernel(self, t: float) -> KernelMatrix:
        t = float(t)
        if not t > 0:
            raise ValueError(f"kernel time must be positive, got {t}")
        if t not in self._cache:
            self._cache[t] = _compute_kernel(self, t)
        return self._cache[t]

    def log_kernel(self, t: float) -> np.ndarray:
        return self.kernel(t).log_entries

    def apply(self, t: float, f) -> np.ndarray:
        return apply_heat(self, t, f)


def spectral_decomposition(gen: Generator, cap: int = DEFAULT_CAP) -> HeatOperator:
    """Eigenpairs of ``-L``, orthonormal in the weighted inner product."""
    space = gen.space
    n = space.n
    if n > cap:
        raise ValueError(f"n={n} exceeds the dense eigensolver cap {cap}")
    sw = np.sqrt(space.weight)
    sym = -gen.action * sw[:, None] / sw[None, :]
    sym = 0.5 * (sym + sym.T)
    lam, vec = np.linalg.eigh(sym)
    u = vec / sw[:, None]
    # Connected space: pin the ground state to the exact constant mode.
    lam = lam.copy()
    lam[0] = 0.0
    u[:, 0] = 1.0 / np.sqrt(space.total_mass)
    rng = np.random.default_rng(0)
    f = rng.standard_normal(n)
    direct = gen.action @ f
    spectral = -(u * lam) @ (u.T @ (space.weight * f))
    residual = float(np.abs(direct - spectral).max() / max(1.0, np.abs(direct).max()))
    if residual > 1e-8:
        raise np.linalg.LinAlgError(f"spectral reconstruction residual {residual:.3e} exceeds 1e-8")
    return HeatOperator(gen, lam, u, residual)


def heat_operator(space: DiscreteSpace, stencil: str = "fd", cap: int = DEFAULT_CAP) -> HeatOperator:
    return spectral_decomposition(assemble_generator(space, stencil), cap=cap)


def spectral_kernel(op: HeatOperator, t: float) -> np.ndarray:
    """Eigen-sum ``sum_k exp(-lambda_k t) u_k(i) u_k(j)``.

    Accurate to roughly machine precision relative to the largest entry, so
    it cannot resolve small-time tails.
    """
    u = op.eigenfields
    p = (u * np.exp(-op.eigenvalues * t)) @ u.T
    return 0.5 * (p + p.T)


def _image_count(circumference: float, t: float, tail_tol: float = 1e-14) -> int:
    # Omitted images sit at distance >= (terms + 1/2) C while the leading one is
    # within C/2; the extra 1e-2 covers the geometric tail past the first.
    needed = 1
    C = circumference
    while np.exp(-(((needed + 0.5) * C) ** 2 - (0.5 * C) ** 2) / (4 * t)) > 1e-2 * tail_tol:
        needed += 1
    return needed


def _image_log_kernel(space: DiscreteSpace, t: float) -> np.ndarray:
    C = space.extent
    k = np.arange(-_image_count(C, t), _image_count(C, t) + 1)[:, None, None]
    expo = -((space.dist[None] + k * C) ** 2) / (4 * t)
    return logsumexp(expo, axis=0) - 0.5 * np.log(4 * np.pi * t)


def _compute_kernel(op: HeatOperator, t: float) -> KernelMatrix:
    w = op.space.weight
    if op.generator.positive_rates:
        lp = log_expm_metzler(op.generator.action, t) - np.log(w)[None, :]
        lp = 0.5 * (lp + lp.T)
        method = "log-squaring"
    else:
        # Fourier circle: its eigen-sum is the theta series truncated at the
        # Nyquist mode, which is not sign-definite in the far tail. Folding the
        # omitted modes back gives the image sum, positive and within
        # ~exp(-(pi n / C)**2 t) of the eigen-sum.
        lp = _image_log_kernel(op.space, t)
        method = "images"
    with np.errstate(under="ignore"):
        p = np.exp(lp)
    flagged = int(np.count_nonzero(~(p >= TINY)))
    for a in (p, lp):
        a.setflags(write=False)
    return KernelMatrix(t, p, lp, flagged, method)


def heat_kernel_matrix(op: HeatOperator, t: float) -> KernelMatrix:
    """Kernel ``p_t[i](j)`` with log values carried alongside.

    On positivity-preserving generators the log kernel is formed entrywise to
    relative precision (see :mod:`heatldp._logexp`), so values far below
    double underflow of a spectral sum stay meaningful. The spectral circle
    uses the image sum in log scale.
    """
    if not t > 0:
        raise ValueError(f"kernel time must be positive, got {t}")
    return op.kernel(t)


def apply_heat(op: HeatOperator, t: float, f) -> np.ndarray:
    f = as_field(op.space, f)
    if t < 0:
        raise ValueError("heat flow time must be nonnegative")
    if t == 0:
        return f.copy()
    u = op.eigenfields
    coef = u.T @ (op.space.weight * f)
    return u @ (np.exp(-op.eigenvalues * t) * coef)


def circle_kernel_oracle(circumference: float, t: float, x, y, terms: int | None = None, tail_tol: float = 1e-14):
    """Wrapped Gaussian heat kernel on a circle (method of images).

    With ``terms=None`` the image count is chosen so that the first omitted
    image is below ``tail_tol`` relative to the leading one; an explicit
    ``terms`` too small for that triggers a warning.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    C = float(circumference)
    dx = np.mod(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), C)
    dx = np.minimum(dx, C - dx)
    needed = _image_count(C, t, tail_tol)
    if terms is None:
        terms = needed
    elif terms < needed:
        warnings.warn(f"{terms} images leave a tail above {tail_tol:g}; need {needed}", ResolutionWarning, stacklevel=2)
    k = np.arange(-terms, terms + 1).reshape((-1,) + (1,) * dx.ndim)
    images = np.exp(-((dx + k * C) ** 2) / (4 * t))
    return images.sum(axis=0) / np.sqrt(4 * np.pi * t)


@dataclass(frozen=True)
class KernelReport:
    t: float
    s: float
    mass_error: float
    asymmetry: float
    min_entry: float
    n_flagged: int
    ck_defect: float

    def passed(self, mass_tol: float = 1e-10, sym_tol: float = 1e-10, ck_tol: float = 1e-8) -> bool:
        return self.mass_error <= mass_tol and self.asymmetry <= sym_tol and self.ck_defect <= ck_tol


def validate_kernel(kernel: KernelMatrix, op: HeatOperator, s: float = 0.1) -> KernelReport:
    """Mass, symmetry, positivity and Chapman-Kolmogorov diagnostics.

    The composition check uses ``p_s`` (weighted) ``p_t`` against
    ``p_{s+t}`` with ``t = kernel.t``.
    """
    w = op.space.weight
    p = kernel.entries
    ps = op.kernel(s).entries
    pst = op.kernel(s + kernel.t).entries
    return KernelReport(
        t=kernel.t,
        s=float(s),
        mass_error=float(np.abs(p @ w - 1.0).max()),
        asymmetry=float(np.abs(p - p.T).max()),
        min_entry=float(p.min()),
        n_flagged=kernel.n_flagged,
        ck_defect=float(np.abs((ps * w) @ p - pst).max()),
    )


def resolution_floor(space: DiscreteSpace) -> float:
    """Kernel times below this are effectively a delta on the grid."""
    return space.mesh**2 / 100.0


def bakry_emery_defect(op: HeatOperator, f, t: float) -> float:
    """Largest violation of ``|D h_t f|**2 <= h_t |D f|**2`` (flat case).

    ``|D f|`` is the local slope. On grids the inequality holds only up to
    discretization error, so the value is a diagnostic to be compared with a
    multiple of the mesh rather than with zero.
    """
    space = op.space
    f = as_field(space, f)
    lhs = local_slope(space, apply_heat(op, t, f)) ** 2
    rhs = apply_heat(op, t, local_slope(space, f) ** 2)
    return float(np.max(lhs - rhs))
