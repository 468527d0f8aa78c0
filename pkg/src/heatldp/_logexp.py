"""Log-domain linear algebra for nonnegative matrices.

Heat kernels at small times span hundreds of orders of magnitude, far below
what a signed spectral sum can resolve. For generators with nonnegative
off-diagonal rates the transition matrix ``exp(tQ)`` is a sum of nonnegative
terms, so it can be formed entrywise to relative precision: a nonnegative
Taylor base at a short time followed by repeated squaring, with every product
carried in log scale.
"""

import numpy as np
from scipy.special import logsumexp

UNDERFLOW_FLOOR = 1e-280


def log_matmul(la: np.ndarray, lb: np.ndarray, chunk: int = 1 << 22) -> np.ndarray:
    """Return ``log(exp(la) @ exp(lb))`` with relative accuracy per entry.

    The bulk goes through BLAS after shifting rows of ``la`` and columns of
    ``lb`` by their maxima; entries whose shifted product drops below the
    underflow floor are recomputed by an exact log-sum-exp.
    """
    a = la.max(axis=1, keepdims=True)
    b = lb.max(axis=0, keepdims=True)
    a = np.where(np.isfinite(a), a, 0.0)
    b = np.where(np.isfinite(b), b, 0.0)
    with np.errstate(under="ignore"):
        prod = np.exp(la - a) @ np.exp(lb - b)
    with np.errstate(divide="ignore"):
        out = a + b + np.log(prod)
    reach = (np.isfinite(la).astype(float) @ np.isfinite(lb).astype(float)) > 0
    rows, cols = np.nonzero((prod < UNDERFLOW_FLOOR) & reach)
    step = max(1, chunk // la.shape[1])
    for lo in range(0, rows.size, step):
        ii, jj = rows[lo : lo + step], cols[lo : lo + step]
        out[ii, jj] = logsumexp(la[ii] + lb[:, jj].T, axis=1)
    return out


def log_expm_metzler(q: np.ndarray, t: float, rate_cap: float = 4.0, min_terms: int = 32) -> np.ndarray:
    """Entrywise ``log(expm(t*q))`` for ``q`` with nonnegative off-diagonals.

    ``q`` is shifted by its largest exit rate ``c`` so that ``q + cI`` is
    nonnegative; ``exp(s(q + cI))`` is summed by a Taylor series at
    ``s = t / 2**k`` with ``s*c <= rate_cap`` and then squared ``k`` times.
    ``k`` is also large enough that each of the ``2**k`` slices carries only a
    few hops on average even for the farthest pairs.
    """
    n = q.shape[0]
    if np.any(q - np.diag(np.diag(q)) < 0):
        raise ValueError("off-diagonal entries must be nonnegative")
    if t == 0:
        with np.errstate(divide="ignore"):
            return np.log(np.eye(n))
    c = float(max(-q.diagonal().min(), 0.0))
    k_rate = int(np.ceil(np.log2(max(c * t / rate_cap, 1.0))))
    k_reach = int(np.ceil(np.log2(max(4.0 * n / min_terms, 1.0))))
    k = max(k_rate, k_reach)
    s = t / 2.0**k
    a = s * (q + c * np.eye(n))
    sc = s * c
    terms = int(np.ceil(sc + 8.0 * np.sqrt(sc) + min_terms))
    term = np.eye(n)
    total = np.eye(n)
    for j in range(1, terms + 1):
        term = term @ a / j
        total += term
    with np.errstate(divide="ignore"):
        lm = np.log(total) - sc
    for _ in range(k):
        lm = log_matmul(lm, lm)
    return lm
