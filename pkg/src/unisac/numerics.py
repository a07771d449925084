"""Special functions and the small complex linear-algebra kernels used everywhere else."""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg
from scipy import special

# Gram-matrix condition number above which a projection is refused.
GRAM_COND_LIMIT = 1e12


class SingularGramError(np.linalg.LinAlgError):
    """Raised when the rows of a signal matrix are (numerically) linearly dependent.

    ``rows`` holds the indices of the rows that fall outside the numerical rank,
    so the caller can drop them and retry.
    """

    def __init__(self, rows, cond):
        self.rows = tuple(int(r) for r in rows)
        self.cond = float(cond)
        super().__init__(f"Gram matrix condition {cond:.3g} exceeds limit; dependent rows {self.rows}")


def qfunc(x):
    """Upper tail of the standard normal distribution."""
    return special.ndtr(-np.asarray(x, dtype=float))[()]


def qfunc_inv(p):
    """Inverse of :func:`qfunc`; ``p`` must lie strictly inside (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("qfunc_inv requires 0 < p < 1")
    return (-special.ndtri(p))[()]


def chi2_cdf(x, dof):
    """CDF of the chi-squared distribution with ``dof`` degrees of freedom."""
    x = np.asarray(x, dtype=float)
    if dof < 1:
        raise ValueError("dof must be >= 1")
    if np.any(x < 0):
        raise ValueError("chi2_cdf requires x >= 0")
    return special.gammainc(0.5 * dof, 0.5 * x)[()]


def chi2_logcdf(x, dof):
    """log F_chi2(x, dof), accurate when the CDF is close to one."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("chi2_logcdf requires x >= 0")
    return np.log1p(-special.gammaincc(0.5 * dof, 0.5 * x))[()]


def chi2_inv(p, dof):
    """Inverse CDF of the chi-squared distribution, ``p`` in [0, 1)."""
    p = np.asarray(p, dtype=float)
    if dof < 1:
        raise ValueError("dof must be >= 1")
    if np.any((p < 0.0) | (p >= 1.0)):
        raise ValueError("chi2_inv requires 0 <= p < 1")
    return (2.0 * special.gammaincinv(0.5 * dof, p))[()]


def poisson_pmf(i, a):
    """Poisson probability a^i e^-a / i!, evaluated in the log domain."""
    if a <= 0:
        raise ValueError("Poisson parameter must be positive")
    i = np.asarray(i, dtype=float)
    if np.any(i < 0):
        raise ValueError("count must be non-negative")
    return np.exp(i * math.log(a) - a - special.gammaln(i + 1.0))[()]


def log_binomial(a1, a2):
    """Natural log of C(a1, a2) via sum_{i<a2} log((a1 - i) / (a2 - i)).

    ``a1`` may be an arbitrarily large Python int (e.g. ``2**100``); the
    differences ``a1 - i`` are then formed exactly before taking logs.
    Returns ``-inf`` when ``a2 > a1`` (empty coefficient).
    """
    a2 = int(a2)
    if a2 < 0 or a1 < 0:
        raise ValueError("binomial arguments must be non-negative")
    if a2 > a1:
        return -math.inf
    return math.fsum(math.log(a1 - i) - math.log(a2 - i) for i in range(a2))


def log_binomial_table(a1, kmax):
    """``log C(a1, k)`` for k = 0..kmax as an array (same identity, accumulated)."""
    kmax = int(kmax)
    out = np.full(kmax + 1, -np.inf)
    out[0] = 0.0
    top = min(kmax, a1) if isinstance(a1, int) else kmax
    if top >= 1:
        k = np.arange(1, top + 1)
        num = np.array([math.log(a1 - i) for i in range(top)])
        out[1 : top + 1] = np.cumsum(num) - special.gammaln(k + 1.0)
    return out


def _row_basis(a):
    """Orthonormal basis (n x K) for the row space of ``a``, checking conditioning."""
    q, r, piv = scipy.linalg.qr(a.conj().T, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    if d.size == 0 or d[0] == 0.0:
        raise SingularGramError(range(a.shape[0]), math.inf)
    with np.errstate(divide="ignore"):
        gram_cond = (d[0] / d) ** 2
    bad = gram_cond > GRAM_COND_LIMIT
    if np.any(bad):
        raise SingularGramError(np.sort(piv[bad]), gram_cond.max())
    return q, r, piv


def project_residual(y, a):
    """Return ``y (I - a^H (a a^H)^-1 a)``: the part of ``y`` orthogonal to the rows of ``a``."""
    y = np.asarray(y)
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] == 0:
        return np.array(y, dtype=complex, copy=True)
    if y.shape[-1] != a.shape[1]:
        raise ValueError(f"column mismatch: y has {y.shape[-1]}, a has {a.shape[1]}")
    q, _, _ = _row_basis(a)
    return y - (y @ q) @ q.conj().T


def ls_fit(y, a):
    """Least-squares coefficients ``y a^H (a a^H)^-1``, one column per row of ``a``."""
    y = np.asarray(y)
    a = np.asarray(a)
    if y.shape[-1] != a.shape[1]:
        raise ValueError(f"column mismatch: y has {y.shape[-1]}, a has {a.shape[1]}")
    q, r, piv = _row_basis(a)
    # a[piv]^H = q r  =>  coefficients for the permuted rows are (y q) r^-H
    coef_perm = scipy.linalg.solve_triangular(r, (y @ q).conj().T, lower=False).conj().T
    coef = np.empty_like(coef_perm)
    coef[:, piv] = coef_perm
    return coef
