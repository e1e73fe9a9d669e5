"""Log-domain moments of Gaussian and spherical quadratic forms.

For a PSD diagonal matrix M with eigenvalues ``lams`` and x ~ N(0, I_d),

    E[(x^T M x)^n] = n! * 2^n * S(n),
    S(0) = 1,   S(n) = (1 / 2n) * sum_{i=1}^{n} Tr(M^i) * S(n - i),

and the uniform-sphere expectation follows by dividing out the radial part,

    E[||x||^{2n}] = prod_{i=0}^{n-1} (d + 2i).

Raw moments overflow double precision almost immediately (n! alone overflows
near n = 170, and the proposal construction routinely needs n in the
hundreds), so every quantity here lives on the natural-log scale, with -inf
standing for zero and sums accumulated by max-shifted log-sum-exp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = [
    "LogScalar",
    "NEG_INF",
    "log_sum_exp",
    "trace_powers",
    "MomentTable",
    "gaussian_qf_moments",
    "gaussian_norm_moment_log",
    "sphere_qf_expectation_log",
    "log_sphere_surface",
]

# Nonnegative reals represented by their natural log; zero is -inf.
LogScalar = float
NEG_INF = -math.inf


def log_sum_exp(values) -> float:
    """log(sum(exp(values))) with max shift; the empty sum is -inf."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return NEG_INF
    hi = np.max(v)
    if hi == NEG_INF:
        return NEG_INF
    return float(hi + np.log(np.sum(np.exp(v - hi))))


def trace_powers(lams, i_max: int) -> np.ndarray:
    """log Tr(M^i) for i = 1..i_max, M = diag(lams) with lams >= 0.

    Returns an array of length ``i_max`` (index 0 holds i = 1).
    """
    lams = np.asarray(lams, dtype=float)
    if lams.ndim != 1 or lams.size == 0:
        raise ValueError("lams must be a nonempty 1-D array")
    if np.any(lams < 0):
        raise ValueError("eigenvalues must be nonnegative")
    if i_max < 1:
        raise ValueError("i_max must be at least 1")
    with np.errstate(divide="ignore"):
        log_l = np.log(lams)
    powers = np.arange(1, i_max + 1)[:, None] * log_l[None, :]
    hi = np.max(powers, axis=1)
    out = np.full(i_max, NEG_INF)
    finite = hi > NEG_INF
    if np.any(finite):
        shifted = np.exp(powers[finite] - hi[finite, None])
        out[finite] = hi[finite] + np.log(np.sum(shifted, axis=1))
    return out


@dataclass(frozen=True)
class MomentTable:
    """Cached log S(0..n_max) for one diagonal matrix."""

    lams: np.ndarray
    n_max: int
    log_s: np.ndarray       # length n_max + 1, log_s[0] = 0
    log_tr: np.ndarray      # length n_max, log Tr(M^i) at index i - 1

    def log_moment(self, n: int) -> float:
        """log E[(x^T M x)^n] = log(n! 2^n S(n)) for Gaussian x."""
        if not 0 <= n <= self.n_max:
            raise ValueError(f"n must be in [0, {self.n_max}]")
        return float(gammaln(n + 1) + n * math.log(2.0) + self.log_s[n])


def gaussian_qf_moments(lams, n_max: int) -> MomentTable:
    """Fill the S recursion bottom-up in the log domain, O(n_max^2)."""
    lams = np.asarray(lams, dtype=float)
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    log_s = np.full(n_max + 1, NEG_INF)
    log_s[0] = 0.0
    if n_max == 0:
        return MomentTable(lams=lams, n_max=0, log_s=log_s, log_tr=np.empty(0))
    log_tr = trace_powers(lams, n_max)
    for k in range(1, n_max + 1):
        terms = log_tr[:k] + log_s[k - 1 :: -1]
        log_s[k] = log_sum_exp(terms) - math.log(2.0 * k)
    return MomentTable(lams=lams, n_max=n_max, log_s=log_s, log_tr=log_tr)


def gaussian_norm_moment_log(d: int, n: int) -> float:
    """log E[||x||^{2n}] = sum_{i<n} log(d + 2i) for x ~ N(0, I_d).

    For d = 1 this is the double factorial (2n - 1)!!.
    """
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if n < 0:
        raise ValueError("moment order must be nonnegative")
    if n == 0:
        return 0.0
    return float(np.sum(np.log(d + 2.0 * np.arange(n))))


def sphere_qf_expectation_log(lams, k: int) -> float:
    """log E[(y^T M y)^k] for y uniform on the unit sphere in R^m.

    M = diag(lams), m = len(lams).  Uses the Gaussian factorization
    E_gauss[(x^T M x)^k] = E[||x||^{2k}] * E_sphere[(y^T M y)^k]; the sphere
    in R^1 is the two-point set {-1, +1}, where the form is identically
    lams[0].
    """
    lams = np.asarray(lams, dtype=float)
    if lams.ndim != 1 or lams.size == 0:
        raise ValueError("lams must be a nonempty 1-D array")
    if np.any(lams < 0):
        raise ValueError("eigenvalues must be nonnegative")
    if k < 0:
        raise ValueError("moment order must be nonnegative")
    if k == 0:
        return 0.0
    m = lams.size
    if m == 1:
        with np.errstate(divide="ignore"):
            return float(k * np.log(lams[0]))
    table = gaussian_qf_moments(lams, k)
    return table.log_moment(k) - gaussian_norm_moment_log(m, k)


def log_sphere_surface(d: int) -> float:
    """log of the surface area of the unit sphere in R^d: 2 pi^{d/2} / Gamma(d/2)."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    return float(math.log(2.0) + 0.5 * d * math.log(math.pi) - gammaln(0.5 * d))
