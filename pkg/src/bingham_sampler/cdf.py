"""Closed-form CDF of one coordinate of the polynomial proposal density.

The proposal on the unit sphere in R^m is q(y) proportional to
(y^T M y)^n with M = diag(a_head, lambda_rest).  Integrating out the other
coordinates (with the co-area factor (1 - t^2)^{(m-3)/2}) and expanding the
binomial gives the marginal density of the first coordinate t as a finite
mixture whose cumulative distribution is a weighted sum of regularized
incomplete beta functions:

    H(t) = sum_{k=0}^{n} exp(w_k) * I_{t^2}(a_k, b_k),       t in [0, 1],
    a_k  = (n - k) + 1/2,     b_k = k + alpha + 1,   alpha = (m - 3) / 2,
    w_k  = log C(n, k) + (n - k) log a_head
           + log E_sphere[(y^T diag(lambda_rest) y)^k]
           + log B(a_k, b_k) + log(1/2),

and by evenness the full CDF on [-1, 1] is

    G(t) = 1/2 + sign(t) * H(|t|) / (2 H(1)).

Weights are kept in the log domain (n can be in the tens of thousands);
inversion is plain bisection on the half-interval.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, betaln, gammaln

from .moments import gaussian_qf_moments

__all__ = [
    "MarginalCDF",
    "log_beta",
    "reg_incomplete_beta",
    "build_marginal",
    "cdf_eval",
    "invert_cdf",
]

# weights more than this far (in log) below the dominant one contribute less
# than ~1e-26 each and may be dropped from evaluation sums
LOG_WEIGHT_CUTOFF = 60.0


def log_beta(a, b):
    """log B(a, b) for positive arguments (vectorized)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("beta function arguments must be positive")
    out = gammaln(a) + gammaln(b) - gammaln(a + b)
    return float(out) if out.ndim == 0 else out


def reg_incomplete_beta(a, b, z):
    """Regularized incomplete beta I_z(a, b) for z in [0, 1] (vectorized)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("shape parameters must be positive")
    if np.any(z < 0) or np.any(z > 1):
        raise ValueError("z must lie in [0, 1]")
    out = betainc(a, b, z)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MarginalCDF:
    """Coordinate-marginal CDF of the degree-n proposal on the sphere in R^m."""

    n: int
    m: int
    alpha: float
    a_head: float
    lambda_rest: np.ndarray
    a: np.ndarray          # a_k, k = 0..n
    b: np.ndarray          # b_k, k = 0..n
    log_w: np.ndarray      # log mixture weights, k = 0..n
    log_total: float       # log H(1) = log sum exp(log_w)
    pi: np.ndarray         # exp(log_w - log_total); sums to 1


def build_marginal(a_head: float, lambda_rest, n: int, m: int) -> MarginalCDF:
    """Assemble the mixture representation of the coordinate marginal.

    ``a_head`` is the head diagonal entry of M and ``lambda_rest`` the other
    m - 1 entries; both must be positive.  One moment table serves every
    binomial order k = 0..n.
    """
    lambda_rest = np.asarray(lambda_rest, dtype=float)
    if m < 2:
        raise ValueError("marginal requires sphere dimension m >= 2")
    if lambda_rest.shape != (m - 1,):
        raise ValueError(f"lambda_rest must have length m - 1 = {m - 1}")
    if a_head <= 0 or np.any(lambda_rest <= 0):
        raise ValueError("diagonal entries must be positive")
    if n < 1:
        raise ValueError("polynomial degree n must be at least 1")

    alpha = 0.5 * (m - 3)
    k = np.arange(n + 1, dtype=float)
    a = (n - k) + 0.5
    b = k + alpha + 1.0

    # log E[(y^T diag(lambda_rest) y)^k] on the sphere in R^{m-1}
    if m == 2:
        log_e = k * np.log(lambda_rest[0])
    else:
        table = gaussian_qf_moments(lambda_rest, n)
        log_norm = np.concatenate(
            ([0.0], np.cumsum(np.log((m - 1) + 2.0 * np.arange(n))))
        )
        log_e = gammaln(k + 1.0) + k * np.log(2.0) + table.log_s - log_norm

    log_choose = gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)
    log_w = (
        log_choose
        + (n - k) * np.log(a_head)
        + log_e
        + log_beta(a, b)
        + np.log(0.5)
    )
    hi = float(np.max(log_w))
    pi = np.exp(log_w - hi)
    total = float(np.sum(pi))
    return MarginalCDF(
        n=n,
        m=m,
        alpha=alpha,
        a_head=float(a_head),
        lambda_rest=lambda_rest,
        a=a,
        b=b,
        log_w=log_w,
        log_total=hi + float(np.log(total)),
        pi=pi / total,
    )


def _half_cdf(marginal: MarginalCDF, t: float) -> float:
    """H(t) / H(1) for t in [0, 1]."""
    keep = marginal.log_w >= marginal.log_total - LOG_WEIGHT_CUTOFF
    value = float(
        np.sum(
            marginal.pi[keep]
            * betainc(marginal.a[keep], marginal.b[keep], t * t)
        )
    )
    return min(max(value, 0.0), 1.0)


def cdf_eval(marginal: MarginalCDF, t: float) -> float:
    """G(t) on [-1, 1]; G(0) = 1/2 and G(+-1) = 1, 0 exactly."""
    if not -1.0 <= t <= 1.0:
        raise ValueError("t must lie in [-1, 1]")
    if t == 1.0:
        return 1.0
    if t == -1.0:
        return 0.0
    if t == 0.0:
        return 0.5
    half = _half_cdf(marginal, abs(t))
    if t > 0:
        return 0.5 + 0.5 * half
    return 0.5 - 0.5 * half


def invert_cdf(marginal: MarginalCDF, r: float, tol: float = 1e-13) -> float:
    """Solve G(t) = r by bisection on the half-interval.

    By evenness it is enough to solve H(t)/H(1) = 2|r - 1/2| for t in [0, 1]
    and attach the sign of r - 1/2.  Bisection stops when the bracket closes
    below 1e-15 or the CDF residual |G(t) - r| drops below ``tol``, with a
    hard cap of 200 iterations.
    """
    if not 0.0 < r < 1.0:
        raise ValueError("r must lie in the open interval (0, 1)")
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    tau = 2.0 * abs(r - 0.5)
    if tau == 0.0:
        return 0.0
    sign = 1.0 if r > 0.5 else -1.0

    lo, hi = 0.0, 1.0
    mid = 0.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        residual = _half_cdf(marginal, mid) - tau
        if abs(residual) <= 2.0 * tol:
            break
        if residual < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15:
            mid = 0.5 * (lo + hi)
            break
    return sign * mid
