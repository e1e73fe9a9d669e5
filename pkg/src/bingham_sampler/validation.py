"""Independent oracles and statistical checks for the sampling pipeline.

Everything here deliberately avoids the production code paths: coordinate
marginals come from dense angular quadrature (trigonometric grids, composite
Simpson / periodic trapezoid), not from the incomplete-beta mixture, so a
Kolmogorov-Smirnov comparison between the two is a genuine cross-check.
Oracles are restricted to d <= 3 where quadrature is exact to tolerance;
higher dimensions are covered by property checks (moment identities,
acceptance-rate bands, symmetry) instead of full-distribution tests.

`run_suite` packages the checks into named suites and returns a
machine-readable report plus the raw curves the report figures are drawn
from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson

from . import engine, moments
from .cdf import build_marginal, cdf_eval, invert_cdf
from .linalg import SymmetricMatrix, eigendecompose
from .posterior import Observation, generate_synthetic, mmse_estimate, \
    posterior_sample
from .sampler import SamplerConfig, sample_bingham, shift_spectrum

__all__ = [
    "OracleCDF",
    "RatioReport",
    "oracle_marginal_cdf",
    "ks_statistic",
    "acceptance_rate_check",
    "angular_gaussian_worst_ratio",
    "run_suite",
    "SuiteResult",
    "SUITE_NAMES",
]

KS_CRITICAL_1PCT = 1.63  # asymptotic 1% Kolmogorov critical value scale


@dataclass(frozen=True)
class OracleCDF:
    """A tabulated CDF on [-1, 1] from quadrature, for one coordinate."""

    grid: np.ndarray
    values: np.ndarray
    built_for: str

    def __call__(self, t):
        return np.interp(t, self.grid, self.values)


@dataclass(frozen=True)
class RatioReport:
    sigma_sq: float
    best_ratio: float


def _permute_to_head(a: np.ndarray, coord: int) -> np.ndarray:
    """Conjugate by the transposition swapping ``coord`` with coordinate 0."""
    d = a.shape[0]
    if not 0 <= coord < d:
        raise ValueError(f"coordinate index {coord} out of range for d={d}")
    perm = list(range(d))
    perm[0], perm[coord] = perm[coord], perm[0]
    return a[np.ix_(perm, perm)]


def oracle_marginal_cdf(a, coord: int = 0, grid_size: int = 10_000) -> OracleCDF:
    """Dense-quadrature CDF of one coordinate of p(x) ~ exp(x'Ax), d in {2,3}.

    The requested coordinate is permuted to the front (a transposition is
    orthogonal, so conjugating A is exact) and the front coordinate's CDF is
    accumulated along the polar angle.  Grid nodes are chosen so every
    tabulated value is a cumulative-Simpson value at a node — no
    interpolation enters the construction, and the O(h^4) convergence shows
    up directly when grid sizes are compared.
    """
    if isinstance(a, SymmetricMatrix):
        a = a.array
    a = SymmetricMatrix(a).array
    d = a.shape[0]
    if d > 3:
        raise ValueError("quadrature oracles cover d = 2 and d = 3 only")
    if d < 2:
        raise ValueError("need a sphere, d >= 2")
    if grid_size < 16:
        raise ValueError("grid too coarse")
    a = _permute_to_head(a, coord)
    label = f"d={d} coord={coord} grid={grid_size}"

    if d == 2:
        # theta in [0, 2pi], x0 = cos(theta); {x0 <= cos(b)} = [b, 2pi - b]
        m = 2 * (grid_size // 2)
        theta = np.linspace(0.0, 2.0 * np.pi, m + 1)
        u = np.stack([np.cos(theta), np.sin(theta)])
        f = np.exp(np.einsum("it,ij,jt->t", u, a, u))
        cum = cumulative_simpson(f, x=theta, initial=0.0)
        total = cum[-1]
        half = m // 2
        j = np.arange(half + 1)
        vals = (cum[m - j] - cum[j]) / total
        grid = np.cos(theta[:half + 1])
        order = np.argsort(grid, kind="stable")
        return OracleCDF(grid=grid[order], values=vals[order], built_for=label)

    # d == 3: polar angle phi from the target axis, azimuth integrated out
    # with the periodic trapezoid rule (spectrally accurate); the sin(phi)
    # Jacobian rides along in g(phi)
    m_phi = 2 * (grid_size // 2)
    m_th = 2048
    phi = np.linspace(0.0, np.pi, m_phi + 1)
    th = np.arange(m_th) * (2.0 * np.pi / m_th)
    ct, st = np.cos(th), np.sin(th)
    b1 = a[0, 1] * ct + a[0, 2] * st
    b2 = a[1, 1] * ct * ct + 2.0 * a[1, 2] * ct * st + a[2, 2] * st * st
    g = np.empty(m_phi + 1)
    block = 256
    for s0 in range(0, m_phi + 1, block):
        ph = phi[s0:s0 + block]
        c, s = np.cos(ph), np.sin(ph)
        e = np.exp(
            (c * c * a[0, 0])[:, None]
            + np.multiply.outer(2.0 * c * s, b1)
            + np.multiply.outer(s * s, b2)
        )
        g[s0:s0 + block] = s * e.mean(axis=1)
    cum = cumulative_simpson(g, x=phi, initial=0.0)
    total = cum[-1]
    vals = (total - cum) / total
    grid = np.cos(phi)
    order = np.argsort(grid, kind="stable")
    return OracleCDF(grid=grid[order], values=vals[order], built_for=label)


def ks_statistic(samples, oracle: OracleCDF) -> float:
    """sup |empirical CDF - oracle CDF| over the sample points."""
    samples = np.sort(np.asarray(samples, dtype=float))
    n = samples.size
    if n == 0:
        raise ValueError("no samples")
    f = oracle(samples)
    steps = np.arange(n + 1) / n
    return float(max(np.max(steps[1:] - f), np.max(f - steps[:-1])))


def acceptance_rate_check(a, proposals: int,
                          cfg: SamplerConfig | None = None):
    """Empirical acceptance rate over a fixed number of proposals.

    Always exercises the full propose/accept machinery (no uniform
    short-circuit, so D = 0 measures the pure e^{-1} floor).  Passes when
    the rate sits inside the proven [e^{-1}, e^{-1/2}] band widened by three
    binomial standard errors.
    """
    if cfg is None:
        cfg = SamplerConfig()
    if proposals < 1:
        raise ValueError("need at least one proposal")
    shift = shift_spectrum(eigendecompose(a))
    d, n = shift.dim, shift.n
    chunk = engine.lane_chunk(n)
    gen = np.random.Generator(np.random.Philox(key=cfg.seed))
    accepted = 0
    done = 0
    while done < proposals:
        b = min(chunk, proposals - done)
        u = gen.random((b, d + 1))
        z = engine.propose_block(shift.D, n, u, tol=cfg.cdf_tolerance)
        lr = engine.log_ratio_block(shift.D, n, z)
        accepted += int(np.count_nonzero(u[:, d] < np.exp(lr)))
        done += b
    rate = accepted / proposals
    se = math.sqrt(max(rate * (1.0 - rate), 1e-12) / proposals)
    ok = (math.exp(-1.0) - 3.0 * se) <= rate <= (math.exp(-0.5) + 3.0 * se)
    return rate, bool(ok)


def angular_gaussian_worst_ratio(sigma_sq: float, omega_grid) -> RatioReport:
    """Best-achievable sup density ratio between the circle Bingham
    q ~ exp(sigma^2 cos^2) and angular-Gaussian candidates
    p_omega ~ (cos^2 + omega sin^2)^{-1}, over the given omega scan.

    Both densities are normalized on the same 10^3-point grid, so the grid
    measure cancels from the ratios.
    """
    if sigma_sq < 0.0:
        raise ValueError("sigma_sq must be nonnegative")
    om = np.atleast_1d(np.asarray(omega_grid, dtype=float))
    if om.size == 0 or np.any(om <= 0.0):
        raise ValueError("omega candidates must be positive")
    m = 1000
    th = np.arange(m) * (2.0 * np.pi / m)
    c2 = np.cos(th) ** 2
    s2 = 1.0 - c2
    q = np.exp(sigma_sq * (c2 - 1.0))   # shift for overflow safety
    q /= q.sum()
    best = math.inf
    for w in om:
        p = 1.0 / (c2 + w * s2)
        p /= p.sum()
        r = p / q
        best = min(best, float(max(r.max(), 1.0 / r.min())))
    return RatioReport(sigma_sq=float(sigma_sq), best_ratio=best)


# ---------------------------------------------------------------------------
# named suites

SUITE_NAMES = ("moments", "cdf", "sampler", "posterior", "ratio", "all")


@dataclass
class SuiteResult:
    report: dict
    figure_data: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.report["passed"])


def _check(name: str, statistic: float, threshold: float, ok=None) -> dict:
    if ok is None:
        ok = statistic <= threshold
    return {
        "name": name,
        "statistic": float(statistic),
        "threshold": float(threshold),
        "pass": bool(ok),
    }


def _suite_moments(seed: int, fig: dict) -> list[dict]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for d in (1, 2, 3, 5, 10):
        for c in (0.5, 1.0, 2.3):
            tab = moments.gaussian_qf_moments(np.full(d, c), 50)
            n = np.arange(51)
            # closed form for M = cI: S(n) = c^n prod_{i<n}(d+2i) / (n! 2^n)
            ref = (
                n * math.log(c)
                + np.concatenate(([0.0], np.cumsum(np.log(d + 2.0 * np.arange(50)))))
                - np.cumsum(np.concatenate(([0.0], np.log(2.0 * n[1:]))))
            )
            err = np.abs(np.expm1(tab.log_s - ref)).max()
            worst = max(worst, float(err))
    checks = [_check("uniform-spectrum-closed-form", worst, 1e-12)]

    worst2 = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 11))
        lam = rng.uniform(0.0, 4.0, d)
        got = moments.gaussian_qf_moments(lam, 2).log_moment(2)
        ref = math.log(lam.sum() ** 2 + 2.0 * float(np.sum(lam ** 2)))
        worst2 = max(worst2, abs(math.expm1(got - ref)))
    checks.append(_check("second-moment-trace-identity", worst2, 1e-12))
    return checks


def _suite_cdf(seed: int, fig: dict) -> list[dict]:
    rng = np.random.default_rng(seed)
    t = np.linspace(-0.999, 0.999, 401)

    marg2 = build_marginal(1.0, np.ones(1), 1, 2)
    arcs = 0.5 + np.arcsin(t) / np.pi
    err2 = max(abs(cdf_eval(marg2, tt) - aa) for tt, aa in zip(t, arcs))

    marg3 = build_marginal(1.0, np.ones(2), 1, 3)
    err3 = max(abs(cdf_eval(marg3, tt) - 0.5 * (tt + 1.0)) for tt in t)

    hard = build_marginal(
        1.0, 1.0 + np.array([2.0, 7.0, 11.0, 25.0]) / 625, 625, 5
    )
    rs = rng.uniform(1e-6, 1 - 1e-6, 64)
    rt = max(abs(cdf_eval(hard, invert_cdf(hard, r)) - r) for r in rs)

    return [
        _check("uniform-circle-arcsine", err2, 1e-10),
        _check("uniform-sphere-linear", err3, 1e-10),
        _check("inversion-round-trip", rt, 5e-13),
    ]


def _suite_sampler(seed: int, fig: dict) -> list[dict]:
    rng = np.random.default_rng(seed)
    checks = []

    # acceptance band on a random d=5 spectrum with gap 10
    lam = np.sort(rng.uniform(0.0, 10.0, 5))
    lam[0], lam[-1] = 0.0, 10.0
    q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    a5 = q @ np.diag(lam) @ q.T
    rate, ok = acceptance_rate_check(a5, 20_000, SamplerConfig(seed=seed))
    checks.append(_check("acceptance-band-d5-gap10", rate, math.exp(-0.5) + 0.02,
                         ok=ok))
    fig["rate_band"] = [("d=5 gap=10", rate)]

    # distribution vs the angular oracle, d=2
    a2 = np.diag([0.0, 4.0])
    batch = sample_bingham(a2, 20_000, SamplerConfig(seed=seed + 1))
    oracle = oracle_marginal_cdf(a2, coord=1, grid_size=10_000)
    ks = ks_statistic(batch.samples[:, 1], oracle)
    thr = KS_CRITICAL_1PCT / math.sqrt(batch.samples.shape[0])
    checks.append(_check("ks-vs-quadrature-d2", ks, thr))
    emp = np.sort(batch.samples[:, 1])
    fig["cdf_overlay"] = {
        "grid": oracle.grid,
        "oracle": oracle.values,
        "empirical_x": emp,
        "empirical_y": np.arange(1, emp.size + 1) / emp.size,
        "label": "coordinate 2 of diag(0, 4)",
    }

    # antipodal symmetry at d=3
    b3 = sample_bingham(np.diag([0.0, 1.0, 3.0]), 20_000,
                        SamplerConfig(seed=seed + 2))
    mean_norm = float(np.linalg.norm(b3.samples.mean(axis=0)))
    checks.append(_check("antipodal-mean-norm", mean_norm,
                         4.0 / math.sqrt(20_000)))
    return checks


def _suite_posterior(seed: int, fig: dict) -> list[dict]:
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(5)
    x0 /= np.linalg.norm(x0)
    obs = generate_synthetic(x0, 0.2, rng)
    batch = posterior_sample(obs, 2000, SamplerConfig(seed=seed))
    summ = mmse_estimate(batch)
    align = abs(float(np.dot(summ.top_direction, x0)))
    trace_err = abs(float(np.trace(summ.mmse)) - 1.0)
    return [
        _check("planted-direction-alignment", align, 0.95,
               ok=align > 0.95),
        _check("mmse-unit-trace", trace_err, 1e-12),
    ]


def _suite_ratio(seed: int, fig: dict) -> list[dict]:
    scan = np.geomspace(1e-4, 1.0, 200)
    sigmas = [0.0, 4.0, 16.0, 36.0]
    ratios = [angular_gaussian_worst_ratio(s, scan).best_ratio for s in sigmas]
    fig["ratio_curve"] = {"sigma_sq": sigmas, "best_ratio": ratios}
    increasing = all(b > a for a, b in zip(ratios, ratios[1:]))
    return [
        _check("worst-ratio-strictly-increasing", ratios[-1], 10.0,
               ok=increasing and ratios[-1] > 10.0),
    ]


_SUITES = {
    "moments": _suite_moments,
    "cdf": _suite_cdf,
    "sampler": _suite_sampler,
    "posterior": _suite_posterior,
    "ratio": _suite_ratio,
}


def run_suite(suite: str, seed: int = 0) -> SuiteResult:
    """Run one named suite (or ``all``) and collect a JSON-ready report."""
    if suite not in SUITE_NAMES:
        raise ValueError(
            f"unknown suite {suite!r}; choose from {', '.join(SUITE_NAMES)}"
        )
    names = list(_SUITES) if suite == "all" else [suite]
    fig: dict = {}
    checks = []
    for name in names:
        checks.extend(_SUITES[name](seed, fig))
    report = {
        "suite": suite,
        "seed": int(seed),
        "checks": checks,
        "passed": all(c["pass"] for c in checks),
    }
    return SuiteResult(report=report, figure_data=fig)
