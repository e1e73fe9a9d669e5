"""Posterior inference for the rank-1 spiked matrix model Y = x x' + noise.

With Gaussian noise of scale gamma, the posterior of the planted unit vector
is a Bingham distribution with parameter matrix A = Y / (2 gamma^2), so
posterior expectations reduce to sphere sampling.  The point estimate
reported is the posterior mean of x x' (the MMSE matrix); the posterior
mean of x itself is zero by antipodal symmetry, and the leading eigenvector
of the MMSE matrix serves as the direction estimate, with its inherent sign
ambiguity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import SymmetricMatrix, eigendecompose
from .sampler import SampleBatch, SamplerConfig, sample_bingham

__all__ = [
    "Observation",
    "PosteriorSummary",
    "build_posterior",
    "generate_synthetic",
    "posterior_sample",
    "mmse_estimate",
]


@dataclass(frozen=True)
class Observation:
    """A (symmetrized) observed matrix and the noise scale it came with.

    gamma = 0 is representable — synthetic noiseless observations are useful
    as fixtures — but building a posterior from it is an error.
    """

    Y: SymmetricMatrix
    gamma: float

    def __post_init__(self):
        if not isinstance(self.Y, SymmetricMatrix):
            object.__setattr__(self, "Y", SymmetricMatrix(self.Y))
        gamma = float(self.gamma)
        if not np.isfinite(gamma) or gamma < 0.0:
            raise ValueError("noise scale gamma must be a nonnegative real")
        object.__setattr__(self, "gamma", gamma)

    @property
    def dim(self) -> int:
        return self.Y.dim


@dataclass(frozen=True)
class PosteriorSummary:
    mmse: np.ndarray            # (d, d) posterior mean of x x', unit trace
    top_direction: np.ndarray   # leading eigenvector of mmse (sign arbitrary)
    sample_count: int


def build_posterior(obs: Observation) -> SymmetricMatrix:
    """Bingham parameter matrix of the posterior: A = Y / (2 gamma^2)."""
    if obs.gamma <= 0.0:
        raise ValueError("posterior requires a strictly positive gamma")
    return SymmetricMatrix(obs.Y.array / (2.0 * obs.gamma * obs.gamma))


def generate_synthetic(x0, gamma: float, rng: np.random.Generator) -> Observation:
    """Draw Y = x0 x0' + gamma * (G + G')/2 with G i.i.d. standard normal.

    Only the symmetric part of the observation ever enters the posterior, so
    the noise is generated already symmetrized.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 1 or x0.size == 0:
        raise ValueError("x0 must be a nonempty vector")
    if abs(np.linalg.norm(x0) - 1.0) > 1e-8:
        raise ValueError("x0 must be a unit vector")
    if gamma < 0.0:
        raise ValueError("noise scale gamma must be nonnegative")
    d = x0.size
    g = rng.standard_normal((d, d))
    y = np.outer(x0, x0) + gamma * 0.5 * (g + g.T)
    return Observation(Y=SymmetricMatrix(y), gamma=float(gamma))


def posterior_sample(obs: Observation, count: int,
                     cfg: SamplerConfig | None = None) -> SampleBatch:
    """Sample the posterior of the planted direction given ``obs``."""
    return sample_bingham(build_posterior(obs), count, cfg)


def mmse_estimate(batch: SampleBatch) -> PosteriorSummary:
    """Average x x' over the batch; trace is exactly the mean squared norm.

    The top eigenvector of the average is the reported direction.
    """
    x = batch.samples
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("cannot summarize an empty sample batch")
    count = x.shape[0]
    mmse = (x.T @ x) / count
    mmse = 0.5 * (mmse + mmse.T)
    eig = eigendecompose(mmse)
    return PosteriorSummary(
        mmse=mmse,
        top_direction=eig.vectors[:, -1].copy(),
        sample_count=count,
    )
