"""Symmetric eigendecomposition and small dense-matrix helpers.

Everything downstream works in the eigenbasis of the exponent matrix, so this
module provides a self-contained cyclic Jacobi eigensolver (deterministic,
accurate to ~1e-13 relative off-diagonal mass) plus a couple of convenience
operations.  Dimensions of interest are modest (tens, occasionally hundreds),
where Jacobi is plenty fast and has excellent orthogonality properties.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SymmetricMatrix",
    "EigenDecomposition",
    "eigendecompose",
    "quadratic_form",
    "rotate",
]

_ASYM_TOL = 1e-8
_OFFDIAG_TOL = 1e-13
_MAX_SWEEPS = 64


class SymmetricMatrix:
    """A validated dense symmetric matrix.

    The constructor accepts any square array-like, checks that the asymmetry
    ``max|A - A^T|`` is below ``1e-8 * (1 + max|A|)`` and stores the exactly
    symmetrized ``(A + A^T) / 2``.
    """

    __slots__ = ("array",)

    def __init__(self, values):
        a = np.asarray(values, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix entries must be finite")
        scale = 1.0 + np.abs(a).max() if a.size else 1.0
        asym = np.abs(a - a.T).max() if a.size else 0.0
        if asym > _ASYM_TOL * scale:
            raise ValueError(
                f"matrix is not symmetric: max|A - A^T| = {asym:.3e} "
                f"exceeds {_ASYM_TOL:.0e} * (1 + max|A|)"
            )
        self.array = 0.5 * (a + a.T)

    @property
    def dim(self) -> int:
        return self.array.shape[0]

    def __repr__(self):
        return f"SymmetricMatrix(dim={self.dim})"


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues (ascending) and orthonormal eigenvector columns."""

    values: np.ndarray
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def _as_square_array(a) -> np.ndarray:
    if isinstance(a, SymmetricMatrix):
        return a.array
    return SymmetricMatrix(a).array


def eigendecompose(a) -> EigenDecomposition:
    """Diagonalize a symmetric matrix with cyclic Jacobi rotations.

    Sweeps rotate every off-diagonal pair in a fixed row-major order until the
    off-diagonal Frobenius norm falls below 1e-13 times a fixed scale.  The
    scale is ``||A - (tr A / d) I||_F``, which is never larger than ``||A||_F``
    and, unlike it, does not change when a multiple of the identity is added —
    so ``A`` and ``A + c I`` go through the identical rotation sequence and
    yield bitwise-identical eigenvectors.

    Eigenvalues are returned in ascending order; ties keep the order in which
    the rotations produced them (stable sort), which makes repeated runs on
    the same input fully deterministic.
    """
    a = _as_square_array(a)
    d = a.shape[0]
    if d == 1:
        return EigenDecomposition(values=a[0].copy(), vectors=np.ones((1, 1)))

    # work on the trace-centered matrix: rotations then depend on the input
    # only through differences, so adding cI to the input barely perturbs
    # the sweep, and large common diagonal terms don't swamp the arithmetic
    mu = np.trace(a) / d
    m = a - mu * np.eye(d)
    v = np.eye(d)
    scale = np.linalg.norm(m)
    if scale == 0.0:
        # exactly a multiple of the identity
        return EigenDecomposition(values=np.diag(a).copy(), vectors=v)

    for _ in range(_MAX_SWEEPS):
        # norm of the strict upper triangle only: the subtraction form
        # sqrt(|m|^2 - |diag|^2) has a sqrt(eps) cancellation floor and
        # would never meet the tolerance
        off = np.sqrt(2.0 * np.sum(np.triu(m, 1) ** 2))
        if off <= _OFFDIAG_TOL * scale:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = m[p, q]
                if apq == 0.0:
                    continue
                # classic Jacobi angle: shift-invariant since it only uses
                # the difference of diagonal entries
                tau = (m[q, q] - m[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.hypot(1.0, tau))
                else:
                    t = -1.0 / (-tau + np.hypot(1.0, tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                app, aqq = m[p, p], m[q, q]

                mp = m[p, :].copy()
                mq = m[q, :].copy()
                m[p, :] = c * mp - s * mq
                m[q, :] = s * mp + c * mq
                mp = m[:, p].copy()
                mq = m[:, q].copy()
                m[:, p] = c * mp - s * mq
                m[:, q] = s * mp + c * mq
                # the 2x2 block has closed-form images; writing them directly
                # avoids the rounding of the two-pass update
                m[p, p] = app - t * apq
                m[q, q] = aqq + t * apq
                m[p, q] = 0.0
                m[q, p] = 0.0

                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise RuntimeError("Jacobi iteration failed to converge")

    vals = np.diag(m) + mu
    order = np.argsort(vals, kind="stable")
    return EigenDecomposition(values=vals[order], vectors=v[:, order])


def quadratic_form(m, x) -> float:
    """Evaluate x^T M x.  ``m`` may be a matrix or a 1-D diagonal."""
    x = np.asarray(x, dtype=float)
    if isinstance(m, SymmetricMatrix):
        m = m.array
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        if m.shape[0] != x.shape[0]:
            raise ValueError("diagonal and vector dimensions differ")
        return float(np.dot(m, x * x))
    if m.shape != (x.shape[0], x.shape[0]):
        raise ValueError("matrix and vector dimensions differ")
    return float(x @ m @ x)


def rotate(vectors: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Map a unit coordinate vector back through the eigenbasis.

    Returns ``V z``, renormalized whenever accumulated rounding moves the norm
    away from 1 by more than 1e-12.
    """
    x = np.asarray(vectors) @ np.asarray(z, dtype=float)
    nrm = float(np.linalg.norm(x))
    if nrm == 0.0:
        raise ValueError("cannot rotate the zero vector")
    if abs(nrm - 1.0) > 1e-12:
        x = x / nrm
    return x
