"""Subspace distances and reconstruction losses.

The central quantity is the projection distance between the ground-truth
top-k eigenspace and the row space of an iterate W with orthonormal rows:

    delta = k - tr(U P),    U = B.T B,  P = W.T W,

which equals the sum of squared sines of the canonical angles between the
two subspaces. delta lies in [0, k]; 0 means the spaces coincide and k means
they are orthogonal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyDataSet,
    InvalidInputs,
    NotOrthonormal,
    ZeroSignal,
)
from .linalg import as_matrix

# Frobenius tolerance on ||W W.T - I|| for a matrix to count as having
# orthonormal rows.
ORTHONORMAL_TOL = 1e-10


@dataclass(frozen=True)
class GroundTruth:
    """Reference top-k eigenspace of a covariance matrix.

    Attributes:
        basis: (k, d) array, orthonormal rows spanning the top-k eigenspace.
        spectrum: all d eigenvalues of the covariance, descending,
            non-negative.
        k: target subspace dimension; spectrum[k-1] must be positive.
    """

    basis: np.ndarray
    spectrum: np.ndarray
    k: int

    def __post_init__(self):
        B = as_matrix(self.basis, "basis")
        lam = np.asarray(self.spectrum, dtype=np.float64)
        if B.shape[0] != self.k:
            raise DimensionMismatch(f"basis has {B.shape[0]} rows, expected k={self.k}")
        if lam.ndim != 1 or lam.shape[0] != B.shape[1]:
            raise DimensionMismatch(
                f"spectrum length {lam.shape} does not match dimension {B.shape[1]}"
            )
        if np.any(np.diff(lam) > 1e-12 * max(1.0, float(lam[0]))):
            raise InvalidInputs("spectrum must be descending")
        if lam[-1] < 0:
            raise InvalidInputs("spectrum must be non-negative")
        if lam[self.k - 1] <= 0:
            raise InvalidInputs("k-th eigenvalue must be positive")
        if np.linalg.norm(B @ B.T - np.eye(self.k)) > ORTHONORMAL_TOL:
            raise NotOrthonormal("ground-truth basis rows are not orthonormal")
        object.__setattr__(self, "basis", B)
        object.__setattr__(self, "spectrum", lam)

    @property
    def d(self) -> int:
        return self.basis.shape[1]

    @property
    def lambda1(self) -> float:
        return float(self.spectrum[0])

    @property
    def lambda_k(self) -> float:
        return float(self.spectrum[self.k - 1])

    def head(self) -> np.ndarray:
        """Top-k eigenvalues."""
        return self.spectrum[: self.k]

    def rank_k_covariance(self) -> np.ndarray:
        """Covariance truncated to the top-k eigenspace, sum of lam_i u_i u_i.T."""
        return (self.basis.T * self.head()) @ self.basis


@dataclass(frozen=True)
class DistanceReport:
    """Distance snapshot of one iterate: delta, ln(delta), reconstruction error.

    ln_delta is -inf when delta is exactly zero.
    """

    delta: float
    ln_delta: float
    recon_error: float


def require_orthonormal_rows(W, name: str = "W") -> np.ndarray:
    """Validate that W has orthonormal rows to within 1e-10 Frobenius."""
    A = as_matrix(W, name)
    gram_err = float(np.linalg.norm(A @ A.T - np.eye(A.shape[0])))
    if gram_err > ORTHONORMAL_TOL:
        raise NotOrthonormal(f"{name} rows are not orthonormal (Gram error {gram_err:.3e})")
    return A


def subspace_distance(truth: GroundTruth, W) -> float:
    """Projection distance k - ||B W.T||_F^2, clamped to [0, k].

    W may have k' >= k orthonormal rows; the distance measures how much of
    the truth's k-dimensional eigenspace lies outside the row space of W.
    """
    A = require_orthonormal_rows(W)
    if A.shape[1] != truth.d:
        raise DimensionMismatch(f"W has dimension {A.shape[1]}, truth has {truth.d}")
    if A.shape[0] < truth.k:
        raise DimensionMismatch(f"W has {A.shape[0]} rows, fewer than k={truth.k}")
    overlap = float(np.linalg.norm(truth.basis @ A.T) ** 2)
    return float(min(max(truth.k - overlap, 0.0), float(truth.k)))


def canonical_angle_distance(truth: GroundTruth, W) -> float:
    """Sum of squared sines of the canonical angles between truth and W.

    Computed along an independent route from `subspace_distance`: the basis
    is projected onto the orthogonal complement of the row space of W and
    the squared singular values of that projection are summed. Requires W
    to have exactly k rows so the angle set is well defined.
    """
    A = require_orthonormal_rows(W)
    if A.shape[1] != truth.d:
        raise DimensionMismatch(f"W has dimension {A.shape[1]}, truth has {truth.d}")
    if A.shape[0] != truth.k:
        raise DimensionMismatch(
            f"canonical angles need rows(W) == k, got {A.shape[0]} != {truth.k}"
        )
    M = truth.basis - (truth.basis @ A.T) @ A
    s = np.linalg.svd(M, compute_uv=False)
    return float(min(max(float(np.sum(s**2)), 0.0), float(truth.k)))


def reconstruction_error(samples, W) -> float:
    """Mean squared residual (1/n) sum ||x - W.T W x||^2 over the rows of `samples`."""
    X = as_matrix(samples, "samples")
    A = require_orthonormal_rows(W)
    if X.shape[0] < 1:
        raise EmptyDataSet("no samples")
    if X.shape[1] != A.shape[1]:
        raise DimensionMismatch(f"samples have dimension {X.shape[1]}, W has {A.shape[1]}")
    resid = X - (X @ A.T) @ A
    return float(np.mean(np.einsum("ij,ij->i", resid, resid)))


def noise_over_signal(spectrum, k: int) -> float:
    """Tail-to-head eigenvalue mass ratio: sum(spectrum[k:]) / sum(spectrum[:k])."""
    lam = np.asarray(spectrum, dtype=np.float64)
    if lam.ndim != 1 or lam.shape[0] < 1:
        raise InvalidInputs("spectrum must be a non-empty 1-D array")
    if not 1 <= k <= lam.shape[0]:
        raise InvalidInputs(f"k={k} out of range for spectrum of length {lam.shape[0]}")
    if np.any(lam < 0) or np.any(np.diff(lam) > 1e-12 * max(1.0, float(lam[0]))):
        raise InvalidInputs("spectrum must be non-negative and descending")
    head = float(np.sum(lam[:k]))
    if head <= 0:
        raise ZeroSignal("head eigenvalue mass is zero")
    return float(np.sum(lam[k:])) / head


def distance_report(truth: GroundTruth, W, recon_error: float) -> DistanceReport:
    """Bundle delta and ln(delta) for an iterate with a caller-supplied loss."""
    delta = subspace_distance(truth, W)
    ln_delta = math.log(delta) if delta > 0 else float("-inf")
    return DistanceReport(delta=delta, ln_delta=ln_delta, recon_error=float(recon_error))
