"""Dense linear-algebra kernels shared by every other module.

Matrices are plain float64 numpy arrays and bases are stored row-wise, so a
rank-k' iterate is a (k', d) array whose rows span the estimated subspace.
Randomness everywhere goes through numpy's PCG64 generator seeded explicitly
(`np.random.default_rng(seed)`); independent sub-streams are derived with
`SeedSequence`, which makes every run reproducible bit-for-bit from one
integer seed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    InvalidInputs,
    NonFinite,
    NotSymmetric,
    RankDeficient,
)

# Relative singular-value cutoff below which a matrix counts as row rank
# deficient.
RANK_RTOL = 1e-12


def as_matrix(W, name: str = "matrix") -> np.ndarray:
    """Validate and return `W` as a 2-D finite float64 array."""
    A = np.asarray(W, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise InvalidInputs(f"{name} must be a 2-D array with at least one row and column")
    if not np.all(np.isfinite(A)):
        raise NonFinite(f"{name} contains non-finite entries")
    return A


def derive_seeds(seed, n: int) -> list[int]:
    """Deterministically expand one seed into `n` independent integer seeds."""
    state = np.random.SeedSequence(seed).generate_state(n, np.uint64)
    return [int(s) for s in state]


def orthonormalize_rows(W) -> np.ndarray:
    """Return a matrix with orthonormal rows spanning the row space of W.

    Householder QR of W.T with the sign convention that every diagonal entry
    of the triangular factor is non-negative, so the output is a
    deterministic function of the input. Cost is O(k'^2 d) for a (k', d)
    input.

    Raises:
        RankDeficient: smallest singular value of W is <= 1e-12 times the
            largest (the row space is not k'-dimensional to working
            precision).
    """
    A = as_matrix(W)
    k, d = A.shape
    if k > d:
        raise RankDeficient(f"{k} rows cannot be orthonormal in dimension {d}")
    Q, R = np.linalg.qr(A.T)
    # Singular values of R equal those of W; R is (k, k) so this is cheap.
    sv = np.linalg.svd(R, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] <= RANK_RTOL * sv[0]:
        raise RankDeficient(
            f"row rank deficient: singular value ratio {sv[-1]:.3e} / {sv[0]:.3e}"
        )
    signs = np.sign(np.diag(R))
    signs[signs == 0.0] = 1.0
    return np.ascontiguousarray((Q * signs).T)


def random_orthogonal(d: int, seed) -> np.ndarray:
    """Haar-distributed d x d orthogonal matrix, reproducible per seed.

    Orthonormalizes a matrix of i.i.d. standard normals by QR and fixes
    signs so each diagonal entry of the triangular factor is positive,
    which yields the Haar measure.
    """
    if d < 1:
        raise InvalidInputs("dimension must be >= 1")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((d, d))
    Q, R = np.linalg.qr(A)
    signs = np.sign(np.diag(R))
    signs[signs == 0.0] = 1.0
    return Q * signs


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues (descending) with matching eigenvectors, one per row."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.eigenvalues, dtype=np.float64)
        vecs = as_matrix(self.eigenvectors, "eigenvectors")
        if vals.ndim != 1 or vals.shape[0] != vecs.shape[0]:
            raise DimensionMismatch(f"incompatible shapes {vals.shape} and {vecs.shape}")
        if np.any(np.diff(vals) > 0):
            raise InvalidInputs("eigenvalues must be sorted in descending order")
        if vals[-1] < 0:
            raise InvalidInputs("eigenvalues must be non-negative")
        gram = vecs @ vecs.T
        if np.linalg.norm(gram - np.eye(vecs.shape[0])) > 1e-10:
            raise InvalidInputs("eigenvector rows must be orthonormal")
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "eigenvectors", vecs)


def top_k_eigen(S, k: int) -> Spectrum:
    """Top-k eigenpairs of a symmetric positive semidefinite matrix.

    Used as the batch oracle for ground-truth subspaces and empirical
    spectra. Eigenvalues come back in descending order; tiny negative
    round-off values are clamped to zero. Each eigenvector's sign is fixed
    so its largest-magnitude entry is positive, making the output
    deterministic.

    Raises:
        NotSymmetric: max |S - S.T| exceeds 1e-10 relative to the scale of S.
        InvalidInputs: k out of range, or S has a genuinely negative
            eigenvalue (not a covariance).
        ConvergenceFailure: an eigenpair fails its residual check
            ||S v - lambda v|| <= 1e-8 ||S||_F.
    """
    A = as_matrix(S, "S")
    d = A.shape[0]
    if A.shape[1] != d:
        raise DimensionMismatch(f"expected a square matrix, got {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A))))
    if float(np.max(np.abs(A - A.T))) > 1e-10 * scale:
        raise NotSymmetric("matrix is not symmetric within 1e-10")
    if not 1 <= k <= d:
        raise InvalidInputs(f"k={k} out of range for dimension {d}")

    vals, vecs = np.linalg.eigh((A + A.T) / 2.0)
    vals = vals[::-1][:k].copy()
    vecs = vecs[:, ::-1][:, :k]

    lam_scale = max(1.0, float(np.max(np.abs(vals))))
    negligible = vals < 0
    if np.any(vals < -1e-10 * lam_scale):
        raise InvalidInputs("matrix has a negative eigenvalue; expected positive semidefinite")
    vals[negligible] = 0.0

    rows = vecs.T.copy()
    for i in range(k):
        j = int(np.argmax(np.abs(rows[i])))
        if rows[i, j] < 0:
            rows[i] = -rows[i]

    frob = float(np.linalg.norm(A))
    resid = A @ rows.T - rows.T * vals
    worst = float(np.max(np.linalg.norm(resid, axis=0))) if k else 0.0
    if worst > 1e-8 * max(frob, 1e-300):
        raise ConvergenceFailure(f"eigenpair residual {worst:.3e} exceeds 1e-8 * ||S||_F")
    return Spectrum(eigenvalues=vals, eigenvectors=rows)
