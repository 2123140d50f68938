"""Synthetic covariance models, sampling, and dataset I/O.

Synthetic data follows an effectively low-rank recipe: k head eigenvalues
carry the signal, the remaining d-k eigenvalues are flat and sized so the
tail-to-head mass ratio hits a requested noise-over-signal level exactly.
Eigenvectors come from a Haar-random rotation, so coordinates are not
axis-aligned.

Dataset files come in two formats:

* binary: magic ``KPCA``, uint32 LE version (currently 1), uint64 LE n,
  uint64 LE d, then n*d float64 LE values in row-major order. Loading is
  lossless byte-for-byte. The centered flag is not persisted (the header
  has no room for it); loaders return centered=False.
* csv: one sample per line, comma-separated, lines starting with ``#``
  ignored. Values are written with 17 significant digits so float64
  round-trips exactly.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyDataSet,
    FormatError,
    InvalidInputs,
    InvalidSpec,
    NonFinite,
)
from .linalg import random_orthogonal, top_k_eigen
from .metrics import GroundTruth

_MAGIC = b"KPCA"
_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


@dataclass(frozen=True)
class SpectrumSpec:
    """Declarative description of a synthetic covariance.

    head_eigenvalues defaults to k ones. noise_over_signal is the exact
    tail-to-head eigenvalue mass ratio; the tail is flat (all d-k tail
    eigenvalues equal).
    """

    d: int
    k: int
    noise_over_signal: float = 0.0
    head_eigenvalues: tuple[float, ...] | None = None
    rotation_seed: int = 0

    def __post_init__(self):
        if self.d < 1 or not 1 <= self.k <= self.d:
            raise InvalidSpec(f"need 1 <= k <= d, got k={self.k}, d={self.d}")
        if self.noise_over_signal < 0:
            raise InvalidSpec("noise_over_signal must be >= 0")
        if self.noise_over_signal > 0 and self.k == self.d:
            raise InvalidSpec("positive noise_over_signal needs k < d")
        heads = self.head_eigenvalues
        if heads is None:
            heads = (1.0,) * self.k
        heads = tuple(float(h) for h in heads)
        if len(heads) != self.k:
            raise InvalidSpec(f"expected {self.k} head eigenvalues, got {len(heads)}")
        if any(h <= 0 for h in heads):
            raise InvalidSpec("head eigenvalues must be positive")
        if any(heads[i] < heads[i + 1] for i in range(len(heads) - 1)):
            raise InvalidSpec("head eigenvalues must be descending")
        object.__setattr__(self, "head_eigenvalues", heads)


@dataclass(frozen=True)
class CovarianceModel:
    """Explicit eigenfactorization of a synthetic covariance.

    rotation holds one eigenvector per row, matching eigenvalues order, so
    sigma = rotation.T @ diag(eigenvalues) @ rotation.
    """

    eigenvalues: np.ndarray
    rotation: np.ndarray
    k: int

    @classmethod
    def from_spec(cls, spec: SpectrumSpec) -> "CovarianceModel":
        heads = np.asarray(spec.head_eigenvalues, dtype=np.float64)
        tail_count = spec.d - spec.k
        if tail_count > 0:
            tail_value = spec.noise_over_signal * float(heads.sum()) / tail_count
            if tail_value >= heads[-1]:
                raise InvalidSpec(
                    f"flat tail value {tail_value:.6g} reaches the smallest head "
                    f"eigenvalue {heads[-1]:.6g}; the top-k eigenspace would be degenerate"
                )
            eigenvalues = np.concatenate([heads, np.full(tail_count, tail_value)])
        else:
            eigenvalues = heads
        rotation = random_orthogonal(spec.d, spec.rotation_seed)
        return cls(eigenvalues=eigenvalues, rotation=rotation, k=spec.k)

    @property
    def d(self) -> int:
        return self.rotation.shape[0]

    def ground_truth(self) -> GroundTruth:
        return GroundTruth(basis=self.rotation[: self.k], spectrum=self.eigenvalues, k=self.k)

    def sigma(self) -> np.ndarray:
        return (self.rotation.T * self.eigenvalues) @ self.rotation

    def projected_residual(self, W: np.ndarray) -> float:
        """Exact tr(sigma (I - W.T W)) for an orthonormal-rows W."""
        G = W @ self.rotation.T
        captured = float(np.sum(self.eigenvalues * np.einsum("ij,ij->j", G, G)))
        return max(float(self.eigenvalues.sum()) - captured, 0.0)


@dataclass(frozen=True)
class DataSet:
    """In-memory sample matrix, one sample per row."""

    samples: np.ndarray
    centered: bool = False

    def __post_init__(self):
        X = np.asarray(self.samples, dtype=np.float64)
        if X.ndim != 2:
            raise InvalidInputs("samples must be a 2-D array")
        if X.shape[0] < 1:
            raise EmptyDataSet("dataset has no samples")
        if not np.all(np.isfinite(X)):
            raise NonFinite("dataset contains non-finite entries")
        object.__setattr__(self, "samples", X)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]


def make_spec_covariance(spec: SpectrumSpec) -> tuple[GroundTruth, np.ndarray]:
    """Materialize a spec into its ground truth and dense covariance."""
    model = CovarianceModel.from_spec(spec)
    return model.ground_truth(), model.sigma()


def sample_gaussian(model: CovarianceModel, n: int, seed) -> DataSet:
    """Draw n i.i.d. zero-mean Gaussian samples with covariance model.sigma().

    Samples are built as x = sum_j sqrt(lambda_j) z_j q_j with z standard
    normal, so when the tail eigenvalues are zero every sample lies exactly
    in the span of the head eigenvectors.
    """
    if n < 1:
        raise InvalidInputs("need n >= 1 samples")
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, model.d))
    X = (Z * np.sqrt(model.eigenvalues)) @ model.rotation
    return DataSet(samples=X, centered=False)


def center(data: DataSet) -> DataSet:
    """Subtract the per-coordinate mean."""
    mean = data.samples.mean(axis=0)
    return DataSet(samples=data.samples - mean, centered=True)


def estimate_bounds(data: DataSet) -> tuple[float, np.ndarray, float]:
    """Empirical norm and spectrum bounds used to size learning rates.

    Returns (b, spectrum, sigma_frob) where b is the max squared sample
    norm, spectrum holds all d eigenvalues of the empirical covariance
    X.T X / n (descending), and sigma_frob is its Frobenius norm. Assumes
    the data has been centered.
    """
    X = data.samples
    b = float(np.max(np.einsum("ij,ij->i", X, X)))
    S = (X.T @ X) / data.n
    spectrum = top_k_eigen(S, data.d).eigenvalues
    return b, spectrum, float(np.linalg.norm(S))


def save_dataset(data: DataSet, path, format: str = "binary") -> None:
    """Write a dataset in the requested format (see module docstring)."""
    X = data.samples
    if format == "binary":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, _VERSION, X.shape[0], X.shape[1]))
            fh.write(np.ascontiguousarray(X, dtype="<f8").tobytes())
    elif format == "csv":
        lines = [",".join(f"{v:.17g}" for v in row) for row in X]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    else:
        raise InvalidInputs(f"unknown dataset format {format!r}")


def load_dataset(path, format: str | None = None) -> DataSet:
    """Read a dataset; format defaults by extension (.csv, otherwise binary)."""
    if format is None:
        format = "csv" if str(path).endswith(".csv") else "binary"
    if format == "binary":
        return _load_binary(path)
    if format == "csv":
        return _load_csv(path)
    raise InvalidInputs(f"unknown dataset format {format!r}")


def _load_binary(path) -> DataSet:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, n, d = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
        if version != _VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        payload = fh.read()
    expected = n * d * 8
    if len(payload) != expected:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    if n < 1 or d < 1:
        raise FormatError(f"{path}: empty dataset (n={n}, d={d})")
    X = np.frombuffer(payload, dtype="<f8").reshape(n, d)
    return DataSet(samples=X.astype(np.float64), centered=False)


def _load_csv(path) -> DataSet:
    rows: list[list[float]] = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            tokens = text.split(",")
            row_index = len(rows) + 1
            if width is None:
                width = len(tokens)
            elif len(tokens) != width:
                raise FormatError(
                    f"{path}: row {row_index} (line {lineno}) has {len(tokens)} "
                    f"columns, expected {width}"
                )
            values = []
            for col, tok in enumerate(tokens, start=1):
                try:
                    values.append(float(tok))
                except ValueError:
                    raise FormatError(
                        f"{path}: row {row_index} col {col} (line {lineno}): "
                        f"not a number: {tok.strip()!r}"
                    ) from None
            rows.append(values)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    X = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise FormatError(f"{path}: non-finite value in data")
    return DataSet(samples=X, centered=False)


class GaussianSource:
    """Endless stream of Gaussian samples from a CovarianceModel.

    Owns a private PCG64 stream; two sources built with the same
    (model, seed) produce identical draw sequences.
    """

    kind = "gaussian-spec"

    def __init__(self, model: CovarianceModel, seed):
        self.model = model
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._scale = np.sqrt(model.eigenvalues)

    @property
    def d(self) -> int:
        return self.model.d

    def draw(self) -> np.ndarray:
        z = self._rng.standard_normal(self.model.d)
        return (z * self._scale) @ self.model.rotation

    def draw_batch(self, m: int) -> np.ndarray:
        Z = self._rng.standard_normal((m, self.model.d))
        return (Z * self._scale) @ self.model.rotation


class ReplaySource:
    """Uniform-with-replacement sampler over a finite dataset."""

    kind = "finite-replay"

    def __init__(self, data: DataSet, seed):
        self.data = data
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    @property
    def d(self) -> int:
        return self.data.d

    def draw(self) -> np.ndarray:
        idx = int(self._rng.integers(self.data.n))
        return self.data.samples[idx]

    def draw_batch(self, m: int) -> np.ndarray:
        idx = self._rng.integers(self.data.n, size=m)
        return self.data.samples[idx]


SampleSource = GaussianSource | ReplaySource
