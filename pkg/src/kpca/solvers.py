"""Streaming subspace solvers and the trace-producing run loop.

The main update is the matrix Krasulina step. With an orthonormal-rows
iterate W (k' x d), a sample x, and step size eta:

    s = W x                  (k' coefficients)
    r = x - W.T W x          (residual, orthogonal to the rows of W)
    W <- W + eta * s r.T

The residual factor makes the stochastic update self-regulating: its
magnitude shrinks as the iterate captures the data, since
E||s r.T||^2 <= b E||r||^2 with b a bound on ||x||^2. Cost is O(k' d) per
step. Baselines: the Oja step (W <- W + eta (W x) x.T), a variance-reduced
epoch solver that anchors a full-data gradient once per epoch, and batch
power iterations.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .data import DataSet, GaussianSource, ReplaySource, SampleSource, center, estimate_bounds
from .errors import (
    DimensionMismatch,
    InvalidInputs,
    NonFinite,
    NotOrthonormal,
)
from .linalg import as_matrix, derive_seeds, orthonormalize_rows
from .metrics import GroundTruth, reconstruction_error, subspace_distance

SOLVERS = ("krasulina", "oja", "vrpca", "power")


@dataclass(frozen=True)
class SolverState:
    """Iterate W plus bookkeeping.

    `orthonormal` records whether W currently has orthonormal rows; steps
    clear it and `orthonormalized` restores it.
    """

    W: np.ndarray
    iter: int = 0
    orthonormal: bool = False


def orthonormalized(state: SolverState) -> SolverState:
    """Replace W by an orthonormal basis of its row space (no-op if already flagged)."""
    if state.orthonormal:
        return state
    return SolverState(W=orthonormalize_rows(state.W), iter=state.iter, orthonormal=True)


def _check_step_inputs(state: SolverState, x, eta: float) -> np.ndarray:
    if not state.orthonormal:
        raise NotOrthonormal("step requires an orthonormalized state")
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != state.W.shape[1]:
        raise DimensionMismatch(f"sample has shape {v.shape}, iterate dimension is {state.W.shape[1]}")
    if not np.all(np.isfinite(v)):
        raise NonFinite("sample contains non-finite entries")
    if not eta > 0:
        raise InvalidInputs(f"step size must be positive, got {eta}")
    return v


def krasulina_step(state: SolverState, x, eta: float) -> SolverState:
    """One residual-weighted stochastic update W + eta (W x)(x - W.T W x).T."""
    v = _check_step_inputs(state, x, eta)
    s = state.W @ v
    r = v - state.W.T @ s
    W = state.W + eta * np.outer(s, r)
    return SolverState(W=W, iter=state.iter + 1, orthonormal=False)


def oja_step(state: SolverState, x, eta: float) -> SolverState:
    """One stochastic gradient update W + eta (W x) x.T."""
    v = _check_step_inputs(state, x, eta)
    s = state.W @ v
    W = state.W + eta * np.outer(s, v)
    return SolverState(W=W, iter=state.iter + 1, orthonormal=False)


def vr_pca_epoch(state: SolverState, data: DataSet, eta: float, inner_iters: int, seed) -> SolverState:
    """One variance-reduced epoch.

    A full pass over `data` computes the anchored gradient
    U = (1/n) sum_i x_i x_i.T W~.T at the epoch anchor W~ (the incoming
    iterate), then `inner_iters` stochastic corrections

        W <- W + eta * ((W - W~) x x.T + U.T)

    with x sampled uniformly with replacement, and the result is
    orthonormalized. The returned iterate has seen n + inner_iters samples.
    """
    if not state.orthonormal:
        raise NotOrthonormal("epoch requires an orthonormalized state")
    if inner_iters < 1:
        raise InvalidInputs("inner_iters must be >= 1")
    if not eta > 0:
        raise InvalidInputs(f"step size must be positive, got {eta}")
    X = data.samples
    if X.shape[1] != state.W.shape[1]:
        raise DimensionMismatch(f"data dimension {X.shape[1]} != iterate dimension {state.W.shape[1]}")
    anchor = state.W
    anchor_grad = (anchor @ X.T) @ X / data.n
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, data.n, size=inner_iters)
    W = anchor.copy()
    for j in idx:
        x = X[j]
        W += eta * (np.outer((W - anchor) @ x, x) + anchor_grad)
    return SolverState(
        W=orthonormalize_rows(W), iter=state.iter + inner_iters, orthonormal=True
    )


def power_method_epoch(state: SolverState, data: DataSet) -> SolverState:
    """One batch power iteration: orthonormalize((1/n) sum_i (W x_i) x_i.T)."""
    if not state.orthonormal:
        raise NotOrthonormal("epoch requires an orthonormalized state")
    X = data.samples
    if X.shape[1] != state.W.shape[1]:
        raise DimensionMismatch(f"data dimension {X.shape[1]} != iterate dimension {state.W.shape[1]}")
    W = (state.W @ X.T) @ X / data.n
    return SolverState(W=orthonormalize_rows(W), iter=state.iter + 1, orthonormal=True)


@dataclass(frozen=True)
class RateSchedule:
    """Step-size schedule: eta for t = 1, 2, ...

    kinds:
        constant:      rate(t) = eta
        inverse-time:  rate(t) = eta / (t + offset)
        guaranteed:    constant eta computed by `guaranteed_learning_rate`,
                       tagged so envelope checks can verify provenance.
    """

    kind: str = "constant"
    eta: float = 0.1
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "inverse-time", "guaranteed"):
            raise InvalidInputs(f"unknown schedule kind {self.kind!r}")
        if not self.eta > 0 or not math.isfinite(self.eta):
            raise InvalidInputs("eta must be positive and finite")
        if self.offset < 0:
            raise InvalidInputs("offset must be >= 0")

    def rate(self, t: int) -> float:
        if t < 1:
            raise InvalidInputs("iterations are counted from 1")
        if self.kind == "inverse-time":
            return self.eta / (t + self.offset)
        return self.eta


@dataclass(frozen=True)
class GuaranteedRateInputs:
    """Bounds feeding the guaranteed constant step size.

    b bounds the squared sample norm, lambda1/lambda_k are the largest and
    k-th covariance eigenvalues, sigma_frob the covariance Frobenius norm,
    tau the basin margin, and delta the allowed failure probability.
    """

    b: float
    lambda1: float
    lambda_k: float
    k: int
    tau: float
    delta: float
    sigma_frob: float

    def __post_init__(self):
        if not (self.b >= self.lambda1 > 0):
            raise InvalidInputs("need b >= lambda1 > 0")
        if not (0 < self.lambda_k <= self.lambda1):
            raise InvalidInputs("need 0 < lambda_k <= lambda1")
        if self.k < 1:
            raise InvalidInputs("need k >= 1")
        if not (0 < self.tau < 1):
            raise InvalidInputs("need 0 < tau < 1")
        if not (0 < self.delta < 1):
            raise InvalidInputs("need 0 < delta < 1")
        if not self.sigma_frob > 0:
            raise InvalidInputs("need sigma_frob > 0")


def guaranteed_learning_rate(inputs: GuaranteedRateInputs) -> float:
    """Largest constant step size covered by the exponential-convergence guarantee.

    Minimum of three branches; the first keeps single-step Gram growth in
    check, the others control the expected-progress and concentration
    arguments. Homogeneous of degree -1 in the scale of (b, lambda1,
    lambda_k, sigma_frob).
    """
    b, l1, lk = inputs.b, inputs.lambda1, inputs.lambda_k
    r1 = (math.sqrt(2.0) - 1.0) / b
    r2 = lk * inputs.tau / (l1 * b * (inputs.k + 3))
    r3 = (
        2.0
        * lk
        * inputs.tau
        / (
            (16.0 / (1.0 - inputs.tau)) * math.log(1.0 / inputs.delta) * (b + inputs.sigma_frob) ** 2
            + b * (inputs.k + 1) * l1
        )
    )
    return min(r1, r2, r3)


def initialization_in_basin(W0, truth: GroundTruth, tau: float) -> bool:
    """Whether the orthonormalized W0 starts within half the basin margin.

    True iff delta(W0) <= (1 - tau) / 2, boundary included. The guarantee's
    envelope applies to runs started from such iterates.
    """
    if not (0 < tau < 1):
        raise InvalidInputs("need 0 < tau < 1")
    W = orthonormalize_rows(as_matrix(W0, "W0"))
    return subspace_distance(truth, W) <= (1.0 - tau) / 2.0


def pilot_learning_rate(source: SampleSource, n_pilot: int = 1000) -> float:
    """Empirical default step size 1 / (10 * lambda1_hat) from a pilot sample."""
    if n_pilot < 2:
        raise InvalidInputs("pilot needs at least 2 samples")
    pilot = center(DataSet(samples=source.draw_batch(n_pilot)))
    _, spectrum, _ = estimate_bounds(pilot)
    lam1 = float(spectrum[0])
    if lam1 <= 0:
        raise InvalidInputs("pilot sample has zero variance")
    return 1.0 / (10.0 * lam1)


@dataclass(frozen=True)
class TraceRecord:
    """One checkpoint row of a run."""

    iter: int
    samples_seen: int
    delta: float
    ln_delta: float
    recon_error: float
    residual_sq: float
    in_basin: bool
    elapsed_ns: int


@dataclass
class ConvergenceTrace:
    """Checkpoint series for one run, plus the settings that produced it."""

    solver: str
    schedule: RateSchedule
    seed: int
    tau: float
    records: list[TraceRecord] = field(default_factory=list)

    def iters(self) -> np.ndarray:
        return np.array([r.iter for r in self.records], dtype=np.int64)

    def deltas(self) -> np.ndarray:
        return np.array([r.delta for r in self.records], dtype=np.float64)

    def final_delta(self) -> float:
        if not self.records:
            raise InvalidInputs("trace has no records")
        return self.records[-1].delta


class _Clock:
    """Elapsed-nanosecond source. The null clock keeps traces reproducible."""

    def __init__(self, wall: bool):
        self.wall = wall
        self._t0 = time.perf_counter_ns() if wall else 0

    def elapsed_ns(self) -> int:
        if not self.wall:
            return 0
        return time.perf_counter_ns() - self._t0


def _recon_fn(source: SampleSource, eval_data: DataSet | None):
    if eval_data is not None:
        X = eval_data.samples
        return lambda W: reconstruction_error(X, W)
    if isinstance(source, GaussianSource):
        model = source.model
        return model.projected_residual
    X = source.data.samples
    return lambda W: reconstruction_error(X, W)


def run_stream(
    solver: str,
    init,
    source: SampleSource,
    schedule: RateSchedule,
    total_iters: int,
    eval_every: int,
    truth: GroundTruth,
    seed,
    *,
    tau: float = 0.5,
    eval_data: DataSet | None = None,
    wall_clock: bool = False,
) -> ConvergenceTrace:
    """Run a solver over a sample stream, checkpointing every `eval_every` iterations.

    For the online solvers (krasulina, oja) each iteration orthonormalizes,
    draws one sample, and applies the step with the scheduled rate; `iter`
    and `samples_seen` both count steps. For vrpca, `total_iters` counts
    inner iterations, epochs are one full anchor pass plus n inner
    iterations, and `samples_seen` includes the anchor passes, so the first
    checkpoint appears only after n anchor samples. For power, `total_iters`
    counts full-data epochs.

    Each checkpoint row is computed from an orthonormalized copy of the
    iterate: delta against `truth`, ln(delta) (-inf at zero),
    reconstruction error (exact covariance residual for Gaussian sources,
    dataset mean residual otherwise, or against `eval_data` when given),
    the most recent sample's squared residual, the basin flag
    delta <= 1 - tau, and elapsed wall nanoseconds (0 unless `wall_clock`).

    Reruns with identical arguments (including freshly constructed sources
    with the same seeds) produce identical traces, except `elapsed_ns` when
    `wall_clock` is set. `seed` feeds only solver-internal randomness
    (vrpca's inner sampling); the sample stream's own seed lives in the
    source.
    """
    if solver not in SOLVERS:
        raise InvalidInputs(f"unknown solver {solver!r}")
    if total_iters < 1:
        raise InvalidInputs("total_iters must be >= 1")
    if eval_every < 1:
        raise InvalidInputs("eval_every must be >= 1")
    if not (0 < tau < 1):
        raise InvalidInputs("need 0 < tau < 1")

    W0 = as_matrix(init, "init")
    if W0.shape[1] != source.d:
        raise DimensionMismatch(f"init dimension {W0.shape[1]} != source dimension {source.d}")
    state = orthonormalized(SolverState(W=W0, iter=0, orthonormal=False))
    recon = _recon_fn(source, eval_data)
    clock = _Clock(wall_clock)
    trace = ConvergenceTrace(solver=solver, schedule=schedule, seed=int(seed), tau=tau)

    def record(iter_no: int, samples_seen: int, W_eval: np.ndarray, residual_sq: float):
        delta = subspace_distance(truth, W_eval)
        ln_delta = math.log(delta) if delta > 0 else float("-inf")
        trace.records.append(
            TraceRecord(
                iter=int(iter_no),
                samples_seen=int(samples_seen),
                delta=float(delta),
                ln_delta=float(ln_delta),
                recon_error=float(recon(W_eval)),
                residual_sq=float(residual_sq),
                in_basin=bool(delta <= 1.0 - tau),
                elapsed_ns=int(clock.elapsed_ns()),
            )
        )

    if solver in ("krasulina", "oja"):
        step = krasulina_step if solver == "krasulina" else oja_step
        for t in range(1, total_iters + 1):
            state = orthonormalized(state)
            x = source.draw()
            checkpoint = t % eval_every == 0
            if checkpoint:
                s = state.W @ x
                r = x - state.W.T @ s
                residual_sq = float(r @ r)
            state = step(state, x, schedule.rate(t))
            if checkpoint:
                record(t, t, orthonormalize_rows(state.W), residual_sq)
        return trace

    if not isinstance(source, ReplaySource):
        raise InvalidInputs(f"solver {solver!r} needs a finite-replay source")
    X = source.data.samples
    n = source.data.n

    if solver == "power":
        for epoch in range(1, total_iters + 1):
            state = power_method_epoch(state, source.data)
            if epoch % eval_every == 0:
                rec = recon(state.W)
                record(epoch, epoch * n, state.W, rec)
        return trace

    # vrpca: anchor passes plus checkpointed inner iterations.
    n_epochs = math.ceil(total_iters / n)
    epoch_seeds = derive_seeds(seed, n_epochs)
    done = 0
    W = state.W
    for epoch in range(n_epochs):
        anchor = orthonormalize_rows(W)
        anchor_grad = (anchor @ X.T) @ X / n
        rng = np.random.default_rng(epoch_seeds[epoch])
        inner = min(n, total_iters - done)
        idx = rng.integers(0, n, size=inner)
        W = anchor.copy()
        anchors_seen = (epoch + 1) * n
        for j in idx:
            x = X[j]
            W += schedule.rate(done + 1) * (np.outer((W - anchor) @ x, x) + anchor_grad)
            done += 1
            if done % eval_every == 0:
                W_eval = orthonormalize_rows(W)
                rr = x - W_eval.T @ (W_eval @ x)
                record(done, anchors_seen + done, W_eval, float(rr @ rr))
    return trace
