"""Numerical validators for the update's identities and inequalities.

Four exact checks verify algebraic facts about a single residual-weighted
step to 1e-9 on random instances; a Monte Carlo check validates the
expected one-step gain bound; an envelope check compares a guaranteed-rate
trace against its exponential decay envelope.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import CovarianceModel, GaussianSource, SpectrumSpec
from .errors import InsufficientTrials, InvalidInputs, NotGuaranteedRate
from .linalg import derive_seeds, orthonormalize_rows
from .metrics import GroundTruth, require_orthonormal_rows, subspace_distance
from .solvers import (
    ConvergenceTrace,
    GuaranteedRateInputs,
    RateSchedule,
    guaranteed_learning_rate,
    initialization_in_basin,
    run_stream,
)

# Pass threshold for the exact (non-statistical) checks.
EXACT_TOL = 1e-9


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one validator: worst violation over its trials."""

    name: str
    passed: bool
    worst_violation: float
    trials: int
    details: str = ""

    def line(self) -> str:
        status = "pass" if self.passed else "fail"
        return f"{self.name} {status} {self.worst_violation:.6e} {self.trials}"


def format_report(reports: list[CheckReport]) -> str:
    return "\n".join(r.line() for r in reports) + "\n"


def _step_quantities(W, x, eta: float):
    A = require_orthonormal_rows(W)
    v = np.asarray(x, dtype=np.float64)
    s = A @ v
    r = v - A.T @ s
    Wp = A + eta * np.outer(s, r)
    return A, s, r, Wp


def check_gram_identity(W, x, eta: float) -> CheckReport:
    """After one step from orthonormal W, the Gram matrix is exactly
    I + eta^2 ||r||^2 s s.T (the update direction is orthogonal to every row)."""
    A, s, r, Wp = _step_quantities(W, x, eta)
    kp = A.shape[0]
    expected = np.eye(kp) + (eta**2) * float(r @ r) * np.outer(s, s)
    violation = float(np.linalg.norm(Wp @ Wp.T - expected))
    return CheckReport("gram-identity", violation <= EXACT_TOL, violation, 1)


def check_inverse_gram_bound(W, x, eta: float) -> CheckReport:
    """Smallest eigenvalue of the inverse post-step Gram matrix is at least
    1 - eta^2 ||r||^2 ||s||^2. Requires that product to be below 1."""
    A, s, r, Wp = _step_quantities(W, x, eta)
    growth = (eta**2) * float(r @ r) * float(s @ s)
    if growth >= 1.0:
        raise InvalidInputs(f"need eta^2 ||r||^2 ||s||^2 < 1, got {growth:.6g}")
    G = Wp @ Wp.T
    lam_max = float(np.linalg.eigvalsh(G)[-1])
    lam_min_inv = 1.0 / lam_max
    violation = max(0.0, (1.0 - growth) - lam_min_inv)
    return CheckReport("inverse-gram-bound", violation <= EXACT_TOL, violation, 1)


def check_gain_lower_bound(truth: GroundTruth, W) -> CheckReport:
    """The per-step alignment gain term Gamma = tr(U P Sigma (I-P)) is at
    least lambda_k * delta * (1 - delta), and vanishes when delta does."""
    A = require_orthonormal_rows(W)
    B = truth.basis
    heads = truth.head()
    # M[i, j] = u_i . P u_j restricted to the head space; Gamma = tr(Lam (M - M^2)).
    BWt = B @ A.T
    M = BWt @ BWt.T
    gamma = float(np.sum(heads * (np.diag(M) - np.einsum("ij,ij->i", M, M))))
    delta = subspace_distance(truth, A)
    bound = truth.lambda_k * delta * (1.0 - delta)
    violation = max(0.0, bound - gamma)
    if delta <= 1e-12:
        violation = max(violation, abs(gamma))
    return CheckReport("gain-lower-bound", violation <= EXACT_TOL, violation, 1)


def check_loss_sandwich(truth: GroundTruth, W) -> CheckReport:
    """lambda_k * delta <= tr(Sigma (I-P)) <= lambda1 * delta for the rank-k
    covariance rebuilt from the truth's head eigenpairs."""
    A = require_orthonormal_rows(W)
    heads = truth.head()
    M = truth.basis @ A.T
    captured = float(np.sum(heads * np.einsum("ij,ij->i", M, M)))
    mid = float(np.sum(heads)) - captured
    delta = subspace_distance(truth, A)
    violation = max(0.0, truth.lambda_k * delta - mid, mid - truth.lambda1 * delta)
    return CheckReport("loss-sandwich", violation <= EXACT_TOL, violation, 1)


def _random_truth(rng, d: int, k: int) -> GroundTruth:
    basis = orthonormalize_rows(rng.standard_normal((k, d)))
    heads = np.sort(rng.uniform(0.5, 2.0, size=k))[::-1]
    spectrum = np.concatenate([heads, np.zeros(d - k)])
    return GroundTruth(basis=basis, spectrum=spectrum, k=k)


def run_exact_suite(trials: int = 1000, seed=0) -> list[CheckReport]:
    """Run all four exact checks on `trials` random instances each.

    Instance dimensions: d in [2, 30], k in [1, min(5, d-1)],
    k' in [k, min(8, d)]. Aggregates the worst violation per check.
    """
    if trials < 1:
        raise InvalidInputs("trials must be >= 1")
    worst = {"gram-identity": 0.0, "inverse-gram-bound": 0.0,
             "gain-lower-bound": 0.0, "loss-sandwich": 0.0}
    for child in derive_seeds(seed, trials):
        rng = np.random.default_rng(child)
        d = int(rng.integers(2, 31))
        k = int(rng.integers(1, min(5, d - 1) + 1))
        kp = int(rng.integers(k, min(8, d) + 1))
        W = orthonormalize_rows(rng.standard_normal((kp, d)))
        x = rng.standard_normal(d) * float(rng.uniform(0.5, 2.0))
        eta = float(10.0 ** rng.uniform(-2.0, -0.3))

        rep = check_gram_identity(W, x, eta)
        worst["gram-identity"] = max(worst["gram-identity"], rep.worst_violation)

        s = W @ x
        r = x - W.T @ s
        prod = float(r @ r) * float(s @ s)
        eta_inv = eta if eta**2 * prod < 0.81 else math.sqrt(0.81 / prod)
        rep = check_inverse_gram_bound(W, x, eta_inv)
        worst["inverse-gram-bound"] = max(worst["inverse-gram-bound"], rep.worst_violation)

        truth = _random_truth(rng, d, k)
        rep = check_gain_lower_bound(truth, W)
        worst["gain-lower-bound"] = max(worst["gain-lower-bound"], rep.worst_violation)
        rep = check_loss_sandwich(truth, W)
        worst["loss-sandwich"] = max(worst["loss-sandwich"], rep.worst_violation)

    return [
        CheckReport(name, v <= EXACT_TOL, v, trials, "aggregated over random instances")
        for name, v in worst.items()
    ]


def check_expected_gain(
    W, truth: GroundTruth, eta: float, trials: int, seed, safety: float = 1.5
) -> CheckReport:
    """Monte Carlo validation of the expected one-step alignment gain bound.

    Draws `trials` samples from the strictly rank-k Gaussian given by the
    truth's head eigenpairs, applies one residual-weighted step to W per
    sample, and compares the mean of tr(U P+) against

        tr(U P) + 2 eta lambda_k delta (1 - delta) - eta^2 C lambda1 delta,
        C = k b + 2 eta b^2 + eta^2 b^3,

    allowing three standard errors of slack. b is the 0.999 empirical
    quantile of ||x||^2 times `safety` (Gaussian norms are unbounded, so no
    almost-sure bound exists; the factor is recorded in the details line).
    The post-step projector is evaluated through the Gram solve, which a
    unit test pins against the step-plus-orthonormalize path.
    """
    if trials < 10**4:
        raise InsufficientTrials(f"need at least 1e4 trials, got {trials}")
    if eta < 0:
        raise InvalidInputs("eta must be >= 0")
    A = require_orthonormal_rows(W)
    if A.shape[1] != truth.d:
        raise InvalidInputs("W and truth dimensions differ")
    B = truth.basis
    heads = truth.head()
    scale = np.sqrt(heads)
    rng = np.random.default_rng(seed)

    traces = np.empty(trials)
    normsq = np.empty(trials)
    chunk = 20000
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        Z = rng.standard_normal((m, truth.k))
        X = (Z * scale) @ B
        S = X @ A.T
        R = X - S @ A
        Wp = A[None, :, :] + eta * S[:, :, None] * R[:, None, :]
        G = Wp @ Wp.transpose(0, 2, 1)
        M = Wp @ B.T
        Y = np.linalg.solve(G, M)
        traces[done : done + m] = np.einsum("mij,mij->m", M, Y)
        normsq[done : done + m] = np.einsum("ij,ij->i", X, X)
        done += m

    mean = float(traces.mean())
    se = float(traces.std(ddof=1) / math.sqrt(trials))
    b = float(np.quantile(normsq, 0.999)) * safety
    C = truth.k * b + 2.0 * eta * b**2 + eta**2 * b**3
    delta0 = subspace_distance(truth, A)
    rhs = (truth.k - delta0) + 2.0 * eta * truth.lambda_k * delta0 * (1.0 - delta0) \
        - eta**2 * C * truth.lambda1 * delta0
    violation = max(0.0, (rhs - 3.0 * se) - mean)
    details = (
        f"mean={mean:.9f} rhs={rhs:.9f} se={se:.3e} delta0={delta0:.4f} "
        f"b={b:.4f} (0.999 quantile of ||x||^2 x{safety} safety, norms unbounded)"
    )
    return CheckReport("expected-gain", violation == 0.0, violation, trials, details)


def envelope_counts(
    trace: ConvergenceTrace, inputs: GuaranteedRateInputs, slack: float = 10.0
) -> tuple[int, int, float]:
    """(within, total, worst excess ratio) over the trace's in-basin checkpoints.

    The envelope is slack / (1 - delta) * exp(-t * eta * tau * lambda_k).
    Raises NotGuaranteedRate unless the trace's schedule matches the
    guaranteed rate for `inputs`.
    """
    expected = guaranteed_learning_rate(inputs)
    sched = trace.schedule
    if sched.kind == "inverse-time" or abs(sched.eta - expected) > 1e-12 * expected:
        raise NotGuaranteedRate(
            f"trace ran at eta={sched.eta} ({sched.kind}), guaranteed rate is {expected}"
        )
    if abs(trace.tau - inputs.tau) > 1e-12:
        raise InvalidInputs("trace basin margin differs from the envelope's tau")
    within = 0
    total = 0
    worst = 0.0
    for rec in trace.records:
        if not rec.in_basin:
            continue
        bound = slack / (1.0 - inputs.delta) * math.exp(
            -rec.iter * sched.eta * inputs.tau * inputs.lambda_k
        )
        total += 1
        if rec.delta <= bound:
            within += 1
        worst = max(worst, rec.delta / bound - 1.0)
    return within, total, max(0.0, worst)


def check_convergence_envelope(
    trace: ConvergenceTrace, inputs: GuaranteedRateInputs, slack: float = 10.0
) -> CheckReport:
    """Every in-basin checkpoint must sit below the exponential envelope."""
    within, total, worst = envelope_counts(trace, inputs, slack)
    passed = within == total
    details = f"within={within}/{total} slack={slack}"
    return CheckReport("convergence-envelope", passed, worst, total, details)


def basis_with_distance(truth: GroundTruth, kprime: int, target: float, rng, tol: float = 1e-3):
    """Orthonormal (kprime, d) matrix whose distance to `truth` is ~`target`.

    Blends the true basis (padded with orthogonal-complement rows when
    kprime > k) with a fixed Gaussian direction and bisects the blend until
    the distance lands within `tol` of the target. Deterministic given the
    generator state.
    """
    if not 0 < target < truth.k:
        raise InvalidInputs(f"target distance must be in (0, k), got {target}")
    if kprime < truth.k or kprime > truth.d:
        raise InvalidInputs(f"need k <= kprime <= d, got kprime={kprime}")
    base = truth.basis
    if kprime > truth.k:
        raw = rng.standard_normal((kprime - truth.k, truth.d))
        raw -= (raw @ base.T) @ base
        base = np.vstack([base, orthonormalize_rows(raw)])
    G = rng.standard_normal((kprime, truth.d))

    def dist(alpha: float) -> float:
        return subspace_distance(truth, orthonormalize_rows(base + alpha * G))

    lo, hi = 0.0, 0.05
    while dist(hi) < target:
        hi *= 2.0
        if hi > 1e4:
            raise InvalidInputs("could not reach the target distance")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if dist(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    W = orthonormalize_rows(base + hi * G)
    if abs(subspace_distance(truth, W) - target) > tol:
        raise InvalidInputs("bisection failed to approximate the target distance")
    return W


def envelope_experiment(
    seed,
    d: int = 50,
    k: int = 5,
    tau: float = 0.5,
    delta: float = 0.1,
    total_iters: int = 5000,
    eval_every: int = 50,
    start_delta: float = 0.1,
) -> tuple[ConvergenceTrace, GuaranteedRateInputs]:
    """One guaranteed-rate run set up to satisfy the envelope preconditions.

    Unit-eigenvalue strictly rank-k covariance, basin-passing start, b from
    the 0.999 quantile of a 10^4-sample pilot.
    """
    rot, samp, init, pilot = derive_seeds(seed, 4)
    model = CovarianceModel.from_spec(SpectrumSpec(d=d, k=k, rotation_seed=rot))
    truth = model.ground_truth()
    pilot_draws = GaussianSource(model, pilot).draw_batch(10000)
    b = float(np.quantile(np.einsum("ij,ij->i", pilot_draws, pilot_draws), 0.999))
    inputs = GuaranteedRateInputs(
        b=b,
        lambda1=truth.lambda1,
        lambda_k=truth.lambda_k,
        k=k,
        tau=tau,
        delta=delta,
        sigma_frob=float(np.linalg.norm(truth.spectrum)),
    )
    eta = guaranteed_learning_rate(inputs)
    W0 = basis_with_distance(truth, k, start_delta, np.random.default_rng(init))
    if not initialization_in_basin(W0, truth, tau):
        raise InvalidInputs("constructed start is outside the basin margin")
    source = GaussianSource(model, samp)
    schedule = RateSchedule(kind="guaranteed", eta=eta)
    trace = run_stream(
        "krasulina", W0, source, schedule, total_iters, eval_every, truth, seed=0, tau=tau
    )
    return trace, inputs
