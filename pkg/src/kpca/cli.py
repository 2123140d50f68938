"""Command-line benchmark harness.

Subcommands:
    gen         write a synthetic dataset (binary or csv) plus a JSON sidecar
                with the generating spec and ground truth
    run         run a solver for one or more seeds, one trace CSV per run
    sweep       cartesian sweep over d/k/ratio/solver with a summary CSV
    check       run validator suites and write a report
    plotscript  emit a gnuplot script for trace CSVs

Configuration comes from flat ``key = value`` files (``#`` comments); any
flag given on the command line overrides the file. The default output
directory is the KPCA_OUT_DIR environment variable, falling back to the
current directory. Exit codes: 0 success, 1 failure (bad config, check
failure, I/O error), 2 usage error.

Trace CSVs are written with the frozen header

    iter,samples_seen,delta,ln_delta,recon_error,residual_sq,in_basin,elapsed_ns

using shortest round-trip float formatting, ``-inf`` for ln(0), 0/1 basin
flags, and elapsed_ns 0 unless wall timing was requested, so reruns from
the same (config, seed) are byte-identical.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from itertools import product
from statistics import median

import numpy as np

from .checks import (
    CheckReport,
    basis_with_distance,
    check_convergence_envelope,
    check_expected_gain,
    envelope_counts,
    envelope_experiment,
    format_report,
    run_exact_suite,
)
from .data import (
    CovarianceModel,
    DataSet,
    GaussianSource,
    ReplaySource,
    SpectrumSpec,
    center,
    estimate_bounds,
    load_dataset,
    sample_gaussian,
    save_dataset,
)
from .errors import InvalidInputs, KPCAError
from .linalg import derive_seeds, orthonormalize_rows, top_k_eigen
from .metrics import GroundTruth
from .solvers import (
    SOLVERS,
    ConvergenceTrace,
    GuaranteedRateInputs,
    RateSchedule,
    TraceRecord,
    guaranteed_learning_rate,
    pilot_learning_rate,
    run_stream,
)

TRACE_HEADER = "iter,samples_seen,delta,ln_delta,recon_error,residual_sq,in_basin,elapsed_ns"
ENV_OUT_DIR = "KPCA_OUT_DIR"


# ---------------------------------------------------------------------------
# trace CSV i/o and summary fits


def write_trace_csv(trace: ConvergenceTrace, path) -> None:
    lines = [TRACE_HEADER]
    for r in trace.records:
        lines.append(
            f"{r.iter},{r.samples_seen},{float(r.delta)!r},{float(r.ln_delta)!r},"
            f"{float(r.recon_error)!r},{float(r.residual_sq)!r},{int(r.in_basin)},{r.elapsed_ns}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trace_csv(path) -> list[TraceRecord]:
    from .errors import FormatError

    with open(path) as fh:
        header = fh.readline().strip()
        if header != TRACE_HEADER:
            raise FormatError(f"{path}: unexpected trace header {header!r}")
        records = []
        for lineno, line in enumerate(fh, start=2):
            text = line.strip()
            if not text:
                continue
            parts = text.split(",")
            if len(parts) != 8:
                raise FormatError(f"{path}: line {lineno}: expected 8 columns")
            try:
                records.append(
                    TraceRecord(
                        iter=int(parts[0]),
                        samples_seen=int(parts[1]),
                        delta=float(parts[2]),
                        ln_delta=float(parts[3]),
                        recon_error=float(parts[4]),
                        residual_sq=float(parts[5]),
                        in_basin=bool(int(parts[6])),
                        elapsed_ns=int(parts[7]),
                    )
                )
            except ValueError as exc:
                raise FormatError(f"{path}: line {lineno}: {exc}") from None
    return records


def fit_log_slope(iters, deltas) -> tuple[float, float]:
    """Least-squares slope and R^2 of ln(delta) vs iteration over the decaying regime.

    The regime starts once the trajectory first reaches delta <= 1/2 (the
    default basin margin, where per-step contraction is in force; random
    warm-up above that level is excluded) and ends when it first comes
    within 4x of its terminal plateau (median of the last tenth of
    checkpoints), so the machine-precision or noise floor does not drag the
    fit either. Either cut falls back to the full positive range when it
    would leave fewer than three checkpoints. Returns (nan, nan) when fewer
    than two positive checkpoints exist.
    """
    it = np.asarray(iters, dtype=np.float64)
    de = np.asarray(deltas, dtype=np.float64)
    keep = de > 0
    it, de = it[keep], de[keep]
    if it.size < 2:
        return float("nan"), float("nan")
    tail = de[-max(1, it.size // 10):]
    plateau = float(np.median(tail))
    floored = np.nonzero(de <= 4.0 * plateau)[0]
    cut = int(floored[0]) if floored.size else it.size
    if cut < 3:
        cut = it.size
    started = np.nonzero(de[:cut] <= 0.5)[0]
    start = int(started[0]) if started.size else 0
    if cut - start < 3:
        start = 0
    x = it[start:cut]
    y = np.log(de[start:cut])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot <= 1e-30 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return float(slope), float(r2)


# ---------------------------------------------------------------------------
# experiment configuration


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a run. One seed expands into the
    rotation/sampling/init/inner/pilot sub-seeds deterministically."""

    solver: str = "krasulina"
    d: int = 100
    k: int = 10
    kprime: int = 0            # 0 means k
    ratio: float = 0.0
    heads: tuple[float, ...] | None = None
    n: int = 5000
    dataset: str | None = None
    source: str = "auto"       # spec | replay | auto
    schedule: str = "constant"  # constant | inverse-time | guaranteed
    eta: float = 0.0           # 0 means pilot default 1/(10 lambda1_hat)
    offset: float = 0.0
    total_iters: int = 5000
    eval_every: int = 50
    seeds: tuple[int, ...] = (0,)
    tau: float = 0.5
    delta: float = 0.1
    out_dir: str = "."
    timing: str = "none"       # none | wall
    center_data: bool = True
    threads: int = 1


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise InvalidInputs(f"not a boolean: {text!r}")


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in str(text).split(",") if tok.strip() != "")


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in str(text).split(",") if tok.strip() != "")


_COERCERS = {
    "solver": str,
    "d": int,
    "k": int,
    "kprime": int,
    "ratio": float,
    "heads": lambda v: _parse_float_list(v) or None,
    "n": int,
    "dataset": lambda v: str(v) or None,
    "source": str,
    "schedule": str,
    "eta": float,
    "offset": float,
    "total_iters": int,
    "eval_every": int,
    "seeds": _parse_int_list,
    "tau": float,
    "delta": float,
    "out_dir": str,
    "timing": str,
    "center_data": _parse_bool,
    "threads": int,
}


def load_config_file(path) -> dict[str, str]:
    """Parse a flat ``key = value`` config file."""
    values: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise InvalidInputs(f"{path}:{lineno}: expected 'key = value', got {text!r}")
            key, _, value = text.partition("=")
            key = key.strip()
            if key not in _COERCERS:
                raise InvalidInputs(
                    f"{path}:{lineno}: unknown key {key!r} (valid: {', '.join(sorted(_COERCERS))})"
                )
            values[key] = value.strip()
    return values


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge CLI flags over config-file values over defaults."""
    file_values = load_config_file(args.config) if getattr(args, "config", None) else {}
    merged = {}
    for f in fields(ExperimentConfig):
        cli_value = getattr(args, f.name, None)
        try:
            if cli_value is not None:
                # string-valued flags (seeds, heads, ...) still need parsing
                if isinstance(cli_value, str):
                    merged[f.name] = _COERCERS[f.name](cli_value)
                else:
                    merged[f.name] = cli_value
            elif f.name in file_values:
                merged[f.name] = _COERCERS[f.name](file_values[f.name])
        except ValueError as exc:
            raise InvalidInputs(f"bad value for {f.name}: {exc}") from None
    if "out_dir" not in merged:
        merged["out_dir"] = os.environ.get(ENV_OUT_DIR, ".")
    cfg = ExperimentConfig(**merged)
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: ExperimentConfig) -> None:
    if cfg.solver not in SOLVERS:
        raise InvalidInputs(f"unknown solver {cfg.solver!r} (choose from {', '.join(SOLVERS)})")
    if cfg.source not in ("auto", "spec", "replay"):
        raise InvalidInputs(f"unknown source kind {cfg.source!r}")
    if cfg.schedule not in ("constant", "inverse-time", "guaranteed"):
        raise InvalidInputs(f"unknown schedule {cfg.schedule!r}")
    if cfg.timing not in ("none", "wall"):
        raise InvalidInputs(f"unknown timing mode {cfg.timing!r}")
    if not cfg.seeds:
        raise InvalidInputs("need at least one seed")
    if cfg.threads < 1:
        raise InvalidInputs("threads must be >= 1")


# ---------------------------------------------------------------------------
# run orchestration


def _dataset_truth(ds: DataSet, k: int) -> GroundTruth:
    S = (ds.samples.T @ ds.samples) / ds.n
    spec_full = top_k_eigen(S, ds.d)
    return GroundTruth(basis=spec_full.eigenvectors[:k], spectrum=spec_full.eigenvalues, k=k)


def _load_sidecar_truth(meta_path) -> GroundTruth | None:
    if not os.path.exists(meta_path):
        return None
    with open(meta_path) as fh:
        meta = json.load(fh)
    return GroundTruth(
        basis=np.array(meta["basis"], dtype=np.float64),
        spectrum=np.array(meta["spectrum"], dtype=np.float64),
        k=int(meta["k"]),
    )


def run_one(cfg: ExperimentConfig, seed: int) -> ConvergenceTrace:
    """Execute one seeded run described by `cfg` and return its trace."""
    rot, samp, init_seed, inner, pilot, replay = derive_seeds(seed, 6)
    kp = cfg.kprime if cfg.kprime else cfg.k

    model = None
    eval_data = None
    if cfg.dataset:
        ds = load_dataset(cfg.dataset)
        if cfg.center_data:
            ds = center(ds)
        truth = _load_sidecar_truth(str(cfg.dataset) + ".meta.json") or _dataset_truth(ds, cfg.k)
        source = ReplaySource(ds, samp)
    else:
        spec = SpectrumSpec(
            d=cfg.d, k=cfg.k, noise_over_signal=cfg.ratio,
            head_eigenvalues=cfg.heads, rotation_seed=rot,
        )
        model = CovarianceModel.from_spec(spec)
        truth = model.ground_truth()
        kind = cfg.source
        if kind == "auto":
            kind = "replay" if cfg.solver in ("vrpca", "power") else "spec"
        if kind == "spec" and cfg.solver in ("vrpca", "power"):
            raise InvalidInputs(f"solver {cfg.solver!r} needs source = replay")
        if kind == "replay":
            ds = sample_gaussian(model, cfg.n, samp)
            source = ReplaySource(ds, replay)
        else:
            source = GaussianSource(model, samp)

    W0 = np.random.default_rng(init_seed).standard_normal((kp, truth.d))

    if cfg.eta > 0:
        schedule = RateSchedule(kind=cfg.schedule, eta=cfg.eta, offset=cfg.offset)
    elif cfg.schedule == "guaranteed":
        if model is not None:
            pilot_draws = GaussianSource(model, pilot).draw_batch(10000)
            b = float(np.quantile(np.einsum("ij,ij->i", pilot_draws, pilot_draws), 0.999))
            sigma_frob = float(np.linalg.norm(truth.spectrum))
        else:
            b, spectrum, sigma_frob = estimate_bounds(source.data)
        inputs = GuaranteedRateInputs(
            b=b, lambda1=truth.lambda1, lambda_k=truth.lambda_k, k=cfg.k,
            tau=cfg.tau, delta=cfg.delta, sigma_frob=sigma_frob,
        )
        schedule = RateSchedule(kind="guaranteed", eta=guaranteed_learning_rate(inputs))
    else:
        if model is not None:
            pilot_source = GaussianSource(model, pilot)
        else:
            pilot_source = ReplaySource(source.data, pilot)
        eta = pilot_learning_rate(pilot_source, n_pilot=1000)
        schedule = RateSchedule(kind=cfg.schedule, eta=eta, offset=cfg.offset)

    return run_stream(
        cfg.solver, W0, source, schedule, cfg.total_iters, cfg.eval_every, truth,
        seed=inner, tau=cfg.tau, eval_data=eval_data,
        wall_clock=(cfg.timing == "wall"),
    )


def trace_path(cfg: ExperimentConfig, seed: int) -> str:
    return os.path.join(cfg.out_dir, f"{cfg.solver}_seed{seed}.csv")


def run_experiment(cfg: ExperimentConfig) -> list[str]:
    """Run every seed in the config, write trace CSVs, return their paths."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    paths = []
    for seed in cfg.seeds:
        t0 = time.perf_counter()
        trace = run_one(cfg, seed)
        wall = time.perf_counter() - t0
        path = trace_path(cfg, seed)
        write_trace_csv(trace, path)
        paths.append(path)
        final = trace.final_delta() if trace.records else float("nan")
        print(
            f"{cfg.solver} seed={seed} eta={trace.schedule.eta:.6g} "
            f"final_delta={final:.6e} rows={len(trace.records)} -> {path}"
        )
        print(f"  wall {wall:.2f}s", file=sys.stderr)
    return paths


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args: argparse.Namespace) -> int:
    out_dir = os.environ.get(ENV_OUT_DIR, ".")
    out = args.out or os.path.join(out_dir, "dataset.kpca")
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    heads = _parse_float_list(args.heads) if args.heads else None
    rot, samp = derive_seeds(args.seed, 2)
    spec = SpectrumSpec(
        d=args.d, k=args.k, noise_over_signal=args.ratio,
        head_eigenvalues=heads, rotation_seed=rot,
    )
    model = CovarianceModel.from_spec(spec)
    ds = sample_gaussian(model, args.n, samp)
    save_dataset(ds, out, format=args.format)
    truth = model.ground_truth()
    meta = {
        "d": spec.d,
        "k": spec.k,
        "noise_over_signal": spec.noise_over_signal,
        "head_eigenvalues": list(spec.head_eigenvalues),
        "rotation_seed": rot,
        "sample_seed": samp,
        "seed": args.seed,
        "n": args.n,
        "format": args.format,
        "spectrum": [float(v) for v in truth.spectrum],
        "basis": [[float(v) for v in row] for row in truth.basis],
    }
    with open(out + ".meta.json", "w") as fh:
        json.dump(meta, fh)
        fh.write("\n")
    print(f"wrote {ds.n} x {ds.d} samples -> {out} (+ {out}.meta.json)")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    run_experiment(cfg)
    return 0


def _sweep_cell(payload: dict) -> dict:
    cfg = ExperimentConfig(**payload)
    os.makedirs(cfg.out_dir, exist_ok=True)
    finals, slopes, r2s = [], [], []
    for seed in cfg.seeds:
        trace = run_one(cfg, seed)
        path = os.path.join(
            cfg.out_dir,
            f"{cfg.solver}_d{cfg.d}_k{cfg.k}_r{cfg.ratio:g}_seed{seed}.csv",
        )
        write_trace_csv(trace, path)
        finals.append(trace.final_delta())
        slope, r2 = fit_log_slope(trace.iters(), trace.deltas())
        slopes.append(slope)
        r2s.append(r2)
    return {
        "solver": cfg.solver,
        "d": cfg.d,
        "k": cfg.k,
        "kprime": cfg.kprime if cfg.kprime else cfg.k,
        "ratio": cfg.ratio,
        "seeds": len(cfg.seeds),
        "final_delta_median": median(finals),
        "slope_median": median(slopes),
        "r2_median": median(r2s),
    }


SWEEP_HEADER = "solver,d,k,kprime,ratio,seeds,final_delta_median,slope_median,r2_median"


def cmd_sweep(args: argparse.Namespace) -> int:
    # the grid axes are list-valued here, unlike the scalar config fields
    d_arg, k_arg, ratio_arg = args.d, args.k, args.ratio
    args.d = args.k = args.ratio = None
    cfg = build_config(args)
    d_list = _parse_int_list(d_arg) if d_arg else (cfg.d,)
    k_list = _parse_int_list(k_arg) if k_arg else (cfg.k,)
    ratio_list = _parse_float_list(ratio_arg) if ratio_arg else (cfg.ratio,)
    solver_list = tuple(s.strip() for s in (args.solvers or cfg.solver).split(","))
    for s in solver_list:
        if s not in SOLVERS:
            raise InvalidInputs(f"unknown solver {s!r}")

    trace_dir = os.path.join(cfg.out_dir, "traces")
    payloads = []
    for solver, d, k, ratio in product(solver_list, d_list, k_list, ratio_list):
        cell = ExperimentConfig(
            solver=solver, d=d, k=k, kprime=0, ratio=ratio, heads=None,
            n=cfg.n, dataset=None, source=cfg.source, schedule=cfg.schedule,
            eta=cfg.eta, offset=cfg.offset, total_iters=cfg.total_iters,
            eval_every=cfg.eval_every, seeds=cfg.seeds, tau=cfg.tau,
            delta=cfg.delta, out_dir=trace_dir, timing=cfg.timing,
            center_data=cfg.center_data, threads=1,
        )
        payloads.append(cell.__dict__.copy())

    threads = min(cfg.threads, len(payloads))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_sweep_cell, payloads))
    else:
        rows = [_sweep_cell(p) for p in payloads]

    rows.sort(key=lambda r: (r["solver"], r["d"], r["k"], r["ratio"]))
    os.makedirs(cfg.out_dir, exist_ok=True)
    summary = os.path.join(cfg.out_dir, "sweep_summary.csv")
    with open(summary, "w") as fh:
        fh.write(SWEEP_HEADER + "\n")
        for r in rows:
            fh.write(
                f"{r['solver']},{r['d']},{r['k']},{r['kprime']},{float(r['ratio'])!r},"
                f"{r['seeds']},{float(r['final_delta_median'])!r},"
                f"{float(r['slope_median'])!r},{float(r['r2_median'])!r}\n"
            )
    print(f"wrote {len(rows)} summary rows -> {summary}")
    return 0


def _montecarlo_suite(trials: int, seed) -> list[CheckReport]:
    reports = []
    for i, target in enumerate((0.1, 0.3, 0.5)):
        rng = np.random.default_rng(derive_seeds(seed, 3)[i])
        basis = orthonormalize_rows(rng.standard_normal((2, 10)))
        truth = GroundTruth(
            basis=basis, spectrum=np.concatenate([np.ones(2), np.zeros(8)]), k=2
        )
        W = basis_with_distance(truth, 2, target, rng)
        rep = check_expected_gain(W, truth, eta=0.01, trials=trials, seed=rng.integers(2**63))
        reports.append(
            CheckReport(
                f"expected-gain-delta{target:g}", rep.passed, rep.worst_violation,
                rep.trials, rep.details,
            )
        )
    return reports


def _envelope_suite(runs: int, seed, total_iters: int, eval_every: int) -> list[CheckReport]:
    reports = []
    pooled_within = 0
    pooled_total = 0
    for i, child in enumerate(derive_seeds(seed, runs)):
        trace, inputs = envelope_experiment(
            child, total_iters=total_iters, eval_every=eval_every
        )
        rep = check_convergence_envelope(trace, inputs)
        within, total, _ = envelope_counts(trace, inputs)
        pooled_within += within
        pooled_total += total
        reports.append(
            CheckReport(f"convergence-envelope-run{i}", rep.passed, rep.worst_violation,
                        rep.trials, rep.details)
        )
    frac = pooled_within / pooled_total if pooled_total else 1.0
    reports.append(
        CheckReport(
            "convergence-envelope-aggregate", frac >= 0.9, max(0.0, 0.9 - frac),
            pooled_total, f"pooled within={pooled_within}/{pooled_total}",
        )
    )
    return reports


def cmd_check(args: argparse.Namespace) -> int:
    reports: list[CheckReport] = []
    if args.suite in ("exact", "all"):
        reports.extend(run_exact_suite(trials=args.trials or 1000, seed=args.seed))
    if args.suite in ("montecarlo", "all"):
        reports.extend(_montecarlo_suite(trials=args.trials or 100000, seed=args.seed))
    if args.suite in ("envelope", "all"):
        reports.extend(
            _envelope_suite(args.runs, args.seed, args.total_iters, args.eval_every)
        )

    text = format_report(reports)
    print(text, end="")
    out = args.out
    if out is None:
        out_dir = os.environ.get(ENV_OUT_DIR, ".")
        out = os.path.join(out_dir, f"check_report_{args.suite}.txt")
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    with open(out, "w") as fh:
        fh.write(text)
    failed = [r for r in reports if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(r.name for r in failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_plotscript(args: argparse.Namespace) -> int:
    xcol = "1" if args.x == "iter" else "2"
    xlabel = "iteration" if args.x == "iter" else "samples seen"
    lines = [
        "# gnuplot script generated by kpca plotscript",
        'set datafile separator ","',
        f'set xlabel "{xlabel}"',
        'set ylabel "ln(delta)"',
        "set key outside",
    ]
    plots = []
    for path in args.traces:
        title = os.path.basename(path)
        if title.endswith(".csv"):
            title = title[:-4]
        title = title.replace('"', "'")
        # ln(delta) computed from the delta column so zero rows drop out cleanly
        plots.append(f'"{path}" every ::1 using {xcol}:(log($3)) with lines title "{title}"')
    lines.append("plot \\")
    lines.append(", \\\n".join("    " + p for p in plots))
    out = args.out
    with open(out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_config_flags(p: argparse.ArgumentParser, include_solver=True) -> None:
    p.add_argument("--config", help="flat key = value config file")
    if include_solver:
        p.add_argument("--solver", help=f"one of {', '.join(SOLVERS)}")
    p.add_argument("--kprime", type=int, help="iterate rows k' (default k)")
    p.add_argument("--heads", help="comma-separated head eigenvalues (default ones)")
    p.add_argument("--n", type=int, help="finite dataset size for replay sources")
    p.add_argument("--dataset", help="path to a dataset file (binary or .csv)")
    p.add_argument("--source", choices=("auto", "spec", "replay"), help="sample source kind")
    p.add_argument("--schedule", choices=("constant", "inverse-time", "guaranteed"))
    p.add_argument("--eta", type=float, help="step size (default pilot 1/(10 lambda1))")
    p.add_argument("--offset", type=float, help="inverse-time schedule offset")
    p.add_argument("--total-iters", type=int, dest="total_iters")
    p.add_argument("--eval-every", type=int, dest="eval_every")
    p.add_argument("--seeds", help="comma-separated run seeds")
    p.add_argument("--tau", type=float, help="basin margin parameter")
    p.add_argument("--delta", type=float, help="failure probability for the guaranteed rate")
    p.add_argument("--out-dir", dest="out_dir", help=f"output directory (default ${ENV_OUT_DIR} or .)")
    p.add_argument("--timing", choices=("none", "wall"),
                   help="elapsed_ns column source; wall breaks byte reproducibility")
    p.add_argument("--center", dest="center_data", action=argparse.BooleanOptionalAction,
                   default=None, help="center loaded datasets (default on)")
    p.add_argument("--threads", type=int, help="worker pool size for sweeps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kpca",
        description="Streaming k-PCA benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--ratio", type=float, default=0.0, help="noise-over-signal mass ratio")
    p.add_argument("--heads", help="comma-separated head eigenvalues")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("binary", "csv"), default="binary")
    p.add_argument("--out", help="output path (default $KPCA_OUT_DIR/dataset.kpca)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="run a solver, one trace CSV per seed")
    p.add_argument("--d", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--ratio", type=float)
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="cartesian sweep with a summary CSV")
    p.add_argument("--d", help="comma-separated dimensions")
    p.add_argument("--k", help="comma-separated subspace ranks")
    p.add_argument("--ratio", help="comma-separated noise-over-signal ratios")
    p.add_argument("--solvers", help="comma-separated solver names")
    _add_config_flags(p, include_solver=False)
    p.set_defaults(func=cmd_sweep, solver=None)

    p = sub.add_parser("check", help="run validator suites")
    p.add_argument("--suite", choices=("exact", "montecarlo", "envelope", "all"),
                   required=True)
    p.add_argument("--trials", type=int, help="instances (exact) or samples (montecarlo)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=int, default=5, help="envelope runs")
    p.add_argument("--total-iters", type=int, dest="total_iters", default=2000)
    p.add_argument("--eval-every", type=int, dest="eval_every", default=50)
    p.add_argument("--out", help="report path")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("plotscript", help="emit a gnuplot script for trace CSVs")
    p.add_argument("traces", nargs="+", help="trace CSV paths")
    p.add_argument("--out", default="plot.gp")
    p.add_argument("--x", choices=("iter", "samples"), default="iter")
    p.set_defaults(func=cmd_plotscript)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KPCAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
