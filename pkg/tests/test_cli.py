from __future__ import annotations

import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from kpca.cli import (
    SWEEP_HEADER,
    TRACE_HEADER,
    ExperimentConfig,
    build_config,
    build_parser,
    fit_log_slope,
    load_config_file,
    main,
    read_trace_csv,
    write_trace_csv,
)
from kpca.data import load_dataset
from kpca.errors import FormatError, InvalidInputs
from kpca.solvers import ConvergenceTrace, RateSchedule, TraceRecord


def make_trace(records):
    t = ConvergenceTrace(
        solver="krasulina", schedule=RateSchedule(kind="constant", eta=0.05), seed=0, tau=0.5
    )
    t.records = records
    return t


def rec(iter_no, delta, elapsed=0):
    return TraceRecord(
        iter=iter_no,
        samples_seen=iter_no,
        delta=delta,
        ln_delta=math.log(delta) if delta > 0 else float("-inf"),
        recon_error=delta * 1.5,
        residual_sq=delta * 0.5,
        in_basin=delta <= 0.5,
        elapsed_ns=elapsed,
    )


class TestTraceCsv:
    def test_header_is_frozen(self, tmp_path):
        path = tmp_path / "t.csv"
        write_trace_csv(make_trace([rec(1, 0.5)]), path)
        first = path.read_text().splitlines()[0]
        assert (
            first
            == "iter,samples_seen,delta,ln_delta,recon_error,residual_sq,in_basin,elapsed_ns"
        )
        assert first == TRACE_HEADER

    def test_round_trip_lossless(self, tmp_path):
        records = [rec(10, 0.123456789012345678), rec(20, 1e-300), rec(30, 0.0)]
        path = tmp_path / "t.csv"
        write_trace_csv(make_trace(records), path)
        back = read_trace_csv(path)
        assert back == records

    def test_zero_delta_writes_minus_inf(self, tmp_path):
        path = tmp_path / "t.csv"
        write_trace_csv(make_trace([rec(5, 0.0)]), path)
        line = path.read_text().splitlines()[1]
        assert ",-inf," in line

    def test_basin_flag_written_as_int(self, tmp_path):
        path = tmp_path / "t.csv"
        write_trace_csv(make_trace([rec(1, 0.2), rec(2, 0.9)]), path)
        lines = path.read_text().splitlines()[1:]
        assert lines[0].split(",")[6] == "1"
        assert lines[1].split(",")[6] == "0"

    def test_rejects_foreign_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(FormatError, match="header"):
            read_trace_csv(path)

    def test_rejects_short_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(TRACE_HEADER + "\n1,2,3\n")
        with pytest.raises(FormatError, match="8 columns"):
            read_trace_csv(path)


class TestFitLogSlope:
    def test_exact_exponential(self):
        t = np.arange(10, 1010, 10)
        deltas = 3.0 * np.exp(-0.004 * t)
        slope, r2 = fit_log_slope(t, deltas)
        assert slope == pytest.approx(-0.004, rel=1e-9)
        assert r2 == pytest.approx(1.0, abs=1e-12)

    def test_floor_is_cut_from_fit(self):
        # decay to a hard floor: the fit must use only the decaying regime
        t = np.arange(10, 2010, 10)
        deltas = np.maximum(np.exp(-0.02 * t), 1e-9)
        slope, r2 = fit_log_slope(t, deltas)
        assert slope == pytest.approx(-0.02, rel=1e-3)
        assert r2 > 0.999

    def test_zero_rows_dropped(self):
        slope, r2 = fit_log_slope([1, 2, 3, 4], [0.5, 0.0, 0.25, 0.125])
        assert np.isfinite(slope)

    def test_too_few_points(self):
        slope, r2 = fit_log_slope([1], [0.5])
        assert math.isnan(slope) and math.isnan(r2)
        slope, r2 = fit_log_slope([1, 2], [0.0, 0.0])
        assert math.isnan(slope)


class TestConfig:
    def test_file_parsing(self, tmp_path):
        cfg_file = tmp_path / "exp.cfg"
        cfg_file.write_text(
            "# experiment\n"
            "solver = oja\n"
            "d = 30\n"
            "seeds = 1,2,3\n"
            "eta = 0.02\n"
            "center_data = false\n"
            "\n"
        )
        values = load_config_file(cfg_file)
        assert values == {
            "solver": "oja",
            "d": "30",
            "seeds": "1,2,3",
            "eta": "0.02",
            "center_data": "false",
        }

    def test_unknown_key_rejected(self, tmp_path):
        cfg_file = tmp_path / "bad.cfg"
        cfg_file.write_text("stepsize = 0.1\n")
        with pytest.raises(InvalidInputs, match="unknown key"):
            load_config_file(cfg_file)

    def test_missing_equals_rejected(self, tmp_path):
        cfg_file = tmp_path / "bad.cfg"
        cfg_file.write_text("solver oja\n")
        with pytest.raises(InvalidInputs, match="key = value"):
            load_config_file(cfg_file)

    def test_flag_overrides_file(self, tmp_path):
        cfg_file = tmp_path / "exp.cfg"
        cfg_file.write_text("solver = oja\neta = 0.01\nseeds = 4,5\n")
        args = build_parser().parse_args(
            ["run", "--config", str(cfg_file), "--eta", "0.07"]
        )
        cfg = build_config(args)
        assert cfg.solver == "oja"
        assert cfg.eta == 0.07
        assert cfg.seeds == (4, 5)

    def test_env_var_sets_default_out_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("KPCA_OUT_DIR", str(tmp_path / "results"))
        args = build_parser().parse_args(["run"])
        cfg = build_config(args)
        assert cfg.out_dir == str(tmp_path / "results")

    def test_explicit_out_dir_beats_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("KPCA_OUT_DIR", str(tmp_path / "env"))
        args = build_parser().parse_args(["run", "--out-dir", str(tmp_path / "flag")])
        cfg = build_config(args)
        assert cfg.out_dir == str(tmp_path / "flag")

    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.solver == "krasulina"
        assert cfg.timing == "none"
        assert cfg.center_data is True
        assert cfg.seeds == (0,)

    def test_validation(self):
        args = build_parser().parse_args(["run", "--solver", "sgd"])
        with pytest.raises(InvalidInputs, match="unknown solver"):
            build_config(args)


class TestGen:
    def test_writes_dataset_and_sidecar(self, tmp_path):
        out = str(tmp_path / "data.kpca")
        code = main(
            ["gen", "--d", "6", "--k", "2", "--n", "40", "--seed", "3", "--out", out]
        )
        assert code == 0
        ds = load_dataset(out)
        assert ds.samples.shape == (40, 6)
        meta = json.loads((tmp_path / "data.kpca.meta.json").read_text())
        assert meta["d"] == 6 and meta["k"] == 2 and meta["n"] == 40
        assert len(meta["spectrum"]) == 6
        assert len(meta["basis"]) == 2 and len(meta["basis"][0]) == 6

    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = str(tmp_path / "a.kpca"), str(tmp_path / "b.kpca")
        argv = ["gen", "--d", "5", "--k", "1", "--n", "30", "--seed", "9"]
        assert main(argv + ["--out", a]) == 0
        assert main(argv + ["--out", b]) == 0
        assert open(a, "rb").read() == open(b, "rb").read()
        assert open(a + ".meta.json").read() == open(b + ".meta.json").read()

    def test_csv_format(self, tmp_path):
        out = str(tmp_path / "data.csv")
        code = main(
            ["gen", "--d", "4", "--k", "2", "--n", "10", "--format", "csv", "--out", out]
        )
        assert code == 0
        ds = load_dataset(out)
        assert ds.samples.shape == (10, 4)

    def test_different_seeds_differ(self, tmp_path):
        a, b = str(tmp_path / "a.kpca"), str(tmp_path / "b.kpca")
        main(["gen", "--d", "4", "--k", "1", "--n", "10", "--seed", "1", "--out", a])
        main(["gen", "--d", "4", "--k", "1", "--n", "10", "--seed", "2", "--out", b])
        assert open(a, "rb").read() != open(b, "rb").read()


class TestRun:
    def test_online_run_writes_trace(self, tmp_path, capsys):
        out = tmp_path / "res"
        code = main(
            [
                "run",
                "--solver", "krasulina",
                "--d", "20", "--k", "3",
                "--eta", "0.05",
                "--total-iters", "200",
                "--eval-every", "50",
                "--seeds", "1",
                "--out-dir", str(out),
            ]
        )
        assert code == 0
        path = out / "krasulina_seed1.csv"
        lines = path.read_text().splitlines()
        assert lines[0] == TRACE_HEADER
        assert len(lines) == 5
        records = read_trace_csv(path)
        assert [r.iter for r in records] == [50, 100, 150, 200]
        assert all(r.elapsed_ns == 0 for r in records)
        assert "final_delta" in capsys.readouterr().out

    def test_rerun_is_byte_identical(self, tmp_path):
        argv = [
            "run", "--solver", "krasulina", "--d", "15", "--k", "2",
            "--eta", "0.05", "--total-iters", "100", "--eval-every", "25",
            "--seeds", "7",
        ]
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(argv + ["--out-dir", str(out_a)]) == 0
        assert main(argv + ["--out-dir", str(out_b)]) == 0
        a = (out_a / "krasulina_seed7.csv").read_bytes()
        b = (out_b / "krasulina_seed7.csv").read_bytes()
        assert a == b

    def test_wall_timing_populates_elapsed(self, tmp_path):
        out = tmp_path / "res"
        code = main(
            [
                "run", "--solver", "krasulina", "--d", "10", "--k", "2",
                "--eta", "0.05", "--total-iters", "100", "--eval-every", "50",
                "--seeds", "0", "--timing", "wall", "--out-dir", str(out),
            ]
        )
        assert code == 0
        records = read_trace_csv(out / "krasulina_seed0.csv")
        assert records[-1].elapsed_ns > 0

    def test_epoch_solver_on_generated_dataset(self, tmp_path):
        data_path = str(tmp_path / "d.kpca")
        assert main(["gen", "--d", "12", "--k", "2", "--n", "300", "--out", data_path]) == 0
        out = tmp_path / "res"
        code = main(
            [
                "run", "--solver", "vrpca", "--k", "2",
                "--dataset", data_path,
                "--eta", "0.0005",
                "--total-iters", "300", "--eval-every", "100",
                "--seeds", "2", "--out-dir", str(out),
            ]
        )
        assert code == 0
        records = read_trace_csv(out / "vrpca_seed2.csv")
        # anchor pass precedes the first checkpoint
        assert records[0].samples_seen > 300
        assert [r.iter for r in records] == [100, 200, 300]

    def test_pilot_default_step_size(self, tmp_path, capsys):
        out = tmp_path / "res"
        code = main(
            [
                "run", "--solver", "oja", "--d", "10", "--k", "2",
                "--total-iters", "100", "--eval-every", "50",
                "--seeds", "0", "--out-dir", str(out),
            ]
        )
        assert code == 0
        text = capsys.readouterr().out
        # pilot rate for unit heads is about 1/(10 * lambda1) ~ 0.1
        assert "eta=0.0" in text or "eta=0.1" in text

    def test_guaranteed_schedule_synthetic(self, tmp_path):
        out = tmp_path / "res"
        code = main(
            [
                "run", "--solver", "krasulina", "--d", "10", "--k", "2",
                "--schedule", "guaranteed",
                "--total-iters", "100", "--eval-every", "50",
                "--seeds", "0", "--out-dir", str(out),
            ]
        )
        assert code == 0
        assert (out / "krasulina_seed0.csv").exists()

    def test_missing_dataset_exits_one(self, tmp_path, capsys):
        code = main(
            [
                "run", "--solver", "krasulina", "--k", "2",
                "--dataset", str(tmp_path / "nope.kpca"),
                "--seeds", "0", "--out-dir", str(tmp_path),
            ]
        )
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_bad_config_exits_one(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("solver = sgd\n")
        code = main(["run", "--config", str(cfg), "--out-dir", str(tmp_path)])
        assert code == 1
        assert "unknown solver" in capsys.readouterr().err

    def test_spec_source_rejected_for_epoch_solver(self, tmp_path, capsys):
        code = main(
            [
                "run", "--solver", "power", "--d", "8", "--k", "2",
                "--source", "spec", "--seeds", "0", "--out-dir", str(tmp_path),
            ]
        )
        assert code == 1
        assert "replay" in capsys.readouterr().err


class TestSweep:
    def test_summary_and_traces(self, tmp_path):
        out = tmp_path / "sweep"
        code = main(
            [
                "sweep",
                "--solvers", "krasulina,oja",
                "--d", "10",
                "--k", "2",
                "--ratio", "0,0.1",
                "--eta", "0.05",
                "--total-iters", "100",
                "--eval-every", "25",
                "--seeds", "0",
                "--out-dir", str(out),
            ]
        )
        assert code == 0
        summary = (out / "sweep_summary.csv").read_text().splitlines()
        assert summary[0] == SWEEP_HEADER
        assert len(summary) == 5
        # sorted by solver, then ratio
        assert [line.split(",")[0] for line in summary[1:]] == [
            "krasulina", "krasulina", "oja", "oja",
        ]
        traces = sorted(p.name for p in (out / "traces").iterdir())
        assert traces == [
            "krasulina_d10_k2_r0.1_seed0.csv",
            "krasulina_d10_k2_r0_seed0.csv",
            "oja_d10_k2_r0.1_seed0.csv",
            "oja_d10_k2_r0_seed0.csv",
        ]

    def test_threads_give_same_summary(self, tmp_path):
        argv = [
            "sweep", "--solvers", "krasulina", "--d", "8,12", "--k", "2",
            "--eta", "0.05", "--total-iters", "60", "--eval-every", "20",
            "--seeds", "0",
        ]
        out1, out2 = tmp_path / "serial", tmp_path / "pool"
        assert main(argv + ["--out-dir", str(out1), "--threads", "1"]) == 0
        assert main(argv + ["--out-dir", str(out2), "--threads", "2"]) == 0
        assert (out1 / "sweep_summary.csv").read_text() == (
            out2 / "sweep_summary.csv"
        ).read_text()


class TestCheckCommand:
    def test_exact_suite_passes(self, tmp_path, capsys):
        report = tmp_path / "report.txt"
        code = main(
            ["check", "--suite", "exact", "--trials", "50", "--out", str(report)]
        )
        assert code == 0
        lines = report.read_text().splitlines()
        assert len(lines) == 4
        assert all(" pass " in line for line in lines)
        assert "gram-identity" in capsys.readouterr().out

    def test_report_defaults_to_env_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("KPCA_OUT_DIR", str(tmp_path))
        code = main(["check", "--suite", "exact", "--trials", "20"])
        assert code == 0
        assert (tmp_path / "check_report_exact.txt").exists()

    def test_montecarlo_insufficient_trials_exits_one(self, tmp_path, capsys):
        code = main(
            [
                "check", "--suite", "montecarlo", "--trials", "100",
                "--out", str(tmp_path / "r.txt"),
            ]
        )
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_envelope_suite_small(self, tmp_path):
        report = tmp_path / "env.txt"
        code = main(
            [
                "check", "--suite", "envelope", "--runs", "2",
                "--total-iters", "400", "--eval-every", "100",
                "--out", str(report),
            ]
        )
        text = report.read_text()
        assert "convergence-envelope-aggregate" in text
        assert code in (0, 1)

    def test_unknown_suite_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["check", "--suite", "quantum"])
        assert exc.value.code == 2

    def test_missing_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2


class TestPlotScript:
    def test_emits_gnuplot(self, tmp_path):
        out = tmp_path / "plot.gp"
        code = main(["plotscript", "a.csv", "b.csv", "--out", str(out)])
        assert code == 0
        text = out.read_text()
        assert 'set datafile separator ","' in text
        assert "using 1:(log($3))" in text
        assert "every ::1" in text
        assert '"a.csv"' in text and '"b.csv"' in text

    def test_samples_axis(self, tmp_path):
        out = tmp_path / "plot.gp"
        main(["plotscript", "a.csv", "--x", "samples", "--out", str(out)])
        text = out.read_text()
        assert "using 2:(log($3))" in text
        assert "samples seen" in text


class TestConsoleScript:
    def test_installed_entry_point(self, tmp_path):
        out = str(tmp_path / "cli.kpca")
        proc = subprocess.run(
            [sys.executable, "-m", "kpca.cli", "gen", "--d", "4", "--k", "1",
             "--n", "8", "--out", out],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert os.path.exists(out)

    def test_usage_error_exit_code(self):
        proc = subprocess.run(
            [sys.executable, "-m", "kpca.cli", "frobnicate"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 2
