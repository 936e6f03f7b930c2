import csv
import io
import json

import numpy as np
import pytest

from vrgrad import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_rate_degenerate_lsvrg(capsys):
    code, out, _ = run(capsys, "rate", "--set", "method=lsvrg", "--set", "sampling=lipschitz")
    assert code == 0
    rep = json.loads(out)
    cert = rep["certificate"]
    assert cert["rho"] == 1.0
    assert cert["lambda"] == pytest.approx(1 / rep["problem"]["mu"], rel=1e-12)
    assert all(g == 0 for g in cert["gamma_hat"])


def test_rate_beyond_lambda_max(capsys):
    code, _, err = run(capsys, "rate", "--set", "method=saga", "--set", "lambda=1.5max", "--set", "problem=synthetic_lipschitz")
    assert code == 2 and "lambda_max" in err


def test_rate_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        assert cli.main(["rate", "--set", "method=qsaga", "--set", "q=3", "--set", "n=40", "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_rate_reports_corollary_and_literature(capsys):
    code, out, _ = run(capsys, "rate", "--set", "problem=synthetic_lipschitz", "--set", "lambda=star")
    rep = json.loads(out)
    assert code == 0 and rep["lambda_source"]
    assert rep["corollary"]["lambda_max"] > rep["literature"]["lambda_max"]
    assert rep["certificate"]["rho"] >= rep["corollary"]["rho_star"]


def test_tune_dual_limited_regime(tmp_path, capsys):
    curve = tmp_path / "curve.csv"
    code, out, _ = run(
        capsys, "tune", "--set", "problem=synthetic_lipschitz", "--set", "n=10000", "--set", "kappa=2",
        "--set", "curve=true", "--set", f"curve_out={curve}",
    )
    assert code == 0
    rep = json.loads(out)
    assert rep["lsvrg"]["full_table"]["eta_star"] > 10 / 10000
    rows = read_csv(curve.read_text())
    assert len(rows) == 50 and "eta" in rows[0]


def test_tune_curve_minimum_near_marker(capsys, tmp_path):
    curve = tmp_path / "c.csv"
    code, out, _ = run(
        capsys, "tune", "--set", "problem=synthetic_lipschitz", "--set", "n=50", "--set", "kappa=100",
        "--set", "curve=true", "--set", f"curve_out={curve}",
    )
    rep = json.loads(out)
    rows = read_csv(curve.read_text())
    best = min(float(r["lsvrg_full_table"]) for r in rows)
    assert rep["lsvrg"]["full_table"]["theorem_complexity"] <= 1.10 * best


def test_tune_single_function(capsys):
    code, out, _ = run(capsys, "tune", "--set", "problem=synthetic_lipschitz", "--set", "n=1", "--set", "kappa=1")
    assert code == 0
    rep = json.loads(out)
    for block in (rep["lsvrg"]["full_table"], rep["qsaga_ilsvrg"]):
        assert block["lambda_star"] == pytest.approx(1 / block["nu"])


def test_solve_zero_iterations(capsys):
    code, out, _ = run(capsys, "solve", "--set", "iterations=0")
    rows = read_csv(out)
    assert code == 0 and len(rows) == 1
    assert list(rows[0]) == ["k", "grad_evals", "dist2", "lyapunov", "objective"]


def test_solve_many_seeds_percentiles(capsys):
    code, out, _ = run(capsys, "solve", "--set", "iterations=30", "--seeds", "20")
    rows = read_csv(out)
    assert code == 0 and len(rows) == 31
    for name in ("dist2", "lyapunov", "objective"):
        for r in rows:
            assert float(r[f"{name}_p05"]) <= float(r[f"{name}_p95"])


def test_solve_deterministic(capsys):
    args = ("solve", "--set", "method=ilsvrg", "--set", "iterations=50", "--seeds", "3")
    assert run(capsys, *args)[1] == run(capsys, *args)[1]


def test_solve_divergence_exit(capsys):
    code, _, err = run(capsys, "solve", "--set", "lambda=1000max", "--set", "iterations=5000")
    assert code == 3 and "iteration" in err


def test_bad_config(tmp_path, capsys):
    assert run(capsys, "rate", "--set", "method=nope")[0] == 4
    assert run(capsys, "rate", "--set", "lambda=-1")[0] == 4
    assert run(capsys, "rate", "--set", "colour=blue")[0] == 4
    assert run(capsys, "rate", "--config", str(tmp_path / "missing.cfg"))[0] == 4
    bad = tmp_path / "bad.cfg"
    bad.write_text("n 5\n")
    assert run(capsys, "rate", "--config", str(bad))[0] == 4
    assert run(capsys, "solve", "--threads", "0")[0] == 4


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nmethod = lsvrg\nsampling = lipschitz  # inline\n")
    code, out, _ = run(capsys, "rate", "--config", str(cfg))
    assert code == 0 and json.loads(out)["certificate"]["rho"] == 1.0


def test_threads_env(monkeypatch, capsys):
    args = ("solve", "--set", "iterations=20", "--seeds", "4")
    serial = run(capsys, *args)[1]
    monkeypatch.setenv("VRGRAD_THREADS", "2")
    assert cli.resolve_threads(None) == 2
    assert run(capsys, *args)[1] == serial
    monkeypatch.setenv("VRGRAD_THREADS", "x")
    assert run(capsys, *args)[0] == 4


def test_reproduce_fig1(tmp_path, capsys):
    assert cli.main(["reproduce", "fig1", "--out", str(tmp_path)]) == 0
    rows = read_csv((tmp_path / "fig1.csv").read_text())
    assert len(rows) == 2 * 5 * 5
    assert all(0 <= float(r["rel_error"]) <= 0.10 for r in rows)


def test_reproduce_fig2(tmp_path, capsys):
    assert cli.main(["reproduce", "fig2", "--out", str(tmp_path)]) == 0
    rows = read_csv((tmp_path / "fig2_markers.csv").read_text())
    assert len(rows) == 6 and all(float(r["ratio"]) <= 1.10 for r in rows)


def test_reproduce_fig3_lsvrg_band_and_manifest(tmp_path, capsys):
    out = tmp_path / "a"
    assert cli.main(["reproduce", "fig3_lsvrg", "--seeds", "100", "--set", "lambdas=opt", "--out", str(out)]) == 0
    rows = read_csv((out / "fig3_lsvrg_lambda-opt.csv").read_text())
    assert float(rows[1]["dist2_p95"]) - float(rows[1]["dist2_p05"]) == 0
    rates = json.loads((out / "fig3_lsvrg_rates.json").read_text())
    assert rates["runs"]["opt"]["rho"] == 1.0
    again = tmp_path / "b"
    assert cli.main(["reproduce", "--config", str(out / "manifest.txt"), "--out", str(again)]) == 0
    for f in out.iterdir():
        assert (again / f.name).read_bytes() == f.read_bytes()


def test_reproduce_libsvm_requires_path(tmp_path, capsys):
    assert run(capsys, "reproduce", "libsvm_lasso", "--out", str(tmp_path))[0] == 4


def test_reproduce_libsvm_small(tmp_path, capsys):
    rng = np.random.default_rng(3)
    A = rng.standard_normal((40, 8))
    A[:, 5] = 0  # never-present feature gets dropped
    b = A @ rng.standard_normal(8) + 0.1 * rng.standard_normal(40)
    lines = []
    for row, label in zip(A, b):
        feats = " ".join(f"{j + 1}:{float(v)!r}" for j, v in enumerate(row) if v != 0)
        lines.append(f"{float(label)!r} {feats}")
    path = tmp_path / "tiny.svm"
    path.write_text("\n".join(lines) + "\n")
    out = tmp_path / "out"
    code = cli.main(
        ["reproduce", "libsvm_lasso", "--set", f"libsvm_path={path}", "--set", "epochs=3", "--seeds", "2", "--out", str(out)]
    )
    assert code == 0
    summary = json.loads((out / "libsvm_lasso_summary.json").read_text())["tiny"]
    assert summary["problem"]["dim"] == 7
    assert len(summary["runs"]) == len(cli.LASSO_RUNS)
    for run_info in summary["runs"].values():
        rows = read_csv((out / run_info["file"]).read_text())
        assert int(rows[-1]["k"]) == 3 * 40
        assert float(rows[-1]["objective_mean"]) < float(rows[0]["objective_mean"])
