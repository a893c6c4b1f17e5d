import hashlib
import json
import os

import numpy as np
import pytest

from tgslope import cli, io
from tgslope.errors import DivergedError


def _fixture(data_dir):
    return os.path.join(data_dir, "fixture_x.csv"), os.path.join(data_dir, "fixture_y.t3d")


def _digest(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def test_fit_fixture(tmp_path, data_dir):
    x, y = _fixture(data_dir)
    before = (_digest(x), _digest(y))
    out = tmp_path / "fit"
    code = cli.main(["fit", "--x", x, "--y", y, "--k", "3", "--q", "0.1", "--sigma", "1", "--out", str(out)])
    assert code == 0
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["converged"] is True and diag["discovery"] == 5
    for key in ("iterations", "objective_trace", "rank_deficient", "final_step", "sigma"):
        assert key in diag
    b_hat = io.read_t3d(out / "b_hat.t3d")
    b_star = io.read_t3d(os.path.join(data_dir, "fixture_b_star.t3d"))
    support = [int(v) for v in open(os.path.join(data_dir, "fixture_support.txt")).read().split()]
    assert np.flatnonzero(np.linalg.norm(b_hat.reshape(-1, b_hat.shape[2], order="F"), axis=0)).tolist() == support
    g = io.read_matrix_csv(out / "g.csv")
    h = io.read_matrix_csv(out / "h.csv")
    assert g.shape == (40, 3) and h.shape == (9, 3)
    assert np.abs(h.T @ h - np.eye(3)).max() <= 1e-8
    assert (out / "g.csv").read_text().splitlines()[-1].startswith("# seed=0, version=")
    # inputs are never modified
    assert (_digest(x), _digest(y)) == before
    assert b_hat.shape == b_star.shape


def test_fit_sigma_auto_records_estimate(tmp_path, data_dir):
    x, y = _fixture(data_dir)
    assert cli.main(["fit", "--x", x, "--y", y, "--k", "3", "--out", str(tmp_path)]) == 0
    diag = json.loads((tmp_path / "diagnostics.json").read_text())
    assert diag["sigma"] >= 0 and "elapsed" not in diag


@pytest.mark.parametrize("method", ["tbmm", "tglasso"])
def test_fit_other_methods(tmp_path, data_dir, method):
    x, y = _fixture(data_dir)
    assert cli.main(["fit", "--x", x, "--y", y, "--k", "3", "--sigma", "1", "--method", method, "--out", str(tmp_path)]) == 0
    diag = json.loads((tmp_path / "diagnostics.json").read_text())
    assert diag["method"] == method and diag["converged"]


def test_fit_tlrr_ignores_q(tmp_path, data_dir, capsys):
    x, y = _fixture(data_dir)
    code = cli.main(["fit", "--x", x, "--y", y, "--k", "3", "--method", "tlrr", "--q", "0.2", "--out", str(tmp_path)])
    assert code == 0
    assert "--q" in capsys.readouterr().err
    assert json.loads((tmp_path / "diagnostics.json").read_text())["discovery"] == 40


def test_fit_lambda_file(tmp_path, data_dir):
    x, y = _fixture(data_dir)
    lam = tmp_path / "lam.txt"
    io.write_lambda(lam, np.linspace(3.0, 1.0, 40))
    assert cli.main(["fit", "--x", x, "--y", y, "--k", "3", "--lambda-file", str(lam), "--out", str(tmp_path / "o")]) == 0
    lam.write_text("1.0\n2.0\n")
    assert cli.main(["fit", "--x", x, "--y", y, "--k", "3", "--lambda-file", str(lam), "--out", str(tmp_path / "o")]) == 3


def test_fit_argument_errors(tmp_path, data_dir, capsys):
    x, y = _fixture(data_dir)
    assert cli.main(["fit", "--x", x, "--y", y, "--out", str(tmp_path)]) == 2
    assert "--k" in capsys.readouterr().err
    assert cli.main(["fit", "--x", x, "--y", y, "--k", "0", "--out", str(tmp_path)]) == 2
    assert cli.main(["fit", "--x", x, "--y", y, "--k", "3", "--method", "lasso", "--out", str(tmp_path)]) == 2
    assert cli.main(["fit", "--x", x, "--y", y, "--k", "3", "--sigma", "-1", "--out", str(tmp_path)]) == 2
    assert cli.main([]) == 2


def test_fit_io_errors(tmp_path, data_dir):
    x, y = _fixture(data_dir)
    assert cli.main(["fit", "--x", str(tmp_path / "nope.csv"), "--y", y, "--k", "3", "--out", str(tmp_path)]) == 3
    bad = tmp_path / "bad.t3d"
    bad.write_bytes(b"NOTATENSOR")
    assert cli.main(["fit", "--x", x, "--y", str(bad), "--k", "3", "--out", str(tmp_path)]) == 3


def test_fit_numerical_failure_exit_code(tmp_path, data_dir, monkeypatch):
    x, y = _fixture(data_dir)

    def boom(*args, **kwargs):
        raise DivergedError("objective became non-finite")

    monkeypatch.setattr(cli, "solve_pdcae", boom)
    assert cli.main(["fit", "--x", x, "--y", y, "--k", "3", "--sigma", "1", "--out", str(tmp_path)]) == 4


def test_fit_config_file(tmp_path, data_dir):
    x, y = _fixture(data_dir)
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"x": x, "y": y, "k": 3, "q": 0.1, "sigma": 1.0, "out": str(tmp_path / "o")}))
    assert cli.main(["fit", "--config", str(cfg)]) == 0
    assert json.loads((tmp_path / "o" / "diagnostics.json").read_text())["discovery"] == 5
    cfg.write_text(json.dumps({"x": x, "y": y, "k": 3, "gamma": 2}))
    assert cli.main(["fit", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def _simulate(out, *extra):
    return cli.main(["simulate", "--preset", "fdr", "--scale", "desk", "--reps", "1", "--seed", "7", "--out", str(out), *extra])


def test_simulate_byte_identical(tmp_path):
    out = tmp_path / "a"
    assert _simulate(out) == 0
    first = {name: (out / name).read_bytes() for name in ("summary.csv", "reps.csv")}
    assert _simulate(out) == 0
    for name, data in first.items():
        assert (out / name).read_bytes() == data
    header, rows, meta = io.read_table_csv(tmp_path / "a" / "summary.csv")
    assert header == cli.SUMMARY_HEADER
    assert "seed=7" in meta and "version=" in meta and "preset_version=" in meta
    assert {r[header.index("metric")] for r in rows} >= {"fdp", "tp", "rgee", "mse"}
    header, rows, _ = io.read_table_csv(tmp_path / "a" / "reps.csv")
    assert len(rows) == 3 and "time" not in header


def test_simulate_overrides_and_timing(tmp_path):
    assert _simulate(tmp_path, "--s", "5", "--p", "60", "--n", "60", "--timing", "--methods", "pdcae,tbmm") == 0
    header, rows, _ = io.read_table_csv(tmp_path / "reps.csv")
    assert header[-1] == "time" and len(rows) == 6
    header, rows, _ = io.read_table_csv(tmp_path / "summary.csv")
    assert {r[header.index("s")] for r in rows} == {"5"} and {r[header.index("p")] for r in rows} == {"60"}


def test_simulate_errors(tmp_path):
    assert cli.main(["simulate", "--preset", "nope", "--out", str(tmp_path)]) == 2
    assert cli.main(["simulate", "--preset", "fdr", "--scale", "huge", "--out", str(tmp_path)]) == 2
    assert _simulate(tmp_path, "--methods", "pdcae,magic") == 2
    assert _simulate(tmp_path, "--s", "500") == 2
