"""
Tests for the run / verify / sweep commands and their exit codes
"""
import csv
import json
import os

import pytest

from conftest import fixture_path
from main import (
    EXIT_CONFIG,
    EXIT_MAX_ITER,
    EXIT_OK,
    EXIT_VERIFY,
    cmd_sweep,
    cmd_verify,
    load_env_file,
    main,
)
from visolve.config import load_config


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def scalar_document():
    return json.loads(fixture_path("scalar_box.json").read_text())


def write_config(tmp_path, document):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(document, indent=2))
    return path


def test_run_scalar_fixture(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    status = main(["run", "--config", str(fixture_path("scalar_box.json")), "--out", str(out)])
    assert status == EXIT_OK
    rows = read_csv(out)
    assert rows[0] == [
        "n", "x1", "z1", "y1", "t1", "a_n", "b_n", "step_norm", "dist_to_p", "A3_gap",
    ]
    assert rows[1][:5] == ["1", "1", "0.5", "0.25", "0.125"]
    assert float(rows[2][1]) == pytest.approx(13 / 24, abs=1e-15)
    assert abs(float(rows[-1][1])) <= 1e-7
    assert "Terminated by tolerance" in capsys.readouterr().out


def test_run_header_for_two_dimensions(tmp_path):
    out = tmp_path / "trace.csv"
    assert main(["run", "--config", str(fixture_path("diag_rotation.json")), "--out", str(out)]) == EXIT_OK
    header = read_csv(out)[0]
    assert header[:9] == ["n", "x1", "x2", "z1", "z2", "y1", "y2", "t1", "t2"]


def test_run_step_outside_window(tmp_path, capsys):
    document = scalar_document()
    document["lambdas"] = [0.5, 0.5, 2.0]
    status = main(["run", "--config", str(write_config(tmp_path, document)), "--out", str(tmp_path / "t.csv")])
    assert status == EXIT_CONFIG
    assert "exceeds window (1.8)" in capsys.readouterr().out
    assert not (tmp_path / "t.csv").exists()


def test_run_max_iter_cap(tmp_path):
    document = scalar_document()
    document["max_iter"] = 3
    out = tmp_path / "trace.csv"
    assert main(["run", "--config", str(write_config(tmp_path, document)), "--out", str(out)]) == EXIT_MAX_ITER
    assert len(read_csv(out)) == 4


def test_run_max_iter_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("VISOLVE_MAX_ITER", "5")
    out = tmp_path / "trace.csv"
    assert main(["run", "--config", str(fixture_path("scalar_box.json")), "--out", str(out)]) == EXIT_MAX_ITER
    assert len(read_csv(out)) == 6


def test_malformed_config_exit(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{ not json")
    assert main(["run", "--config", str(path)]) == EXIT_CONFIG
    assert "broken.json:1:3" in capsys.readouterr().out


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as err:
        main(["run"])
    assert err.value.code == EXIT_CONFIG
    with pytest.raises(SystemExit) as err:
        main(["explode", "--config", "x.json"])
    assert err.value.code == EXIT_CONFIG


def test_verify_rotation_fixture(tmp_path):
    out = tmp_path / "report.json"
    status = main(["verify", "--config", str(fixture_path("diag_rotation.json")), "--samples", "2000", "--out", str(out)])
    assert status == EXIT_OK
    report = json.loads(out.read_text())
    for name in ("A1.cocoercive", "A3.lipschitz", "A2.expansive", "A3.forward_step", "G.contraction",
                 "f.contraction", "S.nonexpansive", "S.maps_into_C", "oracle.fixed_point",
                 "oracle.singleton", "oracle.vi_residual", "remark_bound", "viscosity_vi"):
        assert report[name]["passed"], name
        assert "witness" not in report[name]


@pytest.mark.parametrize("name, failing", [("forged_d.json", "A3.cocoercive"), ("forged_L.json", "A3.lipschitz")])
def test_verify_exposes_forged_constants(tmp_path, capsys, name, failing):
    out = tmp_path / "report.json"
    config = load_config(fixture_path("negative") / name)
    assert cmd_verify(config, 2000, out) == EXIT_VERIFY
    report = json.loads(out.read_text())
    assert not report[failing]["passed"]
    assert report[failing]["worst_margin"] < 0
    assert len(report[failing]["witness"]) == 2
    assert not report["A3.declared_constants"]["passed"]
    assert report["A1.declared_constants"]["passed"]
    assert failing in capsys.readouterr().out


def test_run_and_sweep_refuse_forged_constants(tmp_path, capsys):
    path = fixture_path("negative") / "forged_d.json"
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "t.csv")]) == EXIT_CONFIG
    assert "declared constants (A3)" in capsys.readouterr().out
    assert not (tmp_path / "t.csv").exists()
    assert cmd_sweep(load_config(path), "lambda3", [0.2], tmp_path / "s.csv") == EXIT_OK
    assert read_csv(tmp_path / "s.csv")[1][1:] == ["skipped", "", ""]


def test_overflowing_numbers_exit_one(tmp_path, capsys):
    document = scalar_document()
    document["tol"] = "1e400"
    assert main(["run", "--config", str(write_config(tmp_path, document))]) == EXIT_CONFIG
    assert "must be finite" in capsys.readouterr().out
    assert main(["sweep", "--config", str(fixture_path("scalar_box.json")), "--param", "tol",
                 "--values", "1e-6,1e400", "--out", str(tmp_path / "s.csv")]) == EXIT_CONFIG
    assert not (tmp_path / "s.csv").exists()


def test_verify_rejects_zero_samples(tmp_path):
    config = load_config(fixture_path("scalar_box.json"))
    assert cmd_verify(config, 0, tmp_path / "report.json") == EXIT_CONFIG
    assert not (tmp_path / "report.json").exists()


def test_sweep_lambda3(tmp_path):
    out = tmp_path / "sweep.csv"
    status = main([
        "sweep", "--config", str(fixture_path("diag_rotation.json")),
        "--param", "lambda3", "--values", "0.1,0.2,0.3,0.5", "--jobs", "2", "--out", str(out),
    ])
    assert status == EXIT_OK
    rows = read_csv(out)
    assert rows[0] == ["value", "iterations_to_tol", "final_dist_to_p", "contraction_factor_r"]
    assert [float(r[0]) for r in rows[1:]] == [0.1, 0.2, 0.3, 0.5]
    for row in rows[1:4]:
        assert int(row[1]) > 0
        assert float(row[2]) <= 1e-6
        assert 0 <= float(row[3]) < 1
    assert rows[4][1:] == ["skipped", "", ""]


def test_sweep_schedule_shift_and_tol(tmp_path):
    config = load_config(fixture_path("scalar_box.json"))
    assert cmd_sweep(config, "schedule_shift", [1, 4], tmp_path / "shift.csv") == EXIT_OK
    assert [r[1] != "skipped" for r in read_csv(tmp_path / "shift.csv")[1:]] == [True, True]
    assert cmd_sweep(config, "tol", [1e-4, 1e-8], tmp_path / "tol.csv") == EXIT_OK
    loose, tight = (int(r[1]) for r in read_csv(tmp_path / "tol.csv")[1:])
    assert loose <= tight


def test_sweep_argument_errors(tmp_path):
    config = load_config(fixture_path("scalar_box.json"))
    assert cmd_sweep(config, "lambda1", [], tmp_path / "s.csv") == EXIT_CONFIG
    assert cmd_sweep(config, "alpha", [0.1], tmp_path / "s.csv") == EXIT_CONFIG
    assert cmd_sweep(config, "schedule_shift", [2, 2.5], tmp_path / "s.csv") == EXIT_CONFIG
    assert not (tmp_path / "s.csv").exists()
    assert main(["sweep", "--config", str(fixture_path("scalar_box.json")), "--param", "lambda1",
                 "--values", "a,b", "--out", str(tmp_path / "s.csv")]) == EXIT_CONFIG


def test_env_file_does_not_override(tmp_path, monkeypatch):
    env = tmp_path / ".env"
    env.write_text("# comment\nVISOLVE_MAX_ITER=9\nVISOLVE_TEST_ONLY = yes\n")
    monkeypatch.setenv("VISOLVE_MAX_ITER", "4")
    monkeypatch.delenv("VISOLVE_TEST_ONLY", raising=False)
    load_env_file(env)
    assert os.environ["VISOLVE_MAX_ITER"] == "4"
    assert os.environ["VISOLVE_TEST_ONLY"] == "yes"
    monkeypatch.delenv("VISOLVE_TEST_ONLY")
