import csv
import os

import numpy as np
import pytest

from levelset_sampler.cli import (
    ExperimentSpec,
    cmd_experiment,
    cmd_quadrature,
    cmd_verify,
    main,
    parse_config,
    run_verification,
)
from levelset_sampler.errors import ConfigError


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def masked_bytes(path, drop_cols):
    header, rows = read_csv(path)
    keep = [i for i, name in enumerate(header) if name not in drop_cols]
    return [tuple(r[i] for i in keep) for r in rows]


SMALL_CONFIG = """
# small deterministic smoke experiment
experiment = test1
h = 2e-2, 1e-2
A = zero, abar
T = 4.0
runs = 3
seed = 11
"""


def test_parse_config_defaults_and_overrides():
    spec = parse_config(SMALL_CONFIG)
    assert spec.experiment == "test1"
    assert spec.h_list == [2e-2, 1e-2]
    assert spec.a_labels == ["zero", "abar"]
    assert spec.runs == 3
    assert spec.total_time == 4.0
    np.testing.assert_array_equal(spec.a_matrix("zero"), np.zeros((3, 3)))


def test_parse_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        parse_config("experiment = test1\nbogus = 1\n")
    with pytest.raises(ConfigError):
        parse_config("experiment test1\n")
    with pytest.raises(ConfigError):
        parse_config("runs = 0\n")
    with pytest.raises(ConfigError):
        parse_config("h = -0.1\n")


def test_parse_config_custom_A():
    spec = parse_config("A = custom\nA_custom = 0,1,0,-1,0,0,0,0,0\n")
    A = spec.a_matrix("custom")
    np.testing.assert_array_equal(A, -A.T)
    with pytest.raises(ConfigError):
        parse_config("A_custom = 0,1,0,-1,0,0,0,0\n")
    with pytest.raises(ConfigError):
        parse_config("A = custom\nA_custom = 1,1,0,-1,0,0,0,0,0\n")


def test_custom_experiment_requires_potential():
    spec = parse_config("experiment = custom\n")
    with pytest.raises(ConfigError):
        spec.benchmark()
    spec = parse_config("experiment = custom\npotential = test2\nbeta = 4.0\n")
    assert spec.benchmark().beta == 4.0


def test_experiment_writes_expected_tables(tmp_path):
    spec = parse_config(SMALL_CONFIG)
    assert cmd_experiment(spec, out_dir=str(tmp_path), threads=2) == 0
    header, rows = read_csv(tmp_path / "summary.csv")
    assert header == ["A_label", "h", "n", "mean_f", "std_f", "mean_xi_half",
                      "mean_rk_steps", "transitions", "runtime_s"]
    assert len(rows) == 4  # 2 A-choices x 2 step sizes
    for row in rows:
        n = int(row[2])
        assert n == round(4.0 / float(row[1]))
        assert float(row[4]) >= 0.0  # std_f
    _, run_rows = read_csv(tmp_path / "runs.csv")
    assert len(run_rows) == 12


def test_experiment_deterministic_reruns(tmp_path):
    spec = parse_config(SMALL_CONFIG)
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    assert cmd_experiment(spec, out_dir=str(out1), threads=1) == 0
    assert cmd_experiment(parse_config(SMALL_CONFIG), out_dir=str(out2), threads=2) == 0
    # runtime is wall-clock and necessarily varies; everything else must be
    # byte-identical, including across thread counts
    assert masked_bytes(out1 / "summary.csv", {"runtime_s"}) == masked_bytes(
        out2 / "summary.csv", {"runtime_s"}
    )
    assert masked_bytes(out1 / "runs.csv", {"runtime_s"}) == masked_bytes(
        out2 / "runs.csv", {"runtime_s"}
    )


def test_single_step_degenerate_run(tmp_path):
    # T = h: one step; the running average is f at the initial state
    cfg = "experiment = test1\nh = 0.01\nA = zero\nT = 0.01\nruns = 1\nseed = 3\n"
    spec = parse_config(cfg)
    assert cmd_experiment(spec, out_dir=str(tmp_path)) == 0
    _, rows = read_csv(tmp_path / "summary.csv")
    assert len(rows) == 1
    assert int(rows[0][2]) == 1
    assert float(rows[0][3]) == 0.0  # f1 vanishes at the initial state (x3 = 0)


def test_experiment_failure_marker(tmp_path):
    # an absurdly large step with a tiny iteration cap cannot converge
    cfg = "experiment = test1\nh = 50.0\nA = zero\nT = 100.0\nruns = 2\nmax_rk_steps = 2\n"
    spec = parse_config(cfg)
    assert cmd_experiment(spec, out_dir=str(tmp_path)) == 1
    _, rows = read_csv(tmp_path / "summary.csv")
    assert len(rows) == 1
    assert rows[0][0] == "zero"
    assert rows[0][3] == "nan"


def test_quadrature_targets(capsys):
    assert cmd_quadrature("test1") == 0
    assert abs(float(capsys.readouterr().out) - 0.303) <= 2e-3
    assert cmd_quadrature("test2") == 0
    assert abs(float(capsys.readouterr().out) - 1.923) <= 2e-3
    assert cmd_quadrature("cosphi") == 0
    assert capsys.readouterr().out.strip() == "0.000000"


def test_quadrature_unknown_test_exits_2(capsys):
    assert main(["quadrature", "--test", "nope"]) == 2
    assert main(["quadrature", "--test", "test1", "--grid", "8"]) == 2


def test_main_quadrature_roundtrip(capsys):
    assert main(["quadrature", "--test", "test1", "--grid", "256"]) == 0
    out = capsys.readouterr().out
    assert abs(float(out) - 0.303) < 2e-3


def test_main_experiment_config_error(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("nonsense = 1\n")
    assert main(["experiment", "--config", str(cfg)]) == 2
    assert main(["experiment", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_verify_small_run_passes(tmp_path, capsys):
    rc = cmd_verify(seed=1, points=4, out_dir=str(tmp_path))
    assert rc == 0
    header, rows = read_csv(tmp_path / "verify.csv")
    assert header == ["check", "max_abs_error", "tolerance", "passed"]
    assert all(row[3] == "true" for row in rows)
    names = {row[0] for row in rows}
    assert "kernel_identities[torus]" in names
    assert "grad_theta[d4k2]" in names
    assert "hess_theta[varying_a]" in names


def test_verify_points_zero_synthetic_only(tmp_path):
    rc = cmd_verify(seed=1, points=0, out_dir=str(tmp_path))
    assert rc == 0
    _, rows = read_csv(tmp_path / "verify.csv")
    assert all("torus" not in row[0] for row in rows)


def test_verify_inject_fault_detected(tmp_path, capsys):
    rc = cmd_verify(seed=1, points=2, out_dir=str(tmp_path), inject_fault=True)
    assert rc == 1
    _, rows = read_csv(tmp_path / "verify.csv")
    failed = {row[0] for row in rows if row[3] == "false"}
    assert "grad_theta[torus]" in failed


def test_thread_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("SAMPLER_THREADS", "1")
    spec = parse_config("experiment = test1\nh = 0.02\nA = zero\nT = 1.0\nruns = 2\n")
    assert cmd_experiment(spec, out_dir=str(tmp_path), threads=4) == 0
