import json

import pytest

from polaron_fk import io
from polaron_fk.cli import COMMANDS, EXIT_CONFIG, EXIT_PASS, EXIT_STAT, EXIT_STRUCT, main
from polaron_fk.config import ConfigError, ExperimentConfig, load_config, parse_config


def write_cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_parse_config_values():
    vals = parse_config("# comment\ng = 0.5\nx = 1.0, 2.0  # trailing\nmodel = froehlich\nabs_limit = none\n")
    assert vals == dict(g=0.5, x=[1.0, 2.0], model="froehlich", abs_limit=None)


@pytest.mark.parametrize("text,line", [("g = 0.1\nbogus = 3\n", 2), ("g = 0.1\n\ng = 0.2\n", 3),
                                       ("paths = many\n", 1), ("just words\n", 1)])
def test_parse_config_errors_carry_line(text, line):
    with pytest.raises(ConfigError, match=f"line {line}:"):
        parse_config(text)


def test_load_config_overrides(tmp_path):
    cfg = load_config(write_cfg(tmp_path, "paths = 10\nseed = 3\n"), dict(seed=9, dt=None))
    assert cfg.paths == 10 and cfg.seed == 9 and cfg.dt == ExperimentConfig().dt
    with pytest.raises(ConfigError):
        load_config(None, dict(model="nope"))
    with pytest.raises(ConfigError):
        load_config(None, dict(paths=0))


def test_echo_leaves_out_run_control():
    echo = ExperimentConfig().echo()
    assert "workers" not in echo and "out" not in echo and "seed" in echo


def test_all_subcommands_registered():
    assert sorted(COMMANDS) == sorted(["fk-verify", "vacuum", "action-sample", "identity-check", "moments",
                                       "cutoff", "tail", "ly", "sde", "semigroup"])


def test_config_error_exit_code(tmp_path, capsys):
    path = write_cfg(tmp_path, "g = 0.1\nnot_a_key = 1\n")
    assert main(["tail", "--config", path, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "line 2" in capsys.readouterr().err
    assert main(["tail", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG


def test_fk_verify_zero_coupling_passes(tmp_path):
    path = write_cfg(tmp_path, "g = 0\nn = 8\nN_max = 1\nmodes = 2\nt = 0.3\n")
    out = tmp_path / "o"
    assert main(["fk-verify", "--config", path, "--paths", "4000", "--dt", "0.01", "--out", str(out)]) == EXIT_PASS
    rows = io.read_csv(out / "fk-verify.csv")
    assert rows[0]["estimator"] == "rel_L2_gap" and rows[0]["verdict"] == "pass"
    doc = json.loads((out / "fk-verify.json").read_text())
    assert doc["schema_version"] == io.SCHEMA_VERSION and doc["status"] == 0
    assert doc["config"]["g"] == 0.0 and "timestamp" in doc["run"]


def test_tail_on_box_passes(tmp_path):
    path = write_cfg(tmp_path, "domain = box\nx = 1.5707963267948966, 1.5707963267948966\n"
                               "t_grid = 0.5, 1\nr_grid = 0.5, 1, 1.5\n")
    out = tmp_path / "o"
    assert main(["tail", "--config", path, "--paths", "5000", "--dt", "0.01", "--out", str(out)]) == EXIT_PASS
    rows = io.read_csv(out / "tail.csv")
    assert len(rows) == 6 and all(r["verdict"] == "pass" for r in rows)
    assert all(float(r["value"]) <= float(r["bound"]) for r in rows)


def test_reruns_are_byte_identical(tmp_path):
    path = write_cfg(tmp_path, "n = 6\nmodes = 2\nN_max = 1\nt = 0.2\nchunk = 64\n")
    args = ["fk-verify", "--config", path, "--paths", "300", "--dt", "0.01"]
    main(args + ["--out", str(tmp_path / "a"), "--workers", "1"])
    main(args + ["--out", str(tmp_path / "b"), "--workers", "3"])
    a = (tmp_path / "a" / "fk-verify.csv").read_bytes()
    b = (tmp_path / "b" / "fk-verify.csv").read_bytes()
    assert a == b
    assert b"workers" not in a


def test_statistical_failure_exit_code(tmp_path):
    # an absurd absolute limit turns a healthy run into a statistical failure
    path = write_cfg(tmp_path, "n = 6\nmodes = 2\nN_max = 1\nt = 0.2\nabs_limit = 1e-9\n")
    assert main(["fk-verify", "--config", path, "--paths", "200", "--dt", "0.01",
                 "--out", str(tmp_path / "o")]) == EXIT_STAT


def test_structural_failure_exit_code(tmp_path):
    # a ladder that moves away from the full coupling makes the resolvent gaps grow
    path = write_cfg(tmp_path, "g = 0.5\nmodes = 4\nn = 5\nN_max = 1\nt = 0.1\nsigmas = 3, 2\nx = 1.5, 1.4\n")
    status = main(["cutoff", "--config", path, "--paths", "20", "--dt", "0.01", "--out", str(tmp_path / "o")])
    assert status == EXIT_STRUCT
    doc = json.loads((tmp_path / "o" / "cutoff.json").read_text())
    assert doc["status"] == EXIT_STRUCT and doc["verdict"] == "fail (structural)"


def test_action_sample_identity(tmp_path):
    path = write_cfg(tmp_path, "g = 0.7\nmodes = 6\nt = 0.3\nx = 1.5, 1.4\n")
    out = tmp_path / "o"
    assert main(["action-sample", "--config", path, "--paths", "4", "--dt", "0.01", "--out", str(out)]) == EXIT_PASS
    rows = io.read_csv(out / "action-sample.csv")
    assert {r["estimator"] for r in rows} >= {"u_reg", "feynman_riemann", "max_rel_u_reg_vs_feynman"}


def test_sde_and_ly_small(tmp_path):
    path = write_cfg(tmp_path, "g = 0.5\nmodes = 3\nn = 6\nN_max = 1\nsamples = 9\nt = 0.2\n"
                               "dt_ladder = 0.01, 0.001\nx = 1.5, 1.4\n")
    assert main(["ly", "--config", path, "--out", str(tmp_path / "o")]) == EXIT_PASS
    assert main(["sde", "--config", path, "--paths", "1", "--out", str(tmp_path / "o")]) == EXIT_PASS
