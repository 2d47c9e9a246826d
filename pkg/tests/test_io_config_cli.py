import filecmp
import json
import os
import subprocess
import sys
import time

import numpy as np
import pytest
import yaml

from bbmlab.cli import run
from bbmlab.config import ExperimentConfig, resolve_seed
from bbmlab.errors import ConfigError, DataError, ScheduleInfeasibleError
from bbmlab.io import RunManifest, config_hash, read_csv, write_csv


def _write_cfg(path, data):
    path.write_text(yaml.safe_dump(data))
    return str(path)


def _run(tmp_path, name, cmd, data, *extra, env=None):
    cfg = _write_cfg(tmp_path / f"{name}.yaml", data)
    out = tmp_path / name
    code = run([cmd, "--config", cfg, "--out", str(out), "--threads", "1", "--quiet", *extra], env=env or {})
    return code, out


def _same_csvs(a, b):
    names = sorted(f for f in os.listdir(a) if f.endswith(".csv"))
    assert names and names == sorted(f for f in os.listdir(b) if f.endswith(".csv"))
    match, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    return not mismatch and not errors


SMALL = {
    "simulate": {"simulate": {"t": 3.0, "replicas": 20}},
    "tails": {"tails": {"t": 6.0, "replicas": 1000}, "prune": {"window": 4.0}},
    "kpp": {"kpp": {"T": 6.0, "x_min": -15.0, "x_max": 20.0, "dx": 0.1, "dt": 0.004,
                    "fit_window": [2.0, 6.0], "profile_times": [4.0], "fit_range": [1.0, 3.0]}},
    "ergodic": {"ergodic": {"T": 20.0, "epsilon": 0.4, "C": 0.5}, "prune": {"window": 4.0}},
    "corr": {"corr": {"T": 8.0, "epsilon": 0.3, "R_T": 1.0, "outer": 3, "inner": 50,
                      "separations": [0.5, 4.0]}, "prune": {"window": 3.0}},
    "localize": {"localize": {"t": 8.0, "replicas": 20, "r_values": [1.0, 2.0, 3.0]},
                 "prune": {"window": 4.0}},
}


@pytest.mark.parametrize("cmd", sorted(SMALL))
def test_rerun_is_byte_identical(tmp_path, cmd):
    data = dict(SMALL[cmd], seed=11)
    c1, a = _run(tmp_path, "a", cmd, data)
    c2, b = _run(tmp_path, "b", cmd, data)
    assert c1 == c2 == 0
    assert _same_csvs(a, b)
    man = json.loads((a / "manifest.json").read_text())
    assert man["seed"] == 11 and man["command"] == cmd
    assert man["config_hash"] == config_hash(man["config"])
    assert set(man["outputs"]) == {f for f in os.listdir(a) if f.endswith(".csv")}


def test_manifest_reproduces_run(tmp_path):
    code, a = _run(tmp_path, "a", "simulate", dict(SMALL["simulate"], seed=5))
    assert code == 0
    man = json.loads((a / "manifest.json").read_text())
    cfg = _write_cfg(tmp_path / "again.yaml", man["config"])
    b = tmp_path / "b"
    assert run(["simulate", "--config", cfg, "--out", str(b), "--threads", "1", "--quiet"], env={}) == 0
    assert _same_csvs(a, b)


def test_threads_do_not_change_results(tmp_path):
    data = dict(SMALL["simulate"], seed=3)
    _, a = _run(tmp_path, "a", "simulate", data)
    cfg = _write_cfg(tmp_path / "t.yaml", data)
    b = tmp_path / "b"
    assert run(["simulate", "--config", cfg, "--out", str(b), "--threads", "2", "--quiet"], env={}) == 0
    assert _same_csvs(a, b)


def test_different_seed_changes_output(tmp_path):
    _, a = _run(tmp_path, "a", "simulate", dict(SMALL["simulate"], seed=1))
    _, b = _run(tmp_path, "b", "simulate", dict(SMALL["simulate"], seed=2))
    assert not _same_csvs(a, b)


def test_seed_priority():
    assert resolve_seed(7, 8, {"BBM_SEED": "9"}) == 7
    assert resolve_seed(None, 8, {"BBM_SEED": "9"}) == 8
    assert resolve_seed(None, None, {"BBM_SEED": "9"}) == 9
    assert resolve_seed(None, None, {}) == 0
    with pytest.raises(ConfigError):
        resolve_seed(None, None, {"BBM_SEED": "abc"})
    with pytest.raises(ConfigError):
        resolve_seed(None, None, {"BBM_SEED": "-1"})


def test_cli_seed_overrides_config_and_env(tmp_path):
    data = dict(SMALL["simulate"], seed=4)
    _, a = _run(tmp_path, "a", "simulate", data, "--seed", "12", env={"BBM_SEED": "13"})
    assert json.loads((a / "manifest.json").read_text())["seed"] == 12
    _, b = _run(tmp_path, "b", "simulate", SMALL["simulate"], env={"BBM_SEED": "13"})
    assert json.loads((b / "manifest.json").read_text())["seed"] == 13


@pytest.mark.parametrize("cmd,data,code", [
    ("simulate", {"simulate": {"replicas": 0}}, 2),
    ("simulate", {"simulate": {"t": -1.0}}, 2),
    ("simulate", {"bogus": 1}, 2),
    ("simulate", {"simulate": {"t": 1.0, "extra": 2}}, 2),
    ("simulate", {"law": [0.5, 0.5]}, 2),
    ("simulate", {"version": 2}, 2),
    ("ergodic", {"ergodic": {"window": [2.0, 1.0]}}, 2),
    ("ergodic", {"ergodic": {"window": [1.0, 1.0]}}, 2),
    ("kpp", {"kpp": {"dx": 0.05, "dt": 0.002}}, 2),
    ("corr", {"corr": {"T": 30.0, "epsilon": 0.3, "R_T": 9.0}}, 2),
    ("corr", {"corr": {"T": 30.0, "epsilon": 0.3, "R_T": 10.0}}, 2),
    ("localize", {"localize": {"alpha": 0.6, "beta": 0.4}}, 2),
    ("simulate", {"simulate": {"t": 10.0, "replicas": 1}, "prune": {"enabled": False, "cap": 100}}, 4),
])
def test_exit_codes(tmp_path, cmd, data, code):
    got, out = _run(tmp_path, "x", cmd, data)
    assert got == code


def test_numerical_error_exit_code(tmp_path, monkeypatch):
    from bbmlab import studies
    from bbmlab.errors import NumericalError

    def boom(*a, **k):
        raise NumericalError("blow-up")

    monkeypatch.setitem(studies.RUNNERS, "kpp", boom)
    got, _ = _run(tmp_path, "x", "kpp", {})
    assert got == 3


def test_config_errors_are_typed():
    with pytest.raises(ScheduleInfeasibleError):
        ExperimentConfig.from_dict({"experiment": "corr", "corr": {"T": 30.0, "epsilon": 0.3, "R_T": 9.0}})
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_dict({"tails": {"t": 30.0, "nope": 1}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment": "nothing"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"seed": -3})


def test_unreadable_config(tmp_path):
    assert run(["simulate", "--config", str(tmp_path / "missing.yaml"), "--quiet"], env={}) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("simulate: [unclosed\n")
    assert run(["simulate", "--config", str(bad), "--quiet"], env={}) == 2


def test_config_roundtrip():
    cfg = ExperimentConfig.from_dict({"experiment": "tails", "seed": 9, "tails": {"replicas": 5000}})
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert config_hash(cfg.to_dict()) == config_hash(again.to_dict())


def test_localize_default_config_monotone_table(tmp_path):
    code, out = _run(tmp_path, "loc", "localize", {"seed": 2})
    assert code == 0
    name, cols, data = read_csv(out / "nonlocalization.csv")
    assert cols == ["r", "nonlocalization_rate"]
    assert list(data[:, 0]) == [2.0, 4.0, 8.0]
    assert np.all(np.diff(data[:, 1]) <= 0)
    _, cols, env = read_csv(out / "envelopes.csv")
    assert env.shape == (201, 3)


def test_simulate_budget(tmp_path):
    t0 = time.perf_counter()
    code, out = _run(tmp_path, "sim", "simulate", {"seed": 1, "simulate": {"t": 5.0, "replicas": 1000}})
    assert code == 0 and time.perf_counter() - t0 < 60
    _, cols, samples = read_csv(out / "max_samples.csv")
    assert samples.shape == (1000, 3)
    _, cols, series = read_csv(out / "martingales.csv")
    assert cols[:2] == ["replica", "t"]
    assert np.all(series[series[:, 1] == 0.0][:, 2] == 1.0)


def test_csv_roundtrip_and_format(tmp_path):
    rows = [(1, 0.1, True), (2, 1e-300, False), (3, -np.inf, np.float64(2.5))]
    p = write_csv(tmp_path / "t.csv", "demo table", ("a", "b", "c"), rows)
    raw = open(p, "rb").read()
    assert b"\r" not in raw
    assert raw.splitlines()[0] == b"# bbmlab-csv v1 demo table"
    assert raw.splitlines()[1] == b"a,b,c"
    name, cols, data = read_csv(p)
    assert name == "demo table" and cols == ["a", "b", "c"]
    assert data[1, 1] == 1e-300 and data[2, 1] == -np.inf and data[0, 2] == 1.0
    with pytest.raises(DataError):
        write_csv(tmp_path / "u.csv", "x", ("a", "b"), [(1,)])


def test_csv_rejects_foreign_files(tmp_path):
    p = tmp_path / "plain.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(DataError):
        read_csv(p)
    p.write_text("# bbmlab-csv v9 x\na\n1\n")
    with pytest.raises(DataError):
        read_csv(p)


def test_manifest_fields(tmp_path):
    m = RunManifest("kpp", {"a": 1}, 3)
    with m.stage("solve"):
        pass
    m.add_pruning(4, 0.5)
    m.add_pruning(1, 0.25)
    path = m.write(tmp_path)
    got = json.loads(open(path).read())
    assert got["pruned_count"] == 5 and got["pruned_mass_bound"] == 0.75
    assert "solve" in got["stages"] and got["backend"] in ("numba", "numpy")
    assert got["config_hash"] == config_hash({"a": 1}) != config_hash({"a": 2})


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "bbmlab.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "bbmlab" in res.stdout
    res = subprocess.run([sys.executable, "-m", "bbmlab.cli", "nosuch"], capture_output=True, text=True)
    assert res.returncode == 2
