import json

import pytest

from sysbath.cli import load_config, main, run
from sysbath.errors import ConfigError
from sysbath.experiments import EXPERIMENTS


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def test_negative_alpha_names_field():
    with pytest.raises(ConfigError) as ei:
        load_config({"experiment": "toy-thermal", "params": {"alpha": -1}})
    assert ei.value.path == "params.alpha"
    with pytest.raises(ConfigError) as ei:
        load_config({"experiment": "toy-thermal", "sweep": {"sigma": [2.0, -1.0]}})
    assert ei.value.path == "sweep.sigma"


@pytest.mark.parametrize("cfg, path", [
    ({"experiment": "toy-thermal", "bogus": 1}, "bogus"),
    ({"experiment": "toy-thermal", "params": {"bogus": 1}}, "params.bogus"),
    ({"experiment": "nope"}, "experiment"),
    ({"experiment": "toy-thermal", "params": {"beta": -0.5}}, "params.beta"),
    ({"experiment": "toy-thermal", "params": {"trotter_tau": 0}}, "params.trotter_tau"),
    ({"experiment": "toy-thermal", "params": {"T": -3}}, "params.T"),
    ({"experiment": "toy-thermal", "sweep": {"gamma": [1]}}, "sweep.gamma"),
    ({"experiment": "toy-thermal", "model": {"kind": "single_qubit", "x": 1}}, "model.x"),
    ({"experiment": "toy-thermal", "seed": -1}, "seed"),
])
def test_config_rejections(cfg, path):
    with pytest.raises(ConfigError) as ei:
        load_config(cfg)
    assert ei.value.path == path


def test_alpha_sigma_override_and_inf_beta():
    rc = load_config({"experiment": "fixed-point-sweep", "params": {"alpha": 0.01, "beta": "inf"}})
    assert all(p["alpha"] == 0.01 and p["alpha_sigma"] is None for p in rc.points)
    assert rc.points[0]["beta"] == "inf"
    with pytest.raises(ConfigError):
        load_config({"experiment": "toy-thermal", "params": {"alpha": 0.1, "alpha_sigma": 0.1}})


def test_model_file_path(tmp_path):
    (tmp_path / "m.json").write_text(json.dumps({"kind": "quadratic_fermion", "h": [[1.0]]}))
    rc = load_config(write(tmp_path, {"experiment": "fermion-ground", "model": "m.json"}))
    assert rc.model.dim == 2


def test_toy_thermal_record(tmp_path):
    cfg = write(tmp_path, {"experiment": "toy-thermal", "sweep": {"sigma": [1.0, 2.0]}, "output": "tt"})
    assert main(["run", str(cfg), "--output", str(tmp_path / "out")]) == 0
    rec = json.loads((tmp_path / "out" / "tt.record.json").read_text())
    assert rec["experiment"] == "toy-thermal" and rec["seed"] == 0
    assert rec["build_id"].startswith("sysbath-")
    assert rec["config"]["params"]["alpha"] == 0.05
    for pt in rec["points"]:
        assert pt["status"] == "ok"
        series = pt["metrics"]["trace_distance_to_gibbs"]
        assert len(series) > 2 and series[-1] < series[0]
    csv = (tmp_path / "out" / "tt.sigma.csv").read_bytes()
    assert csv.startswith(b"sigma,status,") and b"\r" not in csv
    assert len(csv.decode().strip().split("\n")) == 3


def test_identical_csv_bytes(tmp_path):
    cfg = {"experiment": "dbc-report", "sweep": {"sigma": [1.0, 2.0]}}
    a = run(load_config(cfg), tmp_path / "a")
    b = run(load_config(cfg), tmp_path / "b")
    assert (tmp_path / "a" / a["csv"]).read_bytes() == (tmp_path / "b" / b["csv"]).read_bytes()


def test_monte_carlo_reproducible(tmp_path):
    cfg = {"experiment": "toy-thermal", "params": {"sampling": "monte_carlo", "n_samples": 64},
           "sweep": {"sigma": [1.0]}, "seed": 5}
    a = run(load_config(cfg), tmp_path / "a")
    b = run(load_config(cfg), tmp_path / "b")
    assert a["points"][0]["metrics"] == b["points"][0]["metrics"]
    c = run(load_config(dict(cfg, seed=6)), tmp_path / "c")
    assert c["points"][0]["metrics"] != a["points"][0]["metrics"]


def test_threads_env_gives_same_output(tmp_path, monkeypatch):
    cfg = {"experiment": "toy-ground", "sweep": {"sigma": [1.0, 1.5, 2.0]}}
    a = run(load_config(cfg), tmp_path / "a")
    monkeypatch.setenv("SYSBATH_THREADS", "3")
    b = run(load_config(cfg), tmp_path / "b")
    assert (tmp_path / "a" / a["csv"]).read_bytes() == (tmp_path / "b" / b["csv"]).read_bytes()


def test_error_status_embedded(tmp_path):
    # a zero mode makes the fermionic ground state degenerate
    cfg = {"experiment": "fermion-ground", "model": {"kind": "quadratic_fermion", "h": [[0.0, 0.0], [0.0, 1.0]]},
           "sweep": {"sigma": [1.0]}}
    rec = run(load_config(cfg), tmp_path)
    assert rec["points"][0]["status"] == "error" and "DegenerateGroundState" in rec["points"][0]["error"]
    assert b",error" in (tmp_path / rec["csv"]).read_bytes()


def test_validate_and_list(tmp_path, capsys):
    assert main(["validate", str(write(tmp_path, {"experiment": "toy-ground"}))]) == 0
    assert "3 point(s)" in capsys.readouterr().out
    assert main(["validate", str(write(tmp_path, {"experiment": "toy-ground", "params": {"alpha": -1}}))]) == 2
    assert "params.alpha" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.json")]) == 2
    assert main(["list-experiments"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in EXPERIMENTS)
    assert len(EXPERIMENTS) == 9
