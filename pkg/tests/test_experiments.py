import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from gridsync import cli
from gridsync.experiments import (
    RUNNERS,
    ConfigError,
    ExperimentConfig,
    config_hash,
    derive_seed,
    run,
    sweep,
    validate,
)
from gridsync.gibbs import phase_scan
from gridsync.io import file_sha256, load_instance, read_rows


def _cfg(tmp_path, kind, name="out", **kw):
    kw.setdefault("seed", 1)
    return ExperimentConfig(kind=kind, out=str(tmp_path / name), **kw)


# -- run examples ------------------------------------------------------------------

def test_toy_mse_example(tmp_path):
    res = run(_cfg(tmp_path, "toy-mse", params={"d": 1, "L": 2, "sigma2": 1.0}, seed=None))
    assert len(res.rows) == 1
    assert res.rows[0]["mse"] == pytest.approx(0.125, abs=1e-12)
    assert res.rows[0]["config_hash"] == config_hash(ExperimentConfig("toy-mse", {"d": 1, "L": 2, "sigma2": 1.0}))


def test_generate_noiseless_instance_file(tmp_path):
    res = run(_cfg(tmp_path, "generate", params={"p": 0.0, "extents": [5, 7]}))
    inst = load_instance(tmp_path / "out" / res.rows[0]["instance_file"])
    g = inst.graph
    assert np.array_equal(inst.obs, inst.truth[g.edge_tail] * inst.truth[g.edge_head])
    assert res.rows[0]["agreement"] == 1.0


def test_invalid_flip_probability_names_constraint(tmp_path, capsys):
    code = cli.main(["generate", "--seed", "1", "--out", str(tmp_path), "--set", "p=0.7"])
    assert code == 2
    err = capsys.readouterr().err
    assert "p in [0, 1/2)" in err and "0.7" in err


def test_unknown_kind_and_params_rejected():
    with pytest.raises(ConfigError, match="unknown experiment kind"):
        validate(ExperimentConfig(kind="nope", seed=1))
    with pytest.raises(ConfigError, match="unknown parameters"):
        validate(ExperimentConfig(kind="toy-mse", params={"bogus": 1}))
    with pytest.raises(ConfigError, match="seed is required"):
        validate(ExperimentConfig(kind="generate"))


def test_manifest_and_provenance(tmp_path):
    res = run(_cfg(tmp_path, "toy-mse", params={"L": 4}, format="jsonl"))
    manifest = json.loads(res.manifest_path.read_text())
    assert manifest["results"]["sha256"] == file_sha256(res.results_path)
    assert manifest["config_hash"] == res.rows[0]["config_hash"]
    rows = read_rows(res.results_path)
    assert {"config_hash", "code_version", "seed"} <= set(rows[0])


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig(kind="multiscale", params={"p": 0.01, "bands": [[1, 8]]}, seed=2**64 - 1,
                           workers=3, out="x", format="jsonl", sweep={"p": [0.01, 0.02]}, max_cells=9)
    path = tmp_path / "c.yaml"
    path.write_text(cfg.to_yaml())
    assert ExperimentConfig.load(path) == cfg
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


# -- reproducibility ------------------------------------------------------------------

def test_identical_config_identical_bytes(tmp_path):
    params = {"d": 2, "L": 8, "n_trials": 20}
    a = run(_cfg(tmp_path, "toy-mse", "a", params=params, seed=7))
    b = run(_cfg(tmp_path, "toy-mse", "b", params=params, seed=7))
    c = run(_cfg(tmp_path, "toy-mse", "c", params=params, seed=8))
    assert file_sha256(a.results_path) == file_sha256(b.results_path)
    assert file_sha256(a.results_path) != file_sha256(c.results_path)


def test_worker_count_does_not_change_results(tmp_path):
    params = {"d": 3, "L": 9, "n": 4, "n_paths": 16, "n_instances": 4, "p": 0.05}
    a = run(_cfg(tmp_path, "path-estimate", "a", params=params, workers=1))
    b = run(_cfg(tmp_path, "path-estimate", "b", params=params, workers=2))
    assert file_sha256(a.results_path) == file_sha256(b.results_path)


def test_empty_sweep_is_run(tmp_path):
    params = {"d": 1, "L": 16, "n_trials": 10}
    a = run(_cfg(tmp_path, "toy-mse", "a", params=params))
    b = sweep(_cfg(tmp_path, "toy-mse", "b", params=params, sweep={}))
    assert file_sha256(a.results_path) == file_sha256(b.results_path)


def test_seed_isolation_between_cells(tmp_path):
    base = {"d": 1, "L": 8, "n_trials": 10}
    a = sweep(_cfg(tmp_path, "toy-mse", "a", params=base, sweep={"sigma2": [0.5, 1.0, 2.0]}))
    b = sweep(_cfg(tmp_path, "toy-mse", "b", params=base, sweep={"sigma2": [0.5, 1.5, 2.0]}))
    strip = lambda r: {k: v for k, v in r.items() if k != "config_hash"}
    assert strip(a.rows[0]) == strip(b.rows[0]) and strip(a.rows[2]) == strip(b.rows[2])
    assert strip(a.rows[1]) != strip(b.rows[1])
    assert a.rows[0]["seed"] == derive_seed(1, {"sigma2": 0.5})


def test_cell_budget(tmp_path):
    cfg = _cfg(tmp_path, "toy-mse", sweep={"L": list(range(2, 12)), "sigma2": list(range(1, 11))})
    with pytest.raises(ConfigError, match="cell budget"):
        sweep(cfg)
    with pytest.raises(ConfigError, match="at most two"):
        validate(_cfg(tmp_path, "toy-mse", sweep={"L": [2], "d": [1], "sigma2": [1]}))
    with pytest.raises(ConfigError, match="numbers"):
        validate(_cfg(tmp_path, "toy-mse", sweep={"L": ["a"]}))


def test_path_estimate_lambda_sweep(tmp_path):
    params = {"d": 3, "L": 9, "n": 4, "n_paths": 32, "n_instances": 6}
    res = sweep(_cfg(tmp_path, "path-estimate", params=params, sweep={"p": [0.005, 0.01, 0.025, 0.05]}))
    assert len(res.rows) == 4
    mis = [r["mean_misalignment"] for r in res.rows]
    assert all(np.isfinite(mis)) and mis[0] < mis[-1]


def test_gibbs_sweep_matches_phase_scan(tmp_path):
    params = {"sizes": [8], "n_disorder": 4, "sweeps": 60, "burn_in": 10, "n_boot": 10}
    res = sweep(_cfg(tmp_path, "gibbs", params=params, sweep={"p": [0.05, 0.2]}))
    assert len(res.rows) == 2
    for row in res.rows:
        scan = phase_scan([row["p"]], [8], n_disorder=4, sweeps=60, burn_in=10, stride=2, seed=row["seed"], n_boot=10)
        ref = scan.rows()[0]
        assert {k: row[k] for k in ref} == ref


# -- CLI ----------------------------------------------------------------------------

def test_cli_sweep_and_flags(tmp_path, capsys):
    out = tmp_path / "s"
    code = cli.main(["sweep", "--kind", "toy-mse", "--seed", "3", "--workers", "2", "--out", str(out),
                     "--format", "jsonl", "--set", "n_trials=10", "--axis", "L=[2,4,8]", "--axis", "d=[1,2]"])
    assert code == 0
    assert len(read_rows(out / "results.jsonl")) == 6


def test_cli_config_document_with_overrides(tmp_path):
    doc = tmp_path / "exp.yaml"
    doc.write_text(ExperimentConfig(kind="toy-mse", params={"d": 2, "L": 4}, out=str(tmp_path / "o")).to_yaml())
    assert cli.main(["toy-mse", "--config", str(doc), "--set", "L=8"]) == 0
    rows = read_rows(tmp_path / "o" / "results.csv")
    assert rows[0]["L"] == "8" and rows[0]["d"] == "2"
    assert cli.main(["gibbs", "--config", str(doc)]) == 2


@pytest.mark.parametrize("argv", [
    ["toy-mse", "--set", "L=1"],
    ["toy-mse", "--set", "d=0"],
    ["estimate-multiscale", "--seed", "1", "--set", "sides=[2,4]"],
    ["estimate-multiscale", "--seed", "1", "--set", "L=100"],
    ["percolation", "--seed", "1", "--set", "p_open=2"],
    ["gibbs", "--seed", "1", "--set", "p=[0.6]"],
    ["estimate-path", "--seed", "1", "--set", "mode=sideways"],
    ["lambda-calib", "--seed", "1", "--set", "n_samples=10"],
    ["generate", "--seed", "-4"],
    ["toy-mse", "--workers", "0"],
    ["toy-mse", "--set", "oops"],
])
def test_cli_validation_errors_exit_2(tmp_path, argv, capsys):
    assert cli.main(argv + ["--out", str(tmp_path)]) == 2
    assert "gridsync: error:" in capsys.readouterr().err


# -- validation fuzz ----------------------------------------------------------------

VALUES = st.one_of(
    st.integers(-3, 40), st.floats(-1, 2, allow_nan=False), st.sampled_from(["free", "torus", "x", "von_mises", None]),
    st.lists(st.integers(-2, 20), max_size=3),
)
CHEAP = ["generate", "toy-mse", "spinwave", "percolation", "multiscale", "lambda-calib"]
SMALL = {
    "generate": {"extents": 4}, "toy-mse": {"L": 4}, "spinwave": {"L": [4]},
    "percolation": {"extents": 16, "distances": [2], "n_trials": 2},
    "multiscale": {"L": 16, "sides": [1, 4, 16], "n_instances": 1, "n_pairs": 4, "bands": [[1, 4]]},
    "lambda-calib": {"sigma": [0.5], "n_samples": 2000, "check_unbiased": False},
}


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(kind=st.sampled_from(CHEAP), data=st.data())
def test_fuzzed_configs_fail_with_config_error_only(tmp_path, kind, data):
    params = dict(SMALL[kind])
    keys = data.draw(st.lists(st.sampled_from(sorted(RUNNERS[kind].defaults) + ["bogus"]), max_size=2, unique=True))
    for k in keys:
        params[k] = data.draw(VALUES)
    # keep the fuzzed configs cheap: cap any size-like parameter
    for k in ("L", "extents", "n_samples", "n_trials", "n_instances", "n_pairs"):
        v = params.get(k)
        if isinstance(v, int) and v > 64 and k != "n_samples":
            params[k] = 64
    seed = data.draw(st.sampled_from([None, 1, -1, 2**64]))
    cfg = ExperimentConfig(kind=kind, params=params, seed=seed, out=str(tmp_path / "f"))
    try:
        run(cfg)
    except ConfigError as exc:
        assert str(exc)


def test_multiscale_schedule_preset_by_name(tmp_path):
    params = {"L": 64, "n_instances": 2, "n_pairs": 20, "bands": [[1, 8]]}
    a = run(_cfg(tmp_path, "multiscale", "a", params=dict(params, sides="desk")))
    b = run(_cfg(tmp_path, "multiscale", "b", params=dict(params, sides=[1, 8, 64])))
    assert a.rows[0]["success_rate"] == b.rows[0]["success_rate"]
    with pytest.raises(ConfigError, match="divisible"):
        run(_cfg(tmp_path, "multiscale", "c", params=dict(params, sides="asymptotic")))
    with pytest.raises(ConfigError, match="preset"):
        run(_cfg(tmp_path, "multiscale", "d", params=dict(params, sides="nope")))
