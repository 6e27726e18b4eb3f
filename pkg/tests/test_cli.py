import json
from importlib import resources

import numpy as np
import pytest
import yaml

from resilient_gne import cli
from resilient_gne.config import ConfigError, load_config, load_preset, parse_config, with_overrides
from resilient_gne.dbrosa import InvariantCounts
from resilient_gne.metrics import COLUMNS, OracleError


def preset_dict(name="small_scale"):
    return yaml.safe_load(resources.files("resilient_gne.presets").joinpath(f"{name}.yaml").read_text())


def write_cfg(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


# loading -------------------------------------------------------------------------


def test_small_scale_preset():
    cfg = load_preset("small_scale")
    assert cfg.topology.cluster_sizes == [5, 5, 5]
    assert len(cfg.topology.byzantine) == 1
    assert (cfg.game.d, cfg.game.m) == (4, 4)
    assert cfg.attack.u["max_value"] == 10000 and cfg.attack.u["sign_flipping"] == -1


def test_large_scale_preset():
    cfg = load_preset("large_scale")
    assert cfg.topology.cluster_sizes == [20, 55, 25]
    assert len(cfg.topology.byzantine) == 10
    assert cfg.attack.u == {"gaussian": 5, "max_value": 100, "sign_flipping": -0.5, "sample_duplicating": -100}


def test_beta_eta_condition_rejected():
    data = preset_dict()
    data["schedule"]["beta"] = 0.2
    with pytest.raises(ConfigError, match="beta exponent"):
        parse_config(yaml.safe_dump(data))


def test_unknown_key_rejected():
    data = preset_dict()
    data["schedule"]["alpah"] = 1.0
    with pytest.raises(ConfigError, match="alpah"):
        parse_config(yaml.safe_dump(data))


def test_wrong_type_rejected():
    data = preset_dict()
    data["rounds"] = "many"
    with pytest.raises(ConfigError, match="integer"):
        parse_config(yaml.safe_dump(data))


def test_parse_error_has_line(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("name: x\ntopology: [1, 2\n")
    with pytest.raises(ConfigError, match="line"):
        load_config(p)


def test_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        load_config("/nonexistent/cfg.yaml")


def test_topology_errors_become_config_errors():
    data = preset_dict()
    data["topology"]["b_global"] = 5
    with pytest.raises(ConfigError, match="sum"):
        parse_config(yaml.safe_dump(data))


def test_overrides():
    cfg = with_overrides(load_preset("small_scale"), attack="SignFlipping", rounds=7, runs=2, seed=3)
    assert (cfg.attack.kind, cfg.rounds, cfg.monte_carlo_runs, cfg.base_seed) == ("sign_flipping", 7, 2, 3)
    with pytest.raises(ConfigError):
        with_overrides(cfg, attack="flood")
    with pytest.raises(ConfigError):
        with_overrides(cfg, rounds=0)


# command line -------------------------------------------------------------------


def test_validate_only(capsys):
    assert cli.main(["--preset", "large_scale", "--validate-only"]) == cli.EXIT_OK
    assert "large_scale: ok" in capsys.readouterr().out


def test_bad_attack_exit_code(capsys):
    assert cli.main(["--preset", "small_scale", "--attack", "flood", "--validate-only"]) == cli.EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_single_round_single_run(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["--preset", "small_scale", "--rounds", "1", "--runs", "1", "--out", str(out)])
    assert code == cli.EXIT_OK
    assert sorted(p.name for p in out.iterdir()) == ["mean.csv", "run_000.csv", "summary.json"]
    lines = (out / "run_000.csv").read_text().splitlines()
    assert lines[0] == ",".join(COLUMNS) and len(lines) == 2
    summary = json.loads((out / "summary.json").read_text())
    assert summary["slope_regret"] is None
    assert sum(summary["invariant_violations"].values()) == 0


def run_dir(tmp_path, name, workers, rounds=12, runs=3, attack="gaussian"):
    cfg = with_overrides(load_preset("small_scale"), attack=attack, rounds=rounds, runs=runs, seed=4, out=tmp_path / name)
    code, summary = cli.run_batch(cfg, workers=workers)
    assert code == cli.EXIT_OK
    return tmp_path / name, summary


def test_determinism_across_repeats_and_workers(tmp_path):
    a, _ = run_dir(tmp_path, "a", 1)
    b, _ = run_dir(tmp_path, "b", 1)
    c, _ = run_dir(tmp_path, "c", 4)
    for f in ("run_000.csv", "run_001.csv", "run_002.csv", "mean.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes() == (c / f).read_bytes()


def test_mean_csv_is_column_mean(tmp_path):
    d, summary = run_dir(tmp_path, "m", 1)
    runs = [np.loadtxt(d / f"run_{k:03d}.csv", delimiter=",", skiprows=1) for k in range(3)]
    mean = np.loadtxt(d / "mean.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(mean, np.mean(runs, axis=0), rtol=1e-11, atol=1e-300)
    assert len(summary["final_consensus_diameter"]) == 3
    assert summary["oracle_max_residual"] <= 1e-9
    assert summary["config"]["rounds"] == 12


def test_invariant_violation_exit_code(tmp_path, monkeypatch):
    real = cli.run_simulation

    def flagged(*a, **k):
        real(*a, **k)
        return InvariantCounts(infeasible=1)

    monkeypatch.setattr(cli, "run_simulation", flagged)
    assert cli.main(["--preset", "small_scale", "--rounds", "2", "--runs", "1", "--out", str(tmp_path)]) == cli.EXIT_INVARIANT


def test_runtime_failure_exit_code(tmp_path, monkeypatch):
    def fail(*a, **k):
        raise OracleError("no convergence", 1.0)

    monkeypatch.setattr(cli, "solve_path", fail)
    assert cli.main(["--preset", "small_scale", "--rounds", "2", "--runs", "1", "--out", str(tmp_path)]) == cli.EXIT_RUNTIME


def test_config_file_round_trip(tmp_path):
    data = preset_dict()
    data["rounds"], data["monte_carlo_runs"] = 3, 1
    data["output"]["dir"] = str(tmp_path / "o")
    p = write_cfg(tmp_path, data)
    assert cli.main(["--config", str(p)]) == cli.EXIT_OK
    assert (tmp_path / "o" / "mean.csv").exists()
