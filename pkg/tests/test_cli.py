import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from relnet.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data, indent=2))
    return path


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json")))
def test_sample_configs_validate(name, capsys):
    assert main(["validate", "--config", str(CONFIGS / name)]) == EXIT_OK
    assert "ok" in capsys.readouterr().out


def test_missing_path_list_names_field(tmp_path, capsys):
    cfg = {
        "experiment": "repair-correlations",
        "topologies": {"t": {"kind": "explicit", "components": ["a", "b"]}},
        "systems": [{"topology": "t", "N": 1}],
        "tau": 3,
        "p_down_grid": [0.5],
    }
    assert main(["validate", "--config", str(write(tmp_path, cfg))]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "topologies.t.paths" in err and "missing" in err


def test_initial_distribution_sum_reported(tmp_path, capsys):
    cfg = {
        "experiment": "reliability-curves",
        "systems": ["netherlands"],
        "models": {"x": {"N": 2, "k": 1.0, "initial": {"kind": "explicit", "q": [0.1, 0.2, 0.3]}}},
        "time_grid": [0, 1],
    }
    path = write(tmp_path, cfg)
    assert main(["validate", "--config", str(path)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "models.x.initial.q" in err and "0.6" in err
    line = next(i for i, s in enumerate(path.read_text().splitlines(), 1) if '"q"' in s)
    assert f"line {line}" in err


def test_json_syntax_error_has_line(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "experiment": "key-rates",\n  "seed": 1,,\n}')
    assert main(["validate", "--config", str(path)]) == EXIT_CONFIG
    assert "line 3" in capsys.readouterr().err


def test_unsorted_grid_rejected(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "repair_correlations.json").read_text())
    cfg["p_down_grid"] = [0.3, 0.2]
    assert main(["validate", "--config", str(write(tmp_path, cfg))]) == EXIT_CONFIG
    assert "p_down_grid" in capsys.readouterr().err


def test_stochastic_experiment_needs_seed(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "key_rates.json").read_text())
    del cfg["seed"]
    assert main(["validate", "--config", str(write(tmp_path, cfg))]) == EXIT_CONFIG
    assert "seed" in capsys.readouterr().err


def test_experiment_mismatch(tmp_path):
    out = tmp_path / "out"
    assert main(["key-rates", "--config", str(CONFIGS / "match_multiplicity.json"), "--out", str(out)]) == EXIT_CONFIG


def test_numerical_failure_exit_code(tmp_path):
    cfg = {
        "experiment": "match-multiplicity",
        "reference": {"M": 2, "N": 3, "k": 0.5},
        "p_grid": [0.5],
        "mu_prime_grid": [50.0],
        "max_multiplicity": 8,
    }
    out = tmp_path / "out"
    assert main(["match-multiplicity", "--config", str(write(tmp_path, cfg)), "--out", str(out)]) == EXIT_NUMERICAL


def small_key_rate_config(tmp_path):
    cfg = json.loads((CONFIGS / "key_rates.json").read_text())
    cfg["protocol"]["samples"] = 3000
    cfg["protocol"]["t_cut_grid"] = {"max": 400, "points": 12}
    return write(tmp_path, cfg, "kr.json")


def test_key_rates_outputs(tmp_path):
    out = tmp_path / "out"
    assert main(["key-rates", "--config", str(small_key_rate_config(tmp_path)), "--out", str(out), "-q"]) == 0
    configs = rows(out / "key_rates_configurations.csv")
    assert configs[0][:4] == ["system", "class_size", "configuration", "t_cut"]
    labels = {(r[0], r[2]) for r in configs[1:]}
    assert sum(1 for s, _ in labels if s == "netherlands") == 5
    assert sum(1 for s, _ in labels if s == "chain6") == 28
    assert len(configs) - 1 == (5 + 28) * 12
    average = rows(out / "key_rates_average.csv")
    assert {r[1] for r in average[1:]} == {"unconditional", "conditioned-functional", "conditioned-broken"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["files"]) == {p.name for p in out.glob("*.csv")}
    assert manifest["seed"] == 11 and manifest["samples"] == 3000


def test_rerun_is_byte_identical(tmp_path):
    cfg = small_key_rate_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["key-rates", "--config", str(cfg), "--out", str(a), "-q"]) == 0
    assert main(["key-rates", "--config", str(cfg), "--out", str(b), "-q", "--threads", "3"]) == 0
    for f in a.glob("*.csv"):
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_seed_override_changes_samples(tmp_path):
    cfg = small_key_rate_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    main(["key-rates", "--config", str(cfg), "--out", str(a), "-q"])
    main(["key-rates", "--config", str(cfg), "--out", str(b), "-q", "--seed", "99"])
    assert (a / "key_rates_average.csv").read_bytes() != (b / "key_rates_average.csv").read_bytes()


def test_reliability_curves(tmp_path):
    out = tmp_path / "out"
    assert main(["reliability-curves", "--config", str(CONFIGS / "reliability_curves.json"), "--out", str(out), "-q"]) == 0
    data = rows(out / "reliability.csv")
    assert len(data) - 1 == 2 * 2 * 101
    S = {(r[0], r[1], float(r[2])): float(r[3]) for r in data[1:]}
    assert S[("chain6", "a", 0.0)] == 1.0
    assert S[("chain6", "b", 0.0)] < 1.0 and S[("netherlands", "b", 0.0)] < 1.0
    # the network keeps more end-to-end paths than the chain
    assert all(S[("netherlands", m, t)] >= S[("chain6", m, t)] for (_, m, t) in S)
    assert len(rows(out / "reference_curves.csv")) - 1 == 2 * 101


def test_repair_correlations_with_monte_carlo(tmp_path):
    cfg = json.loads((CONFIGS / "repair_correlations.json").read_text())
    cfg["p_down_grid"] = {"start": 0.1, "stop": 0.9, "num": 5}
    cfg["monte_carlo"] = {"windows": 20000, "shards": 10, "p_down": [0.2]}
    out = tmp_path / "out"
    assert main(["repair-correlations", "--config", str(write(tmp_path, cfg)), "--out", str(out), "-q"]) == 0
    assert len(rows(out / "repair_correlations.csv")) - 1 == 2 * 5
    mc = rows(out / "repair_monte_carlo.csv")
    assert len(mc) - 1 == 2 * 8


def test_output_directory_from_environment(tmp_path, monkeypatch):
    cfg = json.loads((CONFIGS / "match_multiplicity.json").read_text())
    cfg["p_grid"] = [0.5, 1.0]
    cfg["mu_prime_grid"] = [0.5]
    monkeypatch.setenv("RELNET_OUT", str(tmp_path / "env_out"))
    assert main(["match-multiplicity", "--config", str(write(tmp_path, cfg)), "-q"]) == 0
    data = rows(tmp_path / "env_out" / "match_multiplicity.csv")
    assert len(data) - 1 == 2 * 1 * 3
    perfect = [r for r in data[1:] if r[0] == "1" and r[2] == "mttf"]
    assert perfect[0][3] == "3"


def test_console_entry_point(tmp_path):
    result = subprocess.run(
        [sys.executable, "-m", "relnet.cli", "validate", "--config", str(CONFIGS / "key_rates.json")],
        capture_output=True, text=True,
    )
    assert result.returncode == 0, result.stderr
