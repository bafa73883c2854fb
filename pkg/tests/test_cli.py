from __future__ import annotations

import json

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from misspec_lab.cli import EXIT_CONFIG, EXIT_RUNTIME, cli

SMALL = {
    "design": '[design]\ngenerator = "gaussian"\nk = 40\nd = 3\ninstances = 2\n',
    "bandit": "[bandit]\nn_grid = [300]\nk = 10\nd = 2\nseeds = 2\n",
    "rl": "[rl]\nS = 3\nA = 2\nd = 4\ngamma = 0.5\nk = 2\nm = 3\nn = 5\npropagation_check = true\n",
    "query": (
        "[query]\nneedle_ks = [3]\ntrials = 200\nlambda_instances = 1\nlambda_k = 6\n"
        "lambda_d = 2\nlambda_qs = [2]\ndesign_trials = 5\ndesign_k = 30\ndesign_d = 3\n"
    ),
    "hardness": "[hardness]\nd_grid = [9]\nratio_grid = [1.0]\njl_k = 10\n",
}

EXPECTED_TABLES = {
    "design": ["design.csv", "certificate.csv"],
    "bandit": ["summary.csv", "regret_table.csv"],
    "rl": ["iterations.csv", "value_gap.csv", "samples.csv"],
    "query": ["needle_queries.csv", "lambda_q.csv", "design_errors.csv"],
    "hardness": ["hardness.csv", "jl_instance.csv", "embeddings.csv"],
}


def _config(tmp_path, text: str, name: str = "config.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _invoke(*args: str):
    return CliRunner().invoke(cli, list(args), catch_exceptions=False)


@pytest.mark.parametrize("command", sorted(SMALL))
def test_small_runs_write_their_tables(tmp_path, command):
    out = tmp_path / "out"
    result = _invoke(command, "--config", _config(tmp_path, SMALL[command]), "--out", str(out), "--no-plots")
    assert result.exit_code == 0, result.output
    for name in EXPECTED_TABLES[command]:
        assert (out / name).is_file(), name
    assert (out / "config.json").is_file()
    assert (out / "run.json").is_file()
    assert not list(out.glob("*.png"))


def test_identity_design_is_uniform(tmp_path):
    out = tmp_path / "out"
    cfg = _config(tmp_path, '[design]\ngenerator = "identity"\nd = 4\n')
    result = _invoke("design", "--config", cfg, "--out", str(out), "--no-plots")
    assert result.exit_code == 0, result.output
    design = pd.read_csv(out / "design.csv")
    assert design["row_index"].tolist() == [0, 1, 2, 3]
    assert np.allclose(design["weight"], 0.25)
    cert = pd.read_csv(out / "certificate.csv")
    assert cert["g_value"].iloc[0] == pytest.approx(4.0)
    assert bool(cert["kw_optimal"].iloc[0])


def test_reruns_are_byte_identical(tmp_path):
    cfg = _config(tmp_path, SMALL["bandit"])
    a, b = tmp_path / "a", tmp_path / "b"
    assert _invoke("bandit", "--config", cfg, "--out", str(a), "--no-plots", "--seed", "7").exit_code == 0
    assert _invoke("bandit", "--config", cfg, "--out", str(b), "--no-plots", "--seed", "7", "-j", "2").exit_code == 0
    for name in ["summary.csv", "regret_table.csv"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    traces = sorted(p.name for p in (a / "traces").iterdir())
    assert traces
    for name in traces:
        assert (a / "traces" / name).read_bytes() == (b / "traces" / name).read_bytes()


def test_seed_changes_results(tmp_path):
    cfg = _config(tmp_path, SMALL["bandit"])
    a, b = tmp_path / "a", tmp_path / "b"
    _invoke("bandit", "--config", cfg, "--out", str(a), "--no-plots", "--seed", "1")
    _invoke("bandit", "--config", cfg, "--out", str(b), "--no-plots", "--seed", "2")
    assert (a / "summary.csv").read_bytes() != (b / "summary.csv").read_bytes()


def test_echoed_config_replays_the_run(tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    cfg = _config(tmp_path, SMALL["query"])
    assert _invoke("query", "--config", cfg, "--out", str(first), "--no-plots").exit_code == 0
    echoed = json.loads((first / "config.json").read_text())
    assert echoed["query"]["trials"] == 200
    assert "out_dir" not in echoed["query"]
    replay = _invoke("query", "--config", str(first / "config.json"), "--out", str(second))
    assert replay.exit_code == 0, replay.output
    for name in EXPECTED_TABLES["query"]:
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_failure_preset(tmp_path):
    out = tmp_path / "out"
    cfg = _config(tmp_path, '[bandit]\npreset = "failure"\nn_grid = [400]\nepsilon_grid = [0.5]\n')
    result = _invoke("bandit", "--config", cfg, "--out", str(out), "--no-plots")
    assert result.exit_code == 0, result.output
    summary = pd.read_csv(out / "summary.csv")
    assert sorted(summary["algo"]) == ["linucb", "linucb_modified"]
    assert (summary["status"] == "ok").all()


@pytest.mark.parametrize(
    "extra, source, used",
    [
        ('features = "tabular"\n', "floor", 0.05),
        ("epsilon = 0.2\n", "config", 0.2),
    ],
)
def test_rl_table_separates_measured_and_used_epsilon(tmp_path, extra, source, used):
    out = tmp_path / "out"
    cfg = _config(tmp_path, "[rl]\nS = 3\nA = 2\nd = 4\ngamma = 0.5\nk = 2\nm = 3\nn = 5\n" + extra)
    result = _invoke("rl", "--config", cfg, "--out", str(out), "--no-plots")
    assert result.exit_code == 0, result.output
    row = pd.read_csv(out / "value_gap.csv").iloc[0]
    assert row["epsilon_source"] == source
    assert row["epsilon_used"] == pytest.approx(used)
    if source == "floor":
        assert row["measured_epsilon"] == 0.0
    assert row["delta"] == pytest.approx(3 * used * np.sqrt(2 * row["d"]) + used)


def test_preset_option_overrides_the_file(tmp_path):
    out = tmp_path / "out"
    cfg = _config(tmp_path, "[bandit]\nn_grid = [200]\nepsilon_grid = [0.1]\nseeds = 1\n")
    result = _invoke("bandit", "--config", cfg, "--preset", "lower_bound", "--out", str(out), "--no-plots")
    assert result.exit_code == 0, result.output
    echoed = json.loads((out / "config.json").read_text())["bandit"]
    assert echoed["preset"] == "lower_bound"
    assert (echoed["k"], echoed["d"]) == (100, 40)
    assert 8 * np.log(echoed["k"]) < echoed["d"] - 1


@pytest.mark.parametrize(
    "command, text",
    [
        ("bandit", "[bandit]\nn_grid = []\n"),
        ("bandit", '[bandit]\npreset = "failure"\nn_grid = [301]\nepsilon_grid = [0.5]\n'),
        ("bandit", '[bandit]\npreset = "lower_bound"\nk = 20\nd = 4\n'),
        ("rl", "[rl]\ngamma = 1.5\n"),
        ("rl", "[rl]\nS = 2\nA = 2\nd = 9\n"),
        ("design", "[design]\nk = 3\nd = 5\n"),
        ("design", "[design]\nbogus = 1\n"),
        ("hardness", "[hardness]\nratio_grid = [2.0]\n"),
    ],
)
def test_invalid_configs_exit_with_config_code(tmp_path, command, text):
    out = tmp_path / "out"
    result = _invoke(command, "--config", _config(tmp_path, text), "--out", str(out))
    assert result.exit_code == EXIT_CONFIG
    assert "Error" in result.output
    assert not out.exists()


def test_missing_config_file(tmp_path):
    result = _invoke("design", "--config", str(tmp_path / "nope.toml"))
    assert result.exit_code == EXIT_CONFIG


def test_config_without_section(tmp_path):
    result = _invoke("rl", "--config", _config(tmp_path, "[design]\nd = 3\n"))
    assert result.exit_code == EXIT_CONFIG


def test_runtime_failure_exit_code(tmp_path):
    cfg = _config(tmp_path, f'[design]\ngenerator = "file"\npath = "{tmp_path / "missing.csv"}"\n')
    result = _invoke("design", "--config", cfg, "--out", str(tmp_path / "out"), "--no-plots")
    assert result.exit_code == EXIT_RUNTIME


def test_default_out_dir_uses_environment(tmp_path):
    result = _invoke("hardness", "--config", _config(tmp_path, SMALL["hardness"]), "--no-plots", "--seed", "3")
    assert result.exit_code == 0, result.output
    runs = list((tmp_path / "runs").glob("hardness-seed3-*"))
    assert len(runs) == 1
    assert (runs[0] / "hardness.csv").is_file()
