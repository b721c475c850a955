import json

import numpy as np
import pytest

from advgame import artifacts as art
from advgame import experiment as ex
from advgame.errors import ConfigurationError
from advgame.game import sample_strategy

from conftest import small_config


@pytest.fixture(scope="module")
def game_run(tmp_path_factory):
    cfg = small_config(tmp_path_factory.mktemp("g") / "run")
    return cfg, ex.run_game(cfg, threads=1)


def test_shape_and_guarantees(game_run):
    cfg, result = game_run
    out = ex.Path(cfg["output_dir"])
    sids, aids, R = art.read_payoff_csv(out / "payoff_matrix.csv")
    assert R.shape == (16, 10)
    sol = json.loads((out / "solution.json").read_text())
    assert sol["value"] >= R.min(axis=1).max() - 1e-7
    assert sol["value"] >= R.mean(axis=0).min() - 1e-7
    assert abs(sol["value"] - sol["value_dual"]) <= 1e-7
    assert result["report"]["constraint_violations"] == 0


def test_splits_disjoint_and_balanced(game_run):
    cfg, result = game_run
    run = result["run"]
    m, h, p = set(run.matrix_idx), set(run.holdout_idx), set(run.probe_idx)
    assert not (m & h) and not (m & p) and not (h & p)
    for idx, n in ((run.matrix_idx, 10), (run.holdout_idx, 5), (run.probe_idx, 5)):
        assert np.bincount(run.test.labels[idx], minlength=5).tolist() == [n] * 5


def test_persisted_artifacts_reproduce_downstream_numbers(game_run):
    cfg, result = game_run
    run = ex.Run(cfg)
    run.train_defenses()
    run.select_samples()
    run.craft_batches()
    mb, _ = run.split_batches()
    again = ex.build_payoff_matrix(run.strategies(), [s.id for s in run.roster], mb, run.defenses, run.seed)
    assert np.array_equal(again.values, result["matrix"].values)


def test_rerun_and_threads_are_byte_identical(game_run, tmp_path):
    cfg, _ = game_run
    other = small_config(tmp_path / "again")
    ex.run_game(other, threads=3, diagnostics=False)
    for name in ("payoff_matrix.csv", "solution.json", "holdout_matrix.csv", "defenses.json"):
        a = (ex.Path(cfg["output_dir"]) / name).read_bytes()
        b = (tmp_path / "again" / name).read_bytes()
        assert a == b, name


def test_sweep_full_count_matches_game(game_run):
    cfg, result = game_run
    doc = ex.run_sample_sweep(cfg)
    full = [r for r in doc["rows"] if r["N"] == 50][0]
    assert full["value"] == result["solution"].value_primal
    assert all(0 <= r["gap"] <= 1 for r in doc["rows"])
    assert [r["N"] for r in doc["rows"]] == [10, 25, 50]


def test_transferability_matrix(game_run):
    cfg, result = game_run
    doc = result["transfer"]
    M = np.array(doc["matrix"])
    assert M.shape == (4, 4) and M.min() >= 0 and M.max() <= 1
    assert set(doc["best_attack"]) == {"plain", "fat", "bart", "tit"}
    assert doc["best_attack"]["bart"]["algorithm"] == "MIME"


def test_play_frequencies_and_determinism(game_run):
    cfg, result = game_run
    out = ex.Path(cfg["output_dir"])
    queries = np.full((10000, 16), 0.3)
    labels, chosen = ex.play(out / "solution.json", out / "defenses.json", queries, seed=5)
    lam = result["solution"].lambda_d
    ids = result["matrix"].strategy_ids
    freq = np.array([chosen.count(s) for s in ids]) / len(chosen)
    assert np.abs(freq - art.solution_from_dict(art.read_json(out / "solution.json")).lambda_d).max() < 0.02
    again, _ = ex.play(out / "solution.json", out / "defenses.json", queries[:50], seed=5)
    assert np.array_equal(again, ex.play(out / "solution.json", out / "defenses.json", queries[:50], seed=5)[0])
    assert lam.sum() == pytest.approx(1.0)


def test_play_refuses_mismatched_defenses(game_run, tmp_path):
    cfg, _ = game_run
    out = ex.Path(cfg["output_dir"])
    doc = art.read_json(out / "defenses.json")
    doc["defenses"][0]["primary"]["layers"][0]["bias"][0] += 1e-3
    art.write_json(tmp_path / "tampered.json", doc)
    with pytest.raises(ConfigurationError, match="refusing"):
        ex.play(out / "solution.json", tmp_path / "tampered.json", np.full((2, 16), 0.3), 0)


def test_stage_failure_keeps_partial_artifacts(tmp_path):
    cfg = small_config(tmp_path / "bad", selection_rate=1.0, selection_trials=50)
    cfg["game"]["matrix_samples"] = 500
    cfg["game"]["holdout_samples"] = 50
    cfg["game"]["probe_samples"] = 0
    with pytest.raises(ConfigurationError, match=r"^\[select\]"):
        ex.run_game(cfg)
    failure = json.loads((tmp_path / "bad" / "failure.json").read_text())
    assert failure["stage"] == "select"
    assert (tmp_path / "bad" / "defenses.json").exists()


def test_config_validation(tmp_path):
    with pytest.raises(ConfigurationError):
        small_config(tmp_path / "c", n=9)
    with pytest.raises(ConfigurationError):
        small_config(tmp_path / "c", matrix_samples=51)
    with pytest.raises(ConfigurationError):
        ex.load_config(str(tmp_path / "missing.json"))


def test_attack_params_follow_global_epsilon():
    cfg = ex.merge_config(ex.DEFAULT_CONFIG, {"attacks": {"epsilon": 0.062, "overrides": {"PGD": {"steps": 3}}}})
    p = ex.attack_params(cfg)
    assert p["PGD"].epsilon == 0.062 and p["PGD"].steps == 3
    assert p["PGD"].step_size == pytest.approx(0.0062)
    assert p["FGSM"].step_size == 0.062


def test_sample_strategy_uses_cdf_order():
    assert sample_strategy(np.array([0.25, 0.75]), np.random.default_rng(0)) in (0, 1)
