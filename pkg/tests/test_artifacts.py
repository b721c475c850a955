import numpy as np

from advgame import artifacts as art
from advgame.attacks import DEFAULT_PARAMS, AttackSpec
from advgame.defenses import predict
from advgame.game import AdversarialBatch, PayoffMatrix
from advgame.lp import solve_game


def test_defense_round_trip(tmp_path, defenses, blobs):
    for d in defenses.values():
        back = art.defense_from_dict(art.read_json(art.write_json(tmp_path / "d.json", art.defense_to_dict(d))))
        rng_a, rng_b = np.random.default_rng(0), np.random.default_rng(0)
        assert np.array_equal(predict(d, blobs.inputs, rng_a), predict(back, blobs.inputs, rng_b))


def test_batch_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.random((4, 3))
    b = AdversarialBatch(X, np.clip(X + 0.01, 0, 1), np.array([0, 1, 0, 1]), "PGD(x)", 0.031, {"k": 1})
    doc = art.batch_to_dict(b, AttackSpec("PGD", ("x",), DEFAULT_PARAMS["PGD"]))
    assert doc["epsilon_audit"]["max_linf"] <= 0.01 + 1e-15
    back = art.batch_from_dict(art.read_json(art.write_json(tmp_path / "b.json", doc)))
    assert np.array_equal(back.perturbed, b.perturbed) and np.array_equal(back.labels, b.labels)


def test_payoff_csv_round_trip_is_bit_exact(tmp_path):
    R = np.random.default_rng(1).random((3, 2)) / 3
    m = PayoffMatrix(["a", "hard(a+b)", "soft(a+b)"], ["X(a)", "Y(a,b)"], R, 7)
    sids, aids, values = art.read_payoff_csv(art.write_payoff_csv(tmp_path / "m.csv", m))
    assert sids == m.strategy_ids and aids == m.attack_ids
    assert np.array_equal(values, R)
    assert art.payoff_from_dict(art.payoff_to_dict(m)).values.tolist() == R.tolist()


def test_solution_round_trip_drops_negligible_mass(tmp_path):
    R = np.array([[0.8, 0.2], [0.3, 0.7], [0.1, 0.1]])
    sol = solve_game(R)
    sol.strategy_ids, sol.attack_ids = ["a", "b", "c"], ["x", "y"]
    doc = art.read_json(art.write_json(tmp_path / "s.json", art.solution_to_dict(sol)))
    assert "c" not in doc["defender"]
    back = art.solution_from_dict(doc)
    assert np.allclose(back.lambda_d, sol.lambda_d, atol=1e-12)
    assert back.value_primal == sol.value_primal


def test_digest_is_key_order_independent():
    assert art.digest({"a": 1, "b": [1.5]}) == art.digest({"b": [1.5], "a": 1})
