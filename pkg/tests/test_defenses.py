import numpy as np
import pytest

from advgame import nnet
from advgame.defenses import (Defense, PurifierParams, build_tit, clean_accuracy, correct_counts,
                              defense_loss_gradient, predict, purify)
from advgame.errors import ConfigurationError
from advgame.nnet import Dataset, TrainConfig


def test_randomization_flags(defenses, trained, inner):
    assert not defenses["plain"].is_randomized and not defenses["fat"].is_randomized
    assert defenses["bart"].is_randomized and defenses["tit"].is_randomized
    fixed = Defense("t0", "TitLike", trained, inner=inner, purifier=PurifierParams(0.03, 0.01, 3, False))
    assert not fixed.is_randomized
    predict(fixed, np.full(6, 0.5))  # no generator needed


def test_stochastic_defense_requires_generator(defenses):
    with pytest.raises(ValueError):
        predict(defenses["bart"], np.full(6, 0.5))


def test_plain_prediction_matches_model(defenses, trained, blobs):
    assert np.array_equal(predict(defenses["plain"], blobs.inputs), nnet.predict(trained, blobs.inputs))


def test_purifier_respects_budget(defenses, blobs):
    X = blobs.inputs[:40]
    out = purify(defenses["tit"], X, np.random.default_rng(0))
    assert np.abs(out - X).max() <= 0.03 + 1e-12
    assert out.min() >= 0 and out.max() <= 1


def test_two_model_gradient_passes_straight_through(defenses, trained, blobs):
    X, y = blobs.inputs[:5], blobs.labels[:5]
    d = defenses["tit"]
    _, g = defense_loss_gradient(d, X, y, n_mc=3, rng=np.random.default_rng(1))
    rng = np.random.default_rng(1)
    expect = sum(nnet.loss_and_input_gradient(trained, purify(d, X, rng), y)[1] for _ in range(3)) / 3
    assert np.allclose(g, expect, atol=1e-15)


def test_deterministic_gradient_is_exact(defenses, trained, blobs):
    X, y = blobs.inputs[:5], blobs.labels[:5]
    assert np.array_equal(defense_loss_gradient(defenses["fat"], X, y)[1],
                          nnet.loss_and_input_gradient(trained, X, y)[1])


def test_majority_vote_clean_accuracy():
    m = nnet.init_model("linear", 2, 2, seed=0)
    m.weights[0][:] = [[1, -1], [-1, 1]]
    d = Defense("p", "Plain", m)
    data = Dataset(np.array([[0.9, 0.1], [0.1, 0.9], [0.9, 0.2]]), np.array([0, 1, 1]), 2)
    assert clean_accuracy(d, data, trials=5) == pytest.approx(2 / 3)
    assert list(correct_counts(d, data, 5, None)) == [5, 5, 0]


def test_build_tit_trains_outer_on_purified_inputs(blobs, inner):
    outer = nnet.init_model("mlp1", blobs.input_dim, 3, 8, seed=0)
    d = build_tit("t", inner, outer, PurifierParams(0.02, 0.01, 2, True), blobs, TrainConfig(0.3, 15, 16, 1),
                  np.random.default_rng(0))
    assert d.kind == "TitLike" and d.inner is inner
    assert clean_accuracy(d, blobs, 3, np.random.default_rng(1)) > 0.8


def test_missing_components_rejected(trained):
    with pytest.raises(ConfigurationError):
        Defense("b", "BartLike", trained)
    with pytest.raises(ConfigurationError):
        Defense("t", "TitLike", trained)
