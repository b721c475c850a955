import numpy as np

from advgame.rng import derive_seed, substream


def test_same_labels_same_stream():
    a = substream(42, "attack", "PGD(x)", 3).random(5)
    b = substream(42, "attack", "PGD(x)", 3).random(5)
    assert np.array_equal(a, b)


def test_labels_and_seeds_separate_streams():
    base = substream(42, "a", "b").random(4)
    assert not np.array_equal(base, substream(42, "ab").random(4))
    assert not np.array_equal(base, substream(43, "a", "b").random(4))
    assert not np.array_equal(base, substream(42, "b", "a").random(4))


def test_derive_seed_is_stable_int():
    s = derive_seed(7, "train", "plain")
    assert s == derive_seed(7, "train", "plain")
    assert 0 <= s < 2**63
