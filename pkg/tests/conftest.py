import numpy as np
import pytest

from advgame import nnet
from advgame.data import make_gaussian_blobs
from advgame.defenses import Defense, PurifierParams
from advgame.transforms import TransformDistribution, TransformFamily

DIM, CLASSES = 6, 3


@pytest.fixture(scope="session")
def blobs():
    return make_gaussian_blobs(CLASSES, DIM, 60, 0.05, seed=3, offset=0.3)


@pytest.fixture(scope="session")
def trained(blobs):
    model = nnet.init_model("mlp1", DIM, CLASSES, 12, seed=1)
    return nnet.train_sgd(model, blobs, nnet.TrainConfig(0.3, 20, 16, seed=2))


@pytest.fixture(scope="session")
def inner(blobs):
    return nnet.train_sgd(nnet.init_model("linear", DIM, CLASSES, seed=4), blobs, nnet.TrainConfig(0.3, 10, 16, seed=5))


@pytest.fixture(scope="session")
def bart_dist():
    return TransformDistribution((
        TransformFamily("additiveNoise", 0.0, 0.05),
        TransformFamily("channelScale", 0.9, 1.1),
        TransformFamily("coordinateShift", -0.05, 0.05),
        TransformFamily("boxSmooth", 1, 3),
        TransformFamily("quantize", 8, 16)), 2)


@pytest.fixture(scope="session")
def defenses(trained, inner, bart_dist):
    return {
        "plain": Defense("plain", "Plain", trained),
        "fat": Defense("fat", "Fat", trained.copy()),
        "bart": Defense("bart", "BartLike", trained, transform_dist=bart_dist),
        "tit": Defense("tit", "TitLike", trained, inner=inner, purifier=PurifierParams(0.03, 0.01, 3, True)),
    }


def central_difference(f, x, h=1e-6):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[i] += h
        down[i] -= h
        g[i] = (f(up) - f(down)) / (2 * h)
    return g


def rel_error(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))))


def small_config(out, **game):
    """The reference pipeline shrunk to run in a few seconds."""
    from advgame.experiment import load_config, merge_config
    doc = {"dataset": {"per_class": 100, "test_per_class": 120},
           "game": merge_config({"matrix_samples": 50, "holdout_samples": 25, "probe_samples": 25,
                                 "selection_trials": 3, "selection_rate": 0.9, "diagnostic_trials": 3,
                                 "sweep_counts": [10, 25, 50]}, game),
           "output_dir": str(out)}
    import json
    path = out.parent / f"{out.name}.json"
    path.write_text(json.dumps(doc))
    return load_config(str(path))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
