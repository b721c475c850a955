import json

import pytest

from advgame import cli

from conftest import small_config


@pytest.fixture(scope="module")
def cfg_path(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    small_config(base / "run")
    return base / "run.json", base / "run"


def test_game_plot_play_eval(cfg_path, capsys, tmp_path):
    path, out = cfg_path
    assert cli.main(["game", "--config", str(path), "--no-diagnostics"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["matrix_shape"] == [16, 10]
    assert (out / "figures" / "matrix_heatmap.png").exists()
    assert cli.main(["plot-data", "--config", str(path)]) == 0
    rows = (out / "plot_data.csv").read_text().splitlines()
    assert rows[0] == "strategy,attack,split,accuracy" and len(rows) == 1 + 2 * 160
    capsys.readouterr()
    q = tmp_path / "q.csv"
    q.write_text("\n".join(",".join(["0.3"] * 16) for _ in range(4)) + "\n")
    assert cli.main(["play", str(q), "--config", str(path)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "query,label,strategy" and len(lines) == 5
    assert cli.main(["--threads", "2", "eval", "--config", str(path)]) == 0


def test_seed_flag_changes_config_hash(cfg_path, capsys):
    path, _ = cfg_path
    # a different seed has no solution yet in this directory
    assert cli.main(["eval", "--config", str(path), "--seed", "999"]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_configuration_error_exit_code(tmp_path, capsys):
    assert cli.main(["game", "--config", str(tmp_path / "nope.json")]) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numerical_failure_exit_code(tmp_path):
    doc = {"defenses": [{"id": "p", "kind": "Plain", "model": {"arch": "linear"},
                         "train": {"learning_rate": float("inf"), "epochs": 2}}],
           "game": {"n": 1}, "output_dir": str(tmp_path / "o")}
    (tmp_path / "c.json").write_text(json.dumps(doc))
    assert cli.main(["train", "--config", str(tmp_path / "c.json")]) == 3


def test_parser_accepts_global_flags_on_either_side():
    p = cli.build_parser()
    a = p.parse_args(["--seed", "3", "game"])
    b = p.parse_args(["game", "--seed", "3"])
    assert a.seed == b.seed == 3 and a.threads == b.threads == 1
