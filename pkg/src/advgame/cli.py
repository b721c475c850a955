"""Command-line entry point: ``advgame <subcommand> [--config F] [--seed S] [--out D] [--threads K]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import experiment as ex
from .errors import ConfigurationError, NumericalFailure

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _global_flags(parser, suppress: bool):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=default(None), help="JSON config merged over the reference defaults")
    parser.add_argument("--seed", type=int, default=default(None), help="root seed (overrides the config)")
    parser.add_argument("--out", default=default(None), help="run directory (overrides the config)")
    parser.add_argument("--threads", type=int, default=default(1), help="worker threads for attacks and payoffs")
    parser.add_argument("-v", "--verbose", action="store_true", default=default(False))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="advgame", description="Adversarial defense/attack game harness")
    _global_flags(p, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("train", parents=[common], help="train the configured defenses")
    sub.add_parser("attack", parents=[common], help="select samples and craft every roster attack")
    sub.add_parser("transfer", parents=[common], help="transferability matrix of best per-defense attacks")
    g = sub.add_parser("game", parents=[common], help="full pipeline: payoff matrix, LP solution, holdout eval")
    g.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    g.add_argument("--no-diagnostics", action="store_true", help="skip the attack-strength comparisons")
    s = sub.add_parser("sweep", parents=[common], help="re-solve the game for several matrix sample counts")
    s.add_argument("--counts", type=int, nargs="+", help="sample counts (default: from the config)")
    s.add_argument("--no-figures", action="store_true")
    sub.add_parser("eval", parents=[common], help="re-evaluate the persisted solution on the holdout split")
    pl = sub.add_parser("play", parents=[common], help="label queries with a sampled defender strategy each")
    pl.add_argument("inputs", help="CSV of query inputs, one row per query")
    pl.add_argument("--solution", help="solution JSON (default: <out>/solution.json)")
    pl.add_argument("--defenses", help="defenses JSON (default: <out>/defenses.json)")
    pl.add_argument("--output", help="write predictions here instead of stdout")
    sub.add_parser("plot-data", parents=[common], help="tidy payoff CSV plus figures for a finished run")
    return p


def _summary(doc):
    print(json.dumps(doc, indent=1, sort_keys=True, default=str))


def dispatch(args) -> int:
    config = ex.load_config(args.config, args.seed, args.out)
    out = Path(config["output_dir"])
    cmd = args.command
    if cmd == "train":
        run = ex.Run(config, args.threads)
        out.mkdir(parents=True, exist_ok=True)
        run.train_defenses()
        _summary(ex.art.read_json(out / "defenses.json")["clean_accuracy"])
    elif cmd == "attack":
        run = ex.Run(config, args.threads)
        out.mkdir(parents=True, exist_ok=True)
        run.craft_batches()
        _summary(ex.art.read_json(out / "attacks.json")["violations"])
    elif cmd == "transfer":
        run = ex.Run(config, args.threads)
        out.mkdir(parents=True, exist_ok=True)
        run.train_defenses()
        doc = ex.run_transferability(run)
        _summary({k: doc[k] for k in ("defenses", "matrix", "mean_off_diagonal", "diagonal_violations")})
    elif cmd == "game":
        result = ex.run_game(config, args.threads, diagnostics=not args.no_diagnostics)
        if not args.no_figures:
            from .plotting import write_plot_data
            write_plot_data(out)
        rep = dict(result["report"])
        rep.pop("timings", None)
        _summary(rep)
    elif cmd == "sweep":
        doc = ex.run_sample_sweep(config, args.counts, args.threads)
        if not args.no_figures:
            from .plotting import write_plot_data
            write_plot_data(out)
        _summary({"mean_gap": doc["mean_gap"], "reference_gap": doc["reference_gap"],
                  "rows": [{k: r[k] for k in ("N", "value", "holdout_minimum", "gap")} for r in doc["rows"]]})
    elif cmd == "eval":
        ev = ex.run_eval(config, args.threads)
        _summary({k: ev[k] for k in ("value", "minimum", "worst_attack", "gap", "per_attack")})
    elif cmd == "play":
        inputs = ex.load_inputs_csv(args.inputs)
        labels, chosen = ex.play(args.solution or out / "solution.json", args.defenses or out / "defenses.json",
                                 inputs, config["seed"])
        fh = open(args.output, "w", newline="") if args.output else sys.stdout
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["query", "label", "strategy"])
            for i, (lab, sid) in enumerate(zip(labels, chosen)):
                w.writerow([i, int(lab), sid])
        finally:
            if args.output:
                fh.close()
    elif cmd == "plot-data":
        from .plotting import write_plot_data
        for path in write_plot_data(out):
            print(path)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
