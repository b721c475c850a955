"""End-to-end experiment driver.

The pipeline is: data -> train defenses -> select evaluation samples ->
attack roster -> adversarial batches -> defender strategies -> payoff matrix
-> defender/attacker LPs -> holdout evaluation.  Every stage writes its
artifacts under the run directory as it finishes, so a failure late in the
run still leaves the earlier results on disk.

All randomness comes from ``config["seed"]`` through labeled substreams.
"""
from __future__ import annotations

import copy
import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import artifacts as art
from . import nnet
from .attacks import DEFAULT_PARAMS, AttackParams, AttackSpec, linf_violations, run_attack
from .data import balanced_split, load_csv_dataset, make_gaussian_blobs, select_eval_samples
from .defenses import Defense, PurifierParams, build_tit, clean_accuracy, predict
from .errors import ConfigurationError, NumericalFailure
from .game import (AdversarialBatch, DefenderStrategy, build_payoff_matrix, enumerate_attacker_strategies,
                   enumerate_defender_strategies, evaluate_ensemble, mixed_correct, sample_strategy)
from .lp import OPTIMAL, GameSolution, solve_game, verify_equilibrium
from .nnet import Dataset, FatConfig, TrainConfig
from .rng import derive_seed, substream
from .transforms import TransformDistribution, make_augmenter

log = logging.getLogger(__name__)

REFERENCE_SAMPLE_GAP = 0.0173  # published mean |r* - holdout minimum| across sample counts

_MODEL = {"arch": "mlp1", "hidden": 32}
_TRAIN = {"learning_rate": 0.05, "epochs": 120, "batch_size": 32}

DEFAULT_CONFIG = {
    "seed": 42,
    "dataset": {"source": "blobs", "classes": 5, "input_dim": 16, "per_class": 400, "test_per_class": 1000,
                "spread": 0.03, "offset": 0.12, "base": 0.3, "csv_train": None, "csv_test": None},
    "defenses": [
        {"id": "plain", "kind": "Plain", "model": _MODEL, "train": _TRAIN},
        {"id": "fat", "kind": "Fat", "model": _MODEL, "train": _TRAIN,
         "fat": {"K": 7, "tau": 1, "epsilon": 0.031, "step_size": 0.00775}},
        {"id": "bart", "kind": "BartLike", "model": _MODEL, "train": _TRAIN,
         "transforms": {"n": 2, "families": [
             {"kind": "additiveNoise", "range": [0.0, 0.02]},
             {"kind": "channelScale", "range": [0.97, 1.03]},
             {"kind": "coordinateShift", "range": [-0.02, 0.02]},
             {"kind": "boxSmooth", "range": [1, 2]},
             {"kind": "quantize", "range": [32, 64]}]}},
        {"id": "tit", "kind": "TitLike", "model": _MODEL, "inner_model": {"arch": "linear"}, "train": _TRAIN,
         "purifier": {"epsilon": 0.03, "step_size": 0.01, "steps": 5, "random_start": True}},
    ],
    "attacks": {"epsilon": 0.031, "overrides": {}},
    "game": {"n": 2, "voting": ["hard", "soft"], "matrix_samples": 800, "holdout_samples": 200,
             "probe_samples": 200, "selection_trials": 10, "selection_rate": 0.98, "payoff_trials": 1,
             "chunk_size": 50, "diagnostic_trials": 20, "sweep_counts": [50, 100, 150, 200, 400, 600, 800], "transferability": True},
    "solver": {"tol": 1e-9, "gap_tol": 1e-7},
    "output_dir": "runs/reference",
}


def merge_config(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge_config(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path: Optional[str] = None, seed: Optional[int] = None, out: Optional[str] = None) -> dict:
    doc = {}
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    config = merge_config(DEFAULT_CONFIG, doc)
    if seed is not None:
        config["seed"] = int(seed)
    if out is not None:
        config["output_dir"] = str(out)
    validate_config(config)
    return config


def validate_config(config: dict):
    g, ds = config["game"], config["dataset"]
    if not isinstance(config["seed"], int) or config["seed"] < 0:
        raise ConfigurationError("seed must be a non-negative integer")
    ids = [d["id"] for d in config["defenses"]]
    if not ids or len(set(ids)) != len(ids):
        raise ConfigurationError("defense ids must be nonempty and unique")
    if not 1 <= g["n"] <= len(ids):
        raise ConfigurationError("game.n must lie in 1..number of defenses")
    k = ds["classes"]
    for key in ("matrix_samples", "holdout_samples", "probe_samples"):
        if g[key] % k:
            raise ConfigurationError(f"game.{key} must be divisible by the {k} classes")
    if ds.get("source", "blobs") == "blobs":
        pool = k * ds["test_per_class"]
        if g["matrix_samples"] + g["holdout_samples"] + g["probe_samples"] > pool:
            raise ConfigurationError("matrix + holdout + probe samples exceed the evaluation pool")
    for v in g["voting"]:
        if v not in ("hard", "soft"):
            raise ConfigurationError(f"unknown voting function {v!r}")
    return config


def config_hash(config: dict) -> str:
    doc = {k: v for k, v in config.items() if k != "output_dir"}
    return art.digest(doc)


def attack_params(config: dict) -> dict:
    """Per-algorithm parameters: defaults, the global epsilon, then per-algorithm overrides."""
    eps = config["attacks"].get("epsilon", 0.031)
    scale = eps / 0.031
    out = {}
    for algo, p in DEFAULT_PARAMS.items():
        fields = p.to_dict()
        fields["epsilon"] = eps
        fields["step_size"] = min(eps, p.step_size * scale)
        fields.update(config["attacks"].get("overrides", {}).get(algo, {}))
        out[algo] = AttackParams(**fields)
    return out


# --------------------------------------------------------------------------- stages

class Run:
    """Shared state of one experiment: config, run directory, thread count and loaded artifacts."""

    def __init__(self, config: dict, threads: int = 1):
        self.config = config
        self.seed = config["seed"]
        self.out = Path(config["output_dir"])
        self.threads = max(1, int(threads))
        self.hash = config_hash(config)
        self.provenance = {"config_hash": self.hash, "root_seed": self.seed}
        self.timings = {}
        self.train = self.test = None
        self.defenses: dict = {}
        self.selected = self.matrix_idx = self.holdout_idx = self.probe_idx = None
        self.roster: list = []
        self.batches: dict = {}

    # ---- bookkeeping
    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        log.info("stage %s ...", name)
        try:
            yield
        except Exception as exc:
            art.write_json(self.out / "failure.json", {"stage": name, "error": type(exc).__name__,
                                                       "message": str(exc), **self.provenance})
            log.error("stage %s failed: %s", name, exc)
            if isinstance(exc, (ConfigurationError, NumericalFailure)):
                raise type(exc)(f"[{name}] {exc}") from exc
            raise
        self.timings[name] = time.perf_counter() - t0

    def write(self, name: str, doc: dict) -> Path:
        doc = dict(doc)
        doc.setdefault("provenance", self.provenance)
        return art.write_json(self.out / name, doc)

    def _matches(self, name: str) -> bool:
        path = self.out / name
        if not path.exists():
            return False
        doc = art.read_json(path)
        return doc.get("provenance", {}).get("config_hash") == self.hash

    # ---- data
    def load_data(self):
        ds = self.config["dataset"]
        if ds.get("source", "blobs") == "csv":
            self.train = load_csv_dataset(ds["csv_train"], ds["classes"])
            self.test = load_csv_dataset(ds["csv_test"], ds["classes"])
        else:
            common = dict(classes=ds["classes"], input_dim=ds["input_dim"], spread=ds["spread"],
                          offset=ds.get("offset", 0.4), base=ds.get("base", 0.3))
            self.train = make_gaussian_blobs(per_class=ds["per_class"], seed=derive_seed(self.seed, "data", "train"),
                                             **common)
            self.test = make_gaussian_blobs(per_class=ds["test_per_class"],
                                            seed=derive_seed(self.seed, "data", "test"), **common)
        return self.train, self.test

    # ---- defenses
    def train_defenses(self) -> dict:
        with self.stage("train"):
            if self.train is None:
                self.load_data()
            if self._matches("defenses.json"):
                docs = art.read_json(self.out / "defenses.json")["defenses"]
                self.defenses = {d["id"]: art.defense_from_dict(d) for d in docs}
                return self.defenses
            self.defenses = {}
            for spec in self.config["defenses"]:
                self.defenses[spec["id"]] = build_defense(spec, self.train, self.seed)
            clean = {d.id: clean_accuracy(d, self.test, 1, substream(self.seed, "clean", d.id))
                     for d in self.defenses.values()}
            self.write("defenses.json", {"defenses": [art.defense_to_dict(d) for d in self.defenses.values()],
                                         "clean_accuracy": clean})
        return self.defenses

    def defenses_digest(self) -> str:
        return art.file_digest(self.out / "defenses.json")

    # ---- evaluation samples
    def select_samples(self):
        with self.stage("select"):
            if not self.defenses:
                self.train_defenses()
            g = self.config["game"]
            if self._matches("samples.json"):
                doc = art.read_json(self.out / "samples.json")
                self.selected = np.array(doc["selected"], dtype=np.int64)
                self.matrix_idx = np.array(doc["matrix"], dtype=np.int64)
                self.holdout_idx = np.array(doc["holdout"], dtype=np.int64)
                self.probe_idx = np.array(doc["probe"], dtype=np.int64)
                return
            defs = list(self.defenses.values())
            rng = substream(self.seed, "select")
            total = g["matrix_samples"] + g["holdout_samples"]
            self.selected = select_eval_samples(defs, self.test, total, g["selection_trials"], rng,
                                                g["selection_rate"])
            self.probe_idx = select_eval_samples(defs, self.test, g["probe_samples"], g["selection_trials"],
                                                 substream(self.seed, "select-probe"), g["selection_rate"],
                                                 exclude=self.selected) if g["probe_samples"] else np.zeros(0, int)
            self.matrix_idx, self.holdout_idx = balanced_split(self.test.labels, self.selected,
                                                               g["matrix_samples"], self.test.num_classes)
            self.write("samples.json", {"selected": self.selected.tolist(), "matrix": self.matrix_idx.tolist(),
                                        "holdout": self.holdout_idx.tolist(), "probe": self.probe_idx.tolist()})

    # ---- attacks
    def craft(self, spec: AttackSpec, index: np.ndarray, tag: str = "attack") -> AdversarialBatch:
        """Attack the samples ``index`` of the test pool in fixed-size chunks, each with its own substream."""
        X, y = self.test.inputs[index], self.test.labels[index]
        chunk = self.config["game"]["chunk_size"]
        starts = list(range(0, len(index), chunk))

        def work(i):
            s = starts[i]
            rng = substream(self.seed, tag, spec.id, "chunk", i)
            return run_attack(spec, self.defenses, X[s:s + chunk], y[s:s + chunk], rng)

        if self.threads > 1 and len(starts) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                parts = list(pool.map(work, range(len(starts))))
        else:
            parts = [work(i) for i in range(len(starts))]
        adv = np.vstack(parts) if parts else np.zeros_like(X)
        return AdversarialBatch(X.copy(), adv, y.copy(), spec.id, spec.params.epsilon,
                                {**self.provenance, "tag": tag, "chunk_size": chunk})

    def craft_batches(self) -> dict:
        with self.stage("attack"):
            if self.selected is None:
                self.select_samples()
            self.roster = enumerate_attacker_strategies(list(self.defenses.values()), attack_params(self.config))
            self.batches = {}
            violations = {}
            for spec in self.roster:
                path = self.out / "batches" / f"{spec.id}.json"
                if path.exists() and self._matches("samples.json"):
                    doc = art.read_json(path)
                    if doc.get("provenance", {}).get("config_hash") == self.hash:
                        self.batches[spec.id] = art.batch_from_dict(doc)
                        violations[spec.id] = linf_violations(self.batches[spec.id].originals,
                                                              self.batches[spec.id].perturbed, spec.params.epsilon)
                        continue
                t0 = time.perf_counter()
                batch = self.craft(spec, self.selected)
                violations[spec.id] = linf_violations(batch.originals, batch.perturbed, spec.params.epsilon)
                art.write_json(path, art.batch_to_dict(batch, spec))
                self.batches[spec.id] = batch
                log.info("crafted %s in %.1fs", spec.id, time.perf_counter() - t0)
            self.write("attacks.json", {"roster": [s.to_dict() for s in self.roster], "violations": violations})
            if any(violations.values()):
                raise NumericalFailure(f"perturbation budget violated: {violations}")
        return self.batches

    def split_batches(self) -> tuple:
        """Matrix and holdout views of every batch, following the selected-sample order."""
        pos = {int(i): k for k, i in enumerate(self.selected)}
        m_rows = np.array([pos[int(i)] for i in self.matrix_idx])
        h_rows = np.array([pos[int(i)] for i in self.holdout_idx])
        matrix = {a: b.subset(m_rows) for a, b in self.batches.items()}
        holdout = {a: b.subset(h_rows) for a, b in self.batches.items()}
        return matrix, holdout

    def strategies(self) -> list:
        g = self.config["game"]
        return enumerate_defender_strategies(list(self.defenses), g["n"], g["voting"])


def _model(spec: dict, input_dim: int, classes: int, seed: int) -> nnet.Model:
    return nnet.init_model(spec.get("arch", "mlp1"), input_dim, classes, spec.get("hidden"), seed=seed)


def build_defense(spec: dict, train: Dataset, root_seed: int) -> Defense:
    """Train the model(s) behind one roster entry."""
    did, kind = spec["id"], spec["kind"]
    tcfg = TrainConfig(seed=derive_seed(root_seed, "train", did), **spec.get("train", {}))
    model = _model(spec.get("model", {}), train.input_dim, train.num_classes, derive_seed(root_seed, "init", did))
    if kind == "Plain":
        trained = nnet.train_sgd(model, train, tcfg)
        return Defense(did, kind, trained)
    if kind == "Fat":
        trained = nnet.train_fat(model, train, tcfg, FatConfig(**spec.get("fat", {})))
        return Defense(did, kind, trained)
    if kind == "BartLike":
        dist = TransformDistribution.from_dict(spec["transforms"])
        trained = nnet.train_sgd(model, train, tcfg, augment=make_augmenter(dist))
        return Defense(did, kind, trained, transform_dist=dist)
    if kind == "TitLike":
        inner_spec = spec.get("inner_model", {"arch": "linear"})
        inner_cfg = TrainConfig(seed=derive_seed(root_seed, "train-inner", did), **spec.get("train", {}))
        inner = nnet.train_sgd(_model(inner_spec, train.input_dim, train.num_classes,
                                      derive_seed(root_seed, "init-inner", did)), train, inner_cfg)
        return build_tit(did, inner, model, PurifierParams(**spec["purifier"]), train, tcfg,
                         substream(root_seed, "purify-train", did))
    raise ConfigurationError(f"defense {did}: unknown kind {kind!r}")


# --------------------------------------------------------------------------- game

def guarantee_checks(R: np.ndarray, value: float, tol: float = 1e-7) -> dict:
    """Defender value against the best pure row and the uniform mixture."""
    best_row_min = float(R.min(axis=1).max())
    uniform = float((R.mean(axis=0)).min())
    col_max_min = float(R.max(axis=0).min())
    return {"best_pure_row_min": best_row_min, "uniform_min": uniform, "min_column_max": col_max_min,
            "beats_best_pure": value >= best_row_min - tol, "beats_uniform": value >= uniform - tol,
            "below_min_column_max": value <= col_max_min + tol}


def solve_and_check(run: Run, matrix, tag: str = "") -> tuple:
    solver = run.config["solver"]
    sol = solve_game(matrix, solver["tol"], solver["gap_tol"])
    if sol.status != OPTIMAL:
        raise NumericalFailure(f"LP status {sol.status}{' for ' + tag if tag else ''}")
    rep = verify_equilibrium(matrix.values, sol.lambda_d, sol.lambda_a, tol=1e-6)
    checks = guarantee_checks(matrix.values, sol.value_primal)
    checks.update({"equilibrium_ok": rep.passed, "defender_deviation": rep.defender_deviation,
                   "attacker_deviation": rep.attacker_deviation, "support_violation": rep.support_violation})
    return sol, checks


def run_diagnostics(run: Run) -> dict:
    """Attack-strength comparisons on the matrix split, reported alongside the game.

    Robust accuracy of a randomized defense is averaged over ``diagnostic_trials``
    evaluation draws so the comparison is not dominated by one draw's noise.
    """
    params = attack_params(run.config)
    idx = run.matrix_idx
    y = run.test.labels[idx]
    out = {}
    defs = run.defenses

    def robust(spec: AttackSpec, target: str) -> float:
        batch = run.craft(spec, idx, tag="diagnostic")
        rng = substream(run.seed, "diagnostic-eval", spec.id, target)
        trials = run.config["game"].get("diagnostic_trials", 1) if defs[target].is_randomized else 1
        return float(np.mean([np.mean(predict(defs[target], batch.perturbed, rng) == y) for _ in range(trials)]))

    randomized = [d for d in defs.values() if d.is_randomized and d.kind == "BartLike"]
    for d in randomized:
        mim_acc = robust(AttackSpec("MIM", (d.id,), params["MIM"]), d.id)
        mime_acc = robust(AttackSpec("MIME", (d.id,), params["MIME"]), d.id)
        out[f"mime_vs_mim[{d.id}]"] = {"mim_robust": mim_acc, "mime_robust": mime_acc,
                                       "mim_success": 1 - mim_acc, "mime_success": 1 - mime_acc,
                                       "mime_stronger": mime_acc < mim_acc}
    plains = [d for d in defs.values() if d.kind == "Plain"]
    fats = [d for d in defs.values() if d.kind == "Fat"]
    for p in plains:
        for f in fats:
            pa = robust(AttackSpec("PGD", (p.id,), params["PGD"]), p.id)
            fa = robust(AttackSpec("PGD", (f.id,), params["PGD"]), f.id)
            out[f"pgd_robust[{f.id} vs {p.id}]"] = {"plain": pa, "fat": fa, "fat_more_robust": fa > pa}
    return out


def run_game(config: dict, threads: int = 1, diagnostics: bool = True) -> dict:
    """The full pipeline; returns an in-memory summary and persists every artifact."""
    run = Run(config, threads)
    run.out.mkdir(parents=True, exist_ok=True)
    art.write_json(run.out / "config.json", config)
    run.train_defenses()
    run.select_samples()
    run.craft_batches()
    strategies = run.strategies()
    attack_ids = [s.id for s in run.roster]
    trials = config["game"]["payoff_trials"]
    with run.stage("payoff"):
        matrix_batches, holdout_batches = run.split_batches()
        matrix = build_payoff_matrix(strategies, attack_ids, matrix_batches, run.defenses, run.seed, trials,
                                     run.threads)
        matrix.provenance.update(run.provenance)
        holdout_matrix = build_payoff_matrix(strategies, attack_ids, holdout_batches, run.defenses, run.seed,
                                             trials, run.threads, tag="holdout")
        art.write_payoff_csv(run.out / "payoff_matrix.csv", matrix)
        art.write_payoff_csv(run.out / "holdout_matrix.csv", holdout_matrix)
        run.write("payoff_matrix.json", art.payoff_to_dict(matrix))
    with run.stage("solve"):
        sol, checks = solve_and_check(run, matrix)
        run.write("solution.json", art.solution_to_dict(sol, {"checks": checks,
                                                              "defenses_digest": run.defenses_digest()}))
    with run.stage("evaluate"):
        X_clean = run.test.inputs[run.holdout_idx]
        y_clean = run.test.labels[run.holdout_idx]
        evaluation = evaluate_ensemble(sol.lambda_d, strategies, holdout_batches, run.defenses, run.seed,
                                       clean=(X_clean, y_clean), holdout_matrix=holdout_matrix)
        evaluation["value"] = sol.value_primal
        evaluation["gap"] = abs(sol.value_primal - evaluation["minimum"])
        evaluation["reference_gap"] = REFERENCE_SAMPLE_GAP
        single = {s.id: {"robust_min": float(holdout_matrix.values[i].min()),
                         "matrix_min": float(matrix.values[i].min())}
                  for i, s in enumerate(strategies) if len(s.members) == 1}
        evaluation["single_defenses"] = single
        run.write("evaluation.json", evaluation)
    transfer = None
    if config["game"].get("transferability"):
        with run.stage("transfer"):
            transfer = run_transferability(run)
    diag = {}
    if diagnostics:
        with run.stage("diagnostics"):
            diag = run_diagnostics(run)
    violations = art.read_json(run.out / "attacks.json")["violations"]
    report = {"value": sol.value_primal, "value_dual": sol.value_dual, "checks": checks,
              "holdout_minimum": evaluation["minimum"], "gap": evaluation["gap"],
              "reference_gap": REFERENCE_SAMPLE_GAP, "clean_accuracy": evaluation.get("clean_accuracy"),
              "matrix_shape": list(matrix.values.shape), "constraint_violations": int(sum(violations.values())),
              "diagnostics": diag, "timings": run.timings}
    run.write("report.json", report)
    return {"run": run, "matrix": matrix, "holdout_matrix": holdout_matrix, "solution": sol,
            "evaluation": evaluation, "strategies": strategies, "transfer": transfer, "report": report}


# --------------------------------------------------------------------------- transferability

def best_attack_per_defense(run: Run) -> dict:
    """Strongest attack per defense on the probe split: MIME for randomized, else best of PGD/MIM/APGD."""
    params = attack_params(run.config)
    chosen = {}
    idx = run.probe_idx if len(run.probe_idx) else run.matrix_idx
    y = run.test.labels[idx]
    for d in run.defenses.values():
        options = ["MIME"] if d.is_randomized else ["PGD", "MIM", "APGD"]
        scores = {}
        for algo in options:
            spec = AttackSpec(algo, (d.id,), params[algo])
            batch = run.craft(spec, idx, tag="probe")
            pred = predict(d, batch.perturbed, substream(run.seed, "probe-eval", spec.id))
            scores[algo] = float(np.mean(pred != y))
        best = max(options, key=lambda a: (scores[a], -options.index(a)))
        chosen[d.id] = {"algorithm": best, "success": scores}
    return chosen


def run_transferability(run: Run, samples: Optional[np.ndarray] = None) -> dict:
    """Accuracy of every defense on examples crafted against every other defense."""
    if run.selected is None:
        run.select_samples()
    params = attack_params(run.config)
    best = best_attack_per_defense(run)
    idx = run.matrix_idx if samples is None else samples
    y = run.test.labels[idx]
    ids = list(run.defenses)
    M = np.zeros((len(ids), len(ids)))
    for i, src in enumerate(ids):
        spec = AttackSpec(best[src]["algorithm"], (src,), params[best[src]["algorithm"]])
        batch = run.craft(spec, idx, tag="transfer")
        for j, dst in enumerate(ids):
            rng = substream(run.seed, "transfer-eval", src, dst)
            M[i, j] = np.mean(predict(run.defenses[dst], batch.perturbed, rng) == y)
    off = M[~np.eye(len(ids), dtype=bool)]
    violations = sum(1 for i in range(len(ids)) for j in range(len(ids)) if i != j and M[i, i] > M[i, j])
    doc = {"defenses": ids, "matrix": M.tolist(), "best_attack": best,
           "mean_off_diagonal": float(off.mean()) if off.size else float("nan"),
           "mean_diagonal": float(np.diag(M).mean()), "diagonal_violations": violations}
    run.write("transferability.json", doc)
    with open(run.out / "transferability.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["crafted_on"] + ids)
        for src, row in zip(ids, M):
            w.writerow([src] + [repr(float(v)) for v in row])
    return doc


# --------------------------------------------------------------------------- sweep / eval / play

def run_sample_sweep(config: dict, counts: Optional[Sequence[int]] = None, threads: int = 1) -> dict:
    """Re-solve the game on the first N matrix samples for each N and compare with the holdout minimum."""
    result = run_game(config, threads, diagnostics=False) if not _has_game(config) else None
    run = Run(config, threads)
    run.train_defenses()
    run.select_samples()
    run.craft_batches()
    strategies = run.strategies()
    attack_ids = [s.id for s in run.roster]
    matrix_batches, holdout_batches = run.split_batches()
    full = len(run.matrix_idx)
    counts = sorted({min(int(c), full) for c in (counts or config["game"]["sweep_counts"])} | {full})
    rows = []
    with run.stage("sweep"):
        for n in counts:
            if n < 1:
                raise ConfigurationError("sweep sample counts must be positive")
            heads = {a: b.head(n) for a, b in matrix_batches.items()}
            matrix = build_payoff_matrix(strategies, attack_ids, heads, run.defenses, run.seed,
                                         config["game"]["payoff_trials"], run.threads)
            sol, _ = solve_and_check(run, matrix, f"N={n}")
            ev = evaluate_ensemble(sol.lambda_d, strategies, holdout_batches, run.defenses, run.seed)
            rows.append({"N": n, "value": sol.value_primal, "holdout_minimum": ev["minimum"],
                         "gap": abs(sol.value_primal - ev["minimum"]), "worst_attack": ev["worst_attack"],
                         "defender": art.solution_to_dict(sol)["defender"]})
    gaps = [r["gap"] for r in rows]
    doc = {"rows": rows, "mean_gap": float(np.mean(gaps)), "reference_gap": REFERENCE_SAMPLE_GAP}
    run.write("sweep.json", doc)
    with open(run.out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "value", "holdout_minimum", "gap"])
        for r in rows:
            w.writerow([r["N"], repr(r["value"]), repr(r["holdout_minimum"]), repr(r["gap"])])
    return doc


def _has_game(config: dict) -> bool:
    out = Path(config["output_dir"])
    path = out / "solution.json"
    if not path.exists():
        return False
    return art.read_json(path).get("provenance", {}).get("config_hash") == config_hash(config)


def run_eval(config: dict, threads: int = 1) -> dict:
    """Re-evaluate a persisted solution on the persisted holdout batches."""
    run = Run(config, threads)
    if not _has_game(config):
        raise ConfigurationError(f"no solution for this config under {run.out}; run `game` first")
    run.train_defenses()
    run.select_samples()
    run.craft_batches()
    sol = art.solution_from_dict(art.read_json(run.out / "solution.json"))
    strategies = run.strategies()
    if [s.id for s in strategies] != sol.strategy_ids:
        raise ConfigurationError("solution strategies do not match the configured roster")
    _, holdout = run.split_batches()
    ev = evaluate_ensemble(sol.lambda_d, strategies, holdout, run.defenses, run.seed,
                           clean=(run.test.inputs[run.holdout_idx], run.test.labels[run.holdout_idx]))
    ev["value"] = sol.value_primal
    ev["gap"] = abs(sol.value_primal - ev["minimum"])
    run.write("evaluation.json", ev)
    return ev


def play(solution_path, defenses_path, inputs: np.ndarray, seed: int) -> tuple:
    """Label each query with a freshly sampled defender strategy; returns (labels, strategy ids)."""
    sol_doc = art.read_json(solution_path)
    if sol_doc.get("defenses_digest") != art.file_digest(defenses_path):
        raise ConfigurationError("solution was computed for different defense artifacts; refusing to play")
    defs_doc = art.read_json(defenses_path)
    defenses = {d["id"]: art.defense_from_dict(d) for d in defs_doc["defenses"]}
    sol = art.solution_from_dict(sol_doc)
    strategies = [_strategy_from_id(sid, defenses) for sid in sol.strategy_ids]
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    rng = substream(seed, "play")
    chosen = sample_strategy(sol.lambda_d, rng, size=len(inputs))
    labels = np.zeros(len(inputs), dtype=np.int64)
    from .game import strategy_predict
    for i in np.unique(chosen):
        rows = np.flatnonzero(chosen == i)
        labels[rows] = strategy_predict(strategies[i], defenses, inputs[rows], rng)
    return labels, [sol.strategy_ids[i] for i in chosen]


def _strategy_from_id(sid: str, defenses: dict) -> DefenderStrategy:
    if sid in defenses:
        return DefenderStrategy((sid,), "hard")
    voting, _, rest = sid.partition("(")
    return DefenderStrategy(tuple(rest.rstrip(")").split("+")), voting)


def load_inputs_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec:
                continue
            try:
                rows.append([float(v) for v in rec])
            except ValueError:
                if rows:
                    raise ConfigurationError(f"{path}: non-numeric row") from None
    if not rows:
        raise ConfigurationError(f"{path}: no input rows")
    return np.array(rows)


def plot_rows(out_dir) -> list:
    """Tidy (strategy, attack, split, accuracy) rows from the persisted payoff matrices."""
    out = Path(out_dir)
    rows = []
    for split, name in (("matrix", "payoff_matrix.csv"), ("holdout", "holdout_matrix.csv")):
        path = out / name
        if not path.exists():
            continue
        sids, aids, values = art.read_payoff_csv(path)
        for sid, row in zip(sids, values):
            for aid, v in zip(aids, row):
                rows.append({"strategy": sid, "attack": aid, "split": split, "accuracy": float(v)})
    if not rows:
        raise ConfigurationError(f"no payoff matrices under {out}; run `game` first")
    return rows
