"""JSON/CSV persistence for models, defenses, batches, payoff matrices and game solutions.

Floats are written with Python's shortest round-trip repr, so every
artifact reloads bit-exactly.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from .attacks import AttackSpec
from .defenses import Defense, PurifierParams
from .errors import ConfigurationError
from .game import AdversarialBatch, PayoffMatrix
from .lp import GameSolution
from .nnet import model_from_dict, model_to_dict
from .transforms import TransformDistribution


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=True)


def digest(doc) -> str:
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path, doc) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"missing artifact {path}")
    return json.loads(path.read_text())


def defense_to_dict(d: Defense) -> dict:
    return {
        "id": d.id,
        "kind": d.kind,
        "randomized": d.is_randomized,
        "primary": model_to_dict(d.primary),
        "inner": model_to_dict(d.inner) if d.inner is not None else None,
        "transforms": d.transform_dist.to_dict() if d.transform_dist is not None else None,
        "purifier": d.purifier.to_dict() if d.purifier is not None else None,
    }


def defense_from_dict(doc: dict) -> Defense:
    return Defense(
        doc["id"], doc["kind"], model_from_dict(doc["primary"]),
        inner=model_from_dict(doc["inner"]) if doc.get("inner") else None,
        transform_dist=TransformDistribution.from_dict(doc["transforms"]) if doc.get("transforms") else None,
        purifier=PurifierParams(**doc["purifier"]) if doc.get("purifier") else None,
    )


def batch_to_dict(batch: AdversarialBatch, spec: AttackSpec | None = None) -> dict:
    delta = np.abs(batch.perturbed - batch.originals).max(axis=1) if len(batch) else np.zeros(0)
    return {
        "attack_id": batch.attack_id,
        "spec": spec.to_dict() if spec is not None else None,
        "epsilon": batch.epsilon,
        "epsilon_audit": {"max_linf": float(delta.max(initial=0.0)),
                          "box_ok": bool(np.all((batch.perturbed >= 0) & (batch.perturbed <= 1)))},
        "provenance": batch.provenance,
        "labels": batch.labels.tolist(),
        "originals": batch.originals.tolist(),
        "perturbed": batch.perturbed.tolist(),
    }


def batch_from_dict(doc: dict) -> AdversarialBatch:
    d = len(doc["originals"][0]) if doc["originals"] else 0
    return AdversarialBatch(np.array(doc["originals"], dtype=np.float64).reshape(-1, d),
                            np.array(doc["perturbed"], dtype=np.float64).reshape(-1, d),
                            np.array(doc["labels"], dtype=np.int64), doc["attack_id"],
                            doc.get("epsilon", float("nan")), doc.get("provenance", {}))


def payoff_csv(matrix: PayoffMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["strategy"] + list(matrix.attack_ids))
    for sid, row in zip(matrix.strategy_ids, matrix.values):
        w.writerow([sid] + [repr(float(v)) for v in row])
    return buf.getvalue()


def write_payoff_csv(path, matrix: PayoffMatrix) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(payoff_csv(matrix))
    return path


def read_payoff_csv(path) -> tuple:
    """(strategy ids, attack ids, values) from a payoff CSV; independent of :class:`PayoffMatrix`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    attacks = rows[0][1:]
    strategies = [r[0] for r in rows[1:]]
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return strategies, attacks, values


def payoff_to_dict(matrix: PayoffMatrix) -> dict:
    return {"strategy_ids": matrix.strategy_ids, "attack_ids": matrix.attack_ids,
            "values": matrix.values.tolist(), "sample_count": matrix.sample_count,
            "provenance": matrix.provenance}


def payoff_from_dict(doc: dict) -> PayoffMatrix:
    return PayoffMatrix(doc["strategy_ids"], doc["attack_ids"], np.array(doc["values"]),
                        doc["sample_count"], doc.get("provenance", {}))


def _sparse_strategy(ids, probs, floor: float = 1e-9) -> dict:
    probs = np.asarray(probs, dtype=np.float64)
    kept = np.where(probs >= floor, probs, 0.0)
    kept = kept / kept.sum()
    return {sid: float(p) for sid, p in zip(ids, kept) if p > 0}


def solution_to_dict(sol: GameSolution, extra: dict | None = None) -> dict:
    doc = {
        "status": sol.status,
        "value": sol.value_primal,
        "value_dual": sol.value_dual,
        "duality_gap": sol.duality_gap,
        "iterations": sol.iterations,
        "strategy_ids": sol.strategy_ids,
        "attack_ids": sol.attack_ids,
        "defender": _sparse_strategy(sol.strategy_ids, sol.lambda_d) if sol.lambda_d is not None else {},
        "attacker": _sparse_strategy(sol.attack_ids, sol.lambda_a) if sol.lambda_a is not None else {},
    }
    doc.update(extra or {})
    return doc


def solution_from_dict(doc: dict) -> GameSolution:
    sids, aids = doc["strategy_ids"], doc["attack_ids"]
    lam_d = np.array([doc["defender"].get(s, 0.0) for s in sids])
    lam_a = np.array([doc["attacker"].get(a, 0.0) for a in aids])
    return GameSolution(lam_d, lam_a, doc["value"], doc["value_dual"], doc["iterations"], doc["status"],
                        sids, aids)
