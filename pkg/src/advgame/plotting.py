"""Figures written next to the CSV/JSON outputs (matplotlib, non-interactive backend)."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import artifacts as art  # noqa: E402

plt.rcParams.update({"font.size": 9, "axes.spines.top": False, "axes.spines.right": False,
                     "figure.dpi": 110, "savefig.bbox": "tight"})

# matplotlib embeds a creation date in some formats; PNG metadata is pinned so reruns are byte-stable.
_PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", metadata=_PNG_META)
    plt.close(fig)
    return path


def payoff_heatmap(strategy_ids, attack_ids, values, path, title="robust accuracy") -> Path:
    values = np.asarray(values)
    fig, ax = plt.subplots(figsize=(1.0 + 0.55 * len(attack_ids), 1.2 + 0.3 * len(strategy_ids)))
    im = ax.imshow(values, vmin=0.0, vmax=1.0, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(attack_ids)), attack_ids, rotation=60, ha="right")
    ax.set_yticks(range(len(strategy_ids)), strategy_ids)
    for i in range(values.shape[0]):
        for j in range(values.shape[1]):
            ax.text(j, i, f"{values[i, j]:.2f}", ha="center", va="center", fontsize=6,
                    color="white" if values[i, j] < 0.5 else "black")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.03)
    return _save(fig, path)


def ensemble_bars(evaluation: dict, path) -> Path:
    """Per-attack holdout accuracy of the mixed ensemble, with r* as a reference line."""
    per = evaluation["per_attack"]
    fig, ax = plt.subplots(figsize=(1.0 + 0.5 * len(per), 3.0))
    ax.bar(range(len(per)), list(per.values()), color="tab:blue")
    ax.set_xticks(range(len(per)), list(per), rotation=60, ha="right")
    if "value" in evaluation:
        ax.axhline(evaluation["value"], color="tab:red", ls="--", lw=1, label="game value")
        ax.legend(loc="lower right", frameon=False)
    ax.set_ylim(0, 1)
    ax.set_ylabel("holdout robust accuracy")
    return _save(fig, path)


def sweep_plot(sweep: dict, path) -> Path:
    rows = sweep["rows"]
    n = [r["N"] for r in rows]
    fig, ax = plt.subplots(figsize=(4.0, 3.0))
    ax.plot(n, [r["value"] for r in rows], "o-", label="game value")
    ax.plot(n, [r["holdout_minimum"] for r in rows], "s--", label="holdout minimum")
    ax.set_xlabel("matrix samples N")
    ax.set_ylabel("robust accuracy")
    ax.legend(frameon=False)
    return _save(fig, path)


def transfer_heatmap(doc: dict, path) -> Path:
    return payoff_heatmap(doc["defenses"], doc["defenses"], doc["matrix"], path,
                          title="accuracy (rows: crafted on)")


def write_plot_data(out_dir) -> list:
    """Tidy long-form CSV of the payoff matrices plus every figure the run directory supports."""
    from .experiment import plot_rows

    out = Path(out_dir)
    rows = plot_rows(out)
    written = [out / "plot_data.csv"]
    with open(written[0], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "attack", "split", "accuracy"])
        for r in rows:
            w.writerow([r["strategy"], r["attack"], r["split"], repr(r["accuracy"])])
    figs = out / "figures"
    for split, name in (("matrix", "payoff_matrix.csv"), ("holdout", "holdout_matrix.csv")):
        if (out / name).exists():
            sids, aids, values = art.read_payoff_csv(out / name)
            written.append(payoff_heatmap(sids, aids, values, figs / f"{split}_heatmap.png",
                                          title=f"robust accuracy ({split})"))
    if (out / "evaluation.json").exists():
        written.append(ensemble_bars(art.read_json(out / "evaluation.json"), figs / "ensemble_per_attack.png"))
    if (out / "sweep.json").exists():
        written.append(sweep_plot(art.read_json(out / "sweep.json"), figs / "sweep_gap.png"))
    if (out / "transferability.json").exists():
        written.append(transfer_heatmap(art.read_json(out / "transferability.json"), figs / "transferability.png"))
    return written
