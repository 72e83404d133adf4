"""Multi-run experiments: seed sweeps, checkpoint selection, comparison.

A run sweep executes the same configuration under seeds seed+0 ..
seed+n-1 (or one repeated seed for determinism checks), persists one
metrics CSV covering all runs, selects each run's best checkpoint, and
summarizes mean/std across runs.

Checkpoint selection keeps the best validation accuracy among eligible
epochs: with a phase schedule only epochs at alpha=1 qualify (the
network is already pure ReLU there); without one every epoch
qualifies.  Ties go to the later epoch.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import replace

import numpy as np

from . import data as data_mod
from . import models, persistence
from .config import DataConfig, ExperimentConfig, describe_train_config
from .errors import ConfigError
from .rng import RngHub
from .training import MetricsRecord, train


def load_datasets(dc: DataConfig) -> tuple[data_mod.Dataset, data_mod.Dataset]:
    if dc.source == "synthetic":
        return data_mod.synth_train_val(
            dc.n, dc.num_classes, dc.noise, dc.seed,
            image_size=dc.image_size, val_fraction=dc.val_fraction,
        )
    train_ds = data_mod.load_idx(dc.train_images, dc.train_labels, split="train")
    val_ds = data_mod.load_idx(
        dc.val_images, dc.val_labels, split="val",
        normalization=train_ds.normalization,
    )
    return train_ds, val_ds


class _BestTracker:
    """Keeps the best eligible checkpoint of one run on disk."""

    def __init__(self, run_dir: str | None, cfg, train_config_doc):
        self.run_dir = run_dir
        self.cfg = cfg
        self.doc = train_config_doc
        self.best_acc = -math.inf
        self.best_epoch = None

    def eligible(self, rec: MetricsRecord) -> bool:
        if self.cfg.pea is None:
            return True
        return rec.alpha == 1.0

    def __call__(self, epoch, rec, model, state):
        if self.eligible(rec) and rec.val_acc >= self.best_acc:
            self.best_acc = rec.val_acc
            self.best_epoch = epoch
            if self.run_dir is not None:
                persistence.save_checkpoint(
                    os.path.join(self.run_dir, "best.ckpt"), model, state, self.doc
                )


def run_one(exp: ExperimentConfig, seed: int, run_id: str,
            datasets=None, run_dir: str | None = None):
    """Train one seed; returns (model, records, selection info)."""
    if datasets is None:
        datasets = load_datasets(exp.data)
    train_ds, val_ds = datasets
    cfg = replace(exp.train, seed=seed)
    hub = RngHub(seed)
    model = models.build(exp.model, hub=hub)
    if run_dir is not None:
        os.makedirs(run_dir, exist_ok=True)
    tracker = _BestTracker(run_dir, cfg, describe_train_config(cfg))
    model, records, state = train(
        model, train_ds, val_ds, cfg, run_id=run_id, epoch_hook=tracker
    )
    if tracker.best_epoch is None:
        raise ConfigError(
            "no eligible checkpoint epoch; the phase schedule never reached alpha=1"
        )
    info = {
        "seed": seed,
        "best_epoch": tracker.best_epoch,
        "best_val_acc": tracker.best_acc,
        "final_val_acc": records[-1].val_acc,
        "final_val_loss": records[-1].val_loss,
        "final_train_loss": records[-1].train_loss,
    }
    if run_dir is not None:
        last_path = os.path.join(run_dir, "last.ckpt")
        persistence.save_checkpoint(last_path, model, state, describe_train_config(cfg))
        info["last_checkpoint"] = last_path
        info["best_checkpoint"] = os.path.join(run_dir, "best.ckpt")
        if exp.train.pea is not None:
            best = persistence.restore_model(
                persistence.load_checkpoint(info["best_checkpoint"])
            )
            export_path = os.path.join(run_dir, "collapsed.peam")
            persistence.export_collapsed(best, export_path)
            info["collapsed_export"] = export_path
    return model, records, info


def _mean_std(values: list[float]) -> tuple[float, float]:
    if len(values) == 1:
        return float(values[0]), 0.0
    return float(np.mean(values)), float(np.std(values, ddof=1))


def run_experiment(exp: ExperimentConfig, n_runs: int, out_dir: str | None = None,
                   distinct_seeds: bool = True) -> dict:
    """Seed sweep; persists metrics/checkpoints and returns the summary."""
    if n_runs < 1:
        raise ConfigError(f"n_runs must be >= 1, got {n_runs}")
    datasets = load_datasets(exp.data)
    all_records: list[MetricsRecord] = []
    runs = []
    for r in range(n_runs):
        seed = exp.train.seed + (r if distinct_seeds else 0)
        run_dir = os.path.join(out_dir, f"run_{r}") if out_dir else None
        _, records, info = run_one(
            exp, seed, run_id=str(r), datasets=datasets, run_dir=run_dir
        )
        all_records.extend(records)
        runs.append(info)

    best_mean, best_std = _mean_std([r["best_val_acc"] for r in runs])
    final_mean, final_std = _mean_std([r["final_val_acc"] for r in runs])
    summary = {
        "n_runs": n_runs,
        "runs": runs,
        "best_val_acc_mean": best_mean,
        "best_val_acc_std": best_std,
        "final_val_acc_mean": final_mean,
        "final_val_acc_std": final_std,
    }
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        persistence.write_metrics_csv(os.path.join(out_dir, "metrics.csv"), all_records)
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2)
    summary["records"] = all_records
    return summary


def compare(exp_a: ExperimentConfig, exp_b: ExperimentConfig, n_runs: int,
            out_dir: str | None = None) -> dict:
    """Run two configurations across the same seed count and diff them.

    The comparison is inconclusive when |mean delta| < 2 * pooled std,
    with pooled std = sqrt((std_a^2 + std_b^2) / 2).
    """
    sub_a = os.path.join(out_dir, "a") if out_dir else None
    sub_b = os.path.join(out_dir, "b") if out_dir else None
    sum_a = run_experiment(exp_a, n_runs, sub_a)
    sum_b = run_experiment(exp_b, n_runs, sub_b)
    acc_a = [r["best_val_acc"] for r in sum_a["runs"]]
    acc_b = [r["best_val_acc"] for r in sum_b["runs"]]
    deltas = [b - a for a, b in zip(acc_a, acc_b)]
    mean_delta = float(np.mean(deltas))
    pooled = math.sqrt((sum_a["best_val_acc_std"] ** 2 + sum_b["best_val_acc_std"] ** 2) / 2.0)
    report = {
        "n_runs": n_runs,
        "a": {"best_val_acc_mean": sum_a["best_val_acc_mean"],
              "best_val_acc_std": sum_a["best_val_acc_std"], "per_seed": acc_a},
        "b": {"best_val_acc_mean": sum_b["best_val_acc_mean"],
              "best_val_acc_std": sum_b["best_val_acc_std"], "per_seed": acc_b},
        "per_seed_delta": deltas,
        "mean_delta": mean_delta,
        "delta_std": float(np.std(deltas, ddof=1)) if len(deltas) > 1 else 0.0,
        "pooled_std": pooled,
        "inconclusive": bool(abs(mean_delta) < 2.0 * pooled),
    }
    if out_dir:
        with open(os.path.join(out_dir, "compare.json"), "w") as fh:
            json.dump(report, fh, indent=2)
    return report
