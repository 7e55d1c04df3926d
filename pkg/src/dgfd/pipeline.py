"""Experiment commands behind the CLI: train, eval, ablate, sweep, gen-data.

Every command is deterministic given (manifest, seeds): metric and training
CSVs are byte-identical across reruns.  Wall-clock chatter goes through the
logging module (stderr plus an optional run.log), never into result files.
Result files are written atomically (temp file, then rename).
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from .backbone import ForgeryDetector, load_checkpoint, save_checkpoint
from .config import ExperimentManifest, with_lambda, with_toggles
from .data import (MANIFEST_NAME, SplitDataset, channel_stats_probe, generate,
                   load_manifest, to_arrays, write_dataset)
from .metrics import accuracy, auc, eer
from .rng import stream
from .style_bank import load_bank, save_bank
from .training import TRAIN_CSV_COLUMNS, build_model_bank, train_run

logger = logging.getLogger(__name__)

METRICS_CSV_COLUMNS = ("split", "domain", "acc", "auc", "eer", "n", "unseen")
ABLATION_CSV_COLUMNS = ("config", "use_dda", "use_dfe", "use_dd", "n_seeds",
                        "acc_mean", "acc_std", "auc_mean", "auc_std", "eer_mean", "eer_std")
SWEEP_CSV_COLUMNS = ("lam", "acc", "auc", "eer")
LAMBDA_GRID = (0.0, 0.1, 0.5, 1.0, 2.0, 5.0)
ABLATION_LADDER = (
    ("baseline", False, False, False),
    ("dda", True, False, False),
    ("dda_dfe", True, True, False),
    ("full", True, True, True),
)


# ------------------------------------------------------------------ file output
def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, columns, rows) -> Path:
    """Atomic RFC-4180 CSV; rows are dicts keyed by column name."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_name(target.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])
    tmp.replace(target)
    return target


def _write_text(path, text: str) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_name(target.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(target)
    return target


def setup_run_logging(out_dir) -> None:
    """Attach a timestamped run.log under out_dir (results stay timestamp-free)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "run.log")
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    root = logging.getLogger("dgfd")
    root.addHandler(handler)
    root.setLevel(logging.INFO)


# ------------------------------------------------------------------ datasets
def build_dataset(manifest: ExperimentManifest) -> SplitDataset:
    if manifest.data.source == "folder":
        path = Path(manifest.data.path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        return load_manifest(path, image_size=manifest.data.image_size)
    holdout = manifest.protocol == "leave-one-domain-out"
    return generate(manifest.data.synth_spec(), holdout=holdout)


# ------------------------------------------------------------------ evaluation
def _metric_triplet(scores: np.ndarray, labels: np.ndarray) -> tuple[float, float, float]:
    """(acc, auc, eer); auc/eer are nan when only one class is present."""
    acc = accuracy(scores, labels)
    if len(set(labels.tolist())) < 2:
        return acc, float("nan"), float("nan")
    return acc, auc(scores, labels), eer(scores, labels).eer


def split_rows(model: ForgeryDetector, samples, split: str, holdout_domain) -> list[dict]:
    """Per-domain rows plus a domain='all' aggregate for one split."""
    if not samples:
        return []
    images, y, domains = to_arrays(samples)
    scores = model.scores(images)
    rows = []
    for domain in sorted(set(domains.tolist())):
        mask = domains == domain
        a, u, e = _metric_triplet(scores[mask], y[mask])
        rows.append({"split": split, "domain": domain, "acc": a, "auc": u, "eer": e,
                     "n": int(mask.sum()), "unseen": domain == holdout_domain})
    a, u, e = _metric_triplet(scores, y)
    rows.append({"split": split, "domain": "all", "acc": a, "auc": u, "eer": e,
                 "n": len(y), "unseen": holdout_domain in set(domains.tolist())})
    return rows


def eval_rows(model: ForgeryDetector, dataset: SplitDataset) -> list[dict]:
    rows = []
    for split in ("val", "test"):
        rows.extend(split_rows(model, getattr(dataset, split), split, dataset.holdout_domain))
    return rows


def _aggregate(rows: list[dict], split: str) -> dict:
    for row in rows:
        if row["split"] == split and row["domain"] == "all":
            return row
    raise ValueError(f"no '{split}' rows to aggregate (empty split?)")


# ------------------------------------------------------------------ commands
def run_train(manifest: ExperimentManifest, seed: int | None = None,
              out_dir=None, dataset: SplitDataset | None = None) -> dict:
    """One training run: per-epoch CSV, best-validation checkpoint, metrics CSV."""
    seed = manifest.seeds[0] if seed is None else int(seed)
    out = Path(out_dir if out_dir is not None else manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if dataset is None:
        dataset = build_dataset(manifest)
    logger.info("train: seed %d, %d/%d/%d train/val/test samples", seed,
                len(dataset.train), len(dataset.val), len(dataset.test))

    outcome = train_run(manifest, seed, dataset)
    train_csv = write_csv(out / f"train_seed{seed}.csv", TRAIN_CSV_COLUMNS, outcome.history)
    ckpt = out / f"checkpoint_seed{seed}.npz"
    save_checkpoint(ckpt, outcome.model,
                    extra={"seed": seed, "best_epoch": outcome.best_epoch,
                           "best_val_auc": outcome.best_val_auc})
    rows = eval_rows(outcome.model, dataset)
    metrics_csv = write_csv(out / f"metrics_seed{seed}.csv", METRICS_CSV_COLUMNS, rows)
    bank_path = None
    if manifest.model.use_dda:
        images, y, _ = to_arrays(dataset.train)
        bank = build_model_bank(outcome.model, images, y, C=manifest.train.C,
                                cap=manifest.train.bank_max_per_class,
                                rng=stream(seed, "bank", "final"))
        bank_path = out / f"bank_seed{seed}.npz"
        save_bank(bank_path, bank)
    _write_text(out / "manifest.json", manifest.to_json() + "\n")
    logger.info("train: best epoch %d (val auc %.4f)", outcome.best_epoch, outcome.best_val_auc)
    return {"train_csv": train_csv, "checkpoint": ckpt, "metrics_csv": metrics_csv,
            "bank": bank_path, "outcome": outcome, "rows": rows}


def run_eval(checkpoint_path, manifest: ExperimentManifest, out_dir=None,
             dataset: SplitDataset | None = None) -> dict:
    """Evaluate a saved checkpoint; the checkpoint file itself is untouched."""
    out = Path(out_dir if out_dir is not None else manifest.out_dir)
    model, _, extra = load_checkpoint(checkpoint_path)
    for field_name in ("image_size", "in_channels"):
        have = getattr(model.config, field_name)
        want = getattr(manifest.model, field_name)
        if have != want:
            raise ValueError(
                f"checkpoint/manifest mismatch on model.{field_name}: "
                f"checkpoint has {have}, manifest wants {want}")
    if dataset is None:
        dataset = build_dataset(manifest)
    rows = eval_rows(model, dataset)
    metrics_csv = write_csv(out / "metrics.csv", METRICS_CSV_COLUMNS, rows)
    return {"metrics_csv": metrics_csv, "rows": rows, "extra": extra}


def run_ablate(manifest: ExperimentManifest, out_dir=None) -> dict:
    """Train the 4-step module ladder, each over all manifest seeds."""
    out = Path(out_dir if out_dir is not None else manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = build_dataset(manifest)
    ladder_rows = []
    per_config: dict[str, dict[str, list[float]]] = {}
    for label, use_dda, use_dfe, use_dd in ABLATION_LADDER:
        variant = with_toggles(manifest, use_dda, use_dfe, use_dd)
        stats: dict[str, list[float]] = {"acc": [], "auc": [], "eer": []}
        for seed in manifest.seeds:
            outcome = train_run(variant, seed, dataset)
            agg = _aggregate(eval_rows(outcome.model, dataset), "test")
            for key in stats:
                stats[key].append(float(agg[key]))
            write_csv(out / f"train_{label}_seed{seed}.csv",
                      TRAIN_CSV_COLUMNS, outcome.history)
            logger.info("ablate %s seed %d: test auc %.4f", label, seed, agg["auc"])
        per_config[label] = stats
        ladder_rows.append({
            "config": label, "use_dda": use_dda, "use_dfe": use_dfe, "use_dd": use_dd,
            "n_seeds": len(manifest.seeds),
            "acc_mean": float(np.mean(stats["acc"])), "acc_std": float(np.std(stats["acc"])),
            "auc_mean": float(np.mean(stats["auc"])), "auc_std": float(np.std(stats["auc"])),
            "eer_mean": float(np.mean(stats["eer"])), "eer_std": float(np.std(stats["eer"])),
        })
    ablation_csv = write_csv(out / "ablation.csv", ABLATION_CSV_COLUMNS, ladder_rows)
    _write_text(out / "manifest.json", manifest.to_json() + "\n")
    return {"ablation_csv": ablation_csv, "rows": ladder_rows, "per_config": per_config}


def run_sweep_lambda(manifest: ExperimentManifest, lambdas=None, out_dir=None) -> dict:
    """One training per adversarial weight; seed-mean unseen metrics per point."""
    grid = LAMBDA_GRID if lambdas is None else tuple(float(v) for v in lambdas)
    if not grid:
        raise ValueError("lambda grid must be non-empty")
    negative = [v for v in grid if v < 0]
    if negative:
        raise ValueError(f"lambda values must be >= 0, got {sorted(negative)}")
    out = Path(out_dir if out_dir is not None else manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = build_dataset(manifest)
    sweep_rows = []
    per_lambda: dict[float, dict[str, list[float]]] = {}
    for lam in grid:
        variant = with_lambda(manifest, lam)
        stats: dict[str, list[float]] = {"acc": [], "auc": [], "eer": []}
        for seed in manifest.seeds:
            outcome = train_run(variant, seed, dataset)
            agg = _aggregate(eval_rows(outcome.model, dataset), "test")
            for key in stats:
                stats[key].append(float(agg[key]))
            logger.info("sweep lam %g seed %d: test acc %.4f auc %.4f",
                        lam, seed, agg["acc"], agg["auc"])
        per_lambda[lam] = stats
        sweep_rows.append({"lam": lam, "acc": float(np.mean(stats["acc"])),
                           "auc": float(np.mean(stats["auc"])),
                           "eer": float(np.mean(stats["eer"]))})
    sweep_csv = write_csv(out / "sweep.csv", SWEEP_CSV_COLUMNS, sweep_rows)
    plot_lines = ["# lam acc"]
    plot_lines += [f"{_fmt(r['lam'])} {_fmt(r['acc'])}" for r in sweep_rows]
    plot_path = _write_text(out / "sweep_plot.dat", "\n".join(plot_lines) + "\n")
    _write_text(out / "manifest.json", manifest.to_json() + "\n")
    return {"sweep_csv": sweep_csv, "plot": plot_path, "rows": sweep_rows,
            "per_lambda": per_lambda}


def run_gen_data(manifest: ExperimentManifest, out_dir=None) -> dict:
    """Materialize the synthetic benchmark as PNGs plus a manifest table."""
    if manifest.data.source != "synthetic":
        raise ValueError("gen-data needs data.source = 'synthetic'")
    out = Path(out_dir if out_dir is not None else manifest.out_dir)
    dataset = build_dataset(manifest)
    manifest_csv = write_dataset(out, dataset)
    probe = channel_stats_probe(dataset.all_samples())
    logger.info("gen-data: %d/%d/%d train/val/test; probe domain_acc %.3f label_acc %.3f",
                len(dataset.train), len(dataset.val), len(dataset.test),
                probe["domain_acc"], probe["label_acc"])
    return {"manifest_csv": manifest_csv, "probe": probe, "dataset": dataset}


def run_bank_inspect(bank_path) -> dict:
    """Summarize a serialized style bank; returns a JSON-ready dict."""
    bank = load_bank(bank_path)
    summary = {
        "C": bank.C,
        "n_classes": bank.n_classes,
        "channels": bank.channels,
        "classes": {},
    }
    for cls in sorted(bank.classes):
        styles = bank.classes[cls]
        summary["classes"][str(cls)] = {
            "mean_norms": [round(float(np.linalg.norm(s.mean)), 6) for s in styles],
            "std_norms": [round(float(np.linalg.norm(s.std)), 6) for s in styles],
        }
    return summary
