"""Seeded training loop for the detector.

One Trainer owns one (manifest, seed) run.  All randomness flows through
named substreams of the run seed (data order, bank subsampling, Bernoulli
selection, Dirichlet weights), so two runs with the same manifest and seed
are bit-identical, and disabling one module never shifts another module's
draws.  The adversarial term is skipped entirely when its weight is zero,
which makes a lambda=0 run identical to a build without the domain head.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .backbone import ForgeryDetector
from .config import ExperimentManifest
from .data import SplitDataset, to_arrays
from .domain_head import adv_loss
from .losses import LossBreakdown, ce_loss
from .metrics import evaluate_scores
from .rng import stream
from .style_bank import StyleBank, build_bank

logger = logging.getLogger(__name__)

TRAIN_CSV_COLUMNS = ("epoch", "ce", "adv", "total", "val_acc", "val_auc", "val_eer")


class Adam:
    """Adam on a named parameter dict; update order is name-sorted."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.items = sorted(params.items())
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.items}
        self.v = {name: np.zeros_like(p.data) for name, p in self.items}

    def zero_grad(self) -> None:
        for _, p in self.items:
            p.grad = None

    def step(self, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for name, p in self.items:
            if p.grad is None:
                continue
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainOutcome:
    model: ForgeryDetector
    history: list[dict]
    best_epoch: int
    best_val_auc: float


def build_model_bank(model: ForgeryDetector, x: np.ndarray, y: np.ndarray,
                     C: int, cap: int, rng: np.random.Generator) -> StyleBank:
    """Per-class style bank from eval-mode injection features.

    Classes larger than ``cap`` are subsampled (sorted indices, so the
    outcome is order-independent).  Eval mode makes the features batch-size
    independent, hence the chunking is invisible in the result.
    """
    feats_by_class: dict[int, np.ndarray] = {}
    for cls in model.config.class_ids:
        rows = np.flatnonzero(y == cls)
        if rows.size > cap:
            rows = np.sort(rng.choice(rows, size=cap, replace=False))
        chunks = [model.features_at_injection(x[rows[lo : lo + 128]])
                  for lo in range(0, rows.size, 128)]
        feats_by_class[cls] = np.concatenate(chunks)
    return build_bank(feats_by_class, C=C, eps=model.config.eps)


class Trainer:
    def __init__(self, manifest: ExperimentManifest, seed: int, dataset: SplitDataset):
        self.manifest = manifest
        self.cfg = manifest.train
        self.seed = int(seed)
        self.model = ForgeryDetector(manifest.model, self.seed)
        self.dataset = dataset
        self.x_train, self.y_train, self.d_train = to_arrays(dataset.train)
        if dataset.val:
            self.x_val, self.y_val, _ = to_arrays(dataset.val)
        else:
            self.x_val = self.y_val = None
        self.rng_data = stream(self.seed, "data")
        self.rng_mix = stream(self.seed, "mix")
        self.rng_dirichlet = stream(self.seed, "dirichlet")
        self.rng_bank = stream(self.seed, "bank")
        self.adam = Adam(self.model.named_params(), lr=self.cfg.lr)
        self.bank: StyleBank | None = None

    # ---------------------------------------------------------------- schedules
    def epoch_lr(self, epoch: int) -> float:
        if self.cfg.lr_schedule == "constant":
            return self.cfg.lr
        return self.cfg.lr * 0.5 * (1.0 + np.cos(np.pi * epoch / max(self.cfg.epochs, 1)))

    def epoch_grl_strength(self, epoch: int) -> float:
        if epoch < self.cfg.grl_warmup_epochs:
            return 0.0
        return self.cfg.grl_strength

    def epoch_temperature(self, epoch: int) -> float:
        t0, t1 = self.cfg.temperature_start, self.cfg.temperature_end
        frac = epoch / max(self.cfg.epochs - 1, 1)
        return t0 + (t1 - t0) * frac

    # ---------------------------------------------------------------- bank
    def refresh_bank(self) -> None:
        self.bank = build_model_bank(self.model, self.x_train, self.y_train,
                                     C=self.cfg.C, cap=self.cfg.bank_max_per_class,
                                     rng=self.rng_bank)

    # ---------------------------------------------------------------- epochs
    def train_epoch(self, epoch: int) -> LossBreakdown:
        model, cfg = self.model, self.cfg
        use_adv = model.config.use_dd and cfg.lam > 0
        use_bank = model.config.use_dda
        if use_bank and epoch % cfg.bank_refresh_epochs == 0:
            model.sync_style_reference()
            self.refresh_bank()
        model.set_dfe_temperature(self.epoch_temperature(epoch))
        lr = self.epoch_lr(epoch)
        grl = self.epoch_grl_strength(epoch)

        order = self.rng_data.permutation(len(self.y_train))
        sum_ce = sum_adv = 0.0
        n_seen = 0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            xb, yb = self.x_train[idx], self.y_train[idx]
            logits, domain_logits, _ = model.forward(
                xb, training=True, y=yb,
                bank=self.bank if use_bank else None,
                rng_mix=self.rng_mix, rng_dirichlet=self.rng_dirichlet,
                grl_strength=grl,
            )
            ce = ce_loss(logits, yb)
            if use_adv:
                adv = adv_loss(domain_logits, self.d_train[idx])
                loss = ag.add(ce, ag.mul(adv, cfg.lam))
                adv_value = float(adv.data)
            else:
                loss = ce
                adv_value = 0.0
            self.adam.zero_grad()
            loss.backward()
            self.adam.step(lr=lr)

            bs = len(idx)
            sum_ce += float(ce.data) * bs
            sum_adv += adv_value * bs
            n_seen += bs
        ce_mean, adv_mean = sum_ce / n_seen, sum_adv / n_seen
        return LossBreakdown(ce=ce_mean, adv=adv_mean,
                             total=ce_mean + cfg.lam * adv_mean, lam=cfg.lam)

    def val_metrics(self) -> dict[str, float]:
        if self.x_val is None:
            return {"acc": float("nan"), "auc": float("nan"), "eer": float("nan")}
        scores = self.model.scores(self.x_val)
        return evaluate_scores(scores, self.y_val)

    # ---------------------------------------------------------------- run
    def run(self) -> TrainOutcome:
        history: list[dict] = []
        best_auc = -np.inf
        best_epoch = 0
        best_arrays: dict[str, np.ndarray] = {}

        def snapshot() -> dict[str, np.ndarray]:
            arrays = {n: t.data.copy() for n, t in self.model.named_params().items()}
            arrays.update({n: a.copy() for n, a in self.model.named_state().items()})
            return arrays

        for epoch in range(self.cfg.epochs):
            losses = self.train_epoch(epoch)
            vm = self.val_metrics()
            row = {
                "epoch": epoch + 1,
                "ce": losses.ce, "adv": losses.adv, "total": losses.total,
                "val_acc": vm["acc"], "val_auc": vm["auc"], "val_eer": vm["eer"],
            }
            history.append(row)
            logger.info(
                "seed %d epoch %d/%d ce %.4f adv %.4f total %.4f val_auc %.4f",
                self.seed, epoch + 1, self.cfg.epochs, losses.ce, losses.adv,
                losses.total, vm["auc"],
            )
            auc = vm["auc"]
            if np.isnan(auc):
                auc = -losses.total  # no val split: keep the lowest-loss epoch
            if auc > best_auc:
                best_auc = auc
                best_epoch = epoch + 1
                best_arrays = snapshot()

        if best_arrays:
            self.model.load_state(best_arrays)
        return TrainOutcome(model=self.model, history=history,
                            best_epoch=best_epoch, best_val_auc=float(best_auc))


def train_run(manifest: ExperimentManifest, seed: int, dataset: SplitDataset) -> TrainOutcome:
    return Trainer(manifest, seed, dataset).run()
