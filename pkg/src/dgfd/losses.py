"""Binary classification loss and the composite training objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor


@dataclass(frozen=True)
class LossBreakdown:
    """Scalar loss components; total = ce + lambda * adv by construction."""

    ce: float
    adv: float
    total: float
    lam: float

    def __post_init__(self):
        if abs(self.total - (self.ce + self.lam * self.adv)) > 1e-12:
            raise ValueError("total must equal ce + lambda * adv")


def ce_loss(binary_logits: Tensor, labels) -> Tensor:
    """Mean binary cross-entropy from logits, stable log-sum-exp form.

    loss_i = max(z, 0) - z*y + log(1 + exp(-|z|)), y in {0, 1}.
    """
    labels = np.asarray(labels).reshape(-1)
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("binary labels must be 0 or 1")
    z = ag.reshape(binary_logits, (-1,))
    if z.shape[0] != labels.size:
        raise ValueError(f"{z.shape[0]} logits vs {labels.size} labels")
    y = labels.astype(np.float64)
    per_sample = ag.add(
        ag.sub(ag.relu(z), ag.mul(z, y)),
        ag.log1p(ag.exp(ag.mul(ag.absolute(z), -1.0))),
    )
    return ag.tmean(per_sample)


def total_loss(ce, adv, lam: float) -> LossBreakdown:
    """Affine combination of the two loss terms, kept for logging."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    ce = float(ce.data) if isinstance(ce, Tensor) else float(ce)
    adv = float(adv.data) if isinstance(adv, Tensor) else float(adv)
    return LossBreakdown(ce=ce, adv=adv, total=ce + lam * adv, lam=lam)
