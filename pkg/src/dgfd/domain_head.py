"""Domain discriminator behind a gradient reversal layer.

The discriminator minimizes categorical cross-entropy over domain labels;
because its input passes through gradient reversal, the feature generator
upstream receives the negated gradient and is pushed toward domain-invariant
content features.  One backward pass realizes the min-max game.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor, grad_reverse
from .nn import Initializer, Linear, Module

__all__ = ["grad_reverse", "DomainDiscriminator", "adv_loss"]


class DomainDiscriminator(Module):
    """Two-layer classifier over N domains."""

    def __init__(self, init: Initializer, name: str, in_features: int,
                 n_domains: int, hidden: int = 64):
        super().__init__()
        if n_domains < 2:
            raise ValueError(f"need at least 2 domains, got {n_domains}")
        self.n_domains = n_domains
        self.fc1 = self.add_child("fc1", Linear(init, f"{name}.fc1", in_features, hidden))
        self.fc2 = self.add_child("fc2", Linear(init, f"{name}.fc2", hidden, n_domains))

    def __call__(self, features: Tensor) -> Tensor:
        return self.fc2(ag.relu(self.fc1(features)))


def adv_loss(logits: Tensor, domain_labels) -> Tensor:
    """Mean categorical cross-entropy; labels are 1-indexed domain ids."""
    labels = np.asarray(domain_labels).reshape(-1)
    b, n = logits.shape
    if labels.size != b:
        raise ValueError(f"{b} logit rows vs {labels.size} labels")
    if labels.min() < 1 or labels.max() > n:
        raise ValueError(f"domain labels must lie in 1..{n}, got range [{labels.min()}, {labels.max()}]")
    one_hot = np.zeros((b, n))
    one_hot[np.arange(b), labels - 1] = 1.0
    lse = ag.logsumexp(logits, axis=1)
    picked = ag.tsum(ag.mul(logits, one_hot), axis=1, keepdims=True)
    return ag.tmean(ag.sub(lse, picked))
