"""Diversity-aware content/style split and AdaIN-based feature stylization.

Backbone features are split into a batch-normalized content path and a
pooled style path (GAP + MLP -> style embedding).  During
training, content features are re-stylized with convex combinations of
bank basis styles: per-class learned affine generators map a style
representation to per-channel (gamma, beta), and AdaIN replaces the content
feature's instance statistics with them.  The generators start as identity
selectors (gamma = the style's std block, beta = its mean block), so early
training sees plain statistic transfer.

The style head's input rides a frozen reference copy of the extractor
prefix (synced once per bank refresh) rather than the live features:
values stay current to within one epoch, while the classifier's style
gradients never reshape the live extractor, and every training gradient
remains the true derivative of the loss (no stop-gradient surgery).
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .nn import BatchNorm2d, Initializer, Linear, Module, global_avg_pool
from .style_bank import StyleBank, StyleStats, aggregate_style, sample_weights


def adain(A: Tensor, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Replace A's per-channel instance statistics with (gamma, beta).

    gamma/beta may be vectors of length C (shared across the batch) or
    (B, C) arrays/Tensors (per-sample affine parameters).
    """
    A = ag.as_tensor(A)
    b, c = A.shape[0], A.shape[1]

    def shape_affine(p):
        p = ag.as_tensor(p)
        if p.shape == (c,):
            return ag.reshape(p, (1, c, 1, 1))
        if p.shape == (b, c):
            return ag.reshape(p, (b, c, 1, 1))
        raise ValueError(f"affine parameter shape {p.shape} does not match {c} channels")

    g, bt = shape_affine(gamma), shape_affine(beta)
    mu = ag.tmean(A, axis=(2, 3), keepdims=True)
    var = ag.tmean(ag.power(ag.sub(A, mu), 2.0), axis=(2, 3), keepdims=True)
    normalized = ag.div(ag.sub(A, mu), ag.sqrt(ag.add(var, eps)))
    return ag.add(ag.mul(g, normalized), bt)


class StyleEmbedMLP(Module):
    """GAP descriptor -> squeeze MLP -> style embedding F_s."""

    def __init__(self, init: Initializer, name: str, channels: int, embed_dim: int):
        super().__init__()
        hidden = max(channels // 2, 1)
        self.channels = channels
        self.fc1 = self.add_child("fc1", Linear(init, f"{name}.fc1", channels, hidden))
        self.fc2 = self.add_child("fc2", Linear(init, f"{name}.fc2", hidden, embed_dim))

    def __call__(self, S: Tensor) -> Tensor:
        if S.shape[1] != self.channels:
            raise ValueError(f"style MLP expects {self.channels} channels, got {S.shape[1]}")
        return self.from_means(global_avg_pool(S))

    def from_means(self, m: Tensor) -> Tensor:
        """Embed an already-pooled (B, C) channel-mean descriptor."""
        m = ag.as_tensor(m)
        if m.shape[-1] != self.channels:
            raise ValueError(f"style MLP expects {self.channels} channels, got {m.shape[-1]}")
        return self.fc2(ag.relu(self.fc1(m)))


class ClassAffineGenerator(Module):
    """Per-class linear maps from a style representation to (gamma, beta).

    The bank path consumes concat(mean, std) of an aggregated style and is
    initialized as an exact selector: gamma picks the std half, beta the
    mean half.  The live path consumes a style embedding and starts at the
    constant (gamma, beta) = (1, 0).
    """

    def __init__(self, init: Initializer, name: str, channels: int, embed_dim: int):
        super().__init__()
        self.channels = channels
        eye = np.eye(channels)
        zero = np.zeros((channels, channels))
        self.bank_w_gamma = self.add_param("bank_w_gamma", np.hstack([zero, eye]))
        self.bank_b_gamma = self.add_param("bank_b_gamma", np.zeros(channels))
        self.bank_w_beta = self.add_param("bank_w_beta", np.hstack([eye, zero]))
        self.bank_b_beta = self.add_param("bank_b_beta", np.zeros(channels))
        self.live_w_gamma = self.add_param("live_w_gamma", np.zeros((channels, embed_dim)))
        self.live_b_gamma = self.add_param("live_b_gamma", np.ones(channels))
        self.live_w_beta = self.add_param("live_w_beta", np.zeros((channels, embed_dim)))
        self.live_b_beta = self.add_param("live_b_beta", np.zeros(channels))

    def _affine(self, rep: Tensor, w: Tensor, b: Tensor) -> Tensor:
        squeeze = rep.ndim == 1
        if squeeze:
            rep = ag.reshape(rep, (1, -1))
        out = ag.add(ag.matmul(rep, ag.transpose(w, (1, 0))), b)
        return ag.reshape(out, (-1,)) if squeeze else out

    def from_bank(self, style_vec) -> tuple[Tensor, Tensor]:
        """style_vec: (2C,) or (B, 2C) concat(mean, std) -> gamma, beta."""
        s = ag.as_tensor(style_vec)
        return (
            self._affine(s, self.bank_w_gamma, self.bank_b_gamma),
            self._affine(s, self.bank_w_beta, self.bank_b_beta),
        )

    def from_embed(self, embedding: Tensor) -> tuple[Tensor, Tensor]:
        e = ag.as_tensor(embedding)
        return (
            self._affine(e, self.live_w_gamma, self.live_b_gamma),
            self._affine(e, self.live_w_beta, self.live_b_beta),
        )


class DDAModule(Module):
    """Content/style split plus stochastic bank-style diversification."""

    def __init__(self, init: Initializer, name: str, channels: int,
                 embed_dim: int = 64, class_ids=(0, 1), p_div: float = 0.5,
                 eps: float = 1e-5):
        super().__init__()
        if not 0.0 <= p_div <= 1.0:
            raise ValueError(f"p_div must lie in [0, 1], got {p_div}")
        self.channels = channels
        self.embed_dim = embed_dim
        self.class_ids = tuple(class_ids)
        self.p_div = p_div
        self.eps = eps
        self.bn = self.add_child("bn", BatchNorm2d(channels, eps=eps, affine=False))
        self.mlp = self.add_child("mlp", StyleEmbedMLP(init, f"{name}.mlp", channels, embed_dim))
        self.generators: dict[int, ClassAffineGenerator] = {}
        for cls in self.class_ids:
            gen = ClassAffineGenerator(init, f"{name}.gen{cls}", channels, embed_dim)
            self.add_child(f"gen{cls}", gen)
            self.generators[cls] = gen

    # ------------------------------------------------------------------ paths
    def content(self, x: Tensor, training: bool) -> Tensor:
        return self.bn(x, training)

    def style_embedding(self, x: Tensor) -> Tensor:
        """Style descriptor: MLP(GAP(x)), trained end to end.

        GAP pools each channel plane to its mean, so the embedding encodes
        the per-channel statistics that instance normalization would strip;
        pooling an already-normalized map would yield all zeros.
        """
        return self.mlp(x)

    def style_embed(self, S: Tensor) -> Tensor:
        """F_s = MLP(GAP(S)) for an already instance-normalized S."""
        return self.mlp(S)

    def embed_means(self, means) -> Tensor:
        """Style embedding from per-row channel means (GAP already applied)."""
        return self.mlp.from_means(means)

    # ------------------------------------------------------------- diversify
    def _generator(self, n: int) -> ClassAffineGenerator:
        if n not in self.generators:
            raise KeyError(f"unknown class {n} (have {sorted(self.generators)})")
        return self.generators[n]

    def diversify(self, F_c: Tensor, style, n: int) -> Tensor:
        """AdaIN F_c toward the class-n affine image of ``style``.

        ``style`` is either a StyleStats (bank path; mean/std may be (C,)
        vectors or (B, C) stacks) or a style-embedding Tensor (live path).
        """
        gen = self._generator(n)
        if isinstance(style, StyleStats):
            vec = np.concatenate([style.mean, style.std], axis=-1)
            gamma, beta = gen.from_bank(vec)
        else:
            gamma, beta = gen.from_embed(style)
        return adain(F_c, gamma, beta, eps=self.eps)

    def _mix_core(self, F_c: Tensor, class_labels, bank: StyleBank | None,
                  rng_mix: np.random.Generator, rng_dirichlet: np.random.Generator,
                  p: float) -> tuple[Tensor, list]:
        """Shared mixing pass: (diversified features, [(rows, beta Tensor)]).

        Draw order is fixed (one Bernoulli vector, then one Dirichlet per
        selected row in row order), so a seeded generator reproduces the
        output bit-for-bit.
        """
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p_div must lie in [0, 1], got {p}")
        labels = np.asarray(class_labels).reshape(-1)
        b = F_c.shape[0]
        if labels.size != b:
            raise ValueError(f"{b} rows vs {labels.size} class labels")
        if p == 0.0 or bank is None:
            return F_c, []
        chosen = rng_mix.random(b) < p
        idx = np.flatnonzero(chosen)
        if idx.size == 0:
            return F_c, []
        draws = {int(i): sample_weights(bank.C, rng_dirichlet) for i in idx}

        out = F_c
        applied = []
        for cls in sorted({int(labels[i]) for i in idx}):
            rows = idx[labels[idx] == cls]
            styles = [aggregate_style(bank, cls, draws[int(i)]) for i in rows]
            vec = np.concatenate(
                [np.stack([s.mean for s in styles]), np.stack([s.std for s in styles])],
                axis=-1,
            )
            gamma, beta = self._generator(cls).from_bank(vec)
            stylized = adain(out[rows], gamma, beta, eps=self.eps)
            out = ag.put_rows(out, rows, stylized)
            applied.append((rows, beta))
        return out, applied

    def mix_or_pass(self, F_c: Tensor, class_labels, bank: StyleBank | None,
                    rng_mix: np.random.Generator, rng_dirichlet: np.random.Generator,
                    p_div: float | None = None) -> Tensor:
        """Stylize each batch row with probability p_div, else pass through.

        Each stylized row gets a fresh Dirichlet draw over its own class's
        basis styles.
        """
        p = self.p_div if p_div is None else p_div
        out, _ = self._mix_core(F_c, class_labels, bank, rng_mix, rng_dirichlet, p)
        return out

    def mix_and_style(self, F_c: Tensor, class_labels, bank: StyleBank | None,
                      rng_mix: np.random.Generator, rng_dirichlet: np.random.Generator,
                      reference_means: np.ndarray) -> tuple[Tensor, Tensor]:
        """Diversify features and assemble the style head's input in one pass.

        The style input starts as ``reference_means`` (per-row channel means
        from the frozen reference extractor, constants in the graph); every
        stylized row's entry is replaced by its generated beta, which equals
        that row's post-stylization channel means exactly.  This keeps the
        style head looking at the same mixed statistics the content path
        carries, without routing gradients into the live extractor.
        """
        out, applied = self._mix_core(F_c, class_labels, bank, rng_mix,
                                      rng_dirichlet, self.p_div)
        style_in = ag.as_tensor(np.array(reference_means, dtype=np.float64))
        for rows, beta in applied:
            style_in = ag.put_rows(style_in, rows, beta)
        return out, style_in
