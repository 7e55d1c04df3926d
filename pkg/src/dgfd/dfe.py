"""Dynamic feature extraction block.

The input is split along channels; one half passes through an
instance-conditioned dynamic convolution (softmax attention over K expert
kernels, computed from the half's GAP descriptor) whose output gates the
input element-wise, the other half through a plain convolution block.  The
concatenated branches are fused back to the original channel count.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .nn import BatchNorm2d, Conv2d, Initializer, Linear, Module, global_avg_pool


def channel_split(x: Tensor) -> tuple[Tensor, Tensor]:
    """First half / second half of the channel axis; concat restores x."""
    c = x.shape[1]
    if c % 2:
        raise ValueError(f"channel_split needs an even channel count, got {c}")
    half = c // 2
    return x[:, :half], x[:, half:]


class DynamicBranch(Module):
    """Z = (attention-mixed expert convolution of M_a) * M_a element-wise.

    Attention is per batch element: softmax(linear(GAP(M_a)) / temperature)
    over the K experts; the effective kernel is the convex combination of
    expert kernels.  Kernels carry no bias, so zero input maps to zero.
    """

    def __init__(self, init: Initializer, name: str, channels: int,
                 n_experts: int = 4, ksize: int = 3, temperature: float = 30.0):
        super().__init__()
        if n_experts < 2:
            raise ValueError(f"need at least 2 expert kernels, got {n_experts}")
        if temperature <= 0:
            raise ValueError(f"temperature must be positive, got {temperature}")
        self.channels = channels
        self.n_experts = n_experts
        self.ksize = ksize
        fan_in = channels * ksize * ksize
        self.experts = self.add_param(
            "experts",
            init.he(f"{name}.experts", (n_experts, channels, channels, ksize, ksize), fan_in),
        )
        self.attn = self.add_child("attn", Linear(init, f"{name}.attn", channels, n_experts))
        self.temperature = self.add_state("temperature", np.array([temperature]))

    def attention(self, M_a: Tensor) -> Tensor:
        logits = self.attn(global_avg_pool(M_a))
        return ag.softmax(ag.mul(logits, 1.0 / float(self.temperature[0])), axis=1)

    def __call__(self, M_a: Tensor) -> Tensor:
        if M_a.shape[1] != self.channels:
            raise ValueError(f"dynamic branch expects {self.channels} channels, got {M_a.shape[1]}")
        b, c, h, w = M_a.shape
        k = self.ksize
        weights = self.attention(M_a)  # (B, K)
        flat_experts = ag.reshape(self.experts, (self.n_experts, -1))
        effective = ag.reshape(ag.matmul(weights, flat_experts), (b, c, c * k * k))
        cols = ag.im2col(M_a, k, stride=1, pad=k // 2)
        conv = ag.reshape(ag.matmul(effective, cols), (b, c, h, w))
        return ag.mul(conv, M_a)


class StaticBranch(Module):
    """Plain same-padding convolution block: conv -> norm -> activation."""

    def __init__(self, init: Initializer, name: str, channels: int, ksize: int = 3,
                 use_norm: bool = True, use_act: bool = True):
        super().__init__()
        self.use_norm = use_norm
        self.use_act = use_act
        self.conv = self.add_child("conv", Conv2d(init, f"{name}.conv", channels, channels, ksize))
        if use_norm:
            self.norm = self.add_child("norm", BatchNorm2d(channels))

    def __call__(self, M_b: Tensor, training: bool = True) -> Tensor:
        out = self.conv(M_b)
        if self.use_norm:
            out = self.norm(out, training)
        if self.use_act:
            out = ag.relu(out)
        return out


class DFEBlock(Module):
    """Channel split -> dynamic / static branches -> concat -> fuse."""

    def __init__(self, init: Initializer, name: str, channels: int,
                 n_experts: int = 4, ksize: int = 3, temperature: float = 30.0):
        super().__init__()
        if channels % 2:
            raise ValueError(f"DFE needs an even channel count, got {channels}")
        half = channels // 2
        self.channels = channels
        self.dynamic = self.add_child(
            "dynamic", DynamicBranch(init, f"{name}.dynamic", half, n_experts, ksize, temperature)
        )
        self.static = self.add_child("static", StaticBranch(init, f"{name}.static", half, ksize))
        self.fuse_conv = self.add_child("fuse_conv", Conv2d(init, f"{name}.fuse_conv", channels, channels, ksize))
        self.fuse_norm = self.add_child("fuse_norm", BatchNorm2d(channels))

    def fuse(self, Z: Tensor, Z_prime: Tensor, training: bool = True) -> Tensor:
        if Z.shape[0] != Z_prime.shape[0] or Z.shape[2:] != Z_prime.shape[2:]:
            raise ValueError(f"branch outputs misaligned: {Z.shape} vs {Z_prime.shape}")
        merged = ag.concat([Z, Z_prime], axis=1)
        return ag.relu(self.fuse_norm(self.fuse_conv(merged), training))

    def __call__(self, x: Tensor, training: bool = True) -> Tensor:
        M_a, M_b = channel_split(x)
        return self.fuse(self.dynamic(M_a), self.static(M_b, training), training)
