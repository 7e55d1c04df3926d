"""Layers and parameter management for the float64 autograd engine.

Modules register parameters (trainable Tensors) and state arrays (batch-norm
running statistics, annealed temperatures).  Every parameter is initialized
from its own named random stream, so two models built from the same seed
share bit-identical values for every parameter they have in common, no
matter which optional blocks are enabled.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .rng import stream


class Initializer:
    """Per-parameter seeded initialization, independent of creation order."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def normal(self, name: str, shape, std: float) -> np.ndarray:
        return stream(self.seed, "init", name).normal(0.0, std, size=shape)

    def he(self, name: str, shape, fan_in: int) -> np.ndarray:
        return self.normal(name, shape, np.sqrt(2.0 / fan_in))


class Module:
    """Base class: tracks parameters, mutable state arrays and children."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._state: dict[str, np.ndarray] = {}
        self._children: dict[str, "Module"] = {}

    def add_param(self, name: str, array: np.ndarray) -> Tensor:
        t = Tensor(np.asarray(array, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def add_state(self, name: str, array: np.ndarray) -> np.ndarray:
        a = np.asarray(array, dtype=np.float64)
        self._state[name] = a
        return a

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_params(self, prefix: str = "") -> dict[str, Tensor]:
        out = {prefix + k: v for k, v in self._params.items()}
        for cname, child in self._children.items():
            out.update(child.named_params(f"{prefix}{cname}."))
        return out

    def named_state(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {prefix + k: v for k, v in self._state.items()}
        for cname, child in self._children.items():
            out.update(child.named_state(f"{prefix}{cname}."))
        return out

    def load_state(self, arrays: dict[str, np.ndarray], prefix: str = "") -> None:
        for name, tensor in self.named_params(prefix).items():
            tensor.data[...] = arrays[name]
        for name, arr in self.named_state(prefix).items():
            arr[...] = arrays[name]

    def param_count(self) -> int:
        return sum(t.data.size for t in self.named_params().values())


class Conv2d(Module):
    """Same-padding 2-D convolution (cross-correlation), square kernels."""

    def __init__(self, init: Initializer, name: str, cin: int, cout: int,
                 ksize: int = 3, stride: int = 1, bias: bool = True):
        super().__init__()
        self.stride = stride
        self.ksize = ksize
        fan_in = cin * ksize * ksize
        self.weight = self.add_param("weight", init.he(f"{name}.weight", (cout, cin, ksize, ksize), fan_in))
        self.bias = self.add_param("bias", np.zeros(cout)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return ag.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.ksize // 2)


class Linear(Module):
    def __init__(self, init: Initializer, name: str, n_in: int, n_out: int, bias: bool = True):
        super().__init__()
        self.weight = self.add_param("weight", init.he(f"{name}.weight", (n_out, n_in), n_in))
        self.bias = self.add_param("bias", np.zeros(n_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = ag.matmul(x, ag.transpose(self.weight, (1, 0)))
        if self.bias is not None:
            out = ag.add(out, self.bias)
        return out


class BatchNorm2d(Module):
    """Batch normalization over (B, H, W) per channel.

    Population (biased) variance is used both for the in-batch normalization
    and for the running estimates, so train and eval agree in the limit.
    """

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1,
                 affine: bool = True):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.affine = affine
        if affine:
            self.gamma = self.add_param("gamma", np.ones(channels))
            self.beta = self.add_param("beta", np.zeros(channels))
        self.running_mean = self.add_state("running_mean", np.zeros(channels))
        self.running_var = self.add_state("running_var", np.ones(channels))

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        if training:
            mu = ag.tmean(x, axis=(0, 2, 3), keepdims=True)
            var = ag.tmean(ag.power(ag.sub(x, mu), 2.0), axis=(0, 2, 3), keepdims=True)
            m = self.momentum
            self.running_mean[...] = (1 - m) * self.running_mean + m * mu.data.reshape(-1)
            self.running_var[...] = (1 - m) * self.running_var + m * var.data.reshape(-1)
        else:
            c = self.running_mean.size
            mu = Tensor(self.running_mean.reshape(1, c, 1, 1))
            var = Tensor(self.running_var.reshape(1, c, 1, 1))
        xhat = ag.div(ag.sub(x, mu), ag.sqrt(ag.add(var, self.eps)))
        if self.affine:
            c = self.gamma.data.size
            xhat = ag.add(ag.mul(xhat, ag.reshape(self.gamma, (1, c, 1, 1))),
                          ag.reshape(self.beta, (1, c, 1, 1)))
        return xhat


def instance_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-sample, per-channel standardization over the spatial plane."""
    mu = ag.tmean(x, axis=(2, 3), keepdims=True)
    var = ag.tmean(ag.power(ag.sub(x, mu), 2.0), axis=(2, 3), keepdims=True)
    return ag.div(ag.sub(x, mu), ag.sqrt(ag.add(var, eps)))


def global_avg_pool(x: Tensor) -> Tensor:
    """(B, C, H, W) -> (B, C) channel means."""
    return ag.tmean(x, axis=(2, 3))


def avg_pool2(x: Tensor) -> Tensor:
    """2x2 average pooling with stride 2; spatial dims must be even."""
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"avg_pool2 needs even spatial dims, got {h}x{w}")
    x6 = ag.reshape(x, (b, c, h // 2, 2, w // 2, 2))
    return ag.tmean(x6, axis=(3, 5))
