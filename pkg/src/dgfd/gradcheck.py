"""Central finite-difference verification of autograd gradients.

The checker perturbs individual coordinates of the leaf tensors feeding a
scalar loss and compares (f(x+h) - f(x-h)) / 2h against the taped gradient.
All arithmetic is float64, so with h ~ 1e-5 the truncation and round-off
floors sit far below the 1e-4 relative tolerance used throughout the tests.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .autograd import Tensor


def relative_error(a: float, b: float, floor: float = 1e-6) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_gradients(
    loss_fn: Callable[[], Tensor],
    leaves: Sequence[Tensor],
    rel_tol: float = 1e-4,
    floor: float = 1e-6,
    h: float = 1e-5,
    max_coords: int = 16,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare taped gradients of ``loss_fn()`` against central differences.

    ``loss_fn`` must rebuild the graph from the leaves' current ``.data`` on
    every call.  For each leaf up to ``max_coords`` coordinates are sampled
    (all of them when the tensor is small).  Returns the worst relative error
    seen; raises ``AssertionError`` when it exceeds ``rel_tol``.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    for leaf in leaves:
        if not leaf.requires_grad:
            raise ValueError("all checked leaves must have requires_grad=True")
        leaf.zero_grad()

    loss = loss_fn()
    if loss.data.size != 1:
        raise ValueError("loss_fn must return a scalar Tensor")
    loss.backward()

    worst = 0.0
    for leaf in leaves:
        if leaf.grad is None:
            raise AssertionError("leaf received no gradient")
        flat = leaf.data.reshape(-1)
        n = flat.size
        if n <= max_coords:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=max_coords, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            up = float(loss_fn().data)
            flat[c] = orig - h
            down = float(loss_fn().data)
            flat[c] = orig
            fd = (up - down) / (2.0 * h)
            an = float(leaf.grad.reshape(-1)[c])
            err = relative_error(fd, an, floor)
            worst = max(worst, err)
            if err > rel_tol:
                raise AssertionError(
                    f"gradient mismatch at coord {int(c)}: "
                    f"finite-diff {fd:.10g} vs autograd {an:.10g} "
                    f"(rel err {err:.3g} > {rel_tol:g})"
                )
    return worst
