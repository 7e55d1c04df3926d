"""Loss functions against closed-form oracles, plus the breakdown invariant."""

import numpy as np
import pytest

from dgfd.autograd import Tensor
from dgfd.gradcheck import check_gradients
from dgfd.losses import LossBreakdown, ce_loss, total_loss


def bce_oracle(z, y):
    """Independent form: mean(logaddexp(0, z) - z*y)."""
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    return float(np.mean(np.logaddexp(0.0, z) - z * y))


def test_ce_loss_matches_oracle():
    rng = np.random.default_rng(0)
    for trial in range(100):
        n = int(rng.integers(1, 40))
        z = rng.normal(scale=3.0, size=(n, 1))
        y = (rng.random(n) < 0.5).astype(int)
        got = float(ce_loss(Tensor(z), y).data)
        assert got == pytest.approx(bce_oracle(z, y), abs=1e-9), f"trial {trial}"


def test_ce_loss_known_values():
    # logit 0 gives ln 2 for either label
    assert float(ce_loss(Tensor(np.zeros((2, 1))), [0, 1]).data) == pytest.approx(
        np.log(2.0), abs=1e-12
    )
    # confident correct prediction: loss ~ exp(-|z|)
    assert float(ce_loss(Tensor(np.array([[20.0]])), [1]).data) == pytest.approx(
        np.log1p(np.exp(-20.0)), abs=1e-15
    )


def test_ce_loss_extreme_logits_stable():
    z = np.array([[500.0], [-500.0], [500.0], [-500.0]])
    y = [1, 0, 0, 1]
    val = float(ce_loss(Tensor(z), y).data)
    assert np.isfinite(val)
    # the two wrong confident rows contribute |z| each, the right ones ~0
    assert val == pytest.approx(250.0, abs=1e-9)


def test_ce_loss_gradient():
    rng = np.random.default_rng(1)
    z = Tensor(rng.normal(size=(6, 1)), requires_grad=True)
    y = np.array([0, 1, 1, 0, 1, 0])
    check_gradients(lambda: ce_loss(z, y), [z], rng=rng)
    # analytic check: d/dz mean BCE = (sigmoid(z) - y) / n
    z.grad = None
    loss = ce_loss(z, y)
    loss.backward()
    sig = 1.0 / (1.0 + np.exp(-z.data.reshape(-1)))
    assert np.allclose(z.grad.reshape(-1), (sig - y) / 6.0, atol=1e-12)


def test_ce_loss_validation():
    with pytest.raises(ValueError, match="0 or 1"):
        ce_loss(Tensor(np.zeros((2, 1))), [0, 2])
    with pytest.raises(ValueError, match="2 logits vs 3"):
        ce_loss(Tensor(np.zeros((2, 1))), [0, 1, 1])


def test_total_loss_and_breakdown():
    out = total_loss(Tensor(np.array(0.7)), Tensor(np.array(0.2)), lam=2.0)
    assert out == LossBreakdown(ce=0.7, adv=0.2, total=0.7 + 2.0 * 0.2, lam=2.0)
    assert total_loss(0.5, 9.9, lam=0.0).total == 0.5
    with pytest.raises(ValueError, match="lambda"):
        total_loss(0.5, 0.1, lam=-1.0)
    with pytest.raises(ValueError, match="total must equal"):
        LossBreakdown(ce=0.5, adv=0.1, total=0.9, lam=1.0)
