"""AdaIN re-stylization, affine generators, and stochastic diversification."""

import numpy as np
import pytest

from dgfd.autograd import Tensor
from dgfd import autograd as ag
from dgfd.dda import DDAModule, ClassAffineGenerator, adain
from dgfd.gradcheck import check_gradients
from dgfd.nn import Initializer
from dgfd.style_bank import StyleStats, build_bank, instance_stats


def spatial_stats(data):
    """Per-sample per-channel instance mean and raw std of an array."""
    mean = data.mean(axis=(2, 3))
    std = data.std(axis=(2, 3))
    return mean, std


def test_adain_imposes_target_statistics():
    rng = np.random.default_rng(0)
    A = Tensor(rng.normal(1.5, 2.0, size=(3, 4, 16, 16)))  # H*W = 256
    gamma = rng.uniform(0.5, 2.0, size=4)
    beta = rng.normal(size=4)
    out = adain(A, gamma, beta).data
    mean, std = spatial_stats(out)
    assert np.allclose(mean, beta[None, :], atol=1e-4)
    assert np.allclose(std, gamma[None, :], atol=1e-3)


def test_adain_identity_restylization():
    rng = np.random.default_rng(1)
    A = Tensor(rng.normal(size=(2, 3, 8, 8)))
    stats = instance_stats(A.data)
    gamma = np.stack([s.std for s in stats])
    beta = np.stack([s.mean for s in stats])
    out = adain(A, gamma, beta).data
    assert np.allclose(out, A.data, atol=1e-6)


def test_adain_hand_case():
    # channel [1, 3]: mean 2, std 1; gamma 2, beta 5 -> [3, 7]
    A = Tensor(np.array([1.0, 3.0]).reshape(1, 1, 1, 2))
    out = adain(A, np.array([2.0]), np.array([5.0])).data
    assert np.allclose(out.reshape(-1), [3.0, 7.0], atol=1e-4)


def test_adain_per_sample_affines():
    rng = np.random.default_rng(2)
    A = Tensor(rng.normal(size=(2, 3, 16, 16)))
    gamma = rng.uniform(0.5, 2.0, size=(2, 3))
    beta = rng.normal(size=(2, 3))
    out = adain(A, gamma, beta).data
    mean, std = spatial_stats(out)
    assert np.allclose(mean, beta, atol=1e-4)
    assert np.allclose(std, gamma, atol=1e-3)


def test_adain_shape_validation():
    A = Tensor(np.zeros((2, 3, 4, 4)))
    with pytest.raises(ValueError, match="does not match 3 channels"):
        adain(A, np.ones(2), np.zeros(3))


def test_adain_gradients():
    rng = np.random.default_rng(3)
    A = Tensor(rng.normal(size=(2, 2, 3, 3)), requires_grad=True)
    gamma = Tensor(rng.uniform(0.5, 1.5, size=2), requires_grad=True)
    beta = Tensor(rng.normal(size=2), requires_grad=True)
    # a plain sum is constant in A (the normalized map sums to zero per
    # channel), so weight the output to expose the full jacobian
    W = rng.normal(size=(2, 2, 3, 3))
    check_gradients(lambda: ag.tsum(ag.mul(adain(A, gamma, beta), W)), [A, gamma, beta], rng=rng)


def test_generator_identity_init():
    init = Initializer(seed=0)
    gen = ClassAffineGenerator(init, "gen", channels=3, embed_dim=5)
    mu = np.array([0.5, -1.0, 2.0])
    sigma = np.array([1.1, 0.9, 1.4])
    gamma, beta = gen.from_bank(np.concatenate([mu, sigma]))
    assert np.allclose(gamma.data, sigma, atol=1e-12)
    assert np.allclose(beta.data, mu, atol=1e-12)
    # live path starts at the do-nothing affine
    g2, b2 = gen.from_embed(Tensor(np.random.default_rng(1).normal(size=5)))
    assert np.allclose(g2.data, np.ones(3), atol=1e-12)
    assert np.allclose(b2.data, np.zeros(3), atol=1e-12)


def make_module(channels=3, embed_dim=4, p_div=0.5):
    return DDAModule(Initializer(seed=9), "dda", channels, embed_dim=embed_dim, p_div=p_div)


def test_diversify_matches_bank_style_at_init():
    rng = np.random.default_rng(4)
    mod = make_module()
    F_c = Tensor(rng.normal(size=(2, 3, 16, 16)))
    style = StyleStats(mean=rng.normal(size=3), std=rng.uniform(0.5, 2.0, size=3))
    out = mod.diversify(F_c, style, n=0).data
    mean, std = spatial_stats(out)
    assert np.allclose(mean, style.mean[None, :], atol=1e-4)
    assert np.allclose(std, style.std[None, :], atol=1e-3)
    with pytest.raises(KeyError, match="unknown class 5"):
        mod.diversify(F_c, style, n=5)


def test_content_path_normalizes_batch_statistics():
    rng = np.random.default_rng(5)
    mod = make_module()
    x = Tensor(rng.normal(3.0, 2.5, size=(8, 3, 10, 10)))
    out = mod.content(x, training=True).data
    assert np.allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-3)
    assert np.allclose(out.std(axis=(0, 2, 3)), 1.0, atol=1e-3)


def test_style_embedding_reads_channel_means():
    rng = np.random.default_rng(6)
    mod = make_module()
    x = Tensor(rng.normal(size=(2, 3, 6, 6)), requires_grad=True)
    e = mod.style_embedding(x)
    assert e.shape == (2, 4)

    # spatial rearrangement preserves channel means, hence the embedding
    perm = rng.permutation(36)
    shuffled = x.data.reshape(2, 3, 36)[:, :, perm].reshape(2, 3, 6, 6)
    assert np.allclose(mod.style_embedding(Tensor(shuffled)).data, e.data, atol=1e-12)

    # shifting one channel's mean must move the embedding
    shifted = x.data.copy()
    shifted[:, 1] += 2.0
    assert not np.allclose(mod.style_embedding(Tensor(shifted)).data, e.data, atol=1e-6)

    # the style path trains end to end: gradients reach the feature map
    ag.tsum(e).backward()
    assert x.grad is not None
    assert np.abs(x.grad).max() > 0


def toy_bank(rng, channels=3, C=4):
    feats = {
        0: rng.normal(size=(8, channels, 5, 5)),
        1: rng.normal(1.0, 1.5, size=(8, channels, 5, 5)),
    }
    return build_bank(feats, C=C)


def test_mix_or_pass_zero_probability_is_identity():
    rng = np.random.default_rng(7)
    mod = make_module(p_div=0.0)
    F_c = Tensor(rng.normal(size=(4, 3, 5, 5)))
    bank = toy_bank(rng)
    out = mod.mix_or_pass(F_c, [0, 1, 0, 1], bank, np.random.default_rng(0), np.random.default_rng(1))
    assert out is F_c
    # a missing bank also passes through
    mod2 = make_module(p_div=1.0)
    assert mod2.mix_or_pass(F_c, [0, 1, 0, 1], None, np.random.default_rng(0), np.random.default_rng(1)) is F_c


def test_mix_or_pass_full_probability_stylizes_every_row():
    rng = np.random.default_rng(8)
    mod = make_module(p_div=1.0)
    F_c = Tensor(rng.normal(size=(5, 3, 16, 16)))
    bank = toy_bank(rng)
    labels = np.array([0, 1, 1, 0, 0])
    out = mod.mix_or_pass(F_c, labels, bank, np.random.default_rng(2), np.random.default_rng(3)).data
    mean, _ = spatial_stats(out)
    orig_mean, _ = spatial_stats(F_c.data)
    # every row was re-stylized away from its own statistics
    assert not np.any(np.all(np.isclose(mean, orig_mean, atol=1e-8), axis=1))


def test_mix_or_pass_is_reproducible_and_partial():
    rng = np.random.default_rng(9)
    mod = make_module(p_div=0.5)
    F_c = Tensor(rng.normal(size=(12, 3, 6, 6)))
    bank = toy_bank(rng)
    labels = rng.integers(0, 2, size=12)

    out1 = mod.mix_or_pass(F_c, labels, bank, np.random.default_rng(10), np.random.default_rng(11)).data
    out2 = mod.mix_or_pass(F_c, labels, bank, np.random.default_rng(10), np.random.default_rng(11)).data
    assert np.array_equal(out1, out2)

    # rows the Bernoulli draw skipped pass through untouched
    chosen = np.random.default_rng(10).random(12) < 0.5
    assert np.array_equal(out1[~chosen], F_c.data[~chosen])
    assert chosen.any() and not chosen.all()
    for i in np.flatnonzero(chosen):
        assert not np.allclose(out1[i], F_c.data[i], atol=1e-8)


def test_mix_or_pass_validation():
    rng = np.random.default_rng(12)
    mod = make_module()
    F_c = Tensor(rng.normal(size=(3, 3, 4, 4)))
    bank = toy_bank(rng)
    with pytest.raises(ValueError, match="3 rows vs 2"):
        mod.mix_or_pass(F_c, [0, 1], bank, np.random.default_rng(0), np.random.default_rng(1))
    with pytest.raises(ValueError, match="p_div"):
        mod.mix_or_pass(F_c, [0, 1, 0], bank, np.random.default_rng(0), np.random.default_rng(1), p_div=1.5)
    with pytest.raises(ValueError, match="p_div"):
        DDAModule(Initializer(seed=1), "bad", 3, p_div=-0.1)


def test_mix_or_pass_gradient_flows_to_content():
    rng = np.random.default_rng(13)
    mod = make_module(p_div=1.0)
    bank = toy_bank(rng)
    labels = np.array([0, 1])
    F_c = Tensor(rng.normal(size=(2, 3, 4, 4)), requires_grad=True)
    rngs = lambda: (np.random.default_rng(20), np.random.default_rng(21))

    def loss():
        mix, dirichlet = rngs()
        return ag.tmean(ag.power(mod.mix_or_pass(F_c, labels, bank, mix, dirichlet), 2.0))

    check_gradients(loss, [F_c], rng=rng)
