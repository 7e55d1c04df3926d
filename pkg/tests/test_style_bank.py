"""Style bank: FPS selection, instance statistics, Dirichlet mixing, serialization."""

import numpy as np
import pytest

from dgfd.style_bank import (
    StyleBank,
    StyleStats,
    aggregate_style,
    build_bank,
    fps_select,
    instance_stats,
    load_bank,
    sample_weights,
    save_bank,
)


def fps_brute_force(points, count):
    """Reference greedy maximin selection, written with explicit loops.

    Uses the same arithmetic (squared Euclidean) but independent control
    flow: manual argmax with strict ``>`` so ties fall to the lowest index.
    """
    points = np.asarray(points, dtype=np.float64)
    if count == 0:
        return []
    n = len(points)
    dists = ((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
    centroid = points.mean(axis=0)
    d_centroid = ((points - centroid) ** 2).sum(axis=1)

    best, best_d = 0, d_centroid[0]
    for i in range(1, n):
        if d_centroid[i] > best_d:
            best, best_d = i, d_centroid[i]
    selected = [best]
    while len(selected) < count:
        pick, pick_d = 0, min(dists[0][j] for j in selected)
        for i in range(1, n):
            d = min(dists[i][j] for j in selected)
            if d > pick_d:
                pick, pick_d = i, d
        selected.append(pick)
    return selected


def test_fps_matches_brute_force():
    rng = np.random.default_rng(0)
    for trial in range(1000):
        n = int(rng.integers(1, 65))
        d = int(rng.integers(1, 9))
        count = int(rng.integers(0, n + 1))
        points = rng.normal(size=(n, d))
        if trial % 7 == 0:
            # quantized coordinates force distance ties
            points = np.round(points * 2) / 2
        got = fps_select(points, count)
        assert got == fps_brute_force(points, count), f"trial {trial}"


def test_fps_worked_sequence():
    points = np.array([[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]])
    # 0 and 5 tie for farthest-from-centroid; the tie-break keeps index 0,
    # then 5 is farthest from 0, then 2 wins the 2-vs-3 tie.
    assert fps_select(points, 3) == [0, 5, 2]


def test_fps_successive_picks_are_maximin():
    rng = np.random.default_rng(1)
    for _ in range(50):
        points = rng.normal(size=(30, 4))
        selected = fps_select(points, 10)
        for k in range(1, 10):
            prev = points[selected[:k]]
            min_d = ((points[:, None, :] - prev[None, :, :]) ** 2).sum(axis=2).min(axis=1)
            assert min_d[selected[k]] == min_d.max()


def test_fps_edge_cases():
    points = np.arange(12.0).reshape(6, 2)
    assert fps_select(points, 0) == []
    assert sorted(fps_select(points, 6)) == list(range(6))
    centroid_far = int(np.argmax(((points - points.mean(axis=0)) ** 2).sum(axis=1)))
    assert fps_select(points, 1) == [centroid_far]
    with pytest.raises(ValueError, match="cannot select 7"):
        fps_select(points, 7)
    with pytest.raises(ValueError, match="finite"):
        fps_select(np.array([[0.0], [np.nan]]), 1)
    with pytest.raises(ValueError, match=r"\(n, d\)"):
        fps_select(np.zeros(5), 2)


def test_instance_stats_oracle():
    rng = np.random.default_rng(2)
    fm = rng.normal(size=(3, 5, 4, 6))
    eps = 1e-5
    stats = instance_stats(fm, eps=eps)
    assert len(stats) == 3
    for b, s in enumerate(stats):
        for c in range(5):
            plane = fm[b, c]
            assert s.mean[c] == pytest.approx(plane.mean(), abs=1e-15)
            assert s.std[c] == pytest.approx(np.sqrt(plane.var() + eps), abs=1e-15)


def test_instance_stats_batch_independent():
    rng = np.random.default_rng(3)
    fm = rng.normal(size=(4, 3, 8, 8))
    together = instance_stats(fm)
    for b in range(4):
        alone = instance_stats(fm[b : b + 1])[0]
        assert np.array_equal(together[b].mean, alone.mean)
        assert np.array_equal(together[b].std, alone.std)


def test_instance_stats_eps_floor_and_errors():
    flat = np.full((1, 2, 4, 4), 3.0)
    s = instance_stats(flat, eps=1e-5)[0]
    assert np.allclose(s.std, np.sqrt(1e-5))

    bad = np.zeros((4, 2, 3, 3))
    bad[2, 1, 0, 0] = np.inf
    with pytest.raises(ValueError, match="batch index 2"):
        instance_stats(bad)
    with pytest.raises(ValueError, match="got shape"):
        instance_stats(np.zeros((2, 3, 4)))


def test_style_stats_vector():
    s = StyleStats(mean=np.array([1.0, 2.0]), std=np.array([3.0, 4.0]))
    assert np.array_equal(s.vector(), [1.0, 2.0, 3.0, 4.0])
    stacked = StyleStats(mean=np.zeros((2, 3)), std=np.ones((2, 3)))
    with pytest.raises(ValueError, match="single styles"):
        stacked.vector()
    with pytest.raises(ValueError, match="matching"):
        StyleStats(mean=np.zeros(2), std=np.zeros(3))


def test_build_bank_per_class_isolation():
    rng = np.random.default_rng(4)
    feats = {0: rng.normal(size=(12, 4, 5, 5)), 1: rng.normal(size=(12, 4, 5, 5))}
    bank_a = build_bank(feats, C=3)
    feats_b = {0: feats[0], 1: rng.normal(size=(12, 4, 5, 5))}
    bank_b = build_bank(feats_b, C=3)
    for s_a, s_b in zip(bank_a.classes[0], bank_b.classes[0]):
        assert np.array_equal(s_a.mean, s_b.mean)
        assert np.array_equal(s_a.std, s_b.std)


def test_build_bank_selected_styles_come_from_fps():
    rng = np.random.default_rng(5)
    feats = {0: rng.normal(size=(10, 3, 4, 4))}
    bank = build_bank(feats, C=4)
    stats = instance_stats(feats[0])
    idx = fps_select(np.stack([s.vector() for s in stats]), 4)
    for s_bank, i in zip(bank.classes[0], idx):
        assert np.array_equal(s_bank.mean, stats[i].mean)
        assert np.array_equal(s_bank.std, stats[i].std)


def test_build_bank_errors_and_degenerate_warning():
    rng = np.random.default_rng(6)
    with pytest.raises(ValueError, match="class 1: 2 samples"):
        build_bank({0: rng.normal(size=(5, 2, 3, 3)), 1: rng.normal(size=(2, 2, 3, 3))}, C=4)
    with pytest.raises(ValueError, match="C must be >= 1"):
        build_bank({0: rng.normal(size=(5, 2, 3, 3))}, C=0)
    with pytest.warns(UserWarning, match="identical"):
        build_bank({0: np.ones((6, 2, 3, 3))}, C=2)


def test_sample_weights_simplex_and_moments():
    rng = np.random.default_rng(7)
    draws = np.stack([sample_weights(4, rng) for _ in range(20000)])
    assert (draws >= 0).all()
    assert np.allclose(draws.sum(axis=1), 1.0, atol=1e-12)
    # symmetric Dirichlet: every coordinate has expectation 1/C
    assert np.allclose(draws.mean(axis=0), 0.25, atol=0.01)
    assert np.array_equal(sample_weights(1, rng), [1.0])
    with pytest.raises(ValueError, match="C must be >= 1"):
        sample_weights(0, rng)


def test_sample_weights_sparse_tendency():
    # concentration 1/C favors corners of the simplex: the largest
    # coordinate dominates far more often than under a flat Dirichlet,
    # whose median max over 8 coords sits near 0.34
    rng = np.random.default_rng(8)
    draws = np.stack([sample_weights(8, rng) for _ in range(2000)])
    assert np.median(draws.max(axis=1)) > 0.5


def test_aggregate_style_convex_oracle():
    rng = np.random.default_rng(9)
    feats = {0: rng.normal(size=(8, 3, 4, 4)), 1: rng.normal(size=(8, 3, 4, 4))}
    bank = build_bank(feats, C=4)
    w = sample_weights(4, rng)
    agg = aggregate_style(bank, 1, w)
    mean = np.zeros(3)
    std = np.zeros(3)
    for k in range(4):
        mean += w[k] * bank.classes[1][k].mean
        std += w[k] * bank.classes[1][k].std
    assert np.allclose(agg.mean, mean, atol=1e-12)
    assert np.allclose(agg.std, std, atol=1e-12)

    with pytest.raises(KeyError, match="class 7 not in bank"):
        aggregate_style(bank, 7, w)
    with pytest.raises(ValueError, match="length C=4"):
        aggregate_style(bank, 0, np.ones(3) / 3)


def test_bank_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(10)
    feats = {0: rng.normal(size=(9, 6, 5, 5)), 1: rng.normal(size=(9, 6, 5, 5))}
    bank = build_bank(feats, C=5)
    path = tmp_path / "bank.npz"
    save_bank(path, bank)
    loaded = load_bank(path)
    assert loaded.C == bank.C
    assert loaded.channels == bank.channels
    assert sorted(loaded.classes) == sorted(bank.classes)
    for cls in bank.classes:
        for s_l, s_b in zip(loaded.classes[cls], bank.classes[cls]):
            assert np.array_equal(s_l.mean, s_b.mean)
            assert np.array_equal(s_l.std, s_b.std)


def test_bank_load_rejects_unknown_version(tmp_path):
    rng = np.random.default_rng(11)
    bank = build_bank({0: rng.normal(size=(4, 2, 3, 3))}, C=2)
    path = tmp_path / "bank.npz"
    save_bank(path, bank)
    with np.load(path, allow_pickle=False) as archive:
        payload = {k: archive[k] for k in archive.files}
    payload["format_version"] = np.array([99])
    tampered = tmp_path / "tampered.npz"
    np.savez(tampered, **payload)
    with pytest.raises(ValueError, match="version 99"):
        load_bank(tampered)


def test_bank_constructor_validation():
    s2 = StyleStats(mean=np.zeros(2), std=np.ones(2))
    s3 = StyleStats(mean=np.zeros(3), std=np.ones(3))
    with pytest.raises(ValueError, match="expected C=2"):
        StyleBank(classes={0: [s2]}, C=2)
    with pytest.raises(ValueError, match="channels"):
        StyleBank(classes={0: [s2], 1: [s3]}, C=1)
