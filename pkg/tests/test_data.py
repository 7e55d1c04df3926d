"""Synthetic benchmark generator and folder ingestion."""

import numpy as np
import pytest
from PIL import Image

from dgfd.data import (
    DomainSample,
    DomainStyle,
    SynthSpec,
    channel_stats_probe,
    default_styles,
    generate,
    load_folder,
    load_manifest,
    make_sample,
    to_arrays,
    write_dataset,
)

IDENTITY = DomainStyle(hue_shift=0.0, contrast_gain=1.0, blur_sigma=0.0)


def small_spec(**kw):
    base = dict(n_domains=3, samples_per_domain=40, image_size=32, seed=7)
    base.update(kw)
    return SynthSpec(**base)


def test_generate_counts_and_balance():
    ds = generate(small_spec())
    assert ds.holdout_domain == 3
    assert len(ds.test) == 40 and {s.domain for s in ds.test} == {3}
    assert len(ds.train) == 64 and len(ds.val) == 16
    for split in (ds.train, ds.val, ds.test):
        labels = [s.y for s in split]
        assert labels.count(0) == labels.count(1)
    assert {s.domain for s in ds.train} == {1, 2}
    assert 0.0 <= ds.clamp_rate <= 1.0


def test_generate_is_deterministic():
    a = generate(small_spec())
    b = generate(small_spec())
    for s, t in zip(a.all_samples(), b.all_samples()):
        assert s.y == t.y and s.domain == t.domain
        assert np.array_equal(s.image, t.image)


def test_sample_contract():
    spec = small_spec()
    for domain in (1, 3):
        for index in (0, 1, 5):
            s = make_sample(spec, domain, index)
            assert s.image.shape == (3, 32, 32)
            assert s.image.min() >= 0.0 and s.image.max() <= 1.0
            assert s.y == index % 2
            assert s.domain == domain


def test_splits_are_disjoint():
    ds = generate(small_spec())
    seen = {}
    for name in ("train", "val", "test"):
        for s in getattr(ds, name):
            key = s.image.tobytes()
            assert key not in seen, f"{name} shares an image with {seen.get(key)}"
            seen[key] = name


def test_in_domain_mode_splits_every_domain():
    ds = generate(small_spec(), holdout=False)
    assert ds.holdout_domain is None
    for name, count in (("train", 96), ("val", 12), ("test", 12)):
        split = getattr(ds, name)
        assert len(split) == count
        assert {s.domain for s in split} == {1, 2, 3}


def test_artifact_recipe_is_domain_independent():
    """Fakes of different domains share one artifact stream.

    Faces differ per domain, so placement shifts, but the per-sample trace
    energy comes from the same draws: aggregate artifact statistics must
    match across domains.
    """
    styles = (IDENTITY, IDENTITY)
    with_art = SynthSpec(n_domains=2, samples_per_domain=30, image_size=32,
                         seed=11, styles=styles, patch_amplitude=0.3)
    plain = SynthSpec(n_domains=2, samples_per_domain=30, image_size=32,
                    seed=11, styles=styles, patch_amplitude=0.0)
    energy = {1: [], 2: []}
    support = {1: [], 2: []}
    for domain in (1, 2):
        for index in range(1, 30, 2):
            diff = (make_sample(with_art, domain, index).image
                    - make_sample(plain, domain, index).image)
            energy[domain].append(np.abs(diff).sum())
            support[domain].append(int((np.abs(diff).sum(axis=0) > 1e-9).sum()))
        assert min(energy[domain]) > 0.0
    e1, e2 = np.mean(energy[1]), np.mean(energy[2])
    s1, s2 = np.mean(support[1]), np.mean(support[2])
    assert abs(e1 - e2) / max(e1, e2) < 0.15
    assert abs(s1 - s2) / max(s1, s2) < 0.15


def test_style_moves_global_statistics():
    spec_id = small_spec(n_domains=2, styles=(IDENTITY, IDENTITY))
    warm = DomainStyle(hue_shift=0.9, contrast_gain=1.3, blur_sigma=0.0)
    spec_warm = small_spec(n_domains=2, styles=(IDENTITY, warm))
    a = make_sample(spec_id, 2, 0).image
    b = make_sample(spec_warm, 2, 0).image
    assert not np.allclose(a.mean(axis=(1, 2)), b.mean(axis=(1, 2)), atol=1e-3)


def test_channel_probe_separates_domain_not_label():
    ds = generate(SynthSpec(n_domains=3, samples_per_domain=120, image_size=32, seed=5))
    probe = channel_stats_probe(ds.all_samples(), seed=0)
    assert probe["domain_chance"] == pytest.approx(1.0 / 3.0)
    assert probe["domain_acc"] > 0.45
    assert probe["label_acc"] < 0.65


def test_spec_validation():
    with pytest.raises(ValueError, match="samples_per_domain"):
        SynthSpec(samples_per_domain=1)
    with pytest.raises(ValueError, match="image_size"):
        SynthSpec(image_size=8)
    with pytest.raises(ValueError, match="styles given"):
        SynthSpec(n_domains=3, styles=(IDENTITY,))
    with pytest.raises(ValueError, match="outside"):
        SynthSpec(n_domains=3, holdout_domain=4).resolved_holdout()
    with pytest.raises(ValueError, match="held out"):
        generate(SynthSpec(n_domains=1, samples_per_domain=4))
    assert len(default_styles(5)) == 5


def test_write_and_reload_roundtrip(tmp_path):
    ds = generate(SynthSpec(n_domains=2, samples_per_domain=8, image_size=32, seed=2))
    manifest = write_dataset(tmp_path / "out", ds)
    assert manifest.name == "manifest.csv"
    loaded = load_manifest(manifest, image_size=32)
    for name in ("train", "val", "test"):
        orig, back = getattr(ds, name), getattr(loaded, name)
        assert len(orig) == len(back)
        for s, t in zip(orig, back):
            assert (s.y, s.domain) == (t.y, t.domain)
            # 8-bit round trip: half a quantization step
            assert np.abs(s.image - t.image).max() <= 0.5 / 255.0 + 1e-9
    assert loaded.n_domains == 2


def test_load_folder_layout_skip_and_errors(tmp_path):
    root = tmp_path / "faces"
    (root / "real").mkdir(parents=True)
    (root / "fake").mkdir()
    rng = np.random.default_rng(0)
    for i in range(2):
        arr = (rng.random((16, 16, 3)) * 255).astype(np.uint8)
        Image.fromarray(arr).save(root / "real" / f"r{i}.png")
    Image.fromarray((rng.random((16, 16, 3)) * 255).astype(np.uint8)).save(root / "fake" / "f0.png")
    (root / "fake" / "broken.png").write_bytes(b"not an image")

    layout = {"real": (0, 1), "fake": (1, 1)}
    with pytest.warns(UserWarning, match="broken.png"):
        samples = load_folder(root, layout, image_size=16)
    assert len(samples) == 3
    assert sorted(s.y for s in samples) == [0, 0, 1]
    for s in samples:
        assert s.image.shape == (3, 16, 16)
        assert 0.0 <= s.image.min() and s.image.max() <= 1.0

    with pytest.raises(ValueError, match="no readable images"):
        load_folder(root, {"missing": (0, 1)}, image_size=16)


def test_to_arrays_shapes():
    samples = [
        DomainSample(image=np.zeros((3, 4, 4)), y=1, domain=2),
        DomainSample(image=np.ones((3, 4, 4)), y=0, domain=1),
    ]
    images, y, domain = to_arrays(samples)
    assert images.shape == (2, 3, 4, 4)
    assert y.tolist() == [1, 0] and domain.tolist() == [2, 1]
