"""Synthetic multi-domain forgery benchmark and image-folder ingestion.

Each domain applies one global low-frequency style (hue rotation, contrast
gain, blur) to all of its images, while fakes carry a local high-frequency
artifact (a blended seam plus a small patch) whose recipe is shared across
domains: the i-th fake of every domain draws the same artifact parameters,
placed relative to its own face.  Global channel statistics therefore
predict the domain but not the label, and the forgery cue is the same
everywhere — a desk-scale stand-in for cross-dataset forgery detection.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter, zoom

from .rng import stream

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.csv"


@dataclass(frozen=True)
class DomainStyle:
    """Global appearance recipe for one domain."""

    hue_shift: float      # rotation (radians) about the gray axis
    contrast_gain: float  # gain about mid-gray
    blur_sigma: float     # gaussian blur, 0 = none


@dataclass(frozen=True)
class DomainSample:
    image: np.ndarray  # (3, H, W) float64 in [0, 1]
    y: int             # 1 = fake, 0 = real
    domain: int        # 1..N


@dataclass(frozen=True)
class SynthSpec:
    n_domains: int = 4
    image_size: int = 64
    samples_per_domain: int = 500
    seed: int = 0
    holdout_domain: int | None = None      # None -> last domain
    train_fraction: float = 0.8            # of seen-domain samples
    styles: tuple[DomainStyle, ...] = ()   # empty -> default recipes
    seam_width: int = 2
    patch_amplitude: float = 0.5

    def __post_init__(self):
        if self.samples_per_domain < 2:
            raise ValueError(f"samples_per_domain must be >= 2, got {self.samples_per_domain}")
        if self.image_size < 16:
            raise ValueError(f"image_size must be >= 16, got {self.image_size}")
        if self.styles and len(self.styles) != self.n_domains:
            raise ValueError(
                f"{len(self.styles)} styles given for {self.n_domains} domains"
            )

    def resolved_styles(self) -> tuple[DomainStyle, ...]:
        return self.styles if self.styles else default_styles(self.n_domains)

    def resolved_holdout(self) -> int:
        h = self.n_domains if self.holdout_domain is None else self.holdout_domain
        if not 1 <= h <= self.n_domains:
            raise ValueError(f"holdout domain {h} outside 1..{self.n_domains}")
        return h


@dataclass
class SplitDataset:
    train: list[DomainSample]
    val: list[DomainSample]
    test: list[DomainSample]
    n_domains: int
    holdout_domain: int | None = None
    clamp_rate: float = 0.0

    def all_samples(self) -> list[DomainSample]:
        return self.train + self.val + self.test


def default_styles(n_domains: int) -> tuple[DomainStyle, ...]:
    """Well-separated recipes; the last (default holdout) is most extreme.

    Seen-domain hues stay within a narrow band so color-specific features
    learned on them break on the far-rotated holdout hue.
    """
    seen = n_domains - 1
    styles = []
    for i in range(seen):
        frac = i / max(seen - 1, 1)
        styles.append(
            DomainStyle(
                hue_shift=-0.5 + 1.0 * frac,
                contrast_gain=0.85 + 0.3 * frac,
                blur_sigma=0.5 * frac,
            )
        )
    styles.append(DomainStyle(hue_shift=2.8, contrast_gain=1.5, blur_sigma=0.8))
    return tuple(styles)


# ----------------------------------------------------------------- raw imagery
def _hue_matrix(theta: float) -> np.ndarray:
    """Rotation of RGB space about the gray diagonal (Rodrigues form)."""
    axis = np.ones(3) / np.sqrt(3.0)
    k = np.array([
        [0, -axis[2], axis[1]],
        [axis[2], 0, -axis[0]],
        [-axis[1], axis[0], 0],
    ])
    return np.cos(theta) * np.eye(3) + np.sin(theta) * k + (1 - np.cos(theta)) * np.outer(axis, axis)


# Warm bias pulls the palette off the gray axis.  Hue rotation fixes the
# gray axis, so without this offset every domain would share one mean color
# cast and the domain signal would hide in channel covariance alone, out of
# reach of mean/std-based statistics.
_PALETTE_BIAS = np.array([0.07, 0.0, -0.07]).reshape(3, 1, 1)


def _base_image(rng: np.random.Generator, size: int):
    """Smooth colored texture plus a face blob; returns image and face box."""
    low = rng.normal(0.0, 1.0, (3, 8, 8))
    texture = zoom(low, (1, size / 8, size / 8), order=1)
    tint = rng.uniform(0.25, 0.75, size=(3, 1, 1)) + _PALETTE_BIAS
    img = np.clip(tint + 0.16 * texture, 0.0, 1.0)

    cy = size // 2 + rng.integers(-size // 10, size // 10 + 1)
    cx = size // 2 + rng.integers(-size // 10, size // 10 + 1)
    ay = int(size * rng.uniform(0.26, 0.33))
    ax = int(size * rng.uniform(0.20, 0.26))
    yy, xx = np.mgrid[0:size, 0:size]
    face = (((yy - cy) / ay) ** 2 + ((xx - cx) / ax) ** 2) <= 1.0
    skin = rng.uniform(0.55, 0.8, size=3) + _PALETTE_BIAS.reshape(3)
    for c in range(3):
        img[c][face] = 0.35 * img[c][face] + 0.65 * skin[c]

    eye_dy, eye_dx = int(ay * 0.35), int(ax * 0.45)
    for ex in (cx - eye_dx, cx + eye_dx):
        eye = ((yy - (cy - eye_dy)) ** 2 + (xx - ex) ** 2) <= max(size // 32, 1) ** 2
        img[:, eye] *= 0.35
    return img, (cy, cx), (ay, ax)


# Per-channel weighting of the artifact pattern; fixed (domain-independent)
# so hue rotation re-colors the same underlying trace differently per domain.
# Mostly chromatic (small channel sum): detecting it rewards color-opponent
# features, exactly what a far hue rotation scrambles.
_ARTIFACT_CHANNEL_WEIGHTS = np.array([0.9, 0.1, -0.7]).reshape(3, 1, 1)


def _artifact_field(arng: np.random.Generator, size: int, face_center, face_axes,
                    seam_width: int, amplitude: float) -> np.ndarray:
    """Additive forgery trace: a blended seam band plus a small patch.

    All draws come from ``arng`` and placement is face-relative, so the j-th
    fake of every domain carries an identical trace up to translation.
    """
    cy, cx = face_center
    ay, ax = face_axes
    field = np.zeros((size, size))

    seam_frac = arng.uniform(-0.45, 0.45)
    phase = arng.integers(0, 2)
    row = int(np.clip(cy + seam_frac * ay, 1, size - seam_width - 1))
    x0, x1 = max(cx - ax, 0), min(cx + ax, size)
    pattern = np.where((np.arange(x0, x1) + phase) % 2 == 0, 1.0, -1.0)
    for r in range(seam_width):
        field[row + r, x0:x1] = pattern

    patch = max(size // 8, 4)
    py = int(np.clip(cy + arng.uniform(-0.5, 0.1) * ay, 0, size - patch))
    px = int(np.clip(cx + arng.uniform(-0.6, 0.6) * ax - patch / 2, 0, size - patch))
    yy, xx = np.mgrid[0:patch, 0:patch]
    checker = np.where((yy + xx + arng.integers(0, 2)) % 2 == 0, 0.6, -0.6)
    field[py : py + patch, px : px + patch] += checker

    field = gaussian_filter(field, 0.4)  # soften edges so the blend looks local
    return amplitude * _ARTIFACT_CHANNEL_WEIGHTS * field


def _apply_style(img: np.ndarray, style: DomainStyle) -> tuple[np.ndarray, int]:
    """Hue rotation, contrast gain, blur; returns image and clamp count."""
    flat = img.reshape(3, -1)
    rotated = (_hue_matrix(style.hue_shift) @ flat).reshape(img.shape)
    contrasted = 0.5 + style.contrast_gain * (rotated - 0.5)
    if style.blur_sigma > 0:
        contrasted = np.stack([gaussian_filter(c, style.blur_sigma) for c in contrasted])
    clamped = int(np.sum((contrasted < 0) | (contrasted > 1)))
    return np.clip(contrasted, 0.0, 1.0), clamped


def _render(spec: SynthSpec, domain: int, index: int) -> tuple[DomainSample, int]:
    """Deterministic (seed, domain, index) -> styled sample + clamp count."""
    style = spec.resolved_styles()[domain - 1]
    rng = stream(spec.seed, "sample", domain, index)
    img, center, axes = _base_image(rng, spec.image_size)
    y = index % 2
    if y == 1:
        arng = stream(spec.seed, "artifact", index)  # shared across domains
        img = np.clip(
            img + _artifact_field(arng, spec.image_size, center, axes,
                                  spec.seam_width, spec.patch_amplitude),
            0.0, 1.0,
        )
    styled, nclip = _apply_style(img, style)
    return DomainSample(image=styled, y=y, domain=domain), nclip


def make_sample(spec: SynthSpec, domain: int, index: int) -> DomainSample:
    return _render(spec, domain, index)[0]


def generate(spec: SynthSpec, holdout: bool = True) -> SplitDataset:
    """Materialize train/val/test splits.

    With ``holdout`` (the default) one domain's samples all land in test
    and the rest split train/val.  Without it, every domain contributes
    to all three splits: train_fraction to train, the remainder evenly
    to val and test.
    """
    if holdout and spec.n_domains < 2:
        raise ValueError(f"need at least 2 domains so one can be held out, got {spec.n_domains}")
    held = spec.resolved_holdout() if holdout else None

    train: list[DomainSample] = []
    val: list[DomainSample] = []
    test: list[DomainSample] = []
    clamped = 0
    total_values = 0
    for domain in range(1, spec.n_domains + 1):
        per_class: dict[int, list[DomainSample]] = {0: [], 1: []}
        for index in range(spec.samples_per_domain):
            sample, nclip = _render(spec, domain, index)
            clamped += nclip
            total_values += sample.image.size
            per_class[sample.y].append(sample)

        if domain == held:
            test.extend(per_class[0])
            test.extend(per_class[1])
            continue
        for y in (0, 1):
            rows = per_class[y]
            n_train = int(round(spec.train_fraction * len(rows)))
            train.extend(rows[:n_train])
            if held is None:
                n_val = (len(rows) - n_train + 1) // 2
                val.extend(rows[n_train : n_train + n_val])
                test.extend(rows[n_train + n_val :])
            else:
                val.extend(rows[n_train:])

    rate = clamped / max(total_values, 1)
    logger.info("synthetic dataset: clamp rate %.4f", rate)
    return SplitDataset(train=train, val=val, test=test, n_domains=spec.n_domains,
                        holdout_domain=held, clamp_rate=rate)


# ------------------------------------------------------------------- ingestion
def to_arrays(samples: list[DomainSample]):
    """(images, y, domain) arrays from a sample list."""
    images = np.stack([s.image for s in samples])
    y = np.array([s.y for s in samples], dtype=np.int64)
    domain = np.array([s.domain for s in samples], dtype=np.int64)
    return images, y, domain


def _decode_image(path: Path, image_size: int) -> np.ndarray:
    with Image.open(path) as im:
        im = im.convert("RGB")
        if im.size != (image_size, image_size):
            im = im.resize((image_size, image_size), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1)


def load_folder(path, layout: dict[str, tuple[int, int]], image_size: int = 64) -> list[DomainSample]:
    """Ingest an image directory; ``layout`` maps subfolder -> (y, domain).

    Unreadable files are skipped with a warning; a subfolder yielding no
    samples at all is an error.
    """
    root = Path(path)
    samples: list[DomainSample] = []
    skipped = 0
    for sub, (y, domain) in sorted(layout.items()):
        folder = root / sub
        loaded_before = len(samples)
        for file in sorted(folder.iterdir()) if folder.is_dir() else []:
            if not file.is_file():
                continue
            try:
                img = _decode_image(file, image_size)
            except Exception as exc:  # corrupt or non-image file
                skipped += 1
                warnings.warn(f"skipping unreadable file {file}: {exc}", stacklevel=2)
                continue
            samples.append(DomainSample(image=img, y=int(y), domain=int(domain)))
        if len(samples) == loaded_before:
            raise ValueError(f"no readable images for class folder '{sub}' under {root}")
    if skipped:
        logger.warning("load_folder: skipped %d unreadable files", skipped)
    return samples


def write_dataset(out_dir, dataset: SplitDataset) -> Path:
    """Save splits as 8-bit PNGs plus a (path, y, domain) manifest table."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for split_name in ("train", "val", "test"):
        split_dir = out / split_name
        split_dir.mkdir(exist_ok=True)
        for i, sample in enumerate(getattr(dataset, split_name)):
            rel = f"{split_name}/{i:05d}_d{sample.domain}_y{sample.y}.png"
            arr = np.clip(np.round(sample.image * 255.0), 0, 255).astype(np.uint8)
            Image.fromarray(arr.transpose(1, 2, 0)).save(out / rel)
            rows.append((rel, sample.y, sample.domain))
    manifest = out / MANIFEST_NAME
    tmp = manifest.with_suffix(".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("path", "y", "domain"))
        writer.writerows(rows)
    tmp.replace(manifest)
    return manifest


def load_manifest(manifest_path, image_size: int = 64) -> SplitDataset:
    """Rebuild a SplitDataset from a manifest table written by write_dataset.

    Rows whose path carries no split prefix land in ``train``.
    """
    manifest = Path(manifest_path)
    root = manifest.parent
    splits: dict[str, list[DomainSample]] = {"train": [], "val": [], "test": []}
    skipped = 0
    with open(manifest, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header[:3]] != ["path", "y", "domain"]:
            raise ValueError(f"unexpected manifest header {header}")
        for rel, y, domain in reader:
            try:
                img = _decode_image(root / rel, image_size)
            except Exception as exc:
                skipped += 1
                warnings.warn(f"skipping unreadable file {rel}: {exc}", stacklevel=2)
                continue
            split = rel.split("/", 1)[0]
            target = splits.get(split, splits["train"])
            target.append(DomainSample(image=img, y=int(y), domain=int(domain)))
    if skipped:
        logger.warning("load_manifest: skipped %d unreadable files", skipped)
    if not any(splits.values()):
        raise ValueError(f"manifest {manifest} yielded no samples")
    domains = {s.domain for split in splits.values() for s in split}
    return SplitDataset(train=splits["train"], val=splits["val"], test=splits["test"],
                        n_domains=max(domains))


# ------------------------------------------------------------------ self-probe
def channel_stats_probe(samples: list[DomainSample], seed: int = 0) -> dict[str, float]:
    """How well do global channel means alone predict domain and label?

    Fits one-hot ridge regression on per-image channel means (fit on even
    rows, score odd rows).  A healthy dataset shows domain accuracy far
    above chance and label accuracy near 0.5: style is domain-bound, the
    forgery trace is not a global-statistics cue.
    """
    images, y, domain = to_arrays(samples)
    feats = images.mean(axis=(2, 3))
    feats = np.hstack([feats, np.ones((len(feats), 1))])
    fit, score = slice(0, None, 2), slice(1, None, 2)

    def ridge_acc(targets: np.ndarray) -> float:
        classes = np.unique(targets)
        onehot = (targets[fit, None] == classes[None, :]).astype(np.float64)
        x = feats[fit]
        w = np.linalg.solve(x.T @ x + 1e-6 * np.eye(x.shape[1]), x.T @ onehot)
        pred = classes[np.argmax(feats[score] @ w, axis=1)]
        return float(np.mean(pred == targets[score]))

    return {
        "domain_acc": ridge_acc(domain),
        "label_acc": ridge_acc(y),
        "domain_chance": 1.0 / len(np.unique(domain)),
    }
