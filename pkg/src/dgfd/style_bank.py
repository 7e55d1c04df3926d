"""Per-class style representation space.

Channel-wise instance statistics of feature maps are treated as points in a
metric space (concatenated mean and std vectors).  For each class a greedy
farthest-point subset of size C becomes the basis styles; Dirichlet-weighted
convex combinations of the basis produce sampled styles for diversification.
Real and fake samples never share a class, so their styles never mix.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

BANK_FORMAT_VERSION = 1


@dataclass(frozen=True)
class StyleStats:
    """Per-channel (mean, std) of a feature map; std is eps-stabilized.

    Bank entries hold length-C vectors; a (B, C) stack form carries one
    style per batch row through the diversification path.
    """

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.std.shape or self.mean.ndim not in (1, 2):
            raise ValueError(
                f"mean/std must be matching vectors or stacks, got {self.mean.shape} and {self.std.shape}"
            )

    def vector(self) -> np.ndarray:
        """The FPS embedding: concat(mean, std), length 2 * channels."""
        if self.mean.ndim != 1:
            raise ValueError("vector() applies to single styles only")
        return np.concatenate([self.mean, self.std])


@dataclass
class StyleBank:
    """C basis styles per class, selected from that class's samples only."""

    classes: dict[int, list[StyleStats]]
    C: int
    channels: int = field(default=0)

    def __post_init__(self):
        for cls, styles in self.classes.items():
            if len(styles) != self.C:
                raise ValueError(
                    f"class {cls} holds {len(styles)} styles, expected C={self.C}"
                )
            if self.channels == 0:
                self.channels = styles[0].mean.size
        for cls, styles in self.classes.items():
            for s in styles:
                if s.mean.size != self.channels:
                    raise ValueError(f"class {cls} style has {s.mean.size} channels, expected {self.channels}")

    @property
    def n_classes(self) -> int:
        return len(self.classes)


def instance_stats(fm: np.ndarray, eps: float = 1e-5) -> list[StyleStats]:
    """Channel-wise spatial mean and eps-stabilized std per batch element.

    ``fm`` is (B, C, H, W); returns one StyleStats per row.  Rejects
    non-finite input, naming the first offending batch index.
    """
    fm = np.asarray(fm, dtype=np.float64)
    if fm.ndim != 4 or fm.shape[2] * fm.shape[3] < 1:
        raise ValueError(f"expected (B, C, H, W) with H*W >= 1, got shape {fm.shape}")
    finite = np.isfinite(fm).all(axis=(1, 2, 3))
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise ValueError(f"non-finite values in feature map at batch index {bad}")
    mean = fm.mean(axis=(2, 3))
    var = fm.var(axis=(2, 3))
    std = np.sqrt(var + eps)
    return [StyleStats(mean=mean[i].copy(), std=std[i].copy()) for i in range(fm.shape[0])]


def fps_select(points: np.ndarray, count: int) -> list[int]:
    """Greedy farthest-point sampling over squared Euclidean distance.

    The first pick is the point farthest from the centroid of all points;
    each later pick maximizes the minimum squared distance to everything
    already selected.  Ties break toward the lowest index, so the result is
    deterministic given the input order.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"points must be (n, d), got shape {points.shape}")
    if not np.isfinite(points).all():
        raise ValueError("points must be finite")
    n = points.shape[0]
    if count > n:
        raise ValueError(f"cannot select {count} points from {n}")
    if count == 0:
        return []

    centroid = points.mean(axis=0)
    d_centroid = ((points - centroid) ** 2).sum(axis=1)
    first = int(np.argmax(d_centroid))  # argmax returns the lowest tied index
    selected = [first]
    min_d = ((points - points[first]) ** 2).sum(axis=1)
    for _ in range(count - 1):
        nxt = int(np.argmax(min_d))
        selected.append(nxt)
        min_d = np.minimum(min_d, ((points - points[nxt]) ** 2).sum(axis=1))
    return selected


def build_bank(features_by_class: dict[int, np.ndarray], C: int, eps: float = 1e-5) -> StyleBank:
    """FPS-select C basis styles per class from per-class feature maps.

    ``features_by_class`` maps class id -> (n_samples, C_ch, H, W).  Each
    class is processed in isolation: its basis styles are the instance
    statistics of its own C farthest-point exemplars.
    """
    if C < 1:
        raise ValueError(f"C must be >= 1, got {C}")
    short = {cls: len(fm) for cls, fm in features_by_class.items() if len(fm) < C}
    if short:
        detail = ", ".join(f"class {cls}: {n} samples" for cls, n in sorted(short.items()))
        raise ValueError(f"need at least C={C} samples per class ({detail})")

    classes: dict[int, list[StyleStats]] = {}
    for cls in sorted(features_by_class):
        stats = instance_stats(np.asarray(features_by_class[cls]), eps=eps)
        vectors = np.stack([s.vector() for s in stats])
        if np.allclose(vectors, vectors[0]):
            warnings.warn(
                f"class {cls}: all style vectors identical; bank will hold {C} copies",
                stacklevel=2,
            )
        idx = fps_select(vectors, C)
        classes[cls] = [stats[i] for i in idx]
    return StyleBank(classes=classes, C=C)


def sample_weights(C: int, rng: np.random.Generator) -> np.ndarray:
    """Dirichlet(1/C, ..., 1/C) draw over the C basis styles."""
    if C < 1:
        raise ValueError(f"C must be >= 1, got {C}")
    if C == 1:
        return np.ones(1)
    return rng.dirichlet(np.full(C, 1.0 / C))


def aggregate_style(bank: StyleBank, n: int, weights: np.ndarray) -> StyleStats:
    """Convex combination of class ``n``'s basis styles with ``weights``."""
    if n not in bank.classes:
        raise KeyError(f"class {n} not in bank (classes: {sorted(bank.classes)})")
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (bank.C,):
        raise ValueError(f"weights must have length C={bank.C}, got shape {weights.shape}")
    styles = bank.classes[n]
    mean = sum(w * s.mean for w, s in zip(weights, styles))
    std = sum(w * s.std for w, s in zip(weights, styles))
    return StyleStats(mean=np.asarray(mean), std=np.asarray(std))


def save_bank(path, bank: StyleBank) -> None:
    """Serialize to .npz with a version header; round-trips bit-exact."""
    payload = {
        "format_version": np.array([BANK_FORMAT_VERSION]),
        "meta": np.array(
            json.dumps({"C": bank.C, "channels": bank.channels, "classes": sorted(bank.classes)})
        ),
    }
    for cls, styles in bank.classes.items():
        payload[f"class_{cls}_mean"] = np.stack([s.mean for s in styles])
        payload[f"class_{cls}_std"] = np.stack([s.std for s in styles])
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_bank(path) -> StyleBank:
    with np.load(path, allow_pickle=False) as archive:
        version = int(archive["format_version"][0])
        if version != BANK_FORMAT_VERSION:
            raise ValueError(f"unsupported bank format version {version}")
        meta = json.loads(str(archive["meta"]))
        classes = {}
        for cls in meta["classes"]:
            means = archive[f"class_{cls}_mean"]
            stds = archive[f"class_{cls}_std"]
            classes[int(cls)] = [
                StyleStats(mean=means[i].copy(), std=stds[i].copy()) for i in range(len(means))
            ]
    return StyleBank(classes=classes, C=meta["C"])
