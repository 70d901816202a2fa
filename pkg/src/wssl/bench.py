"""Synthetic data, tag noise, label decisions and pixel-accuracy evaluation."""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .labels import TagTable

log = logging.getLogger(__name__)

VOID = 255

# (RGB color, per-pixel noise std) per category; the noise levels give
# roughly 20 regions per 64x64 image under the default segmenter settings
DEFAULT_PALETTE = (
    ((200, 40, 40), 0.4),
    ((40, 170, 60), 1.0),
    ((50, 70, 210), 0.6),
    ((230, 210, 60), 1.4),
    ((170, 60, 190), 0.8),
    ((60, 200, 210), 1.2),
    ((235, 235, 235), 0.5),
    ((70, 70, 70), 0.9),
)


@dataclass
class SyntheticSpec:
    n_images: int = 60
    n_categories: int = 6
    size: tuple = (64, 64)
    blobs: tuple = (1, 3)
    palette: tuple = DEFAULT_PALETTE
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.size, int):
            self.size = (self.size, self.size)
        self.size = tuple(int(s) for s in self.size)
        if self.n_categories < 2:
            raise InvalidInputError("need at least two categories")
        if len(self.palette) < self.n_categories:
            raise InvalidInputError(
                f"palette has {len(self.palette)} entries for {self.n_categories} categories")
        colors = [tuple(p[0]) for p in self.palette[:self.n_categories]]
        if len(set(colors)) != len(colors):
            raise InvalidInputError("palette colors must be distinct")
        lo, hi = self.blobs
        if not 1 <= lo <= hi <= self.n_categories - 1:
            raise InvalidInputError("blob count range must lie in 1..C-1")


@dataclass
class ParseResult:
    region_labels: np.ndarray
    pixel_maps: list
    per_category: dict = field(default_factory=dict)
    average: float = float("nan")
    zero_rows: int = 0


def synth_dataset(spec):
    """Blob images on a per-image background category.

    Returns ``(images, gt_maps, tags)``. The background category cycles
    through a shuffled order of all categories, so every category appears
    whenever ``n_images >= n_categories``.
    """
    rng = np.random.default_rng(spec.seed)
    h, w = spec.size
    C = spec.n_categories
    yy, xx = np.mgrid[0:h, 0:w]
    images, gts, tag_sets, ids = [], [], [], []
    order = []
    for i in range(spec.n_images):
        if not order:
            order = list(rng.permutation(C))
        bg = int(order.pop())
        gt = np.full((h, w), bg, dtype=np.uint8)
        n_blobs = int(rng.integers(spec.blobs[0], spec.blobs[1] + 1))
        others = [c for c in range(C) if c != bg]
        cats = rng.choice(others, size=n_blobs, replace=False)
        for c in cats:
            cy, cx = rng.uniform(0.2, 0.8) * h, rng.uniform(0.2, 0.8) * w
            ry, rx = rng.uniform(0.12, 0.3) * h, rng.uniform(0.12, 0.3) * w
            gt[((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0] = c
        img = np.empty((h, w, 3))
        for c in np.unique(gt):
            color, std = spec.palette[c]
            mask = gt == c
            img[mask] = np.asarray(color, dtype=np.float64) + rng.normal(0.0, std, size=(mask.sum(), 3))
        images.append(np.clip(np.rint(img), 0, 255).astype(np.uint8))
        gts.append(gt)
        tag_sets.append(set(int(c) for c in np.unique(gt)))
        ids.append(f"img{i:04d}")
    return images, gts, TagTable(ids, tag_sets, C)


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def inject_tag_noise(tags, percent, seed=0):
    """Add one wrong tag to ``round(percent% of M)`` images picked uniformly."""
    if not 0 <= percent <= 100:
        raise InvalidInputError("noise percent must lie in [0, 100]")
    C = tags.n_categories
    for img, t in zip(tags.image_ids, tags.tags):
        if len(t) >= C:
            raise InvalidInputError(f"image {img!r} already carries every category")
    rng = np.random.default_rng(seed)
    M = tags.n_images
    chosen = np.sort(rng.choice(M, size=_round_half_up(percent / 100.0 * M), replace=False))
    new = [set(t) for t in tags.tags]
    for i in chosen:
        absent = [c for c in range(C) if c not in new[i]]
        new[i].add(int(rng.choice(absent)))
    return TagTable(list(tags.image_ids), new, C)


def assign_labels(Yhat):
    """Per-row argmax, lowest index on ties. Returns ``(labels, n_zero_rows)``."""
    Y = np.asarray(Yhat)
    zero = int(np.sum(~np.any(Y != 0, axis=1)))
    if zero:
        log.warning("%d regions have an all-zero label row; assigned category 0", zero)
    return np.argmax(Y, axis=1), zero


def region_labels_to_maps(region_labels, region_maps):
    """Paint per-region categories back onto each image's region map."""
    counts = [int(np.max(rmap)) + 1 for rmap in region_maps]
    if sum(counts) != len(region_labels):
        raise InvalidInputError(
            f"{len(region_labels)} region labels for {sum(counts)} regions in the maps")
    out = []
    start = 0
    for rmap, R in zip(region_maps, counts):
        lut = np.asarray(region_labels[start:start + R], dtype=np.uint8)
        out.append(lut[rmap])
        start += R
    return out


def evaluate_pixel_accuracy(pred_maps, gt_maps, n_categories=None, void_index=VOID):
    """Per-category recall (percent) and its mean over categories present in the ground truth."""
    if len(pred_maps) != len(gt_maps):
        raise InvalidInputError("prediction and ground-truth lists differ in length")
    correct, total = {}, {}
    for pred, gt in zip(pred_maps, gt_maps):
        pred, gt = np.asarray(pred), np.asarray(gt)
        if pred.shape != gt.shape:
            raise InvalidInputError(f"shape mismatch {pred.shape} vs {gt.shape}")
        valid = gt != void_index
        g, p = gt[valid].astype(np.int64), pred[valid].astype(np.int64)
        n = max(int(g.max()) + 1 if g.size else 0, n_categories or 0)
        tot = np.bincount(g, minlength=n)
        hit = np.bincount(g[g == p], minlength=n)
        for c in np.flatnonzero(tot):
            total[int(c)] = total.get(int(c), 0) + int(tot[c])
            correct[int(c)] = correct.get(int(c), 0) + int(hit[c])
    if not total:
        raise InvalidInputError("no non-void ground-truth pixels")
    per = {c: 100.0 * correct[c] / total[c] for c in sorted(total)}
    return per, float(np.mean(list(per.values())))
