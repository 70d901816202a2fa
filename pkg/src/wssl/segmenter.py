"""
Oversegmentation with a simplified Blobworld model.

Each pixel gets a 6-vector (CIELAB color plus anisotropy, contrast and
polarity of the local gradient second-moment matrix). A Gaussian mixture
is fitted by EM, pixels take their most responsible component, and
4-connected pieces become regions after small ones are merged away.
"""
import heapq
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.special import logsumexp

from .errors import InvalidInputError, NumericalError

TEXTURE_RADIUS = 4
COV_FLOOR = 1e-6
WEIGHT_FLOOR = 0.01
HIST_BINS = 5
HIST_RANGES = ((0.0, 100.0), (-110.0, 110.0), (-110.0, 110.0))
DESCRIPTOR_DIM = 12 + HIST_BINS**3

# sRGB -> XYZ; rows sum to the D65 white so white maps to (100, 0, 0)
_XYZ_FROM_RGB = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_D65 = _XYZ_FROM_RGB.sum(axis=1)


@dataclass
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    log_likelihoods: list

    @property
    def n_components(self):
        return len(self.weights)

    def log_responsibilities(self, X):
        logp = _component_logpdf(X, self.means, self.covariances) + np.log(self.weights)
        return logp - logsumexp(logp, axis=1, keepdims=True)


@dataclass
class RegionDescriptor:
    feature: np.ndarray
    rho: float
    image_id: str = ""


def _as_rgb(image):
    img = np.asarray(image)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    if img.ndim != 3 or img.shape[2] not in (3, 4):
        raise InvalidInputError(f"expected an RGB image, got shape {img.shape}")
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise InvalidInputError("image has zero size")
    if img.dtype != np.uint8:
        raise InvalidInputError(f"expected 8-bit RGB, got dtype {img.dtype}")
    return img[:, :, :3]


def rgb_to_lab(rgb):
    """8-bit sRGB array (..., 3) to CIELAB under D65."""
    c = np.asarray(rgb, dtype=np.float64) / 255.0
    lin = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _XYZ_FROM_RGB.T / _D65
    eps = (6.0 / 29.0) ** 3
    f = np.where(xyz > eps, np.cbrt(xyz), xyz / (3 * (6.0 / 29.0) ** 2) + 4.0 / 29.0)
    L = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def _gaussian_window(radius):
    sigma = radius / 2.0
    ax = np.arange(-radius, radius + 1)
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * sigma**2))
    return g / g.sum()


def texture_features(L, radius=TEXTURE_RADIUS):
    """Anisotropy, contrast and polarity from the windowed gradient tensor of ``L``."""
    gy, gx = np.gradient(L.astype(np.float64))
    win = _gaussian_window(radius)
    filt = lambda a: ndimage.convolve(a, win, mode="reflect")
    jxx, jxy, jyy = filt(gx * gx), filt(gx * gy), filt(gy * gy)

    half_tr = 0.5 * (jxx + jyy)
    disc = np.sqrt(np.maximum((0.5 * (jxx - jyy)) ** 2 + jxy**2, 0.0))
    lmax = half_tr + disc
    lmin = np.maximum(half_tr - disc, 0.0)
    tiny = 1e-12
    flat = lmax <= tiny
    anisotropy = np.where(flat, 0.0, 1.0 - lmin / np.where(flat, 1.0, lmax))
    contrast = 2.0 * np.sqrt(np.where(flat, 0.0, lmin + lmax))

    # dominant orientation of the tensor
    theta = 0.5 * np.arctan2(2.0 * jxy, jxx - jyy)
    nx, ny = np.cos(theta), np.sin(theta)
    gxp = np.pad(gx, radius, mode="reflect")
    gyp = np.pad(gy, radius, mode="reflect")
    h, w = L.shape
    e_pos = np.zeros_like(L, dtype=np.float64)
    e_neg = np.zeros_like(L, dtype=np.float64)
    for dy in range(2 * radius + 1):
        for dx in range(2 * radius + 1):
            proj = gxp[dy:dy + h, dx:dx + w] * nx + gyp[dy:dy + h, dx:dx + w] * ny
            e_pos += win[dy, dx] * np.maximum(proj, 0.0)
            e_neg += win[dy, dx] * np.maximum(-proj, 0.0)
    total = e_pos + e_neg
    polarity = np.where(total > tiny, np.abs(e_pos - e_neg) / np.where(total > tiny, total, 1.0), 0.0)
    polarity = np.where(flat, 0.0, polarity)
    return np.stack([anisotropy, contrast, np.clip(polarity, 0.0, 1.0)], axis=-1)


def pixel_features(image):
    """Per-pixel (L, a, b, anisotropy, contrast, polarity), shape (H, W, 6)."""
    rgb = _as_rgb(image)
    lab = rgb_to_lab(rgb)
    tex = texture_features(lab[:, :, 0])
    return np.concatenate([lab, tex], axis=-1)


def _component_logpdf(X, means, covs):
    n, d = X.shape
    out = np.empty((n, len(means)))
    for k, (mu, cov) in enumerate(zip(means, covs)):
        chol = np.linalg.cholesky(cov)
        z = np.linalg.solve(chol, (X - mu).T)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        out[:, k] = -0.5 * (np.sum(z * z, axis=0) + logdet + d * np.log(2 * np.pi))
    return out


def _floor_covariance(cov, floor=COV_FLOOR):
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() >= floor:
        return cov
    vals = np.maximum(vals, floor)
    out = (vecs * vals) @ vecs.T
    return 0.5 * (out + out.T)


def _kmeans_pp(X, K, rng):
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    while len(centers) < K:
        total = d2.sum()
        if total <= 0:
            # every point coincides with a chosen center
            break
        idx = rng.choice(n, p=d2 / total)
        centers.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centers)


def fit_gmm_em(features, K=10, max_iter=100, tol=1e-4, seed=0, weight_floor=WEIGHT_FLOOR):
    """Full-covariance EM from a seeded k-means++ start.

    Components whose weight ends below ``weight_floor`` are dropped and the
    remaining weights renormalized.
    """
    X = np.asarray(features, dtype=np.float64)
    X = X.reshape(-1, X.shape[-1])
    n, d = X.shape
    if K < 1:
        raise InvalidInputError("K must be >= 1")
    if K > n:
        raise InvalidInputError(f"K={K} exceeds the pixel count {n}")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("features contain non-finite values")

    rng = np.random.default_rng(seed)
    means = _kmeans_pp(X, K, rng)
    K = len(means)
    # hard assignment to the seeds gives the starting covariances
    d2 = ((X[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    assign = np.argmin(d2, axis=1)
    glob = _floor_covariance(np.cov(X.T, bias=True).reshape(d, d))
    weights = np.empty(K)
    covs = np.empty((K, d, d))
    for k in range(K):
        members = X[assign == k]
        weights[k] = max(len(members), 1)
        covs[k] = _floor_covariance(np.cov(members.T, bias=True).reshape(d, d)) if len(members) > 1 else glob
    weights /= weights.sum()

    history = []
    for _ in range(max_iter):
        logp = _component_logpdf(X, means, covs) + np.log(weights)
        norm = logsumexp(logp, axis=1)
        ll = float(norm.sum())
        if not np.isfinite(ll):
            raise NumericalError("EM log-likelihood is not finite")
        history.append(ll)
        if len(history) > 1 and abs(history[-1] - history[-2]) <= tol * abs(history[-2]):
            break
        resp = np.exp(logp - norm[:, None])
        nk = resp.sum(axis=0)
        # components with no responsibility contribute nothing; dropping keeps EM monotone
        alive = nk > 1e-10 * n
        resp, nk = resp[:, alive], nk[alive]
        weights = nk / n
        means = (resp.T @ X) / nk[:, None]
        covs = np.empty((len(nk), d, d))
        for k in range(len(nk)):
            diff = X - means[k]
            covs[k] = _floor_covariance((resp[:, k, None] * diff).T @ diff / nk[k])

    keep = weights >= weight_floor
    if not np.any(keep):
        keep = weights == weights.max()
    weights = weights[keep] / weights[keep].sum()
    return GaussianMixture(weights=weights, means=means[keep], covariances=covs[keep],
                           log_likelihoods=history)


def _adjacency_counts(labels):
    """Shared 4-neighbour boundary length between every pair of labels."""
    pairs = []
    for a, b in ((labels[:, :-1], labels[:, 1:]), (labels[:-1, :], labels[1:, :])):
        a, b = a.ravel(), b.ravel()
        diff = a != b
        lo = np.minimum(a[diff], b[diff])
        hi = np.maximum(a[diff], b[diff])
        pairs.append(np.stack([lo, hi], axis=1))
    pairs = np.concatenate(pairs)
    adj = {}
    if len(pairs):
        uniq, counts = np.unique(pairs, axis=0, return_counts=True)
        for (p, q), c in zip(uniq.tolist(), counts.tolist()):
            adj.setdefault(p, {})[q] = c
            adj.setdefault(q, {})[p] = c
    return adj


def _relabel_raster(labels):
    """Renumber labels 0..R-1 in order of first appearance."""
    flat = labels.ravel()
    _, first = np.unique(flat, return_index=True)
    order = flat[np.sort(first)]
    lut = np.empty(flat.max() + 1, dtype=np.int64)
    lut[order] = np.arange(len(order))
    return lut[labels]


def merge_small_regions(labels, min_size):
    """Merge regions below ``min_size`` pixels into the neighbour with the longest shared boundary.

    Smallest regions are merged first; ties go to the lower label.
    """
    labels = _relabel_raster(labels)
    R = int(labels.max()) + 1
    sizes = np.bincount(labels.ravel(), minlength=R).astype(np.int64)
    adj = _adjacency_counts(labels)
    parent = np.arange(R)
    heap = [(int(s), r) for r, s in enumerate(sizes) if s < min_size]
    heapq.heapify(heap)
    alive = np.ones(R, dtype=bool)
    while heap:
        s, r = heapq.heappop(heap)
        if not alive[r] or s != sizes[r] or sizes[r] >= min_size:
            continue
        nbrs = adj.get(r, {})
        if not nbrs:
            continue
        target = min(nbrs.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        alive[r] = False
        parent[r] = target
        sizes[target] += sizes[r]
        tn = adj.setdefault(target, {})
        tn.pop(r, None)
        for q, c in nbrs.items():
            if q == target:
                continue
            adj[q].pop(r, None)
            tn[q] = tn.get(q, 0) + c
            adj[q][target] = tn[q]
        del adj[r]
        if sizes[target] < min_size:
            heapq.heappush(heap, (int(sizes[target]), target))
    # resolve merge chains
    for r in range(R):
        root = r
        while parent[root] != root:
            root = parent[root]
        parent[r] = root
    return _relabel_raster(parent[labels])


def segment_image(features, gmm, min_region_frac=0.005):
    """Region map (H, W) of contiguous region indices 0..R-1."""
    F = np.asarray(features, dtype=np.float64)
    h, w = F.shape[:2]
    comp = np.argmax(gmm.log_responsibilities(F.reshape(-1, F.shape[-1])), axis=1).reshape(h, w)
    labels = np.zeros((h, w), dtype=np.int64)
    next_label = 0
    four = ndimage.generate_binary_structure(2, 1)
    for k in range(gmm.n_components):
        lab, count = ndimage.label(comp == k, structure=four)
        mask = lab > 0
        labels[mask] = lab[mask] - 1 + next_label
        next_label += count
    min_size = min_region_frac * h * w
    return merge_small_regions(labels, min_size)


def _histogram(lab):
    idx = []
    for c, (lo, hi) in enumerate(HIST_RANGES):
        b = np.floor((lab[:, c] - lo) / (hi - lo) * HIST_BINS).astype(np.int64)
        idx.append(np.clip(b, 0, HIST_BINS - 1))
    flat = (idx[0] * HIST_BINS + idx[1]) * HIST_BINS + idx[2]
    hist = np.bincount(flat, minlength=HIST_BINS**3).astype(np.float64)
    return hist / hist.sum()


def region_descriptors(features, region_map, image_id=""):
    """Descriptors for every region of one image, in region-index order."""
    F = np.asarray(features, dtype=np.float64).reshape(-1, 6)
    labels = np.asarray(region_map).ravel()
    total = labels.size
    out = []
    for r in range(int(labels.max()) + 1):
        px = F[labels == r]
        if len(px) == 0:
            raise AssertionError(f"region {r} is empty")
        feat = np.concatenate([
            px[:, :3].mean(axis=0), px[:, :3].std(axis=0),
            px[:, 3:].mean(axis=0), px[:, 3:].std(axis=0),
            _histogram(px[:, :3]),
        ])
        out.append(RegionDescriptor(feature=feat, rho=len(px) / total, image_id=image_id))
    return out


def region_descriptor(features, region_map, region_index, image_id=""):
    R = int(np.max(region_map)) + 1
    if not 0 <= region_index < R:
        raise InvalidInputError(f"region index {region_index} outside 0..{R - 1}")
    return region_descriptors(features, region_map, image_id)[region_index]


def oversegment(image, K=10, min_region_frac=0.005, seed=0, max_iter=100, tol=1e-4):
    """Image -> (region map, descriptors). Convenience wrapper over the steps above."""
    feats = pixel_features(image)
    gmm = fit_gmm_em(feats, K=K, max_iter=max_iter, tol=tol, seed=seed)
    rmap = segment_image(feats, gmm, min_region_frac)
    return rmap, feats
