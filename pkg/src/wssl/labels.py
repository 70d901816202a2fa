"""Initial region labels from image tags, and the two smoothing passes."""
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NumericalError

log = logging.getLogger(__name__)


@dataclass
class TagTable:
    """Image-level tags.

    Attributes
    ----------
    image_ids : list of str
    tags : list of frozenset of int
        Category indices carried by each image.
    n_categories : int
    """

    image_ids: list
    tags: list
    n_categories: int

    def __post_init__(self):
        self.image_ids = [str(i) for i in self.image_ids]
        self.tags = [frozenset(int(c) for c in t) for t in self.tags]
        if len(self.image_ids) != len(self.tags):
            raise InvalidInputError("image_ids and tags differ in length")
        if len(set(self.image_ids)) != len(self.image_ids):
            raise InvalidInputError("duplicate image id in tag table")
        for img, t in zip(self.image_ids, self.tags):
            if not t:
                raise InvalidInputError(f"image {img!r} has no tags")
            if min(t) < 0 or max(t) >= self.n_categories:
                raise InvalidInputError(
                    f"image {img!r}: category index out of range 0..{self.n_categories - 1}")

    @property
    def n_images(self):
        return len(self.image_ids)

    def indicator(self):
        """The M x C 0/1 matrix of tags."""
        Z = np.zeros((self.n_images, self.n_categories))
        for i, t in enumerate(self.tags):
            Z[i, sorted(t)] = 1.0
        return Z

    def index(self):
        return {img: i for i, img in enumerate(self.image_ids)}


@dataclass
class ContextMatrix:
    """Clamped category correlations ``A`` and their row sums."""

    A: np.ndarray
    degree: np.ndarray
    warnings: list = field(default_factory=list)

    def normalized(self):
        s = 1.0 / np.sqrt(self.degree)
        return s[:, None] * self.A * s[None, :]


def infer_initial_labels(region_image_ids, tags):
    """``y_ij = 1`` iff region i's image carries tag j."""
    lookup = tags.index()
    ids = [str(i) for i in region_image_ids]
    Y = np.zeros((len(ids), tags.n_categories))
    for r, img in enumerate(ids):
        try:
            t = tags.tags[lookup[img]]
        except KeyError:
            raise InvalidInputError(f"region {r} belongs to untagged image {img!r}") from None
        Y[r, sorted(t)] = 1.0
    return Y


def size_smooth(Y, rho):
    """Scale each region's label row by its area ratio."""
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho <= 0) or np.any(rho > 1):
        raise InvalidInputError("area ratios must lie in (0, 1]")
    return np.asarray(Y, dtype=np.float64) * rho[:, None]


def context_matrix(tags):
    """Pearson correlation of tag columns, negatives clamped to zero.

    Categories whose tag column is constant get zero off-diagonal entries
    and a warning.
    """
    Z = tags.indicator() if isinstance(tags, TagTable) else np.asarray(tags, dtype=np.float64)
    M, C = Z.shape
    if M < 2:
        raise InvalidInputError("context matrix needs at least two images")
    mu = Z.mean(axis=0)
    dev = Z - mu
    sigma = np.sqrt((dev**2).sum(axis=0) / (M - 1))
    cov = dev.T @ dev / (M - 1)
    warnings = []
    A = np.zeros((C, C))
    ok = sigma > 0
    for j in np.flatnonzero(~ok):
        msg = f"category {j} has a constant tag column; its correlations are set to 0"
        warnings.append(msg)
        log.warning(msg)
    denom = np.outer(sigma, sigma)
    mask = np.outer(ok, ok)
    A[mask] = cov[mask] / denom[mask]
    A = np.maximum(A, 0.0)
    A = np.minimum(A, 1.0)
    A = (A + A.T) * 0.5
    np.fill_diagonal(A, 1.0)
    return ContextMatrix(A=A, degree=A.sum(axis=1), warnings=warnings)


def context_propagate(Ytilde, ctx, alpha):
    """Right-multiply by ``(I - alpha Dc^{-1/2} A Dc^{-1/2})^{-1}`` via a linear solve."""
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
    S = ctx.normalized()
    C = S.shape[0]
    radius = np.max(np.abs(np.linalg.eigvalsh(S)))
    if alpha * radius >= 1.0:
        raise InvalidInputError(
            f"alpha * spectral radius = {alpha * radius:.4g} must be < 1")
    system = np.eye(C) - alpha * S
    cond = np.linalg.cond(system)
    if not np.isfinite(cond) or cond > 1e12:
        raise NumericalError(f"context system is near-singular (condition {cond:.3e})")
    Yt = np.asarray(Ytilde, dtype=np.float64)
    # Y (I - aS)^{-1} = ((I - aS)^{-T} Y^T)^T and the system is symmetric
    Ybar = np.linalg.solve(system, Yt.T).T
    # exact result is nonnegative; remove solver round-off below zero
    return np.where(Ybar < 0.0, 0.0, Ybar)


def smooth_labels(region_image_ids, rho, tags, alpha):
    """Full chain: tags -> Y -> size smoothed -> context smoothed."""
    Y = infer_initial_labels(region_image_ids, tags)
    Yt = size_smooth(Y, rho)
    ctx = context_matrix(tags)
    return context_propagate(Yt, ctx, alpha), ctx
