"""
k-NN region graph, normalized Laplacian and truncated spectral basis.

The weighted L1 smoothness penalty used by the solver is expressed through
the ``m`` eigenvectors of the normalized Laplacian with smallest eigenvalues.
The full factor ``Sigma^{1/2} V^T`` is never formed.
"""
import hashlib
import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg

from .errors import InvalidInputError, NumericalError

CACHE_VERSION = 1
DENSE_EIGEN_LIMIT = 2000


@dataclass(frozen=True)
class RegionGraph:
    """Symmetric k-NN similarity graph over regions.

    Attributes
    ----------
    W : scipy.sparse.csr_matrix
        N x N Gaussian similarities, zero diagonal.
    bandwidth : float
        Kernel width used to build ``W``.
    k : int
        Neighbour count used for construction.
    """

    W: sp.csr_matrix
    bandwidth: float
    k: int

    @property
    def n(self):
        return self.W.shape[0]

    @property
    def degree(self):
        return np.asarray(self.W.sum(axis=1)).ravel()


@dataclass(frozen=True)
class SpectralBasis:
    """The ``m`` smallest eigenpairs of a normalized Laplacian.

    ``vectors`` has orthonormal columns, ``values`` is ascending.
    """

    vectors: np.ndarray
    values: np.ndarray

    @property
    def m(self):
        return self.vectors.shape[1]

    @property
    def n(self):
        return self.vectors.shape[0]

    def flipped(self, column):
        """Copy of the basis with one eigenvector negated."""
        V = self.vectors.copy()
        V[:, column] = -V[:, column]
        return SpectralBasis(V, self.values.copy())


def _knn_indices(X, k, chunk=512):
    """Exact k nearest neighbours (self excluded), ties broken by index.

    Returns ``(indices, distances)``, both (n, k). Distances are recomputed
    from coordinate differences so duplicate points are exactly 0 apart.
    """
    n = X.shape[0]
    sq = np.einsum("ij,ij->i", X, X)
    idx = np.empty((n, k), dtype=np.int64)
    dist = np.empty((n, k))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (X[start:stop] @ X.T)
        np.maximum(d2, 0.0, out=d2)
        rows = np.arange(stop - start)
        d2[rows, rows + start] = np.inf
        # over-select so that near-ties at the cut are resolved by exact distance
        kk = min(n - 1, k + 8)
        part = np.argpartition(d2, kk - 1, axis=1)[:, :kk]
        for r in range(stop - start):
            cand = part[r]
            diff = X[cand] - X[start + r]
            exact = np.einsum("ij,ij->i", diff, diff)
            order = np.lexsort((cand, exact))
            idx[start + r] = cand[order[:k]]
            dist[start + r] = np.sqrt(exact[order[:k]])
    return idx, dist


def build_knn_graph(features, k, bandwidth=None):
    """Build the union-symmetrized k-NN Gaussian similarity graph.

    Parameters
    ----------
    features : (N, d) array
        Region descriptors.
    k : int
        Number of nearest neighbours per region, ``1 <= k < N``.
    bandwidth : float, optional
        Gaussian width. Defaults to the median retained k-NN distance.

    Returns
    -------
    RegionGraph
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidInputError("features must be a 2-d array")
    n = X.shape[0]
    if n < 2:
        raise InvalidInputError("need at least two regions to build a graph")
    if not 1 <= k < n:
        raise InvalidInputError(f"k must satisfy 1 <= k < N (k={k}, N={n})")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("features contain non-finite values")

    nbrs, dist = _knn_indices(X, k)
    rows = np.repeat(np.arange(n), k)
    cols = nbrs.ravel()
    dist = dist.ravel()

    if bandwidth is None:
        bandwidth = float(np.median(dist))
        if bandwidth <= 0.0:
            bandwidth = 1.0
    elif bandwidth <= 0.0:
        raise InvalidInputError("bandwidth must be positive")

    w = np.exp(-dist**2 / (2.0 * bandwidth**2))
    # exp underflow would drop an edge and could isolate a vertex
    w = np.maximum(w, np.finfo(np.float64).tiny)
    # union symmetrization: entries present in either direction, same value both ways
    A = sp.coo_matrix((w, (rows, cols)), shape=(n, n)).tocsr()
    W = A.maximum(A.T).tocsr()
    W.setdiag(0.0)
    W.eliminate_zeros()
    W.sort_indices()
    return RegionGraph(W=W, bandwidth=float(bandwidth), k=int(k))


def normalized_laplacian(graph):
    """``I - D^{-1/2} W D^{-1/2}`` as a sparse CSR matrix."""
    W = graph.W if isinstance(graph, RegionGraph) else sp.csr_matrix(graph)
    d = np.asarray(W.sum(axis=1)).ravel()
    if np.any(d <= 0):
        raise InvalidInputError(
            f"graph has {int(np.sum(d <= 0))} isolated vertices (zero degree)")
    s = 1.0 / np.sqrt(d)
    S = sp.diags(s) @ W @ sp.diags(s)
    S = (S + S.T) * 0.5
    return (sp.identity(W.shape[0], format="csr") - S).tocsr()


def _fix_signs(V):
    pivot = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[pivot, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def spectral_basis(L, m, method="auto"):
    """Smallest ``m`` eigenpairs of a symmetric normalized Laplacian.

    ``method`` is ``"dense"``, ``"lanczos"`` or ``"auto"`` (dense up to
    2000 vertices). Eigenvectors are sign-normalized so that the entry of
    largest magnitude (first one on ties) is positive.
    """
    n = L.shape[0]
    if not 1 <= m <= n:
        raise InvalidInputError(f"m must satisfy 1 <= m <= N (m={m}, N={n})")
    if method == "auto":
        method = "dense" if n <= DENSE_EIGEN_LIMIT else "lanczos"
    if method == "lanczos" and m >= n - 1:
        method = "dense"

    if method == "dense":
        Ld = L.toarray() if sp.issparse(L) else np.asarray(L, dtype=np.float64)
        vals, vecs = scipy.linalg.eigh(Ld, subset_by_index=[0, m - 1])
    elif method == "lanczos":
        # largest eigenpairs of S = I - L are the smallest of L and converge fast
        Ls = sp.csr_matrix(L)
        S = sp.identity(n, format="csr") - Ls
        ncv = min(n, max(2 * m + 1, m + 64))
        v0 = np.ones(n) / np.sqrt(n)
        try:
            theta, vecs = sp.linalg.eigsh(S, k=m, which="LA", ncv=ncv, tol=0,
                                          v0=v0, maxiter=50 * n)
        except sp.linalg.ArpackNoConvergence as exc:
            res = _max_residual(Ls, 1.0 - exc.eigenvalues, exc.eigenvectors)
            raise NumericalError(
                f"Lanczos did not converge ({len(exc.eigenvalues)}/{m} pairs, "
                f"residual {res:.3e})", residual=res) from exc
        vals = 1.0 - theta
        order = np.argsort(vals, kind="stable")
        vals, vecs = vals[order], vecs[:, order]
        # re-orthonormalize within the Ritz basis; Rayleigh-Ritz keeps residuals tight
        vecs, _ = np.linalg.qr(vecs)
        H = vecs.T @ (Ls @ vecs)
        vals, R = np.linalg.eigh((H + H.T) * 0.5)
        vecs = vecs @ R
    else:
        raise InvalidInputError(f"unknown eigensolver {method!r}")

    vecs = _fix_signs(np.ascontiguousarray(vecs))
    return SpectralBasis(vectors=vecs, values=np.asarray(vals, dtype=np.float64))


def _max_residual(L, vals, vecs):
    if vecs is None or len(vals) == 0:
        return float("inf")
    R = L @ vecs - vecs * vals
    return float(np.max(np.linalg.norm(R, axis=0)))


def basis_residuals(L, basis):
    """Per-column ``||L v_i - sigma_i v_i||_2``."""
    R = L @ basis.vectors - basis.vectors * basis.values
    return np.linalg.norm(R, axis=0)


def cache_key(features, k, m, bandwidth=None):
    h = hashlib.sha256()
    X = np.ascontiguousarray(features, dtype=np.float64)
    h.update(str(X.shape).encode())
    h.update(X.tobytes())
    h.update(f"k={k};m={m};bw={bandwidth}".encode())
    return h.hexdigest()


def save_cache(path, key, graph, basis):
    """Store ``(W, V_m, sigma)`` in a versioned ``.npz`` file."""
    W = graph.W.tocsr()
    tmp = str(path) + ".part"
    with open(tmp, "wb") as fh:
        np.savez(fh, version=np.int64(CACHE_VERSION), key=np.str_(key),
                 data=W.data, indices=W.indices, indptr=W.indptr,
                 shape=np.asarray(W.shape), bandwidth=graph.bandwidth, k=graph.k,
                 vectors=basis.vectors, values=basis.values)
    os.replace(tmp, path)


def load_cache(path, key=None):
    """Load a cache written by :func:`save_cache`.

    Returns ``(graph, basis)``, or ``None`` when ``key`` is given and differs.
    """
    with np.load(path, allow_pickle=False) as z:
        if int(z["version"]) != CACHE_VERSION:
            raise InvalidInputError(
                f"{path}: cache version {int(z['version'])} != {CACHE_VERSION}")
        if key is not None and str(z["key"]) != key:
            return None
        W = sp.csr_matrix((z["data"], z["indices"], z["indptr"]),
                          shape=tuple(z["shape"]))
        graph = RegionGraph(W=W, bandwidth=float(z["bandwidth"]), k=int(z["k"]))
        basis = SpectralBasis(vectors=z["vectors"], values=z["values"])
    return graph, basis
