"""Force-directed embedding of the geodesic graph and k-means on the result.

The geodesic graph stores distances, while Fruchterman-Reingold expects
affinities.  By default each spring is weighted by ``1 / t`` so that pairs a
short propagation time apart pull harder; ``weight_mode="raw"`` uses ``t``
itself.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from .errors import InvalidArgument
from .propagation import GeodesicGraph
from .sampling import PointCloud

log = logging.getLogger(__name__)

MIN_DISTANCE = 0.01


@dataclass(frozen=True, eq=False)
class EmbeddingResult:
    coordinates: np.ndarray
    converged: bool
    iterations_used: int
    stress: float
    n_components: int = 1


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def _affinity(graph: GeodesicGraph, weight_mode: str):
    A = graph.to_sparse().tocsr()
    if weight_mode == "inverse":
        A.data = 1.0 / A.data
    elif weight_mode != "raw":
        raise InvalidArgument(f"unknown weight_mode {weight_mode!r}")
    return A


def _fr_layout(A: np.ndarray, pos: np.ndarray, iterations: int, tol: float):
    """Fruchterman-Reingold on one connected component, dense A (n x n)."""
    n = pos.shape[0]
    if n == 1:
        return pos * 0.0, True, 0
    k = np.sqrt(1.0 / n)
    spread = np.linalg.norm(pos - pos.mean(axis=0), axis=1).max()
    temp = 0.2 * max(spread, k)
    dt = temp / (iterations + 1)
    converged = False
    it = 0
    for it in range(1, iterations + 1):
        d = np.maximum(cdist(pos, pos), MIN_DISTANCE)
        # coefficient on (x_i - x_j): repulsion k^2/d^2 minus attraction A d / k
        c = k * k / (d * d) - A * d / k
        np.fill_diagonal(c, 0.0)
        disp = pos * c.sum(axis=1)[:, None] - c @ pos
        length = np.maximum(np.linalg.norm(disp, axis=1), 1e-12)
        step = disp * (np.minimum(length, temp) / length)[:, None]
        pos = pos + step
        temp -= dt
        if np.linalg.norm(step, axis=1).max() < tol * k:
            converged = True
            break
    return pos - pos.mean(axis=0), converged, it


def fr_embed(
    graph: GeodesicGraph,
    d_embed: int = 3,
    iterations: int = 500,
    seed=None,
    temperature_schedule: str = "linear_decay",
    weight_mode: str = "inverse",
    initial_positions: Optional[np.ndarray] = None,
    tol: float = 1e-6,
) -> EmbeddingResult:
    """Fruchterman-Reingold layout of ``graph`` in ``d_embed`` dimensions.

    Disconnected components (including isolated vertices) are laid out on their
    own and placed side by side along the first axis, with a warning.
    """
    if len(graph) == 0:
        raise InvalidArgument("cannot embed an empty geodesic graph")
    if d_embed not in (2, 3):
        raise InvalidArgument(f"d_embed must be 2 or 3, got {d_embed}")
    if temperature_schedule != "linear_decay":
        raise InvalidArgument(f"unknown temperature schedule {temperature_schedule!r}")
    if iterations < 1:
        raise InvalidArgument("iterations must be >= 1")
    n = graph.n
    A = _affinity(graph, weight_mode)
    if initial_positions is None:
        init = np.random.default_rng(seed).uniform(-0.5, 0.5, size=(n, d_embed))
    else:
        init = np.array(initial_positions, dtype=float)
        if init.shape != (n, d_embed):
            raise InvalidArgument(f"initial_positions must have shape {(n, d_embed)}")

    n_comp, comp = connected_components(A, directed=False)
    if n_comp > 1:
        msg = f"geodesic graph has {n_comp} connected components; laying them out separately"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    coords = np.zeros((n, d_embed))
    converged, used = True, 0
    offset = 0.0
    # largest components first so the layout order is stable
    order = sorted(range(n_comp), key=lambda c: (-np.count_nonzero(comp == c), np.flatnonzero(comp == c)[0]))
    for c in order:
        idx = np.flatnonzero(comp == c)
        sub = A[idx][:, idx].toarray()
        pos, ok, it = _fr_layout(sub, init[idx], iterations, tol)
        converged &= ok
        used = max(used, it)
        if n_comp > 1:
            radius = np.linalg.norm(pos, axis=1).max() if idx.size > 1 else 0.0
            gap = max(radius, 0.5)
            shift = np.zeros(d_embed)
            shift[0] = offset + radius + gap if offset else 0.0
            pos = pos + shift
            offset = shift[0] + radius + gap
        coords[idx] = pos
    coords -= coords.mean(axis=0)
    coo = A.tocoo()
    emb = np.linalg.norm(coords[coo.row] - coords[coo.col], axis=1)
    t = graph.to_sparse().tocoo().data
    stress = float(np.sum((emb - t) ** 2) / 2.0)
    return EmbeddingResult(coords, bool(converged), int(used), stress, int(n_comp))


# -- k-means -----------------------------------------------------------------

def _kmeanspp(X: np.ndarray, k: int, rng) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(free))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((X - X[nxt]) ** 2, axis=1))
    return X[chosen].copy()


def _lloyd(X, centroids, max_iter, tol):
    k = centroids.shape[0]
    prev = np.inf
    for _ in range(max_iter):
        d2 = cdist(X, centroids, "sqeuclidean")
        labels = np.argmin(d2, axis=1)
        counts = np.bincount(labels, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            # re-seed at the point farthest from its current centroid
            far = int(np.argmax(d2[np.arange(X.shape[0]), labels]))
            centroids[empty] = X[far]
            d2 = cdist(X, centroids, "sqeuclidean")
            labels = np.argmin(d2, axis=1)
            counts = np.bincount(labels, minlength=k)
        for j in range(k):
            centroids[j] = X[labels == j].mean(axis=0)
        inertia = float(np.sum((X - centroids[labels]) ** 2))
        if prev < np.inf and abs(prev - inertia) <= tol * max(prev, 1e-300):
            break
        prev = inertia
    d2 = cdist(X, centroids, "sqeuclidean")
    labels = np.argmin(d2, axis=1)
    for j in range(k):
        if np.any(labels == j):
            centroids[j] = X[labels == j].mean(axis=0)
    inertia = float(np.sum((X - centroids[labels]) ** 2))
    return labels, centroids, inertia


def kmeans(data, k: int, seed=None, restarts: int = 10, max_iter: int = 300, tol: float = 1e-6) -> ClusterAssignment:
    """k-means++ seeding, Lloyd iterations, best of ``restarts`` by inertia.

    ``data`` may be an :class:`EmbeddingResult` or an (N, d) array.
    """
    X = np.asarray(data.coordinates if isinstance(data, EmbeddingResult) else data, dtype=float)
    if X.ndim != 2:
        raise InvalidArgument("kmeans expects a 2D array")
    n = X.shape[0]
    if not 1 <= k <= n:
        raise InvalidArgument(f"k must lie in [1, {n}], got {k}")
    if np.unique(X, axis=0).shape[0] < k:
        raise InvalidArgument(f"fewer than {k} distinct points")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        labels, cents, inertia = _lloyd(X, _kmeanspp(X, k, rng), max_iter, tol)
        if np.bincount(labels, minlength=k).min() == 0:
            continue
        if best is None or inertia < best.inertia:
            best = ClusterAssignment(labels, cents, inertia)
    if best is None:
        raise InvalidArgument("k-means could not produce k nonempty clusters")
    return best


def cluster_summaries(cloud, assignment: ClusterAssignment) -> np.ndarray:
    """Mean of the original feature rows in each cluster, shape (k, D)."""
    X = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    labels = assignment.labels
    if labels.shape[0] != X.shape[0]:
        raise InvalidArgument("assignment does not match the cloud")
    return np.vstack([X[labels == j].mean(axis=0) for j in range(assignment.k)])
