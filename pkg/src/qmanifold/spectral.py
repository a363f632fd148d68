"""Kernel graph, graph Laplacian and the wave propagator exp(-it sqrt(L)).

The random-walk Laplacian ``L = (4/eps) (I - D^{-1} T)`` is not symmetric, but
it is similar to ``S = (4/eps) (I - D^{-1/2} T D^{-1/2})`` through
``L = D^{-1/2} S D^{1/2}``.  Everything spectral is done on ``S`` with a
symmetric eigensolver and mapped back with ``d_half = sqrt(D)``.
"""

from __future__ import annotations

import hashlib
import logging
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist, squareform

from .errors import ConditioningWarning, DisconnectedGraph, InvalidArgument, NumericalFailure
from .sampling import PointCloud

log = logging.getLogger(__name__)

KERNEL_KINDS = ("gaussian", "truncated_gaussian")
DEFAULT_TRUNCATION = 9.0


def _points(cloud) -> np.ndarray:
    return cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)


def squared_distances(points: np.ndarray) -> np.ndarray:
    """Dense, exactly symmetric matrix of squared Euclidean distances."""
    return squareform(pdist(points, "sqeuclidean"))


def auto_epsilon(cloud, neighbors: int = 15, radius_multiple: float = 3.0) -> float:
    """Smallest eps for which the median sample has ``neighbors`` others within
    ``radius_multiple * sqrt(eps)``."""
    pts = _points(cloud)
    if pts.shape[0] <= neighbors:
        raise InvalidArgument(f"auto epsilon needs more than {neighbors} samples")
    dist, _ = cKDTree(pts).query(pts, k=neighbors + 1)
    # upper median, so that at least half the samples satisfy the rule for even N too
    r = float(np.quantile(dist[:, neighbors], 0.5, method="higher"))
    if r <= 0:
        raise InvalidArgument("auto epsilon failed: too many duplicate samples")
    # nudge up so the boundary neighbour is inside the ball after rounding
    return (r / radius_multiple) ** 2 * (1.0 + 1e-9)


@dataclass(frozen=True, eq=False)
class KernelGraph:
    T: np.ndarray
    degrees: np.ndarray
    epsilon: float
    kernel_kind: str = "gaussian"
    truncation_radius_multiple: float = DEFAULT_TRUNCATION

    @property
    def n(self) -> int:
        return self.T.shape[0]


def build_kernel(
    cloud,
    epsilon: float,
    kernel_kind: str = "gaussian",
    truncation_radius_multiple: float = DEFAULT_TRUNCATION,
) -> KernelGraph:
    """Kernel matrix ``T_ij = exp(-|v_i - v_j|^2 / eps)`` and its row sums.

    With ``truncated_gaussian`` the entries with squared distance above
    ``truncation_radius_multiple * eps`` are set to zero; a vertex left with no
    neighbour raises :class:`DisconnectedGraph`.
    """
    if not epsilon > 0:
        raise InvalidArgument(f"epsilon must be positive, got {epsilon}")
    if kernel_kind not in KERNEL_KINDS:
        raise InvalidArgument(f"unknown kernel_kind {kernel_kind!r}")
    if not truncation_radius_multiple > 0:
        raise InvalidArgument("truncation_radius_multiple must be positive")
    pts = _points(cloud)
    if pts.shape[0] < 2:
        raise InvalidArgument("kernel needs at least two samples")
    sq = squared_distances(pts)
    T = np.exp(-sq / epsilon)
    if kernel_kind == "truncated_gaussian":
        T[sq > truncation_radius_multiple * epsilon] = 0.0
    degrees = T.sum(axis=1)
    if kernel_kind == "truncated_gaussian":
        lonely = np.flatnonzero(degrees < 1.0 + 1e-12)
        if lonely.size:
            raise DisconnectedGraph(lonely[0])
    T.setflags(write=False)
    degrees.setflags(write=False)
    return KernelGraph(T, degrees, float(epsilon), kernel_kind, float(truncation_radius_multiple))


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    basis: str = "raw"

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex)
        if amp.ndim != 1:
            raise InvalidArgument("a state vector must be one-dimensional")
        if not np.all(np.isfinite(amp)):
            raise InvalidArgument("state vector has non-finite entries")
        if self.basis not in ("raw", "symmetrized"):
            raise InvalidArgument(f"unknown basis {self.basis!r}")
        object.__setattr__(self, "amplitudes", amp)

    def __len__(self):
        return self.amplitudes.shape[0]


@dataclass(frozen=True, eq=False)
class SpectralLaplacian:
    """Eigendecomposition of the symmetrised Laplacian.

    ``eigenvectors`` holds the orthonormal eigenvectors of ``S`` as columns; if
    only the low-lying part of the spectrum was computed it has fewer columns
    than rows.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    d_half: np.ndarray
    epsilon: float
    kernel_kind: str = "gaussian"
    warnings: tuple = field(default_factory=tuple)

    @property
    def n(self) -> int:
        return self.d_half.shape[0]

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def frequencies(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues)

    def evolve(self, amplitudes: np.ndarray, t: float) -> np.ndarray:
        """Apply ``exp(-it sqrt(L))`` to raw-basis vectors (shape (N,) or (N, M))."""
        amp = np.asarray(amplitudes)
        if amp.shape[0] != self.n:
            raise InvalidArgument(f"state has length {amp.shape[0]}, Laplacian has {self.n} vertices")
        V = self.eigenvectors
        phase = np.exp(-1j * t * self.frequencies)
        if amp.ndim == 1:
            coeff = V.T @ (self.d_half * amp)
            return (V @ (phase * coeff)) / self.d_half
        coeff = V.T @ (self.d_half[:, None] * amp)
        return (V @ (phase[:, None] * coeff)) / self.d_half[:, None]

    def dense_laplacian(self) -> np.ndarray:
        V = self.eigenvectors
        return ((V * self.eigenvalues) @ V.T) * (self.d_half[None, :] / self.d_half[:, None])

    def dense_propagator(self, t: float) -> np.ndarray:
        """Materialise the N x N propagator. Only for inspection; prefer :meth:`evolve`."""
        V = self.eigenvectors
        U = (V * np.exp(-1j * t * self.frequencies)) @ V.T
        return U * (self.d_half[None, :] / self.d_half[:, None])


def build_laplacian(graph: KernelGraph, n_modes: Optional[int] = None) -> SpectralLaplacian:
    """Diagonalise ``(4/eps)(I - D^{-1/2} T D^{-1/2})``.

    Parameters
    ----------
    graph : KernelGraph
    n_modes : int, optional
        Keep only the ``n_modes`` smallest eigenpairs. Off by default: the
        high-frequency modes are exactly what the propagator needs.
    """
    eps = graph.epsilon
    d_half = np.sqrt(graph.degrees)
    A = graph.T / np.outer(d_half, d_half)
    S = (4.0 / eps) * (np.eye(graph.n) - A)
    subset = None
    if n_modes is not None:
        if not 1 <= n_modes <= graph.n:
            raise InvalidArgument(f"n_modes must be in [1, {graph.n}]")
        subset = (0, n_modes - 1)
    try:
        lam, V = scipy.linalg.eigh(S, subset_by_index=subset, overwrite_a=True, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"eigensolver failed: {exc}") from exc
    if not np.all(np.isfinite(lam)):
        raise NumericalFailure("eigensolver returned non-finite eigenvalues")
    notes = []
    lam_max = float(lam.max()) if lam.size else 0.0
    if lam.size and lam.min() < -1e-8 * max(lam_max, 4.0 / eps):
        msg = f"clamped eigenvalue {lam.min():.3e} is below -1e-8 * lambda_max"
        warnings.warn(msg, ConditioningWarning, stacklevel=2)
        notes.append(msg)
    lam = np.maximum(lam, 0.0)
    for arr in (lam, V, d_half):
        arr.setflags(write=False)
    return SpectralLaplacian(lam, V, d_half, eps, graph.kernel_kind, tuple(notes))


def apply_propagator(lap: SpectralLaplacian, state: StateVector, t: float) -> StateVector:
    if state.basis != "raw":
        raise InvalidArgument("apply_propagator expects a raw-basis state")
    if len(state) != lap.n:
        raise InvalidArgument(f"state has length {len(state)}, Laplacian has {lap.n} vertices")
    return StateVector(lap.evolve(state.amplitudes, t), "raw")


def conserved_norm(lap: SpectralLaplacian, state: StateVector) -> float:
    """Degree-weighted norm ``|sqrt(D) psi|``, which the propagator preserves."""
    if state.basis != "raw":
        raise InvalidArgument("conserved_norm expects a raw-basis state")
    return float(np.linalg.norm(lap.d_half * state.amplitudes))


# -- on-disk cache -----------------------------------------------------------

_MAGIC = b"QMSPECL\0"
_VERSION = 1
_HEADER = struct.Struct("<8sIIQQd")


def cache_key(cloud, epsilon: float, kernel_kind: str, truncation_radius_multiple: float = DEFAULT_TRUNCATION,
              n_modes: Optional[int] = None) -> str:
    pts = np.ascontiguousarray(_points(cloud), dtype="<f8")
    h = hashlib.sha256()
    h.update(struct.pack("<QQ", *pts.shape))
    h.update(pts.tobytes())
    h.update(repr((float(epsilon), kernel_kind, float(truncation_radius_multiple), n_modes)).encode())
    return h.hexdigest()


def save_laplacian(lap: SpectralLaplacian, path) -> None:
    """Write a versioned little-endian float64 file (row-major eigenvectors)."""
    kind = KERNEL_KINDS.index(lap.kernel_kind)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, kind, lap.n, lap.n_modes, lap.epsilon))
        fh.write(np.ascontiguousarray(lap.eigenvalues, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(lap.d_half, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(lap.eigenvectors, dtype="<f8").tobytes())


def load_laplacian(path) -> SpectralLaplacian:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, kind, n, m, eps = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != _VERSION:
        raise NumericalFailure(f"{path}: not a version-{_VERSION} Laplacian cache")
    off = _HEADER.size
    expected = off + 8 * (m + n + n * m)
    if len(raw) != expected:
        raise NumericalFailure(f"{path}: truncated cache file")
    lam = np.frombuffer(raw, "<f8", m, off).astype(float)
    d_half = np.frombuffer(raw, "<f8", n, off + 8 * m).astype(float)
    V = np.frombuffer(raw, "<f8", n * m, off + 8 * (m + n)).reshape(n, m).astype(float)
    return SpectralLaplacian(lam, V, d_half, eps, KERNEL_KINDS[kind])


def laplacian_for(
    cloud,
    epsilon: float,
    kernel_kind: str = "gaussian",
    truncation_radius_multiple: float = DEFAULT_TRUNCATION,
    n_modes: Optional[int] = None,
    cache_dir=None,
) -> SpectralLaplacian:
    """Build (or load from ``cache_dir``) the Laplacian of ``cloud`` at scale ``epsilon``."""
    path = None
    if cache_dir is not None:
        key = cache_key(cloud, epsilon, kernel_kind, truncation_radius_multiple, n_modes)
        path = Path(cache_dir) / f"laplacian-{key[:32]}.bin"
        if path.exists():
            try:
                return load_laplacian(path)
            except (NumericalFailure, struct.error) as exc:
                log.warning("ignoring unreadable cache %s: %s", path, exc)
    graph = build_kernel(cloud, epsilon, kernel_kind, truncation_radius_multiple)
    lap = build_laplacian(graph, n_modes)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        save_laplacian(lap, tmp)
        tmp.replace(path)
    return lap
