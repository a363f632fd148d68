"""Discrete coherent states anchored at data points.

A coherent state at phase-space point (v*, p) with uncertainty parameter h has
amplitudes ``exp(-|v - v*|^2 / 2h) * exp(i <v - v*, p> / h)`` on every sample
``v``.  The envelope uses ambient (chordal) distance.  States are left
unnormalised; consumers divide by ``|psi|^2`` where they need probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateNeighborhood, InvalidArgument, SparseNeighborhood
from .sampling import PointCloud
from .spectral import StateVector

MOMENTUM_METHODS = ("nearest_neighbor", "local_pca")


def uncertainty_from_scale(epsilon: float, alpha: float = 1.0) -> float:
    """Return ``h = epsilon ** (1 / (2 + alpha))``.

    For ``0 < epsilon < 1`` and ``alpha >= 1`` this always lands in the regime
    ``h > sqrt(epsilon)`` needed to resolve geodesics.
    """
    if not 0 < epsilon < 1:
        raise InvalidArgument(f"epsilon must lie in (0, 1), got {epsilon}")
    if not alpha >= 1:
        raise InvalidArgument(f"alpha must be >= 1, got {alpha}")
    h = epsilon ** (1.0 / (2.0 + alpha))
    assert h > np.sqrt(epsilon)
    return float(h)


@dataclass(frozen=True)
class PhaseSpacePoint:
    base_index: int
    momentum: np.ndarray
    h: float

    def __post_init__(self):
        p = np.asarray(self.momentum, dtype=float).ravel()
        if abs(np.linalg.norm(p) - 1.0) > 1e-12:
            raise InvalidArgument(f"momentum must be a unit vector (norm {np.linalg.norm(p):.15g})")
        if not 0 < self.h <= 1:
            raise InvalidArgument(f"h must lie in (0, 1], got {self.h}")
        object.__setattr__(self, "momentum", p)
        object.__setattr__(self, "base_index", int(self.base_index))

    def flipped(self) -> "PhaseSpacePoint":
        return PhaseSpacePoint(self.base_index, -self.momentum, self.h)


@dataclass(frozen=True)
class MomentumEstimator:
    """How to read a momentum direction off the data around a base point.

    ``radius`` (local_pca only) selects every sample within that ambient
    distance; without it the ``neighborhood_size`` nearest samples are used.
    """

    method: str = "nearest_neighbor"
    neighborhood_size: int = 10
    principal_axis_index: int = 0
    radius: Optional[float] = None

    def __post_init__(self):
        if self.method not in MOMENTUM_METHODS:
            raise InvalidArgument(f"unknown momentum method {self.method!r}")
        if self.method == "local_pca" and self.neighborhood_size < 3:
            raise InvalidArgument("local_pca needs neighborhood_size >= 3")
        if self.principal_axis_index < 0:
            raise InvalidArgument("principal_axis_index must be nonnegative")


def default_pca_size(intrinsic_dim_guess: int = 2) -> int:
    return max(10, 2 * intrinsic_dim_guess)


def _unit(v):
    return v / np.linalg.norm(v)


def _check_index(cloud: PointCloud, i: int) -> int:
    if not 0 <= i < cloud.n:
        raise InvalidArgument(f"sample index {i} out of range for N={cloud.n}")
    return int(i)


def _nearest_other(points: np.ndarray, base: int):
    d = np.linalg.norm(points - points[base], axis=1)
    d[base] = np.inf
    j = int(np.argmin(d))
    if d[j] == 0.0:
        raise DegenerateNeighborhood(f"sample {base} has a duplicate at index {j}")
    return j, d


def local_pca_axes(points: np.ndarray, base: int, neighborhood_size: int = 10, radius: Optional[float] = None):
    """Principal axes (rows, by decreasing variance) of the neighbourhood of ``base``.

    Returns ``(axes, singular_values, neighbour_indices)``.
    """
    _, d = _nearest_other(points, base)
    d[base] = 0.0
    if radius is not None:
        idx = np.flatnonzero(d <= radius)
        if idx.size < neighborhood_size:
            raise SparseNeighborhood(
                f"only {idx.size} samples within {radius:.3g} of sample {base}, need {neighborhood_size}"
            )
    else:
        if points.shape[0] < neighborhood_size:
            raise SparseNeighborhood(f"cloud has fewer than {neighborhood_size} samples")
        idx = np.argsort(d, kind="stable")[:neighborhood_size]
    nb = points[idx]
    _, s, vt = np.linalg.svd(nb - nb.mean(axis=0), full_matrices=False)
    return vt, s, idx


def estimate_momentum(
    cloud: PointCloud,
    base_index: int,
    estimator: Optional[MomentumEstimator] = None,
    orientation_hint=None,
) -> np.ndarray:
    """Unit momentum direction at ``base_index``.

    ``nearest_neighbor`` returns the normalised chord to the closest other
    sample. ``local_pca`` returns a principal axis of the neighbourhood; its
    sign is fixed by ``orientation_hint`` if given, else by the nearest chord.
    The hint also flips the nearest-neighbour chord when supplied.
    """
    est = estimator or MomentumEstimator()
    base = _check_index(cloud, base_index)
    pts = cloud.points
    j, _ = _nearest_other(pts, base)
    chord = _unit(pts[j] - pts[base])
    if est.method == "nearest_neighbor":
        p = chord
    else:
        axes, _, _ = local_pca_axes(pts, base, est.neighborhood_size, est.radius)
        if est.principal_axis_index >= axes.shape[0]:
            raise InvalidArgument(f"principal axis {est.principal_axis_index} not available")
        p = _unit(axes[est.principal_axis_index])
        if orientation_hint is None and np.dot(p, chord) < 0:
            p = -p
    if orientation_hint is not None:
        hint = np.asarray(orientation_hint, dtype=float).ravel()
        if hint.shape != p.shape:
            raise InvalidArgument("orientation_hint must have the ambient dimension")
        if np.dot(p, hint) < 0:
            p = -p
    return p / np.linalg.norm(p)


def coherent_amplitudes(points: np.ndarray, base_index: int, momenta, h: float) -> np.ndarray:
    """Raw coherent-state amplitudes for one momentum (D,) or several (M, D).

    Momenta need not be unit vectors here; the result has shape (N,) or (N, M).
    """
    diff = points - points[base_index]
    env = np.exp(-np.einsum("ij,ij->i", diff, diff) / (2.0 * h))
    mom = np.asarray(momenta, dtype=float)
    phase = (diff @ mom.T) / h
    if mom.ndim == 1:
        return env * np.exp(1j * phase)
    return env[:, None] * np.exp(1j * phase)


def prepare_coherent_state(cloud: PointCloud, zeta: PhaseSpacePoint) -> StateVector:
    base = _check_index(cloud, zeta.base_index)
    if zeta.momentum.shape != (cloud.dim,):
        raise InvalidArgument("momentum dimension does not match the cloud")
    return StateVector(coherent_amplitudes(cloud.points, base, zeta.momentum, zeta.h), "raw")


def prepare_impulse(cloud: PointCloud, base_index: int) -> StateVector:
    amp = np.zeros(cloud.n, dtype=complex)
    amp[_check_index(cloud, base_index)] = 1.0
    return StateVector(amp, "raw")
