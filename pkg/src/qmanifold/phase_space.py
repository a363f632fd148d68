"""Discrete Gabor spectrograms of propagated impulses.

The Gabor coefficient of a signal ``f`` at phase-space point (x, p) is the
inner product of ``f`` with the coherent state anchored there.  Evaluating
its squared modulus over a grid of sample positions and tangent momenta gives
a position-momentum picture of the back-propagated impulse ``U^{-t} delta``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.signal import find_peaks

from .coherent import PhaseSpacePoint, coherent_amplitudes, local_pca_axes, prepare_impulse
from .errors import InvalidArgument, SparseNeighborhood
from .sampling import PointCloud
from .spectral import SpectralLaplacian, StateVector


@dataclass(frozen=True, eq=False)
class PhaseSpaceGrid:
    """Positions (sample indices) and, for each, the same number of momenta.

    ``momenta`` has shape (P, M, D); ``scalars`` (M,) and ``axis_ids`` (M,)
    record which tangent axis and which multiple of it each column is.
    """

    positions: np.ndarray
    momenta: np.ndarray
    scalars: np.ndarray
    axis_ids: np.ndarray
    h: float

    @property
    def p_max(self) -> float:
        return float(np.abs(self.scalars).max())


@dataclass(frozen=True, eq=False)
class Spectrogram:
    values: np.ndarray
    grid: PhaseSpaceGrid
    t: float
    source_index: int


def make_grid(
    cloud: PointCloud,
    positions: Optional[Sequence[int]] = None,
    h: float = 0.1,
    p_max: float = 2.0,
    steps: int = 41,
    intrinsic_dim: int = 1,
    neighborhood_size: int = 10,
    radius: Optional[float] = None,
) -> PhaseSpaceGrid:
    """Momenta ``s * a`` for ``s`` in ``linspace(-p_max, p_max, steps)`` and
    ``a`` each of the leading ``intrinsic_dim`` local PCA axes.

    Axis signs follow the previous grid position so that the momentum scalar
    keeps its meaning along a curve.  Use an odd ``steps`` with ``p_max`` a
    multiple of the step so that the unit-speed shell is on the grid.
    """
    if p_max <= 0 or steps < 2:
        raise InvalidArgument("need p_max > 0 and at least two momentum steps")
    pos = np.arange(cloud.n) if positions is None else np.asarray(positions, dtype=int)
    scalars = np.linspace(-p_max, p_max, steps)
    moms = np.empty((pos.size, intrinsic_dim * steps, cloud.dim))
    prev = None
    for i, x in enumerate(pos):
        try:
            axes, _, _ = local_pca_axes(cloud.points, x, neighborhood_size, radius)
        except SparseNeighborhood:
            axes, _, _ = local_pca_axes(cloud.points, x, neighborhood_size, None)
        axes = axes[:intrinsic_dim].copy()
        if prev is not None:
            flip = np.einsum("ij,ij->i", axes, prev) < 0
            axes[flip] *= -1
        prev = axes
        moms[i] = (scalars[None, :, None] * axes[:, None, :]).reshape(-1, cloud.dim)
    axis_ids = np.repeat(np.arange(intrinsic_dim), steps)
    return PhaseSpaceGrid(pos, moms, np.tile(scalars, intrinsic_dim), axis_ids, float(h))


def gabor_coefficient(cloud: PointCloud, zeta: PhaseSpacePoint, f: StateVector) -> complex:
    """``<psi_zeta, f>`` with the coherent state conjugated."""
    if f.basis != "raw":
        raise InvalidArgument("gabor_coefficient expects a raw-basis signal")
    if len(f) != cloud.n:
        raise InvalidArgument(f"signal has length {len(f)}, cloud has {cloud.n} samples")
    psi = coherent_amplitudes(cloud.points, zeta.base_index, zeta.momentum, zeta.h)
    return complex(np.vdot(psi, f.amplitudes))


def gabor_transform(cloud: PointCloud, grid: PhaseSpaceGrid, f: np.ndarray) -> np.ndarray:
    """Coefficients over the whole grid, shape (positions, momenta)."""
    f = np.asarray(f, dtype=complex)
    if f.shape != (cloud.n,):
        raise InvalidArgument(f"signal has shape {f.shape}, expected ({cloud.n},)")
    out = np.empty((grid.positions.size, grid.momenta.shape[1]), dtype=complex)
    for i, x in enumerate(grid.positions):
        psi = coherent_amplitudes(cloud.points, x, grid.momenta[i], grid.h)
        out[i] = psi.conj().T @ f
    return out


def spectrogram(
    lap: SpectralLaplacian,
    cloud: PointCloud,
    source_index: int,
    t: float,
    grid: PhaseSpaceGrid,
    forward: bool = False,
) -> Spectrogram:
    """``|T_h[U^{-t} delta_source]|^2`` over ``grid``.

    ``forward=True`` propagates with ``+t`` instead; the default back-propagation
    matches the usual definition.
    """
    delta = prepare_impulse(cloud, source_index).amplitudes
    f = lap.evolve(delta, t if forward else -t)
    vals = np.abs(gabor_transform(cloud, grid, f)) ** 2
    return Spectrogram(vals, grid, float(t), int(source_index))


def position_marginal(sgram: Spectrogram) -> np.ndarray:
    """Max over momenta at each grid position."""
    if sgram.values.size == 0:
        return np.zeros(sgram.values.shape[0])
    return sgram.values.max(axis=1)


def dominant_peaks(marginal: np.ndarray, rel_prominence: float = 0.5, circular: bool = False) -> np.ndarray:
    """Indices of peaks whose prominence is at least ``rel_prominence`` times the
    global maximum, highest first."""
    m = np.asarray(marginal, dtype=float)
    top = m.max() if m.size else 0.0
    if top <= 0:
        return np.zeros(0, dtype=int)
    if circular:
        n = m.size
        # roll so the global minimum sits at the ends; peaks then cannot straddle the seam
        shift = int(np.argmin(m))
        rolled = np.roll(m, -shift)
        idx, _ = find_peaks(np.concatenate([[-np.inf], rolled, [-np.inf]]), prominence=rel_prominence * top)
        idx = (idx - 1 + shift) % n
    else:
        idx, _ = find_peaks(np.concatenate([[-np.inf], m, [-np.inf]]), prominence=rel_prominence * top)
        idx = idx - 1
    return idx[np.argsort(-m[idx], kind="stable")]


def angular_gap(a, b):
    d = np.abs(np.asarray(a) - np.asarray(b)) % (2 * np.pi)
    return np.minimum(d, 2 * np.pi - d)


def peaks_localized(marginal, angles, targets, tol: float, rel_prominence: float = 0.5) -> bool:
    """True when the highest dominant peaks sit within ``tol`` of each target angle,
    one distinct peak per target."""
    peaks = dominant_peaks(marginal, rel_prominence, circular=True)
    if peaks.size < len(targets):
        return False
    found = np.asarray(angles)[peaks[: len(targets)]]
    remaining = list(targets)
    for a in found:
        hits = [k for k, tg in enumerate(remaining) if angular_gap(a, tg) <= tol]
        if not hits:
            return False
        remaining.pop(hits[0])
    return True
