"""Coherent-state propagation, endpoint estimators and the geodesic graph.

Propagating a coherent state anchored at (v*, p) for time t moves its mass
along the geodesic leaving v* in direction p; the endpoint is read off either
as the sample nearest the |psi|^2-weighted mean position (``expected``) or as
the sample carrying the most mass (``max``).  Recording ``t`` between the
source and that endpoint, for many sources and times, yields a sparse graph of
geodesic distances.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse
from scipy.spatial.distance import cdist

from .coherent import (
    PhaseSpacePoint,
    coherent_amplitudes,
    default_pca_size,
    local_pca_axes,
    prepare_coherent_state,
    uncertainty_from_scale,
)
from .errors import (
    DegenerateNeighborhood,
    DegenerateState,
    InvalidArgument,
    QManifoldError,
    SparseNeighborhood,
    UncertaintyRegimeViolation,
)
from .sampling import PointCloud
from .spectral import SpectralLaplacian, StateVector

log = logging.getLogger(__name__)

ESTIMATORS = ("expected", "max")
DEFAULT_T_MAX = np.pi
# a packet whose participation number grows past this multiple of its initial
# value has broken up; its endpoint is not used as a graph edge
DELOCALIZED_RATIO = 3.0


@dataclass(frozen=True, eq=False)
class PropagationResult:
    state_t: StateVector
    t: float
    expected_position: np.ndarray
    max_position_index: int
    snapped_index: int
    base_index: int = -1

    def endpoint(self, estimator: str = "expected") -> int:
        return self.snapped_index if estimator == "expected" else self.max_position_index


def _check_regime(lap: SpectralLaplacian, h: float) -> None:
    if not h > np.sqrt(lap.epsilon):
        raise UncertaintyRegimeViolation(
            f"h={h:.4g} does not exceed sqrt(epsilon)={np.sqrt(lap.epsilon):.4g}"
        )


def _check_time(t: float, t_max: float) -> None:
    if not 0 < t <= t_max:
        raise InvalidArgument(f"propagation time must lie in (0, {t_max:.4g}], got {t}")


def snap_to_cloud(points: np.ndarray, positions: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Index of the nearest sample for each row of ``positions`` (lowest index on ties)."""
    positions = np.atleast_2d(positions)
    out = np.empty(positions.shape[0], dtype=int)
    for lo in range(0, positions.shape[0], chunk):
        d = cdist(positions[lo:lo + chunk], points, "sqeuclidean")
        out[lo:lo + chunk] = np.argmin(d, axis=1)
    return out


def participation(amplitudes: np.ndarray) -> np.ndarray:
    """``(sum |psi|^2)^2 / sum |psi|^4`` per column: the effective number of occupied samples."""
    w = np.abs(amplitudes) ** 2
    return w.sum(axis=0) ** 2 / (w ** 2).sum(axis=0)


def _measure(points: np.ndarray, amplitudes: np.ndarray, initial_participation=None):
    """Expected positions, argmax indices and delocalisation flags for columns of amplitudes."""
    w = np.abs(amplitudes) ** 2
    total = w.sum(axis=0)
    expected = (w.T @ points) / total[:, None]
    if initial_participation is None:
        delocalized = np.zeros(w.shape[1], dtype=bool)
    else:
        delocalized = total ** 2 / (w ** 2).sum(axis=0) > DELOCALIZED_RATIO * initial_participation
    return expected, np.argmax(w, axis=0), delocalized


def propagate(
    lap: SpectralLaplacian,
    cloud: PointCloud,
    zeta: PhaseSpacePoint,
    t: float,
    t_max: float = DEFAULT_T_MAX,
) -> PropagationResult:
    """Propagate the coherent state at ``zeta`` for time ``t`` and locate it."""
    _check_regime(lap, zeta.h)
    _check_time(t, t_max)
    psi0 = prepare_coherent_state(cloud, zeta)
    return _result(cloud, zeta.base_index, lap.evolve(psi0.amplitudes, t), t)


def _result(cloud, base, amp_t, t):
    expected, imax, _ = _measure(cloud.points, amp_t[:, None])
    snapped = snap_to_cloud(cloud.points, expected)
    return PropagationResult(
        StateVector(amp_t, "raw"), float(t), expected[0], int(imax[0]), int(snapped[0]), int(base)
    )


def shoot_geodesic(
    lap: SpectralLaplacian,
    cloud: PointCloud,
    zeta: PhaseSpacePoint,
    t_schedule: Sequence[float],
    t_max: float = DEFAULT_T_MAX,
) -> list:
    """One result per time, each propagated directly from the initial state."""
    times = [float(t) for t in t_schedule]
    if not times:
        return []
    if any(b <= a for a, b in zip(times, times[1:])):
        raise InvalidArgument("t_schedule must be strictly ascending")
    _check_regime(lap, zeta.h)
    for t in times:
        _check_time(t, t_max)
    psi0 = prepare_coherent_state(cloud, zeta).amplitudes
    return [_result(cloud, zeta.base_index, lap.evolve(psi0, t), t) for t in times]


def wavepacket_profile(result) -> np.ndarray:
    """``|psi|^2`` scaled to a maximum of 1. Accepts a result, a state or an array."""
    if isinstance(result, PropagationResult):
        amp = result.state_t.amplitudes
    elif isinstance(result, StateVector):
        amp = result.amplitudes
    else:
        amp = np.asarray(result)
    w = np.abs(amp) ** 2
    peak = w.max() if w.size else 0.0
    if peak == 0.0:
        raise DegenerateState("cannot normalise the profile of a zero state")
    return w / peak


# -- geodesic graph ----------------------------------------------------------

@dataclass
class GeodesicGraph:
    """Symmetric sparse matrix of propagation-time distances.

    Entries are stored once per unordered pair ``(i, j)`` with ``i < j``.
    A repeated pair keeps the smaller time; each replacement or rejection is
    counted in ``conflicts``.
    """

    n: int
    entries: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    conflicts: int = 0

    def insert(self, j: int, k: int, t: float, source_index: Optional[int] = None,
               momentum_id: int = -1, estimator: str = "expected") -> None:
        j, k = int(j), int(k)
        if j == k:
            raise InvalidArgument("geodesic graph has no self-loops")
        if not (0 <= j < self.n and 0 <= k < self.n):
            raise InvalidArgument(f"edge ({j}, {k}) out of range for n={self.n}")
        if not t > 0:
            raise InvalidArgument(f"edge times must be positive, got {t}")
        key = (min(j, k), max(j, k))
        rec = {
            "source_index": j if source_index is None else int(source_index),
            "momentum_id": int(momentum_id),
            "t": float(t),
            "estimator_used": estimator,
        }
        old = self.entries.get(key)
        if old is not None:
            old_rec = self.provenance[key]
            if old != t:
                self.conflicts += 1
                log.debug("conflicting times for edge %s: %g vs %g", key, old, t)
            # keep the shortest time; order-independent tie-break on provenance
            if (old, old_rec["source_index"], old_rec["momentum_id"]) <= (t, rec["source_index"], rec["momentum_id"]):
                return
        self.entries[key] = float(t)
        self.provenance[key] = rec

    def get(self, j: int, k: int, default=None):
        return self.entries.get((min(j, k), max(j, k)), default)

    def __len__(self):
        return len(self.entries)

    def edges(self):
        """Sorted ``(i, j, t)`` triples with ``i < j``."""
        return [(i, j, self.entries[(i, j)]) for (i, j) in sorted(self.entries)]

    def to_sparse(self) -> scipy.sparse.csr_matrix:
        if not self.entries:
            return scipy.sparse.csr_matrix((self.n, self.n))
        ij = np.array(sorted(self.entries), dtype=int)
        t = np.array([self.entries[tuple(e)] for e in ij])
        rows = np.concatenate([ij[:, 0], ij[:, 1]])
        cols = np.concatenate([ij[:, 1], ij[:, 0]])
        return scipy.sparse.csr_matrix((np.concatenate([t, t]), (rows, cols)), shape=(self.n, self.n))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "t"])
        for i, j, t in self.edges():
            w.writerow([i, j, repr(t)])
        return buf.getvalue()

    def provenance_json(self) -> str:
        recs = [dict(i=i, j=j, **self.provenance[(i, j)]) for (i, j) in sorted(self.provenance)]
        return json.dumps({"n": self.n, "conflicts": self.conflicts, "edges": recs}, indent=1)

    @classmethod
    def from_csv(cls, text: str, n: Optional[int] = None) -> "GeodesicGraph":
        rows = list(csv.reader(io.StringIO(text)))
        if rows and rows[0] == ["i", "j", "t"]:
            rows = rows[1:]
        triples = [(int(i), int(j), float(t)) for i, j, t in rows]
        size = n if n is not None else (max(max(i, j) for i, j, _ in triples) + 1 if triples else 0)
        g = cls(size)
        for i, j, t in triples:
            g.insert(i, j, t)
        return g


@dataclass(frozen=True)
class TrialSet:
    """Outcome of many (source, momentum, time) propagations, one row per trial."""

    source: np.ndarray
    momentum_id: np.ndarray
    t: np.ndarray
    snapped: np.ndarray
    max_index: np.ndarray
    delocalized: np.ndarray
    h: float

    def endpoints(self, estimator: str = "expected") -> np.ndarray:
        if estimator not in ESTIMATORS:
            raise InvalidArgument(f"unknown estimator {estimator!r}")
        return self.snapped if estimator == "expected" else self.max_index

    def __len__(self):
        return self.source.shape[0]


def tangent_momenta(points: np.ndarray, base: int, count: int, intrinsic_dim: int = 2,
                    neighborhood_size: Optional[int] = None, radius: Optional[float] = None,
                    rng=None) -> np.ndarray:
    """Unit momenta at ``base``: +/- the leading PCA axes, then random tangent directions."""
    size = neighborhood_size or default_pca_size(intrinsic_dim)
    try:
        axes, _, _ = local_pca_axes(points, base, size, radius)
    except SparseNeighborhood:
        axes, _, _ = local_pca_axes(points, base, size, None)
    d = min(intrinsic_dim, axes.shape[0])
    out = []
    for a in axes[:d]:
        out.extend([a, -a])
    rng = rng if rng is not None else np.random.default_rng(0)
    while len(out) < count:
        c = rng.standard_normal(d)
        v = c @ axes[:d]
        out.append(v / np.linalg.norm(v))
    out = np.array(out[:count])
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def chord_momenta(points: np.ndarray, base: int, count: int) -> np.ndarray:
    """Unit chords from ``base`` to its ``count`` nearest other samples."""
    d = np.linalg.norm(points - points[base], axis=1)
    d[base] = np.inf
    near = np.argsort(d, kind="stable")[:count]
    if d[near[0]] == 0.0:
        raise DegenerateNeighborhood(f"sample {base} has a duplicate at index {near[0]}")
    chords = points[near] - points[base]
    return chords / np.linalg.norm(chords, axis=1, keepdims=True)


def run_trials(
    lap: SpectralLaplacian,
    cloud: PointCloud,
    sources: Iterable[int],
    momenta_per_source: int,
    t_schedule: Sequence[float],
    h: Optional[float] = None,
    alpha: float = 1.0,
    intrinsic_dim: int = 2,
    neighborhood_size: Optional[int] = None,
    seed=None,
    t_max: float = DEFAULT_T_MAX,
    momentum_method: str = "pca",
    batch_columns: int = 512,
) -> TrialSet:
    """Propagate coherent states for every (source, momentum, time) combination.

    ``momentum_method="pca"`` uses :func:`tangent_momenta`; ``"nn"`` uses
    chords to the nearest samples (:func:`chord_momenta`).
    """
    if momentum_method not in ("pca", "nn"):
        raise InvalidArgument(f"unknown momentum method {momentum_method!r}")
    sources = [int(s) for s in sources]
    if not sources:
        raise InvalidArgument("at least one source is required")
    if momenta_per_source < 1:
        raise InvalidArgument("momenta_per_source must be >= 1")
    times = [float(t) for t in t_schedule]
    for t in times:
        _check_time(t, t_max)
    h = uncertainty_from_scale(lap.epsilon, alpha) if h is None else float(h)
    _check_regime(lap, h)
    rng = np.random.default_rng(seed)
    pts = cloud.points
    radius = 3.0 * np.sqrt(lap.epsilon)

    cols_src, cols_mid, cols_mom = [], [], []
    for s in sources:
        if not 0 <= s < cloud.n:
            raise InvalidArgument(f"source {s} out of range")
        try:
            if momentum_method == "pca":
                moms = tangent_momenta(pts, s, momenta_per_source, intrinsic_dim, neighborhood_size, radius, rng)
            else:
                moms = chord_momenta(pts, s, momenta_per_source)
        except (DegenerateNeighborhood, SparseNeighborhood) as exc:
            log.warning("skipping source %d: %s", s, exc)
            continue
        for m, p in enumerate(moms):
            cols_src.append(s)
            cols_mid.append(m)
            cols_mom.append(p)

    rec = {k: [] for k in ("source", "momentum_id", "t", "snapped", "max_index", "delocalized")}
    for lo in range(0, len(cols_src), batch_columns):
        src = np.array(cols_src[lo:lo + batch_columns])
        mid = np.array(cols_mid[lo:lo + batch_columns])
        psi0 = np.empty((cloud.n, src.size), dtype=complex)
        for c, (s, p) in enumerate(zip(src, cols_mom[lo:lo + batch_columns])):
            psi0[:, c] = coherent_amplitudes(pts, s, p, h)
        # expand once in the eigenbasis, then only re-phase per time
        V, dh = lap.eigenvectors, lap.d_half
        coeff = V.T @ (dh[:, None] * psi0)
        pn0 = participation(psi0)
        for t in times:
            amp = (V @ (np.exp(-1j * t * lap.frequencies)[:, None] * coeff)) / dh[:, None]
            expected, imax, deloc = _measure(pts, amp, pn0)
            rec["source"].append(src)
            rec["momentum_id"].append(mid)
            rec["t"].append(np.full(src.size, t))
            rec["snapped"].append(snap_to_cloud(pts, expected))
            rec["max_index"].append(imax)
            rec["delocalized"].append(deloc)
    if not rec["source"]:
        empty = np.zeros(0, dtype=int)
        return TrialSet(empty, empty, np.zeros(0), empty, empty, np.zeros(0, bool), h)
    cat = {k: np.concatenate(v) for k, v in rec.items()}
    return TrialSet(h=h, **cat)


def build_geodesic_graph(
    lap: SpectralLaplacian,
    cloud: PointCloud,
    sources: Iterable[int],
    momenta_per_source: int,
    t_schedule: Sequence[float],
    estimator: str = "expected",
    trials: Optional[TrialSet] = None,
    **kwargs,
) -> GeodesicGraph:
    """Populate a :class:`GeodesicGraph` by geodesic shooting from each source.

    Extra keyword arguments go to :func:`run_trials`. Trials whose endpoint is
    the source itself, or whose packet has broken up (see ``DELOCALIZED_RATIO``), are
    skipped.
    """
    if estimator not in ESTIMATORS:
        raise InvalidArgument(f"unknown estimator {estimator!r}")
    if trials is None:
        trials = run_trials(lap, cloud, sources, momenta_per_source, t_schedule, **kwargs)
    graph = GeodesicGraph(cloud.n)
    ends = trials.endpoints(estimator)
    skipped = 0
    for s, m, t, k, bad in zip(trials.source, trials.momentum_id, trials.t, ends, trials.delocalized):
        if bad or k == s:
            skipped += 1
            continue
        try:
            graph.insert(s, k, t, s, m, estimator)
        except QManifoldError as exc:
            skipped += 1
            log.warning("skipping trial (%d, %d, %g): %s", s, m, t, exc)
    if skipped:
        log.info("geodesic graph: %d of %d trials skipped", skipped, len(trials))
    return graph
