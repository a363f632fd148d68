"""Synthetic point clouds on model manifolds, plus closed-form geodesic oracles.

The intrinsic coordinates stored on a cloud exist only so that tests and
diagnostics can measure true geodesic distances; nothing in the analysis
pipeline reads them.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import InvalidArgument, UnsupportedOracle

SOURCE_TAGS = ("circle", "sphere", "torus", "swiss_roll", "mixture", "csv")


@dataclass(frozen=True, eq=False)
class PointCloud:
    """N samples in R^D.

    Attributes
    ----------
    points : (N, D) float array
    intrinsic_params : (N, d) float array or None
        Angles or chart coordinates, used by geodesic oracles only.
    source_tag : str
        One of ``SOURCE_TAGS``.
    params : dict
        Generator parameters (recorded in sidecar metadata).
    labels : optional (N,) int array
        Ground-truth component labels, when the generator knows them.
    """

    points: np.ndarray
    intrinsic_params: Optional[np.ndarray] = None
    source_tag: str = "csv"
    params: dict = field(default_factory=dict)
    labels: Optional[np.ndarray] = None
    noise_std: float = 0.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2:
            raise InvalidArgument(f"points must be a 2D array, got shape {pts.shape}")
        n, d = pts.shape
        if n < 2 or d < 1:
            raise InvalidArgument(f"need N >= 2 and D >= 1, got N={n}, D={d}")
        if not np.all(np.isfinite(pts)):
            bad = int(np.argwhere(~np.isfinite(pts))[0, 0])
            raise InvalidArgument(f"row {bad} contains a non-finite value")
        if self.source_tag not in SOURCE_TAGS:
            raise InvalidArgument(f"unknown source_tag {self.source_tag!r}")
        if self.source_tag == "circle" and self.noise_std == 0.0:
            dev = np.abs(np.linalg.norm(pts, axis=1) - 1.0).max()
            if dev > 1e-12:
                raise InvalidArgument(f"circle rows must have unit norm (max deviation {dev:.3g})")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.intrinsic_params is not None:
            ip = np.asarray(self.intrinsic_params, dtype=float)
            if ip.ndim == 1:
                ip = ip[:, None]
            if ip.shape[0] != n:
                raise InvalidArgument("intrinsic_params must have one row per sample")
            ip.setflags(write=False)
            object.__setattr__(self, "intrinsic_params", ip)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=int)
            if lab.shape != (n,):
                raise InvalidArgument("labels must have one entry per sample")
            object.__setattr__(self, "labels", lab)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def sample_circle(n: int, spacing: str = "regular", seed=None) -> PointCloud:
    """Unit circle samples ``(cos theta_j, sin theta_j)``.

    ``regular`` uses ``theta_j = 2 pi j / n``; ``uniform_random`` draws the
    angles i.i.d. uniform on [0, 2 pi).
    """
    if n < 3:
        raise InvalidArgument(f"sample_circle needs n >= 3, got {n}")
    if spacing == "regular":
        theta = 2.0 * np.pi * np.arange(n) / n
    elif spacing == "uniform_random":
        theta = np.random.default_rng(seed).uniform(0.0, 2.0 * np.pi, size=n)
    else:
        raise InvalidArgument(f"unknown spacing {spacing!r}")
    pts = np.column_stack([np.cos(theta), np.sin(theta)])
    # renormalise so the unit-norm invariant holds to the last bit
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return PointCloud(pts, theta[:, None], "circle", {"n": n, "spacing": spacing, "seed": seed})


def sample_sphere(n: int, seed=None) -> PointCloud:
    """Uniform samples on the unit 2-sphere via normalised isotropic Gaussians.

    intrinsic_params holds (polar angle, azimuth).
    """
    if n < 4:
        raise InvalidArgument(f"sample_sphere needs n >= 4, got {n}")
    g = np.random.default_rng(seed).standard_normal((n, 3))
    pts = g / np.linalg.norm(g, axis=1, keepdims=True)
    polar = np.arccos(np.clip(pts[:, 2], -1.0, 1.0))
    azim = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2.0 * np.pi)
    return PointCloud(pts, np.column_stack([polar, azim]), "sphere", {"n": n, "seed": seed})


def sample_torus(n: int, major_radius: float = 2.0, minor_radius: float = 1.0, seed=None) -> PointCloud:
    """Area-uniform samples on a standard torus in R^3.

    The minor angle is drawn by rejection with acceptance
    ``(R + r cos v) / (R + r)``, which is proportional to the area element.
    intrinsic_params holds (major angle, minor angle).
    """
    R, r = float(major_radius), float(minor_radius)
    if n < 4:
        raise InvalidArgument(f"sample_torus needs n >= 4, got {n}")
    if not (R > r > 0):
        raise InvalidArgument(f"torus needs R > r > 0, got R={R}, r={r}")
    rng = np.random.default_rng(seed)
    minor = np.empty(0)
    while minor.size < n:
        cand = rng.uniform(0.0, 2.0 * np.pi, size=2 * n)
        keep = rng.uniform(size=cand.size) < (R + r * np.cos(cand)) / (R + r)
        minor = np.concatenate([minor, cand[keep]])
    minor = minor[:n]
    major = rng.uniform(0.0, 2.0 * np.pi, size=n)
    ring = R + r * np.cos(minor)
    pts = np.column_stack([ring * np.cos(major), ring * np.sin(major), r * np.sin(minor)])
    return PointCloud(
        pts,
        np.column_stack([major, minor]),
        "torus",
        {"n": n, "major_radius": R, "minor_radius": r, "seed": seed},
    )


def sample_swiss_roll(n: int, height: float = 21.0, seed=None) -> PointCloud:
    if n < 4:
        raise InvalidArgument(f"sample_swiss_roll needs n >= 4, got {n}")
    rng = np.random.default_rng(seed)
    s = 1.5 * np.pi * (1.0 + 2.0 * rng.uniform(size=n))
    y = height * rng.uniform(size=n)
    pts = np.column_stack([s * np.cos(s), y, s * np.sin(s)])
    return PointCloud(pts, np.column_stack([s, y]), "swiss_roll", {"n": n, "height": height, "seed": seed})


def sample_loop_mixture(
    n: int = 2000,
    components: int = 5,
    spread: float = 6.0,
    noise: float = 0.02,
    seed=None,
) -> PointCloud:
    """Noisy unit circles in random planes of R^3, centred on a ring of radius ``spread``.

    Component sizes differ by at most one sample; ``labels`` records which
    circle each row came from.
    """
    if components < 1 or n < 3 * components:
        raise InvalidArgument("need at least three samples per component")
    rng = np.random.default_rng(seed)
    sizes = np.full(components, n // components)
    sizes[: n % components] += 1
    blocks, labels = [], []
    for c, m in enumerate(sizes):
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        theta = rng.uniform(0.0, 2.0 * np.pi, size=m)
        loop = np.column_stack([np.cos(theta), np.sin(theta)]) @ q[:2]
        phi = 2.0 * np.pi * c / components
        centre = spread * np.array([np.cos(phi), np.sin(phi), 0.0])
        blocks.append(loop + centre + noise * rng.standard_normal((m, 3)))
        labels.append(np.full(m, c))
    params = {"n": n, "components": components, "spread": spread, "noise": noise, "seed": seed}
    return PointCloud(np.vstack(blocks), None, "mixture", params, np.concatenate(labels), noise)


def add_noise(cloud: PointCloud, fraction: float, seed=None) -> PointCloud:
    """Add ambient Gaussian noise with std ``fraction`` times each column's std."""
    if fraction < 0:
        raise InvalidArgument("noise fraction must be nonnegative")
    if fraction == 0:
        return cloud
    scale = cloud.points.std(axis=0)
    std = fraction * scale
    noisy = cloud.points + np.random.default_rng(seed).standard_normal(cloud.points.shape) * std
    params = dict(cloud.params, noise_fraction=fraction)
    return replace(cloud, points=noisy, params=params, noise_std=float(std.max()))


@dataclass(frozen=True)
class GeodesicOracle:
    manifold: str
    coords: np.ndarray  # unit vectors (sphere) or angles (circle)

    def distance(self, i, j):
        return oracle_distance(self, i, j)

    def distances_from(self, i: int, js=None) -> np.ndarray:
        js = np.arange(self.coords.shape[0]) if js is None else np.asarray(js)
        return oracle_distance(self, np.full(js.shape, i), js)


def make_oracle(cloud: PointCloud) -> GeodesicOracle:
    if cloud.intrinsic_params is None or cloud.source_tag not in ("circle", "sphere"):
        raise UnsupportedOracle(f"no closed-form geodesics for source_tag {cloud.source_tag!r}")
    if cloud.source_tag == "circle":
        return GeodesicOracle("circle", np.asarray(cloud.intrinsic_params[:, 0]))
    polar, azim = cloud.intrinsic_params[:, 0], cloud.intrinsic_params[:, 1]
    unit = np.column_stack([np.sin(polar) * np.cos(azim), np.sin(polar) * np.sin(azim), np.cos(polar)])
    return GeodesicOracle("sphere", unit)


def oracle_distance(oracle: GeodesicOracle, i, j):
    """True geodesic distance between samples ``i`` and ``j`` (scalars or arrays)."""
    if oracle.manifold == "circle":
        d = np.abs(oracle.coords[i] - oracle.coords[j]) % (2.0 * np.pi)
        out = np.minimum(d, 2.0 * np.pi - d)
    elif oracle.manifold == "sphere":
        u, v = oracle.coords[i], oracle.coords[j]
        cross = np.linalg.norm(np.cross(u, v), axis=-1)
        out = np.arctan2(cross, np.sum(u * v, axis=-1))
    else:
        raise UnsupportedOracle(f"no closed-form geodesics for {oracle.manifold!r}")
    return float(out) if np.ndim(out) == 0 else out
