"""End-to-end workflow: kernel -> Laplacian -> geodesic graph -> embedding -> clusters.

A run writes everything it produces into one directory, together with
``manifest.json`` recording the resolved configuration, a SHA-256 of every
artifact, per-stage wall times and any warnings raised along the way.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import hashlib
import io
import json
import logging
import time
import warnings
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import yaml

from . import __version__
from .coherent import uncertainty_from_scale
from .errors import DataError, InvalidArgument, ParseError, PipelineStageError, QManifoldError
from .organization import cluster_summaries, fr_embed, kmeans
from .propagation import DEFAULT_T_MAX, build_geodesic_graph, run_trials, wavepacket_profile
from .sampling import PointCloud, make_oracle
from .spectral import auto_epsilon, build_kernel, build_laplacian, laplacian_for

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"


@dataclass
class PipelineConfig:
    """Every knob of :func:`run_pipeline`.

    ``epsilon`` and ``t_schedule`` accept ``"auto"``: epsilon then follows the
    median-15-neighbours rule and the schedule becomes ``h * (1, 2, 4, 8)``.
    ``sources`` is ``"all"``, ``"stride:<s>"`` or an explicit list of indices.
    """

    epsilon: Union[float, str] = "auto"
    alpha: float = 1.0
    t_schedule: Union[list, str] = "auto"
    sources: Union[str, list] = "all"
    momenta_per_source: int = 2
    estimator: str = "expected"
    d_embed: int = 3
    k_clusters: int = 5
    seed: int = 0
    momentum_method: str = "pca"
    truncation_radius_multiple: float = 9.0
    kernel_kind: str = "gaussian"
    intrinsic_dim: int = 2
    pca_k: Optional[int] = None
    t_max: float = DEFAULT_T_MAX
    fr_iterations: int = 500
    fr_weight_mode: str = "inverse"
    kmeans_restarts: int = 10
    standardize: bool = False
    cache_dir: Optional[str] = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if isinstance(self.epsilon, str):
            if self.epsilon != "auto":
                raise InvalidArgument(f"epsilon must be a positive number or 'auto', got {self.epsilon!r}")
        elif not float(self.epsilon) > 0:
            raise InvalidArgument("epsilon must be positive")
        if not float(self.alpha) >= 1:
            raise InvalidArgument(f"alpha must be >= 1, got {self.alpha}")
        if isinstance(self.t_schedule, str):
            if self.t_schedule != "auto":
                raise InvalidArgument("t_schedule must be a list of positive times or 'auto'")
        elif not self.t_schedule or any(not float(t) > 0 for t in self.t_schedule):
            raise InvalidArgument("t_schedule must be a nonempty list of positive times")
        if isinstance(self.sources, str):
            if self.sources != "all" and not self.sources.startswith("stride:"):
                raise InvalidArgument(f"bad sources value {self.sources!r}")
            if self.sources.startswith("stride:") and int(self.sources[7:]) < 1:
                raise InvalidArgument("stride must be >= 1")
        elif not self.sources:
            raise InvalidArgument("sources list is empty")
        if self.momenta_per_source < 1:
            raise InvalidArgument("momenta_per_source must be >= 1")
        if self.estimator not in ("expected", "max"):
            raise InvalidArgument(f"estimator must be 'expected' or 'max', got {self.estimator!r}")
        if self.d_embed not in (2, 3):
            raise InvalidArgument("d_embed must be 2 or 3")
        if self.k_clusters < 1:
            raise InvalidArgument("k_clusters must be >= 1")
        if self.momentum_method not in ("nn", "pca"):
            raise InvalidArgument("momentum_method must be 'nn' or 'pca'")
        if not self.truncation_radius_multiple > 0:
            raise InvalidArgument("truncation_radius_multiple must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise InvalidArgument(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def load_config(path, overrides: Optional[dict] = None) -> PipelineConfig:
    """Read a YAML or JSON config file; ``overrides`` (e.g. CLI flags) win."""
    data = {}
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise InvalidArgument(f"{path}: config must be a mapping")
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return PipelineConfig.from_dict(data)


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named stage, derived from the run seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


def _substream_seed(seed: int, name: str) -> int:
    return int(substream(seed, name).integers(2**63))


# -- CSV in/out --------------------------------------------------------------

def ingest_csv(path, has_header: bool = False, standardize: bool = False) -> PointCloud:
    """Read a rectangular numeric CSV into a cloud tagged ``csv``."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if lineno == 1 and has_header:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(f"{path}: line {lineno} has {len(row)} fields, expected {width}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                col = next(i for i, c in enumerate(row) if not _is_float(c))
                raise ParseError(f"{path}: non-numeric value {row[col]!r} at line {lineno}, column {col + 1}") from None
    if len(rows) < 2:
        raise DataError(f"{path}: need at least two data rows, found {len(rows)}")
    X = np.array(rows, dtype=float)
    if not np.all(np.isfinite(X)):
        r, c = np.argwhere(~np.isfinite(X))[0]
        raise ParseError(f"{path}: non-finite value at data row {r + 1}, column {c + 1}")
    params = {"path": str(path), "shape": list(X.shape), "standardized": bool(standardize)}
    if standardize:
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
        X = (X - X.mean(axis=0)) / sd
    return PointCloud(X, None, "csv", params)


def _is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def cloud_to_csv(cloud: PointCloud) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"dim_{i}" for i in range(cloud.dim)])
    for row in cloud.points:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def write_cloud(cloud: PointCloud, path) -> Path:
    """Write ``path`` (CSV with ``dim_*`` header) and ``path.json`` metadata."""
    path = Path(path)
    path.write_text(cloud_to_csv(cloud))
    meta = {"source_tag": cloud.source_tag, "n": cloud.n, "seed": cloud.params.get("seed"),
            "params": cloud.params}
    if cloud.labels is not None:
        meta["labels"] = cloud.labels.tolist()
    sidecar(path).write_text(json.dumps(meta, indent=1, default=str))
    return path


def sidecar(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def load_cloud(path, has_header: Optional[bool] = None, standardize: bool = False) -> PointCloud:
    """Read a cloud, using its sidecar metadata when present.

    For circle and sphere clouds written by :func:`write_cloud`, the intrinsic
    angles are recovered from the coordinates so oracles and angle-indexed plot
    output keep working.
    """
    path = Path(path)
    if has_header is None:
        with open(path) as fh:
            first = fh.readline()
        has_header = not all(_is_float(c) for c in first.strip().split(",") if c.strip())
    cloud = ingest_csv(path, has_header, standardize)
    meta_path = sidecar(path)
    if not meta_path.exists():
        return cloud
    meta = json.loads(meta_path.read_text())
    tag = meta.get("source_tag", "csv")
    labels = np.array(meta["labels"]) if "labels" in meta else None
    X = cloud.points
    intrinsic = None
    if tag == "circle" and not standardize:
        intrinsic = np.mod(np.arctan2(X[:, 1], X[:, 0]), 2 * np.pi)[:, None]
    elif tag == "sphere" and not standardize:
        intrinsic = np.column_stack([np.arccos(np.clip(X[:, 2], -1, 1)), np.mod(np.arctan2(X[:, 1], X[:, 0]), 2 * np.pi)])
    else:
        tag = tag if tag in ("torus", "swiss_roll", "mixture") else "csv"
    noisy = float(meta.get("params", {}).get("noise_fraction", 0.0) or 0.0)
    return PointCloud(X, intrinsic, tag, dict(meta.get("params", {}), path=str(path)), labels, noisy)


def _plot_coordinate(cloud: PointCloud):
    if cloud.intrinsic_params is not None and cloud.intrinsic_params.shape[1] == 1:
        return cloud.intrinsic_params[:, 0], "angle"
    return np.arange(cloud.n, dtype=float), "index"


def emit_profile_plot_data(result, cloud: PointCloud) -> str:
    """Two-column CSV of the normalised wave-packet profile, ordered by angle
    (circle-like clouds) or index."""
    prof = wavepacket_profile(result)
    coord, name = _plot_coordinate(cloud)
    order = np.argsort(coord, kind="stable")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([name, "profile_value"])
    for i in order:
        w.writerow([repr(float(coord[i])), repr(float(prof[i]))])
    return buf.getvalue()


def emit_profile_series(series: dict, cloud: PointCloud) -> str:
    """Long-format CSV ``series,<coord>,profile_value``; each series scaled to max 1."""
    coord, name = _plot_coordinate(cloud)
    order = np.argsort(coord, kind="stable")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["series", name, "profile_value"])
    for label, values in series.items():
        prof = wavepacket_profile(values)
        for i in order:
            w.writerow([label, repr(float(coord[i])), repr(float(prof[i]))])
    return buf.getvalue()


def reference_profile(cloud: PointCloud, source: int, t: float) -> np.ndarray:
    """Indicator of the samples minimising ``|d_g(source, x) - t|``: the continuum
    impulse at time ``t`` sampled on the cloud. Needs a geodesic oracle."""
    d = make_oracle(cloud).distances_from(source)
    gap = np.abs(d - t)
    return (gap <= gap.min() + 1e-12).astype(float)


# -- hashing and manifest ----------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def cloud_hash(cloud: PointCloud) -> str:
    return hashlib.sha256(np.ascontiguousarray(cloud.points, dtype="<f8").tobytes()).hexdigest()


def verify_run(run_dir) -> list:
    """Recompute artifact hashes; return a list of problems (empty when clean)."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / MANIFEST).read_text())
    problems = []
    for name, digest in manifest.get("artifacts", {}).items():
        p = run_dir / name
        if not p.exists():
            problems.append(f"missing artifact {name}")
        elif sha256_file(p) != digest:
            problems.append(f"hash mismatch for {name}")
    return problems


def resolve_sources(value, n: int) -> list:
    if value == "all":
        return list(range(n))
    if isinstance(value, str) and value.startswith("stride:"):
        return list(range(0, n, int(value[7:])))
    out = [int(s) for s in value]
    bad = [s for s in out if not 0 <= s < n]
    if bad:
        raise InvalidArgument(f"source indices out of range: {bad[:5]}")
    return out


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_embedding(path, coords, labels=None):
    axes = ["x", "y", "z"][: coords.shape[1]]
    rows = []
    for i, row in enumerate(coords):
        rows.append([i, *(repr(float(v)) for v in row), "" if labels is None else int(labels[i])])
    _write_csv(path, ["index", *axes, "cluster"], rows)


def read_embedding(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    axes = [i for i, name in enumerate(header) if name in ("x", "y", "z")]
    return np.array([[float(r[i]) for i in axes] for r in body])


def write_summaries(path, assignment, summaries):
    sizes = np.bincount(assignment.labels, minlength=assignment.k)
    rows = [[j, int(sizes[j]), *(repr(float(v)) for v in summaries[j])] for j in range(assignment.k)]
    _write_csv(path, ["cluster", "size", *(f"mean_{d}" for d in range(summaries.shape[1]))], rows)


class _Run:
    def __init__(self, out_dir: Path, config: PipelineConfig, cloud: PointCloud):
        self.dir = out_dir
        self.config = config
        self.cloud = cloud
        self.artifacts = []
        self.times = {}
        self.warnings = []
        self.resolved = {}
        self.stop_after = "clustering"

    def artifact(self, name):
        self.artifacts.append(name)
        return self.dir / name

    def stage(self, name, fn):
        t0 = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                return fn()
            except QManifoldError as exc:
                raise PipelineStageError(name, exc) from exc
            except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
                raise PipelineStageError(name, exc) from exc
            finally:
                self.times[name] = round(time.perf_counter() - t0, 4)
                self.warnings.extend(f"{name}: {w.message}" for w in caught)

    def write_manifest(self, status, failed_stage=None, error=None):
        manifest = {
            "package_version": __version__,
            "status": status,
            "config": self.config.to_dict(),
            "resolved": self.resolved,
            "input": {
                "source_tag": self.cloud.source_tag,
                "shape": list(self.cloud.points.shape),
                "sha256": cloud_hash(self.cloud),
            },
            "artifacts": {a: sha256_file(self.dir / a) for a in self.artifacts if (self.dir / a).exists()},
            "wall_times": self.times,
            "warnings": self.warnings,
        }
        if failed_stage:
            manifest["failed_stage"] = failed_stage
            manifest["error"] = error
        (self.dir / MANIFEST).write_text(json.dumps(manifest, indent=1, default=str))


STAGES = ("kernel", "laplacian", "geodesics", "embedding", "clustering")


def run_pipeline(config: PipelineConfig, cloud: PointCloud, out_dir, stop_after: str = "clustering") -> Path:
    """Run every stage (up to ``stop_after``) and write artifacts into ``out_dir``.

    On failure the artifacts produced so far stay on disk, the manifest records
    the failing stage, and :class:`PipelineStageError` is raised.
    """
    config.validate()
    if stop_after not in STAGES:
        raise InvalidArgument(f"unknown stage {stop_after!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run = _Run(out, config, cloud)
    run.stop_after = stop_after
    try:
        _execute(run)
    except PipelineStageError as exc:
        run.write_manifest("failed", exc.stage, str(exc.cause))
        raise
    run.write_manifest("ok")
    return out


def _execute(run: _Run) -> None:
    cfg, cloud = run.config, run.cloud

    def kernel_stage():
        eps = auto_epsilon(cloud) if cfg.epsilon == "auto" else float(cfg.epsilon)
        h = uncertainty_from_scale(eps, cfg.alpha)
        run.resolved.update(epsilon=eps, h=h)
        graph = build_kernel(cloud, eps, cfg.kernel_kind, cfg.truncation_radius_multiple)
        deg = graph.degrees
        meta = {
            "epsilon": eps,
            "epsilon_rule": "auto" if cfg.epsilon == "auto" else "explicit",
            "h": h,
            "alpha": cfg.alpha,
            "kernel_kind": cfg.kernel_kind,
            "truncation_radius_multiple": cfg.truncation_radius_multiple,
            "n": cloud.n,
            "ambient_dim": cloud.dim,
            "degree_min": float(deg.min()),
            "degree_median": float(np.median(deg)),
            "degree_max": float(deg.max()),
        }
        run.artifact("kernel.json").write_text(json.dumps(meta, indent=1))
        return graph, eps, h

    graph, eps, h = run.stage("kernel", kernel_stage)
    if run.stop_after == "kernel":
        return

    def laplacian_stage(graph):
        if cfg.cache_dir:
            lap = laplacian_for(cloud, eps, cfg.kernel_kind, cfg.truncation_radius_multiple, cache_dir=cfg.cache_dir)
        else:
            lap = build_laplacian(graph)
        _write_csv(run.artifact("spectrum.csv"), ["mode", "eigenvalue"],
                   [[i, repr(float(v))] for i, v in enumerate(lap.eigenvalues)])
        return lap

    lap = run.stage("laplacian", functools.partial(laplacian_stage, graph))
    del graph  # the dense kernel is no longer needed
    if run.stop_after == "laplacian":
        return

    def geodesic_stage():
        times = [h * m for m in (1, 2, 4, 8)] if cfg.t_schedule == "auto" else [float(t) for t in cfg.t_schedule]
        times = [t for t in times if t <= cfg.t_max] or [min(times[0], cfg.t_max)]
        run.resolved["t_schedule"] = times
        sources = resolve_sources(cfg.sources, cloud.n)
        trials = run_trials(
            lap, cloud, sources, cfg.momenta_per_source, times, h=h,
            intrinsic_dim=cfg.intrinsic_dim, neighborhood_size=cfg.pca_k,
            seed=_substream_seed(cfg.seed, "momenta"), t_max=cfg.t_max,
            momentum_method=cfg.momentum_method,
        )
        g = build_geodesic_graph(lap, cloud, sources, cfg.momenta_per_source, times,
                                 estimator=cfg.estimator, trials=trials)
        run.resolved.update(n_trials=len(trials), n_edges=len(g), edge_conflicts=g.conflicts)
        run.artifact("geodesics.csv").write_text(g.to_csv())
        run.artifact("geodesics_provenance.json").write_text(g.provenance_json())
        return g

    geo = run.stage("geodesics", geodesic_stage)
    if run.stop_after == "geodesics":
        return

    def embed_stage():
        emb = fr_embed(geo, cfg.d_embed, cfg.fr_iterations, seed=_substream_seed(cfg.seed, "embedding"),
                       weight_mode=cfg.fr_weight_mode)
        run.resolved.update(embedding_components=emb.n_components, embedding_stress=emb.stress,
                            embedding_iterations=emb.iterations_used)
        write_embedding(run.artifact("embedding.csv"), emb.coordinates)
        return emb

    emb = run.stage("embedding", embed_stage)
    if run.stop_after == "embedding":
        return

    def cluster_stage():
        assign = kmeans(emb, cfg.k_clusters, seed=_substream_seed(cfg.seed, "kmeans"), restarts=cfg.kmeans_restarts)
        write_embedding(run.dir / "embedding.csv", emb.coordinates, assign.labels)
        write_summaries(run.artifact("clusters.csv"), assign, cluster_summaries(cloud, assign))
        run.resolved["inertia"] = assign.inertia
        return assign

    run.stage("clustering", cluster_stage)


def read_labels(run_dir) -> np.ndarray:
    with open(Path(run_dir) / "embedding.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([int(r["cluster"]) for r in rows])


def comparison_series(lap, cloud: PointCloud, source: int, t: float, h: float, momentum) -> dict:
    """Profiles for the impulse, the coherent state, and (with an oracle) the
    continuum reference, all propagated from ``source`` for time ``t``."""
    from .coherent import PhaseSpacePoint, prepare_impulse
    from .propagation import propagate

    delta = lap.evolve(prepare_impulse(cloud, source).amplitudes, t)
    res = propagate(lap, cloud, PhaseSpacePoint(source, momentum, h), t)
    series = {"delta": delta, "coherent": res}
    try:
        series["reference"] = reference_profile(cloud, source, t)
    except QManifoldError:
        pass
    return series
