"""Command-line entry point: ``qmanifold <verb> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .coherent import MomentumEstimator, PhaseSpacePoint, estimate_momentum, uncertainty_from_scale
from .errors import DataError, NumericalFailure, QManifoldError
from .organization import cluster_summaries, fr_embed, kmeans
from .phase_space import make_grid, spectrogram
from .pipeline import (
    emit_profile_plot_data,
    emit_profile_series,
    comparison_series,
    load_cloud,
    load_config,
    read_embedding,
    run_pipeline,
    verify_run,
    write_cloud,
    write_embedding,
    write_summaries,
)
from .propagation import GeodesicGraph, propagate
from .sampling import sample_circle, sample_loop_mixture, sample_sphere, sample_swiss_roll, sample_torus
from .spectral import auto_epsilon, laplacian_for

log = logging.getLogger("qmanifold")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _float_or_auto(s):
    return s if s == "auto" else float(s)


def _schedule(s):
    return s if s == "auto" else [float(x) for x in s.split(",") if x]


def _sources(s):
    if s == "all" or s.startswith("stride:"):
        return s
    return [int(x) for x in s.split(",") if x]


def _add_data_args(p):
    p.add_argument("--input", "-i", required=True, help="point cloud CSV")
    p.add_argument("--header", dest="has_header", action="store_true", default=None,
                   help="first row is a header (auto-detected when omitted)")
    p.add_argument("--no-header", dest="has_header", action="store_false")
    p.add_argument("--standardize", action="store_true", default=None,
                   help="rescale each column to zero mean and unit variance")


def _add_scale_args(p):
    p.add_argument("--epsilon", type=_float_or_auto, default=None, help="kernel scale or 'auto'")
    p.add_argument("--alpha", type=float, default=None, help="h = epsilon^(1/(2+alpha)), alpha >= 1")
    p.add_argument("--kernel", dest="kernel_kind", choices=["gaussian", "truncated_gaussian"], default=None)
    p.add_argument("--truncation", dest="truncation_radius_multiple", type=float, default=None)
    p.add_argument("--cache-dir", default=None, help="reuse eigendecompositions stored here")


def _add_pipeline_args(p):
    p.add_argument("--config", "-c", default=None, help="YAML or JSON config; flags override it")
    _add_scale_args(p)
    p.add_argument("--t-schedule", type=_schedule, default=None, help="comma-separated times or 'auto'")
    p.add_argument("--sources", type=_sources, default=None, help="all, stride:<s> or comma-separated indices")
    p.add_argument("--momenta-per-source", type=int, default=None)
    p.add_argument("--estimator", choices=["expected", "max"], default=None)
    p.add_argument("--momentum", dest="momentum_method", choices=["nn", "pca"], default=None)
    p.add_argument("--pca-k", type=int, default=None, help="neighbourhood size for local PCA")
    p.add_argument("--intrinsic-dim", type=int, default=None)
    p.add_argument("--d-embed", type=int, choices=[2, 3], default=None)
    p.add_argument("--k-clusters", type=int, default=None)
    p.add_argument("--fr-iterations", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)


_CONFIG_KEYS = (
    "epsilon", "alpha", "kernel_kind", "truncation_radius_multiple", "cache_dir", "t_schedule", "sources",
    "momenta_per_source", "estimator", "momentum_method", "pca_k", "intrinsic_dim", "d_embed", "k_clusters",
    "fr_iterations", "seed", "standardize",
)


def _config_from(args):
    overrides = {k: getattr(args, k, None) for k in _CONFIG_KEYS}
    return load_config(args.config, overrides)


def _open_out(path):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    return open(path, "w", newline="")


def _write_text(path, text):
    with _open_out(path) as fh:
        fh.write(text)


def _scale(cloud, args):
    eps = auto_epsilon(cloud) if args.epsilon in (None, "auto") else float(args.epsilon)
    alpha = 1.0 if args.alpha is None else args.alpha
    return eps, alpha, uncertainty_from_scale(eps, alpha)


def _laplacian(cloud, eps, args):
    return laplacian_for(cloud, eps, args.kernel_kind or "gaussian",
                         args.truncation_radius_multiple or 9.0, cache_dir=args.cache_dir)


# -- verbs -------------------------------------------------------------------

def cmd_sample(args):
    n, seed = args.n, args.seed
    if args.manifold == "circle":
        cloud = sample_circle(n, args.spacing, seed)
    elif args.manifold == "sphere":
        cloud = sample_sphere(n, seed)
    elif args.manifold == "torus":
        cloud = sample_torus(n, seed=seed)
    elif args.manifold == "swiss_roll":
        cloud = sample_swiss_roll(n, seed=seed)
    else:
        cloud = sample_loop_mixture(n, args.components, seed=seed)
    write_cloud(cloud, args.output)
    log.info("wrote %d x %d samples to %s", cloud.n, cloud.dim, args.output)


def cmd_propagate(args):
    cloud = load_cloud(args.input, args.has_header, bool(args.standardize))
    eps, alpha, h = _scale(cloud, args)
    lap = _laplacian(cloud, eps, args)
    est = MomentumEstimator("local_pca" if args.momentum_method == "pca" else "nearest_neighbor",
                            args.pca_k or 10, radius=3.0 * np.sqrt(eps) if args.momentum_method == "pca" else None)
    p = estimate_momentum(cloud, args.source, est)
    if args.reverse:
        p = -p
    res = propagate(lap, cloud, PhaseSpacePoint(args.source, p, h), args.t)
    if args.series:
        text = emit_profile_series(comparison_series(lap, cloud, args.source, args.t, h, p), cloud)
    else:
        text = emit_profile_plot_data(res, cloud)
    _write_text(args.output, text)
    summary = {
        "epsilon": eps, "h": h, "t": args.t, "source": args.source, "momentum": p.tolist(),
        "expected_position": res.expected_position.tolist(), "snapped_index": res.snapped_index,
        "max_position_index": res.max_position_index,
    }
    print(json.dumps(summary), file=sys.stderr if args.output in (None, "-") else sys.stdout)


def cmd_geodesics(args):
    cloud = load_cloud(args.input, args.has_header, bool(args.standardize))
    run_pipeline(_config_from(args), cloud, args.out, stop_after="geodesics")
    log.info("geodesic graph written to %s", args.out)


def cmd_spectrogram(args):
    cloud = load_cloud(args.input, args.has_header, bool(args.standardize))
    eps, alpha, h = _scale(cloud, args)
    if args.h is not None:
        h = args.h
    lap = _laplacian(cloud, eps, args)
    positions = np.arange(0, cloud.n, args.stride)
    grid = make_grid(cloud, positions, h, args.p_max, args.steps, args.intrinsic_dim or 1, args.pca_k or 10,
                     radius=3.0 * np.sqrt(eps))
    sgram = spectrogram(lap, cloud, args.source, args.t, grid, forward=args.forward)
    if cloud.intrinsic_params is not None and cloud.intrinsic_params.shape[1] == 1:
        coord, name = cloud.intrinsic_params[positions, 0], "position_angle"
    else:
        coord, name = positions.astype(float), "position_index"
    with _open_out(args.output) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([name, "momentum_scalar", "value"])
        for i, x in enumerate(coord):
            for j, s in enumerate(grid.scalars):
                w.writerow([repr(float(x)), repr(float(s)), repr(float(sgram.values[i, j]))])


def cmd_embed(args):
    text = Path(args.geodesics).read_text()
    n = args.n
    prov = Path(args.geodesics).with_name("geodesics_provenance.json")
    if n is None and prov.exists():
        n = json.loads(prov.read_text())["n"]
    graph = GeodesicGraph.from_csv(text, n)
    emb = fr_embed(graph, args.d_embed, args.iterations, seed=args.seed, weight_mode=args.weight_mode)
    write_embedding(args.output, emb.coordinates)
    log.info("embedding: %d points, stress %.4g, converged=%s", graph.n, emb.stress, emb.converged)


def cmd_cluster(args):
    X = read_embedding(args.embedding)
    assign = kmeans(X, args.k, seed=args.seed, restarts=args.restarts)
    write_embedding(args.output or args.embedding, X, assign.labels)
    if args.summaries:
        source = load_cloud(args.input).points if args.input else X
        write_summaries(args.summaries, assign, cluster_summaries(source, assign))


def cmd_run(args):
    cloud = load_cloud(args.input, args.has_header, bool(args.standardize))
    out = run_pipeline(_config_from(args), cloud, args.out)
    log.info("run complete: %s", out)


def cmd_verify(args):
    problems = verify_run(args.run_dir)
    for p in problems:
        print(p)
    if problems:
        raise DataError(f"{len(problems)} artifact(s) failed verification")
    print("ok")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qmanifold", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="draw a synthetic point cloud")
    p.add_argument("manifold", choices=["circle", "sphere", "torus", "swiss_roll", "mixture"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spacing", choices=["regular", "uniform_random"], default="regular")
    p.add_argument("--components", type=int, default=5)
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("propagate", help="propagate one coherent state and emit its profile")
    _add_data_args(p)
    _add_scale_args(p)
    p.add_argument("--source", type=int, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--momentum", dest="momentum_method", choices=["nn", "pca"], default="pca")
    p.add_argument("--pca-k", type=int, default=None)
    p.add_argument("--reverse", action="store_true", help="flip the estimated momentum")
    p.add_argument("--series", action="store_true", help="emit impulse, coherent and reference series")
    p.add_argument("--output", "-o", default=None)
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("geodesics", help="build the geodesic graph")
    _add_data_args(p)
    _add_pipeline_args(p)
    p.add_argument("--out", "-o", required=True, help="output directory")
    p.set_defaults(func=cmd_geodesics)

    p = sub.add_parser("spectrogram", help="phase-space picture of a back-propagated impulse")
    _add_data_args(p)
    _add_scale_args(p)
    p.add_argument("--source", type=int, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--h", type=float, default=None, help="override the window width")
    p.add_argument("--p-max", type=float, default=2.0)
    p.add_argument("--steps", type=int, default=41)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--intrinsic-dim", type=int, default=None)
    p.add_argument("--pca-k", type=int, default=None)
    p.add_argument("--forward", action="store_true")
    p.add_argument("--output", "-o", default=None)
    p.set_defaults(func=cmd_spectrogram)

    p = sub.add_parser("embed", help="force-directed embedding of a geodesic CSV")
    p.add_argument("--geodesics", "-g", required=True)
    p.add_argument("--n", type=int, default=None, help="vertex count (read from provenance when omitted)")
    p.add_argument("--d-embed", type=int, choices=[2, 3], default=3)
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--weight-mode", choices=["inverse", "raw"], default="inverse")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("cluster", help="k-means on an embedding CSV")
    p.add_argument("--embedding", "-e", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--input", "-i", default=None, help="original cloud, for per-cluster feature means")
    p.add_argument("--summaries", default=None)
    p.add_argument("--output", "-o", default=None, help="defaults to rewriting the embedding CSV")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("run", help="full pipeline into a run directory")
    _add_data_args(p)
    _add_pipeline_args(p)
    p.add_argument("--out", "-o", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="check a run directory against its manifest")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except QManifoldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return NumericalFailure.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
