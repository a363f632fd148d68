import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmanifold import (
    DataError,
    InvalidArgument,
    ParseError,
    PipelineConfig,
    PipelineStageError,
    emit_profile_plot_data,
    ingest_csv,
    load_config,
    run_pipeline,
    sample_circle,
    sample_sphere,
    verify_run,
)
from qmanifold.pipeline import (
    comparison_series,
    emit_profile_series,
    load_cloud,
    read_labels,
    resolve_sources,
    substream,
    write_cloud,
)
from qmanifold.propagation import PropagationResult
from qmanifold.spectral import StateVector

def write(path, text):
    path.write_text(text)
    return path

# -- ingestion ---------------------------------------------------------------

def test_ingest_small(tmp_path):
    c = ingest_csv(write(tmp_path / "a.csv", "1,2\n3,4\n5,6\n"))
    assert (c.n, c.dim) == (3, 2)
    assert c.source_tag == "csv"
    np.testing.assert_array_equal(c.points[2], [5, 6])

def test_ingest_header(tmp_path):
    c = ingest_csv(write(tmp_path / "a.csv", "x,y\n1,2\n3,4\n5,6\n"), has_header=True)
    assert c.n == 3

def test_ingest_ragged(tmp_path):
    with pytest.raises(ParseError, match="line 3"):
        ingest_csv(write(tmp_path / "a.csv", "1,2\n3,4\n5\n"))

def test_ingest_non_numeric(tmp_path):
    with pytest.raises(ParseError, match="line 2, column 2"):
        ingest_csv(write(tmp_path / "a.csv", "1,2\n3,abc\n"))

def test_ingest_too_few_rows(tmp_path):
    with pytest.raises(DataError):
        ingest_csv(write(tmp_path / "a.csv", "1,2\n"))

def test_ingest_large_shape(tmp_path):
    X = np.random.default_rng(0).uniform(size=(5509, 117))
    path = tmp_path / "big.csv"
    np.savetxt(path, X, delimiter=",")
    c = ingest_csv(path)
    assert c.params["shape"] == [5509, 117]
    np.testing.assert_allclose(c.points, X, rtol=1e-15)

def test_ingest_standardize(tmp_path):
    path = tmp_path / "a.csv"
    np.savetxt(path, np.random.default_rng(0).normal(5, 3, (50, 3)), delimiter=",")
    c = ingest_csv(path, standardize=True)
    np.testing.assert_allclose(c.points.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(c.points.std(axis=0), 1, atol=1e-12)
    assert not ingest_csv(path).params["standardized"]

@settings(max_examples=10, deadline=None)
@given(n=st.integers(3, 300))
def test_circle_round_trip(tmp_path_factory, n):
    path = tmp_path_factory.mktemp("rt") / "c.csv"
    cloud = sample_circle(n)
    write_cloud(cloud, path)
    assert path.read_text().splitlines()[0] == "dim_0,dim_1"
    back = ingest_csv(path, has_header=True)
    assert np.abs(back.points - cloud.points).max() <= 1e-12
    meta = json.loads((tmp_path_factory.getbasetemp() / path.parent.name / "c.csv.json").read_text())
    assert meta["source_tag"] == "circle" and meta["n"] == n

def test_load_cloud_restores_oracle_coordinates(tmp_path):
    s = sample_sphere(50, seed=4)
    write_cloud(s, tmp_path / "s.csv")
    back = load_cloud(tmp_path / "s.csv")
    assert back.source_tag == "sphere"
    np.testing.assert_allclose(back.intrinsic_params, s.intrinsic_params, atol=1e-12)

# -- config ------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(InvalidArgument):
        PipelineConfig(alpha=0.5)
    with pytest.raises(InvalidArgument):
        PipelineConfig(epsilon=-1.0)
    with pytest.raises(InvalidArgument):
        PipelineConfig(t_schedule=[0.1, -0.2])
    with pytest.raises(InvalidArgument):
        PipelineConfig(sources="some")
    with pytest.raises(InvalidArgument):
        PipelineConfig.from_dict({"epsilonn": 0.1})

def test_config_file_and_overrides(tmp_path):
    path = write(tmp_path / "cfg.yaml", "epsilon: 0.01\nalpha: 2\nsources: stride:5\nk_clusters: 3\n")
    cfg = load_config(path, {"alpha": 3.0, "k_clusters": None})
    assert cfg.epsilon == 0.01 and cfg.alpha == 3.0 and cfg.k_clusters == 3
    js = write(tmp_path / "cfg.json", json.dumps({"t_schedule": [0.1, 0.2]}))
    assert load_config(js).t_schedule == [0.1, 0.2]

def test_resolve_sources():
    assert resolve_sources("all", 4) == [0, 1, 2, 3]
    assert resolve_sources("stride:3", 10) == [0, 3, 6, 9]
    assert resolve_sources([2, 5], 10) == [2, 5]
    with pytest.raises(InvalidArgument):
        resolve_sources([12], 10)

def test_substreams_independent_and_stable():
    a = substream(7, "momenta").random(3)
    np.testing.assert_array_equal(a, substream(7, "momenta").random(3))
    assert not np.array_equal(a, substream(7, "embedding").random(3))
    assert not np.array_equal(a, substream(8, "momenta").random(3))

# -- runs --------------------------------------------------------------------

SMALL = dict(sources="stride:2", d_embed=2, k_clusters=3, fr_iterations=200, seed=3)

def test_default_run_on_circle(tmp_path, circle2500):
    out = run_pipeline(PipelineConfig(), circle2500, tmp_path / "run")
    names = {p.name for p in out.iterdir()}
    assert {"kernel.json", "geodesics.csv", "embedding.csv", "manifest.json"} <= names
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert set(manifest["artifacts"]) == names - {"manifest.json"}
    assert verify_run(out) == []
    kernel = json.loads((out / "kernel.json").read_text())
    assert kernel["epsilon"] == manifest["resolved"]["epsilon"]

def test_run_is_deterministic(tmp_path):
    c = sample_circle(600)
    a = run_pipeline(PipelineConfig(**SMALL), c, tmp_path / "a")
    b = run_pipeline(PipelineConfig(**SMALL), c, tmp_path / "b")
    for name in ("geodesics.csv", "embedding.csv", "clusters.csv", "geodesics_provenance.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()

def test_auto_epsilon_is_reproducible(tmp_path):
    c = sample_circle(600)
    a = run_pipeline(PipelineConfig(**SMALL), c, tmp_path / "a")
    eps = json.loads((a / "manifest.json").read_text())["resolved"]["epsilon"]
    b = run_pipeline(PipelineConfig(epsilon=eps, **SMALL), c, tmp_path / "b")
    assert (a / "geodesics.csv").read_bytes() == (b / "geodesics.csv").read_bytes()
    assert (a / "embedding.csv").read_bytes() == (b / "embedding.csv").read_bytes()

def test_verify_detects_tampering(tmp_path):
    out = run_pipeline(PipelineConfig(**SMALL), sample_circle(300), tmp_path / "r")
    assert verify_run(out) == []
    with open(out / "geodesics.csv", "a") as fh:
        fh.write("0,1,0.5\n")
    (out / "clusters.csv").unlink()
    problems = verify_run(out)
    assert any("geodesics.csv" in p for p in problems)
    assert any("missing" in p and "clusters.csv" in p for p in problems)

def test_five_blob_summaries(tmp_path):
    rng = np.random.default_rng(0)
    centres = rng.uniform(-10, 10, (5, 3))
    from qmanifold import PointCloud
    X = np.vstack([c + 0.2 * rng.standard_normal((60, 3)) for c in centres])
    out = run_pipeline(PipelineConfig(k_clusters=5, d_embed=3, fr_iterations=200, seed=1), PointCloud(X),
                       tmp_path / "blobs")
    with open(out / "clusters.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 5
    assert sum(int(r["size"]) for r in rows) == 300
    assert len(read_labels(out)) == 300

def test_stage_failure_keeps_partial_artifacts(tmp_path):
    from qmanifold import PointCloud
    # two far-apart pairs: the truncated kernel leaves nothing isolated, but
    # epsilon >= 1 is outside the range where h is defined
    c = PointCloud(np.array([[0.0, 0.0], [0.5, 0.0], [9.0, 9.0], [9.5, 9.0]]))
    cfg = PipelineConfig(epsilon=2.0, sources=[0])
    with pytest.raises(PipelineStageError) as info:
        run_pipeline(cfg, c, tmp_path / "bad")
    assert info.value.stage == "kernel"
    assert info.value.exit_code == 1
    manifest = json.loads((tmp_path / "bad" / "manifest.json").read_text())
    assert manifest["status"] == "failed" and manifest["failed_stage"] == "kernel"
    assert manifest["error"]

def test_failure_in_later_stage(tmp_path):
    # an unreachable k forces the clustering stage to fail after the others succeed
    c = sample_circle(300)
    cfg = PipelineConfig(k_clusters=301, sources=[0], t_schedule=[0.2], momenta_per_source=1, d_embed=2,
                         fr_iterations=20)
    with pytest.raises(PipelineStageError) as info:
        run_pipeline(cfg, c, tmp_path / "bad")
    assert info.value.stage == "clustering"
    out = tmp_path / "bad"
    assert (out / "geodesics.csv").exists() and (out / "embedding.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["failed_stage"] == "clustering"
    assert "geodesics.csv" in manifest["artifacts"]

# -- plot data ---------------------------------------------------------------

def one_hot_result(n, k):
    amp = np.zeros(n, dtype=complex)
    amp[k] = 1.0
    return PropagationResult(StateVector(amp), 0.1, np.zeros(2), k, k, k)

def test_profile_csv_one_hot():
    c = sample_circle(8)
    rows = list(csv.reader(emit_profile_plot_data(one_hot_result(8, 3), c).splitlines()))
    assert rows[0] == ["angle", "profile_value"]
    values = [float(r[1]) for r in rows[1:]]
    assert len(values) == 8 and max(values) == 1.0 and sum(values) == 1.0
    assert float(rows[1 + 3][0]) == pytest.approx(c.intrinsic_params[3, 0])

def test_profile_csv_index_order_without_angles():
    from qmanifold import PointCloud
    c = PointCloud(np.random.default_rng(0).standard_normal((5, 3)))
    rows = list(csv.reader(emit_profile_plot_data(one_hot_result(5, 2), c).splitlines()))
    assert rows[0][0] == "index"
    assert [float(r[0]) for r in rows[1:]] == [0, 1, 2, 3, 4]

def test_three_series(circle_e3):
    c, lap = circle_e3
    p = np.array([0.0, -1.0])
    series = comparison_series(lap, c, 1250, np.pi / 2, 0.1, p)
    rows = list(csv.reader(emit_profile_series(series, c).splitlines()))
    assert rows[0] == ["series", "angle", "profile_value"]
    labels = {r[0] for r in rows[1:]}
    assert labels == {"delta", "coherent", "reference"}
    for label in labels:
        vals = [float(r[2]) for r in rows[1:] if r[0] == label]
        assert len(vals) == 2500 and max(vals) == 1.0
    ref = [float(r[1]) for r in rows[1:] if r[0] == "reference" and float(r[2]) == 1.0]
    assert sorted(ref) == pytest.approx([np.pi / 2, 3 * np.pi / 2], abs=2 * np.pi / 2500)
