import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import angle_of, tangent
from qmanifold import (
    DegenerateState,
    GeodesicGraph,
    InvalidArgument,
    PhaseSpacePoint,
    PropagationResult,
    StateVector,
    UncertaintyRegimeViolation,
    build_geodesic_graph,
    make_oracle,
    propagate,
    run_trials,
    sample_circle,
    shoot_geodesic,
    wavepacket_profile,
)
from qmanifold.coherent import local_pca_axes
from qmanifold.phase_space import angular_gap
from qmanifold.propagation import chord_momenta, snap_to_cloud, tangent_momenta

H = 0.1  # eps = 1e-3, alpha = 1


def test_tiny_time_stays_at_base(circle_e3):
    c, lap = circle_e3
    r = propagate(lap, c, PhaseSpacePoint(700, tangent(c, 700), H), 1e-9)
    assert r.snapped_index == 700
    assert r.max_position_index == 700


def test_half_turn_reaches_three_halves_pi(circle_e3):
    c, lap = circle_e3
    r = propagate(lap, c, PhaseSpacePoint(1250, tangent(c, 1250), H), np.pi / 2)
    assert angular_gap(angle_of(r.expected_position), 3 * np.pi / 2) <= H
    assert angular_gap(c.intrinsic_params[r.snapped_index, 0], 3 * np.pi / 2) <= H


def test_reversed_momentum_mirrors(circle_e3):
    c, lap = circle_e3
    r = propagate(lap, c, PhaseSpacePoint(1250, -tangent(c, 1250), H), np.pi / 2)
    assert angular_gap(angle_of(r.expected_position), np.pi / 2) <= H


def test_shooting_from_zero(circle_e3):
    c, lap = circle_e3
    times = [np.pi / 4, np.pi / 2, 3 * np.pi / 4]
    res = shoot_geodesic(lap, c, PhaseSpacePoint(0, tangent(c, 0), H), times)
    assert [r.t for r in res] == times
    for r, t in zip(res, times):
        assert angular_gap(c.intrinsic_params[r.snapped_index, 0], t) <= H


def test_shooting_on_sphere(sphere4000):
    s, lap = sphere4000
    h = 0.02 ** (1 / 3)
    base = int(np.argmax(s.points[:, 2]))
    oracle = make_oracle(s)
    axes, _, _ = local_pca_axes(s.points, base, 10, 3 * np.sqrt(0.02))
    for p in (axes[0], -axes[0], axes[1], -axes[1]):
        for r in shoot_geodesic(lap, s, PhaseSpacePoint(base, p, h), [np.pi / 4, np.pi / 2]):
            assert abs(oracle.distance(base, r.snapped_index) - r.t) <= 2 * h


def test_empty_schedule(circle_e3):
    c, lap = circle_e3
    assert shoot_geodesic(lap, c, PhaseSpacePoint(0, tangent(c, 0), H), []) == []


def test_schedule_must_ascend(circle_e3):
    c, lap = circle_e3
    with pytest.raises(InvalidArgument):
        shoot_geodesic(lap, c, PhaseSpacePoint(0, tangent(c, 0), H), [0.5, 0.2])


def test_regime_violation(circle_e3):
    c, lap = circle_e3
    with pytest.raises(UncertaintyRegimeViolation):
        propagate(lap, c, PhaseSpacePoint(0, tangent(c, 0), np.sqrt(1e-3)), 0.5)


@pytest.mark.parametrize("t", [0.0, -0.1, 4.0])
def test_time_bounds(circle_e3, t):
    c, lap = circle_e3
    with pytest.raises(InvalidArgument):
        propagate(lap, c, PhaseSpacePoint(0, tangent(c, 0), H), t)


def test_snap_ties_lowest_index():
    pts = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 5.0]])
    assert snap_to_cloud(pts, np.array([[0.0, 0.0]]))[0] == 0


# -- geodesic graph ----------------------------------------------------------

def test_single_insertion():
    g = GeodesicGraph(5)
    g.insert(1, 3, 0.7)
    assert len(g) == 1
    A = g.to_sparse().toarray()
    assert A[1, 3] == A[3, 1] == 0.7
    assert np.count_nonzero(A) == 2


def test_min_rule_and_conflict_log(caplog):
    g = GeodesicGraph(4)
    with caplog.at_level(logging.DEBUG, logger="qmanifold.propagation"):
        g.insert(0, 2, 0.5)
        g.insert(2, 0, 0.4)
    assert g.get(0, 2) == 0.4
    assert g.conflicts == 1
    assert "conflicting" in caplog.text
    g.insert(0, 2, 0.6)
    assert g.get(2, 0) == 0.4
    assert g.conflicts == 2


def test_graph_rejects_bad_edges():
    g = GeodesicGraph(3)
    with pytest.raises(InvalidArgument):
        g.insert(1, 1, 0.2)
    with pytest.raises(InvalidArgument):
        g.insert(0, 3, 0.2)
    with pytest.raises(InvalidArgument):
        g.insert(0, 1, 0.0)


edge = st.tuples(st.integers(0, 9), st.integers(0, 9), st.sampled_from([0.1, 0.2, 0.3, 0.5]),
                 st.integers(0, 3))


@settings(max_examples=60)
@given(edges=st.lists(edge, max_size=40), data=st.data())
def test_graph_order_independent(edges, data):
    edges = [e for e in edges if e[0] != e[1]]
    shuffled = data.draw(st.permutations(edges))
    a, b = GeodesicGraph(10), GeodesicGraph(10)
    for j, k, t, m in edges:
        a.insert(j, k, t, j, m)
    for j, k, t, m in shuffled:
        b.insert(j, k, t, j, m)
    assert a.entries == b.entries
    assert a.provenance == b.provenance
    assert a.to_csv() == b.to_csv()
    # stored value is the minimum over insertions of that pair
    for (i, j), t in a.entries.items():
        assert t == min(e[2] for e in edges if {e[0], e[1]} == {i, j})


def test_csv_round_trip():
    g = GeodesicGraph(6)
    g.insert(4, 1, 0.25)
    g.insert(0, 5, 1.0 / 3.0)
    text = g.to_csv()
    assert text.splitlines()[0] == "i,j,t"
    assert text.splitlines()[1] == "0,5,0.3333333333333333"
    back = GeodesicGraph.from_csv(text, 6)
    assert back.entries == g.entries


def test_circle_graph_matches_arc_length(circle_e3):
    c, lap = circle_e3
    g = build_geodesic_graph(lap, c, range(0, 2500, 50), 2, [np.pi / 8, np.pi / 4], h=H)
    oracle = make_oracle(c)
    edges = np.array(g.edges())
    err = np.abs(edges[:, 2] - oracle.distance(edges[:, 0].astype(int), edges[:, 1].astype(int)))
    assert len(edges) >= 150
    assert np.mean(err <= 2 * H) >= 0.95


def test_provenance_records_estimator(circle_e3):
    c, lap = circle_e3
    g = build_geodesic_graph(lap, c, [0, 100], 2, [0.5], estimator="max", h=H)
    assert len(g) > 0
    assert all(p["estimator_used"] == "max" for p in g.provenance.values())
    assert {p["source_index"] for p in g.provenance.values()} <= {0, 100}


def test_trials_match_single_propagation(circle_e3):
    c, lap = circle_e3
    trials = run_trials(lap, c, [300], 2, [0.4, 0.8], h=H, intrinsic_dim=1)
    assert len(trials) == 4
    moms = tangent_momenta(c.points, 300, 2, 1, radius=3 * np.sqrt(1e-3))
    for k in range(len(trials)):
        p = moms[trials.momentum_id[k]]
        r = propagate(lap, c, PhaseSpacePoint(300, p, H), trials.t[k])
        assert r.snapped_index == trials.snapped[k]
        assert r.max_position_index == trials.max_index[k]


def test_momentum_generators():
    c = sample_circle(500)
    m = tangent_momenta(c.points, 10, 4, 1)
    np.testing.assert_allclose(np.linalg.norm(m, axis=1), 1)
    np.testing.assert_allclose(m[0], -m[1])
    ch = chord_momenta(c.points, 10, 2)
    np.testing.assert_allclose(np.linalg.norm(ch, axis=1), 1)
    assert ch[0] @ ch[1] < 0  # the two nearest samples sit on opposite sides


# -- profiles ----------------------------------------------------------------

def test_profile_one_hot():
    e = np.zeros(8)
    e[3] = 2.0
    np.testing.assert_array_equal(wavepacket_profile(e), np.eye(8)[3])
    with pytest.raises(DegenerateState):
        wavepacket_profile(np.zeros(4))


def test_profile_of_propagated_packet(circle_e3):
    c, lap = circle_e3
    r = propagate(lap, c, PhaseSpacePoint(1250, tangent(c, 1250), H), np.pi / 2)
    prof = wavepacket_profile(r)
    assert prof.max() == 1.0
    th = c.intrinsic_params[:, 0]
    arc = np.flatnonzero(angular_gap(th, 3 * np.pi / 2) <= 3 * np.sqrt(H))
    assert prof[arc].sum() / prof.sum() >= 0.90
    # unimodal inside the arc: increasing up to the peak, decreasing after
    seg = prof[arc[np.argsort(th[arc])]]
    top = int(np.argmax(seg))
    assert np.all(np.diff(seg[: top + 1]) >= 0)
    assert np.all(np.diff(seg[top:]) <= 0)
    assert isinstance(r, PropagationResult)
    assert isinstance(r.state_t, StateVector)
