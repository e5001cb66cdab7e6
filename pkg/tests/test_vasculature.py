"""Vessel-graph kinematics: motion, branching statistics, serialization."""

import numpy as np
import pytest

from nanoloc import quat
from nanoloc.errors import DomainError, ValidationError
from nanoloc.vasculature import (
    AnomalyEvent,
    Branch,
    EventSensor,
    VesselGraph,
    VesselSegment,
    default_graph,
    graph_from_dict,
    graph_to_dict,
    initial_state,
    segment_traversals,
    sense_events,
    stationary_distribution,
    step,
    trajectory,
)


def two_segment_loop(l1=0.3, v1=0.1, v2=0.05):
    """Out-and-back loop: both segments span the same 0.3 m at 0.1 / 0.05 m/s."""
    segs = {
        0: VesselSegment(0, "artery", [0, 0, 0], [l1, 0, 0], v1, (Branch(1, 1.0),)),
        1: VesselSegment(1, "vein", [l1, 0, 0], [0, 0, 0], v2, (Branch(0, 1.0),)),
    }
    return VesselGraph(segments=segs, injection_points=[0])


@pytest.fixture(scope="module")
def graph():
    return default_graph()


def test_default_graph_scale(graph):
    graph.validate()
    assert len(graph.segments) >= 40
    assert 5.0 <= graph.total_length <= 20.0
    kinds = {seg.kind for seg in graph.segments.values()}
    assert kinds == {"artery", "vein", "organ_transition"}


def test_uniform_motion_within_segment(graph):
    rng = np.random.default_rng(0)
    state = initial_state(graph, graph.injection_points[0])
    seg = graph.segments[state.segment_id]
    dt = 0.01
    for _ in range(10):
        prev = state.position.copy()
        state = step(state, graph, dt, rng)
        if state.segment_id != seg.id:
            break
        moved = np.linalg.norm(state.position - prev)
        assert moved == pytest.approx(seg.flow_speed * dt, rel=1e-12)
        assert np.allclose(state.velocity, seg.tangent * seg.flow_speed)


def test_arc_length_conserved_across_junction():
    g = two_segment_loop()
    rng = np.random.default_rng(0)
    state = initial_state(g, 0, arc_offset=0.3 - 0.001)
    # 0.001 m left at 0.1 m/s = 0.01 s, then 0.02 s at 0.05 m/s = 0.001 m
    state = step(state, g, 0.03, rng)
    assert state.segment_id == 1
    assert state.arc_offset == pytest.approx(0.001, rel=1e-9)


def test_loop_timing_exact():
    g = two_segment_loop()
    spans = []
    for seg_id, t0, t1, _ in segment_traversals(g, 0, 21.0, seed=5):
        spans.append((seg_id, t1 - t0))
    assert spans[0][1] == pytest.approx(3.0)  # 0.3 m at 0.1 m/s
    assert spans[1][1] == pytest.approx(6.0)  # 0.3 m at 0.05 m/s
    total = sum(s for _, s in spans)
    assert total == pytest.approx(21.0)
    assert [s for s, _ in spans[:4]] == [0, 1, 0, 1]


def test_orientation_tracks_tangent(graph):
    rng = np.random.default_rng(3)
    state = initial_state(graph, graph.injection_points[0])
    for _ in range(2000):
        state = step(state, graph, 0.01, rng)
        tangent = graph.segments[state.segment_id].tangent
        body_x = quat.rotate(state.orientation, np.array([1.0, 0.0, 0.0]))
        assert np.allclose(body_x, tangent, atol=1e-9)
        assert np.isclose(np.linalg.norm(state.orientation), 1.0, atol=1e-9)


def test_trajectory_determinism(graph):
    # 60 s reaches past the first branch point (the injection arm is ~34 s long)
    a = trajectory(graph, graph.injection_points[0], 60.0, 0.01, seed=11)
    b = trajectory(graph, graph.injection_points[0], 60.0, 0.01, seed=11)
    c = trajectory(graph, graph.injection_points[0], 60.0, 0.01, seed=12)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.segment_ids, b.segment_ids)
    assert not np.array_equal(a.positions, c.positions)


def test_branching_frequencies_match_probabilities(graph):
    """1e5 junction crossings at the aortic arch within +/- 1 percent."""
    arch = next(
        seg for seg in graph.segments.values() if len(seg.downstream) == 4
    )
    from nanoloc.vasculature import _choose_branch

    rng = np.random.default_rng(7)
    counts = {br.segment_id: 0 for br in arch.downstream}
    n = 100_000
    for _ in range(n):
        counts[_choose_branch(arch, rng)] += 1
    for br in arch.downstream:
        assert counts[br.segment_id] / n == pytest.approx(br.probability, abs=0.01)


def test_stationary_distribution_against_long_run(graph):
    exact = stationary_distribution(graph)
    assert sum(exact.values()) == pytest.approx(1.0, abs=1e-9)
    occupancy = {sid: 0.0 for sid in graph.segments}
    duration = 200_000.0
    for seg_id, t0, t1, _ in segment_traversals(
        graph, graph.injection_points[0], duration, seed=21
    ):
        occupancy[seg_id] += t1 - t0
    total = sum(occupancy.values())
    tv = 0.5 * sum(
        abs(occupancy[sid] / total - exact[sid]) for sid in graph.segments
    )
    assert tv <= 0.02


def test_stationary_distribution_two_segment_oracle():
    g = two_segment_loop()
    exact = stationary_distribution(g)
    assert exact[0] == pytest.approx(1.0 / 3.0, rel=1e-9)
    assert exact[1] == pytest.approx(2.0 / 3.0, rel=1e-9)


def test_event_sensor_debounce():
    ev = AnomalyEvent(id=0, true_location=[0.0, 0.0, 0.0], sensing_radius=0.01, segment_id=0)
    sensor = EventSensor([ev])
    inside = np.zeros(3)
    outside = np.array([1.0, 0.0, 0.0])
    assert sensor.sense(inside) == [0]
    assert sensor.sense(inside) == []  # still inside: no refire
    assert sensor.sense(outside) == []
    assert sensor.sense(inside) == [0]  # new pass


def test_sense_events_one_shot():
    ev = AnomalyEvent(id=3, true_location=[0, 0, 0], sensing_radius=0.01, segment_id=0)
    state = initial_state(two_segment_loop(), 0)
    assert sense_events(state, [ev]) == [3]


def test_validation_rejects_bad_graphs():
    with pytest.raises(ValidationError):
        graph_from_dict({"segments": [], "injection_points": []})
    base = graph_to_dict(two_segment_loop())
    bad_prob = [dict(s) for s in base["segments"]]
    bad_prob[0] = dict(bad_prob[0], downstream=[{"id": 1, "p": 0.5}])
    with pytest.raises(ValidationError):
        graph_from_dict({"segments": bad_prob, "injection_points": [0]})
    dangling = [dict(s) for s in base["segments"]]
    dangling[0] = dict(dangling[0], downstream=[{"id": 9, "p": 1.0}])
    with pytest.raises(ValidationError):
        graph_from_dict({"segments": dangling, "injection_points": [0]})
    # a sink that never returns to the injection point is unreachable-from
    doc = graph_to_dict(two_segment_loop())
    doc["segments"].append({
        "id": 2, "kind": "vein",
        "start_xyz_m": [0, 1, 0], "end_xyz_m": [0, 2, 0],
        "flow_speed_mps": 0.1, "downstream": [{"id": 2, "p": 1.0}],
    })
    with pytest.raises(ValidationError):
        graph_from_dict(doc)


def test_step_rejects_bad_dt(graph):
    state = initial_state(graph, graph.injection_points[0])
    with pytest.raises(DomainError):
        step(state, graph, 0.0, np.random.default_rng(0))
    with pytest.raises(DomainError):
        trajectory(graph, graph.injection_points[0], -1.0, 0.01, 0)


def test_graph_serialization_roundtrip(graph):
    doc = graph_to_dict(graph)
    again = graph_from_dict(doc)
    assert set(again.segments) == set(graph.segments)
    for sid in graph.segments:
        a, b = graph.segments[sid], again.segments[sid]
        assert np.array_equal(a.start, b.start) and np.array_equal(a.end, b.end)
        assert a.flow_speed == b.flow_speed and a.downstream == b.downstream
    assert again.injection_points == graph.injection_points


def test_shipped_asset_matches_builder():
    from nanoloc.bodygraph import build_default_graph

    built = build_default_graph()
    shipped = default_graph()
    assert graph_to_dict(built) == graph_to_dict(shipped)
