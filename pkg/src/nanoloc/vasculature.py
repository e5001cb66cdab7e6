"""Simplified 3D cardiovascular graph and ground-truth sensor kinematics.

Bionanosensors advect along segment centerlines at the segment's constant
flow speed. At a junction the next segment is drawn from the declared
branch probabilities. Orientation keeps the body x-axis aligned with the
local tangent while preserving roll across turns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from . import quat
from .errors import DomainError, ValidationError

SEGMENT_KINDS = ("artery", "vein", "organ_transition")


@dataclass(frozen=True)
class Branch:
    segment_id: int
    probability: float


@dataclass(frozen=True)
class VesselSegment:
    id: int
    kind: str
    start: np.ndarray  # 3D, m, body frame
    end: np.ndarray
    flow_speed: float  # m/s
    downstream: Tuple[Branch, ...]

    def __post_init__(self):
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        object.__setattr__(self, "end", np.asarray(self.end, dtype=float))
        object.__setattr__(self, "downstream", tuple(self.downstream))

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.end - self.start))

    @property
    def tangent(self) -> np.ndarray:
        return (self.end - self.start) / self.length


@dataclass
class VesselGraph:
    segments: Dict[int, VesselSegment]
    injection_points: List[int]

    @property
    def total_length(self) -> float:
        return sum(seg.length for seg in self.segments.values())

    def validate(self) -> None:
        if not self.segments:
            raise ValidationError("graph has no segments")
        for seg in self.segments.values():
            if seg.kind not in SEGMENT_KINDS:
                raise ValidationError(f"segment {seg.id}: unknown kind {seg.kind!r}")
            if seg.flow_speed <= 0:
                raise ValidationError(f"segment {seg.id}: flow_speed must be positive")
            if seg.length <= 0:
                raise ValidationError(f"segment {seg.id}: zero-length segment")
            if not seg.downstream:
                raise ValidationError(f"segment {seg.id}: no downstream segments")
            psum = 0.0
            for br in seg.downstream:
                if br.segment_id not in self.segments:
                    raise ValidationError(
                        f"segment {seg.id}: dangling downstream id {br.segment_id}"
                    )
                if not (0.0 <= br.probability <= 1.0):
                    raise ValidationError(
                        f"segment {seg.id}: branch probability {br.probability} out of [0,1]"
                    )
                psum += br.probability
            if abs(psum - 1.0) > 1e-9:
                raise ValidationError(
                    f"segment {seg.id}: branch probabilities sum to {psum}, expected 1"
                )
        for inj in self.injection_points:
            if inj not in self.segments:
                raise ValidationError(f"injection point {inj} not in graph")
            reachers = self._reaching_set(inj)
            missing = set(self.segments) - reachers
            if missing:
                raise ValidationError(
                    f"segments {sorted(missing)} cannot reach injection point {inj}"
                )

    def _reaching_set(self, target: int) -> set:
        """Ids of segments from which `target` is reachable (reverse BFS)."""
        upstream: Dict[int, List[int]] = {sid: [] for sid in self.segments}
        for seg in self.segments.values():
            for br in seg.downstream:
                upstream[br.segment_id].append(seg.id)
        seen = {target}
        frontier = [target]
        while frontier:
            nxt = []
            for sid in frontier:
                for up in upstream[sid]:
                    if up not in seen:
                        seen.add(up)
                        nxt.append(up)
            frontier = nxt
        return seen


@dataclass
class BnsState:
    """Ground-truth kinematic state of one sensor on the graph."""

    position: np.ndarray
    segment_id: int
    arc_offset: float  # m along the segment centerline
    velocity: np.ndarray  # m/s, world frame
    orientation: np.ndarray  # unit quaternion, body-to-world
    sim_time: float


@dataclass(frozen=True)
class AnomalyEvent:
    id: int
    true_location: np.ndarray
    sensing_radius: float
    segment_id: int

    def __post_init__(self):
        object.__setattr__(self, "true_location", np.asarray(self.true_location, dtype=float))


def orientation_for_tangent(tangent: np.ndarray) -> np.ndarray:
    """Initial body-to-world quaternion mapping body x onto the tangent."""
    return quat.align_vectors(np.array([1.0, 0.0, 0.0]), tangent)


def initial_state(graph: VesselGraph, segment_id: int, arc_offset: float = 0.0) -> BnsState:
    seg = graph.segments[segment_id]
    position = seg.start + seg.tangent * arc_offset
    return BnsState(
        position=position,
        segment_id=segment_id,
        arc_offset=arc_offset,
        velocity=seg.tangent * seg.flow_speed,
        orientation=orientation_for_tangent(seg.tangent),
        sim_time=0.0,
    )


def _choose_branch(seg: VesselSegment, rng: np.random.Generator) -> int:
    if len(seg.downstream) == 1:
        return seg.downstream[0].segment_id
    u = rng.random()
    acc = 0.0
    for br in seg.downstream:
        acc += br.probability
        if u < acc:
            return br.segment_id
    return seg.downstream[-1].segment_id


def step(state: BnsState, graph: VesselGraph, dt: float, rng: np.random.Generator) -> BnsState:
    """Advance the sensor by dt seconds, crossing junctions as needed."""
    if dt <= 0:
        raise DomainError("dt must be strictly positive")
    seg = graph.segments[state.segment_id]
    offset = state.arc_offset + seg.flow_speed * dt
    orientation = state.orientation
    while offset >= seg.length:
        residual_time = (offset - seg.length) / seg.flow_speed
        next_id = _choose_branch(seg, rng)
        next_seg = graph.segments[next_id]
        # minimal world-frame rotation old tangent -> new tangent keeps roll
        turn = quat.align_vectors(seg.tangent, next_seg.tangent)
        orientation = quat.normalize(quat.multiply(turn, orientation))
        offset = residual_time * next_seg.flow_speed
        seg = next_seg
    position = seg.start + seg.tangent * offset
    return BnsState(
        position=position,
        segment_id=seg.id,
        arc_offset=offset,
        velocity=seg.tangent * seg.flow_speed,
        orientation=orientation,
        sim_time=state.sim_time + dt,
    )


@dataclass
class Trajectory:
    times: np.ndarray  # (n+1,)
    positions: np.ndarray  # (n+1, 3)
    segment_ids: np.ndarray  # (n+1,)
    states: List[BnsState] = field(default_factory=list)  # filled when recorded


def trajectory(
    graph: VesselGraph,
    injection_segment: int,
    duration: float,
    dt: float,
    seed: int,
    record_states: bool = False,
) -> Trajectory:
    """Deterministic ground-truth trajectory sampled every dt seconds."""
    if duration < 0:
        raise DomainError("duration must be non-negative")
    if dt <= 0:
        raise DomainError("dt must be strictly positive")
    rng = np.random.default_rng(seed)
    n = int(round(duration / dt))
    state = initial_state(graph, injection_segment)
    times = np.empty(n + 1)
    positions = np.empty((n + 1, 3))
    segment_ids = np.empty(n + 1, dtype=int)
    states: List[BnsState] = []
    for k in range(n + 1):
        times[k] = state.sim_time
        positions[k] = state.position
        segment_ids[k] = state.segment_id
        if record_states:
            states.append(state)
        if k < n:
            state = step(state, graph, dt, rng)
    return Trajectory(times=times, positions=positions, segment_ids=segment_ids, states=states)


class EventSensor:
    """Detects anomaly events within their sensing radius, debounced per pass.

    An event fires when the sensor enters the open ball around the event's
    true location and cannot fire again until the sensor has left the ball.
    """

    def __init__(self, events: Sequence[AnomalyEvent]):
        self.events = list(events)
        self._inside: set = set()

    def sense(self, position: np.ndarray) -> List[int]:
        sensed = []
        for ev in self.events:
            dist = float(np.linalg.norm(position - ev.true_location))
            if dist < ev.sensing_radius:
                if ev.id not in self._inside:
                    self._inside.add(ev.id)
                    sensed.append(ev.id)
            else:
                self._inside.discard(ev.id)
        return sensed


def sense_events(state: BnsState, events: Sequence[AnomalyEvent]) -> List[int]:
    """One-shot (non-debounced) containment check; see EventSensor for passes."""
    return [
        ev.id
        for ev in events
        if float(np.linalg.norm(state.position - ev.true_location)) < ev.sensing_radius
    ]


def segment_traversals(
    graph: VesselGraph,
    injection_segment: int,
    duration: float,
    seed: int,
    start_offset: float = 0.0,
):
    """Event-driven traversal generator: yields (segment_id, t_enter, t_exit, offset0).

    Equivalent to stepping with dt -> 0; used for long mobility runs where
    per-dt sampling would be needlessly slow. `offset0` is the arc offset at
    t_enter (nonzero only for the first yield).
    """
    rng = np.random.default_rng(seed)
    t = 0.0
    seg = graph.segments[injection_segment]
    offset = start_offset
    while t < duration:
        dwell = (seg.length - offset) / seg.flow_speed
        t_exit = min(t + dwell, duration)
        yield seg.id, t, t_exit, offset
        t = t + dwell
        seg = graph.segments[_choose_branch(seg, rng)]
        offset = 0.0


def stationary_distribution(graph: VesselGraph) -> Dict[int, float]:
    """Exact long-run fraction of time spent in each segment.

    Solves the embedded Markov chain over segments (left eigenvector of the
    branch-probability matrix), then weights visit frequencies by traversal
    time length/speed.
    """
    ids = sorted(graph.segments)
    index = {sid: i for i, sid in enumerate(ids)}
    n = len(ids)
    P = np.zeros((n, n))
    for sid in ids:
        for br in graph.segments[sid].downstream:
            P[index[sid], index[br.segment_id]] += br.probability
    # visit frequencies: pi P = pi, sum(pi) = 1
    A = np.vstack([P.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    dwell = np.array([graph.segments[sid].length / graph.segments[sid].flow_speed for sid in ids])
    weights = pi * dwell
    weights = weights / weights.sum()
    return {sid: float(weights[index[sid]]) for sid in ids}


# --- serialization -----------------------------------------------------------

def graph_from_dict(doc: dict) -> VesselGraph:
    try:
        segments = {}
        for entry in doc["segments"]:
            seg = VesselSegment(
                id=entry["id"],
                kind=entry["kind"],
                start=np.array(entry["start_xyz_m"], dtype=float),
                end=np.array(entry["end_xyz_m"], dtype=float),
                flow_speed=entry["flow_speed_mps"],
                downstream=tuple(
                    Branch(segment_id=d["id"], probability=d["p"]) for d in entry["downstream"]
                ),
            )
            if seg.id in segments:
                raise ValidationError(f"duplicate segment id {seg.id}")
            segments[seg.id] = seg
        graph = VesselGraph(segments=segments, injection_points=list(doc["injection_points"]))
    except KeyError as exc:
        raise ValidationError(f"missing key in vessel graph document: {exc}") from exc
    graph.validate()
    return graph


def graph_to_dict(graph: VesselGraph) -> dict:
    return {
        "segments": [
            {
                "id": seg.id,
                "kind": seg.kind,
                "start_xyz_m": list(seg.start),
                "end_xyz_m": list(seg.end),
                "flow_speed_mps": seg.flow_speed,
                "downstream": [
                    {"id": br.segment_id, "p": br.probability} for br in seg.downstream
                ],
            }
            for seg in graph.segments.values()
        ],
        "injection_points": list(graph.injection_points),
    }


def load_graph(path=None) -> VesselGraph:
    """Load and validate a vessel graph; defaults to the shipped body graph."""
    if path is None:
        text = resources.files("nanoloc.assets").joinpath("graphs/simplified_body.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return graph_from_dict(json.loads(text))


def default_graph() -> VesselGraph:
    return load_graph(None)
