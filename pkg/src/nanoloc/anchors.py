"""Skin-mounted anchors: communication gating, packet exchange, sink merge.

Anchors are 5 x 5 cm patches on the skin (z = 0 plane). A sensor is in
communication range when its skin-plane (x, y) distance to the anchor
center is within the patch half-width and the round-trip backscatter link
through the anchor's tissue stack clears the receiver sensitivity.
Communication itself is modeled as instantaneous and lossless.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .channel import (
    ChannelConfig,
    LayerStack,
    LinkParams,
    backscatter_power,
    channel_capacity,
    default_link_params,
    default_stack,
    meets_sensitivity,
)
from .errors import ContractViolation, ValidationError
from .vasculature import VesselGraph, segment_traversals


@dataclass(frozen=True)
class LinkGate:
    """Link-feasibility configuration for the anchor communication gate.

    The carrier sits at the lower band edge where the tissue link actually
    closes, and absorption uses the vacuum-wavelength variant consistent
    with the capacity evaluation.
    """

    params: LinkParams = field(default_factory=default_link_params)
    config: ChannelConfig = field(
        default_factory=lambda: ChannelConfig(absorption_wavelength="vacuum")
    )
    carrier_hz: float = 0.1e12


DEFAULT_GATE = LinkGate()


@dataclass
class Anchor:
    id: int
    center: np.ndarray  # (x, y, z) on the skin surface, m
    patch_half_width: float = 0.025
    skin_thickness_m: float = 0.0025
    stack: Optional[LayerStack] = None  # None -> shared default stack
    clock_offset: float = 0.0  # anchors are synchronized by contract

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.patch_half_width <= 0:
            raise ValidationError("patch_half_width must be positive")
        if self.clock_offset != 0.0:
            raise ValidationError("anchors are time-synchronized (clock_offset must be 0)")

    def resolved_stack(self) -> LayerStack:
        return self.stack if self.stack is not None else default_stack()


@dataclass(frozen=True)
class SensorPacket:
    sensor_id: int
    reading: float
    reading_unit: str
    location_stamp: Tuple[float, float, float]
    event_id: Optional[int]
    rx_time: float  # stamped by the receiving anchor
    anchor_id: Optional[int] = None

    def key(self):
        return (self.anchor_id, self.sensor_id, self.rx_time, self.event_id)


@dataclass
class AnchorTable:
    anchor_id: int
    rows: List[SensorPacket] = field(default_factory=list)

    def record(self, packet: SensorPacket) -> None:
        if self.rows and packet.rx_time < self.rows[-1].rx_time:
            raise ValidationError("anchor table rows must be appended in rx_time order")
        self.rows.append(packet)


@dataclass
class SinkView:
    merged: List[SensorPacket] = field(default_factory=list)
    last_known: Dict[int, Tuple[Tuple[float, float, float], float]] = field(default_factory=dict)


def in_comm_range(
    anchor: Anchor,
    bns_position: np.ndarray,
    gate: LinkGate = DEFAULT_GATE,
) -> bool:
    """Geometric patch gate AND link-budget feasibility through the stack."""
    horizontal = float(np.linalg.norm(np.asarray(bns_position)[:2] - anchor.center[:2]))
    if horizontal > anchor.patch_half_width:
        return False
    return meets_sensitivity(
        anchor.resolved_stack(), gate.params, gate.carrier_hz, gate.config
    )


def link_feasible(anchor: Anchor, gate: LinkGate = DEFAULT_GATE) -> bool:
    """Stack-dependent part of the gate (position-independent, cacheable)."""
    return meets_sensitivity(anchor.resolved_stack(), gate.params, gate.carrier_hz, gate.config)


@dataclass(frozen=True)
class ResetDirective:
    """Instruction to the estimator to perform an anchor-visit reset."""

    anchor_id: int


def exchange(
    anchor: Anchor,
    estimator_position,
    pending_events,
    sim_time: float,
    sensor_id: int = 0,
    reading: float = 0.0,
    reading_unit: str = "au",
    in_range: bool = True,
) -> Tuple[List[SensorPacket], ResetDirective]:
    """Upload pending stamped events plus a heartbeat; order an IMU reset.

    Packets are timestamped with the anchor's clock (sim_time); the pending
    buffer is treated as acknowledged and should be cleared by the caller.
    """
    if not in_range:
        raise ContractViolation("exchange called while out of communication range")
    packets = []
    for ev in pending_events:
        packets.append(SensorPacket(
            sensor_id=sensor_id,
            reading=reading,
            reading_unit=reading_unit,
            location_stamp=tuple(float(v) for v in ev.estimated_location),
            event_id=ev.event_id,
            rx_time=sim_time,
            anchor_id=anchor.id,
        ))
    packets.append(SensorPacket(
        sensor_id=sensor_id,
        reading=reading,
        reading_unit=reading_unit,
        location_stamp=tuple(float(v) for v in estimator_position),
        event_id=None,
        rx_time=sim_time,
        anchor_id=anchor.id,
    ))
    return packets, ResetDirective(anchor_id=anchor.id)


def merge_tables(tables: Sequence[AnchorTable]) -> SinkView:
    """Multiset union of anchor tables, deduplicated and rx_time-ordered."""
    seen = set()
    merged = []
    for table in tables:
        for packet in table.rows:
            k = packet.key()
            if k in seen:
                continue
            seen.add(k)
            merged.append(packet)
    merged.sort(key=lambda p: (p.rx_time, p.anchor_id if p.anchor_id is not None else -1,
                               p.sensor_id, -1 if p.event_id is None else p.event_id))
    view = SinkView(merged=merged)
    for packet in merged:
        prev = view.last_known.get(packet.sensor_id)
        if prev is None or packet.rx_time >= prev[1]:
            view.last_known[packet.sensor_id] = (packet.location_stamp, packet.rx_time)
    return view


# --- placement ---------------------------------------------------------------

def _anchor_from_dict(doc: dict) -> Anchor:
    return Anchor(
        id=doc["id"],
        center=np.array(doc["center_xyz_m"], dtype=float),
        patch_half_width=doc.get("patch_half_width_m", 0.025),
        skin_thickness_m=doc.get("skin_thickness_m", 0.0025),
    )


def load_anchor_layout(path=None, preset: str = "paper20") -> List[Anchor]:
    if path is None:
        text = resources.files("nanoloc.assets").joinpath(f"anchors/{preset}.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    doc = json.loads(text)
    return [_anchor_from_dict(entry) for entry in doc["anchors"]]


def place_anchors(layout, graph: Optional[VesselGraph] = None) -> List[Anchor]:
    """Resolve a named preset or an explicit anchor list.

    With a graph supplied, anchors whose patch never comes within reach of
    any vessel centerline are reported via a placement warning list attached
    to the return value's `.warnings` attribute equivalent; here we simply
    return (anchors, warnings).
    """
    if isinstance(layout, str):
        anchors = load_anchor_layout(None, preset=layout)
    else:
        anchors = [a if isinstance(a, Anchor) else _anchor_from_dict(a) for a in layout]
    return anchors


def placement_warnings(anchors: Sequence[Anchor], graph: VesselGraph) -> List[int]:
    """Ids of anchors that no vessel centerline ever enters (never visitable)."""
    unreachable = []
    for anchor in anchors:
        covered = False
        for seg in graph.segments.values():
            d = _min_xy_distance_to_segment(anchor.center[:2], seg.start[:2], seg.end[:2])
            if d <= anchor.patch_half_width:
                covered = True
                break
        if not covered:
            unreachable.append(anchor.id)
    return unreachable


def _min_xy_distance_to_segment(c, a, b):
    ab = b - a
    denom = float(np.dot(ab, ab))
    t = 0.0 if denom == 0 else float(np.clip(np.dot(c - a, ab) / denom, 0.0, 1.0))
    return float(np.linalg.norm(a + t * ab - c))


# --- visit statistics --------------------------------------------------------

def visit_windows(
    graph: VesselGraph,
    anchors: Sequence[Anchor],
    injection_segment: int,
    duration: float,
    seed: int,
    gate: LinkGate = DEFAULT_GATE,
) -> np.ndarray:
    """Merged time windows [(t_in, t_out), ...] during which the sensor is in
    range of at least one link-feasible anchor.

    Computed analytically per segment traversal (the in-range condition along
    a constant-velocity centerline run is a quadratic in time), so long runs
    do not require per-dt stepping.
    """
    feasible = [a for a in anchors if link_feasible(a, gate)]
    if not feasible:
        return np.empty((0, 2))
    centers = np.array([a.center[:2] for a in feasible])
    radii = np.array([a.patch_half_width for a in feasible])
    windows = []
    for seg_id, t0, t1, offset0 in segment_traversals(
        graph, injection_segment, duration, seed
    ):
        seg = graph.segments[seg_id]
        p0 = seg.start[:2] + seg.tangent[:2] * offset0
        v = seg.tangent[:2] * seg.flow_speed
        # |p0 + v t - c|^2 <= r^2 for t in [0, t1 - t0]
        dp = p0[None, :] - centers
        a = float(np.dot(v, v))
        bs = 2.0 * (dp @ v)
        cs = np.einsum("ij,ij->i", dp, dp) - radii ** 2
        span = t1 - t0
        if a == 0.0:
            continue
        disc = bs * bs - 4.0 * a * cs
        ok = disc > 0
        if not np.any(ok):
            continue
        sq = np.sqrt(disc[ok])
        lo = np.clip((-bs[ok] - sq) / (2 * a), 0.0, span)
        hi = np.clip((-bs[ok] + sq) / (2 * a), 0.0, span)
        for w0, w1 in zip(lo, hi):
            if w1 > w0:
                windows.append((t0 + w0, t0 + w1))
    if not windows:
        return np.empty((0, 2))
    windows.sort()
    merged = [list(windows[0])]
    for w0, w1 in windows[1:]:
        if w0 <= merged[-1][1] + 1e-12:
            merged[-1][1] = max(merged[-1][1], w1)
        else:
            merged.append([w0, w1])
    return np.array(merged)


def visit_intervals(
    graph: VesselGraph,
    anchors: Sequence[Anchor],
    injection_segment: int,
    duration: float,
    seed: int,
    gate: LinkGate = DEFAULT_GATE,
) -> np.ndarray:
    """Gaps (s) between consecutive anchor visits over one seeded run."""
    windows = visit_windows(graph, anchors, injection_segment, duration, seed, gate)
    if len(windows) < 2:
        return np.empty(0)
    return windows[1:, 0] - windows[:-1, 1]
