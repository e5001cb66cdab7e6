"""Construction of the shipped desk-scale body vessel graph.

The graph is an original simplified closed circulatory network: a central
heart/lung loop feeding a head loop, two arm loops, an abdominal organ loop
and two leg loops. Flow speeds follow the vessel-class values (aorta
0.20 m/s, arteries 0.10 m/s, organ transitions 0.05 m/s, veins
0.025-0.04 m/s). Geometry lives in a roughly planar body frame: x lateral,
y height, z depth (skin at z = 0, vessels at z = -0.01).

`build_default_graph_doc()` is the generator for assets/graphs/
simplified_body.json; the asset is the canonical shipped artifact.
"""

from __future__ import annotations

import numpy as np

from .vasculature import VesselGraph, graph_from_dict

DEPTH = -0.01

AORTA = 0.20
ARTERY = 0.10
ORGAN = 0.05


class _Builder:
    def __init__(self):
        self.segments = []
        self._names = {}

    def add(self, name, kind, speed, start, end, downstream=None):
        sid = len(self.segments)
        self._names[name] = sid
        self.segments.append({
            "id": sid,
            "name": name,
            "kind": kind,
            "start_xyz_m": [start[0], start[1], DEPTH],
            "end_xyz_m": [end[0], end[1], DEPTH],
            "flow_speed_mps": speed,
            "downstream": downstream,  # resolved by name later
        })
        return name

    def chain(self, names_kinds_speeds_points):
        """Link consecutive entries; each entry (name, kind, speed, start, end)."""
        prev = None
        for name, kind, speed, start, end in names_kinds_speeds_points:
            self.add(name, kind, speed, start, end)
            if prev is not None:
                self.link(prev, [(name, 1.0)])
            prev = name
        return prev

    def link(self, name, targets):
        self.segments[self._names[name]]["downstream"] = [
            {"name": t, "p": p} for t, p in targets
        ]

    def doc(self, injection_names):
        for seg in self.segments:
            if seg["downstream"] is None:
                raise ValueError(f"segment {seg['name']} has no downstream link")
            seg["downstream"] = [
                {"id": self._names[d["name"]], "p": d["p"]} for d in seg["downstream"]
            ]
        return {
            "segments": self.segments,
            "injection_points": [self._names[n] for n in injection_names],
        }


def build_default_graph_doc() -> dict:
    b = _Builder()

    heart_in = (0.03, 1.17)
    heart_out = (0.06, 1.22)
    lung_in = (0.12, 1.28)
    lung_out = (0.10, 1.34)
    arch_root = (0.04, 1.30)
    arch = (0.00, 1.28)

    # central heart/lung loop, traversed every circulation
    b.chain([
        ("heart", "organ_transition", ORGAN, heart_in, heart_out),
        ("pulmonary_artery", "artery", ARTERY, heart_out, lung_in),
        ("lungs", "organ_transition", ORGAN, lung_in, lung_out),
        ("pulmonary_vein", "vein", 0.04, lung_out, arch_root),
        ("aortic_arch", "artery", AORTA, arch_root, arch),
    ])

    # head loop
    b.chain([
        ("carotid_artery", "artery", ARTERY, arch, (0.015, 1.44)),
        ("cranial_artery", "artery", ARTERY, (0.015, 1.44), (0.005, 1.58)),
        ("head_capillaries", "organ_transition", ORGAN, (0.005, 1.58), (-0.02, 1.66)),
        ("jugular_vein", "vein", 0.03, (-0.02, 1.66), (-0.03, 1.46)),
        ("neck_vein", "vein", 0.035, (-0.03, 1.46), (0.01, 1.28)),
        ("svc", "vein", 0.04, (0.01, 1.28), heart_in),
    ])
    b.link("svc", [("heart", 1.0)])

    # arm loops (s = +1 left, -1 right)
    for side, s in (("left", 1.0), ("right", -1.0)):
        b.chain([
            (f"{side}_subclavian_artery", "artery", ARTERY, arch, (s * 0.17, 1.38)),
            (f"{side}_brachial_artery", "artery", ARTERY, (s * 0.17, 1.38), (s * 0.24, 1.12)),
            (f"{side}_forearm_artery", "artery", ARTERY, (s * 0.24, 1.12), (s * 0.28, 0.93)),
            (f"{side}_hand_capillaries", "organ_transition", ORGAN, (s * 0.28, 0.93), (s * 0.30, 0.84)),
            (f"{side}_forearm_vein", "vein", 0.03, (s * 0.30, 0.84), (s * 0.26, 1.10)),
            (f"{side}_brachial_vein", "vein", 0.035, (s * 0.26, 1.10), (s * 0.19, 1.36)),
            (f"{side}_subclavian_vein", "vein", 0.04, (s * 0.19, 1.36), heart_in),
        ])
        b.link(f"{side}_subclavian_vein", [("heart", 1.0)])

    # descending aorta
    b.chain([
        ("thoracic_aorta", "artery", AORTA, arch, (0.00, 1.10)),
        ("abdominal_aorta", "artery", AORTA, (0.00, 1.10), (0.00, 0.92)),
    ])

    # abdominal organ loop
    ivc_root = (0.02, 0.95)
    b.chain([
        ("mesenteric_artery", "artery", ARTERY, (0.00, 0.92), (-0.10, 0.98)),
        ("gut_capillaries", "organ_transition", ORGAN, (-0.10, 0.98), (-0.14, 0.88)),
        ("portal_vein", "vein", 0.04, (-0.14, 0.88), ivc_root),
    ])
    b.add("ivc", "vein", 0.04, ivc_root, heart_in)
    b.link("portal_vein", [("ivc", 1.0)])
    b.link("ivc", [("heart", 1.0)])

    # leg loops
    for side, s in (("left", 1.0), ("right", -1.0)):
        b.chain([
            (f"{side}_iliac_artery", "artery", ARTERY, (0.00, 0.92), (s * 0.06, 0.80)),
            (f"{side}_femoral_artery", "artery", ARTERY, (s * 0.06, 0.80), (s * 0.09, 0.52)),
            (f"{side}_tibial_artery", "artery", ARTERY, (s * 0.09, 0.52), (s * 0.10, 0.30)),
            (f"{side}_foot_capillaries", "organ_transition", ORGAN, (s * 0.10, 0.30), (s * 0.11, 0.10)),
            (f"{side}_foot_vein", "vein", 0.025, (s * 0.11, 0.10), (s * 0.12, 0.32)),
            (f"{side}_tibial_vein", "vein", 0.03, (s * 0.12, 0.32), (s * 0.11, 0.54)),
            (f"{side}_femoral_vein", "vein", 0.035, (s * 0.11, 0.54), (s * 0.07, 0.82)),
            (f"{side}_iliac_vein", "vein", 0.04, (s * 0.07, 0.82), ivc_root),
        ])
        b.link(f"{side}_iliac_vein", [("ivc", 1.0)])

    # branch points
    b.link("aortic_arch", [
        ("carotid_artery", 0.22),
        ("left_subclavian_artery", 0.09),
        ("right_subclavian_artery", 0.09),
        ("thoracic_aorta", 0.60),
    ])
    b.link("abdominal_aorta", [
        ("mesenteric_artery", 0.45),
        ("left_iliac_artery", 0.275),
        ("right_iliac_artery", 0.275),
    ])

    return b.doc(injection_names=["left_brachial_artery"])


def build_default_graph() -> VesselGraph:
    return graph_from_dict(build_default_graph_doc())
