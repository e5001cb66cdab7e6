"""Scenario orchestration: figure-reproduction runs, metrics tables, reports.

Each shipped scenario is a JSON file under assets/scenarios/ holding every
parameter and tolerance; the runner is generic. Outputs are RFC-4180 CSV
tables plus a human-readable summary.md under out/<scenario>/, written with
fixed float formatting so identical configs produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .anchors import load_anchor_layout, visit_intervals
from .channel import (
    ChannelConfig,
    LayerStack,
    TissueLayer,
    backscatter_power,
    channel_capacity,
    default_link_params,
    default_stack,
    path_loss_layer,
    stack_loss,
)
from .dielectrics import default_tissues, optical_properties
from .errors import ValidationError
from .imu import ImuSpec, binned_error_curve, run_localization
from .vasculature import AnomalyEvent, default_graph, load_graph, trajectory

SCENARIO_NAMES = ("fig4", "fig5", "fig6", "fig7cap", "fig7visits", "fig8", "fig9")


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".12g")
    return str(value)


@dataclass
class Table:
    name: str
    columns: List[str]
    rows: List[tuple]


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class MetricsReport:
    scenario: str
    tables: Dict[str, Table]
    checks: List[Check]
    fingerprint: str

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)


@dataclass
class ScenarioConfig:
    name: str
    params: dict
    seed_offset: int = 0

    def validate(self) -> None:
        if not self.name:
            raise ValidationError("scenario name must be non-empty")
        seeds = self.params.get("seeds")
        if seeds is not None and len(seeds) == 0:
            raise ValidationError("seed list must be non-empty")
        if self.params.get("duration_s", 1.0) <= 0:
            raise ValidationError("duration_s must be positive")

    @property
    def seeds(self) -> List[int]:
        return [s + self.seed_offset for s in self.params.get("seeds", [0])]

    def fingerprint(self) -> str:
        payload = json.dumps(
            {"scenario": self.name, "params": self.params,
             "seed_offset": self.seed_offset, "version": __version__},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()


def load_scenario(name_or_path: str, seed_offset: int = 0) -> ScenarioConfig:
    """Load a shipped scenario by name or an explicit JSON file by path."""
    if os.path.sep in name_or_path or name_or_path.endswith(".json"):
        with open(name_or_path) as fh:
            doc = json.load(fh)
        name = doc.get("name", Path(name_or_path).stem)
    else:
        text = resources.files("nanoloc.assets").joinpath(
            f"scenarios/{name_or_path}.json"
        ).read_text()
        doc = json.loads(text)
        name = doc.get("name", name_or_path)
    cfg = ScenarioConfig(name=name, params=doc, seed_offset=seed_offset)
    cfg.validate()
    return cfg


def _thread_count() -> int:
    raw = os.environ.get("NANOLOC_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map_cells(fn, cells):
    n = _thread_count()
    if n == 1:
        return [fn(c) for c in cells]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, cells))


def load_events(path: Optional[str]) -> List[AnomalyEvent]:
    if path is None:
        return []
    with open(path) as fh:
        doc = json.load(fh)
    return [
        AnomalyEvent(
            id=e["id"],
            true_location=np.array(e["location_xyz_m"], dtype=float),
            sensing_radius=e.get("sensing_radius_m", 0.005),
            segment_id=e.get("segment_id", -1),
        )
        for e in doc["events"]
    ]


def _resolve_graph(params: dict):
    path = params.get("graph_path")
    return load_graph(path) if path else default_graph()


def _resolve_stack(params: dict) -> LayerStack:
    from .channel import load_stack

    path = params.get("stack_path")
    return load_stack(path) if path else default_stack()


def _channel_config(params: dict) -> ChannelConfig:
    return ChannelConfig(
        absorption_wavelength=params.get("absorption_wavelength", "effective"),
        spreading=params.get("spreading", "per_layer"),
    )


def _truncate_stack(stack: LayerStack, depth: float) -> LayerStack:
    """Stack clipped to the first `depth` meters from the skin surface."""
    layers = []
    remaining = depth
    for layer in stack.layers:
        if remaining <= 0:
            break
        d = min(layer.thickness, remaining)
        layers.append(TissueLayer(dielectric=layer.dielectric, thickness=d))
        remaining -= d
    return LayerStack(layers=tuple(layers))


# --- scenario runners --------------------------------------------------------

def _run_fig4(cfg: ScenarioConfig) -> Tuple[List[Table], List[Check]]:
    p = cfg.params
    freqs = np.linspace(p["f_min_hz"], p["f_max_hz"], p["n_points"])
    tissues = default_tissues()
    names = ["blood", "dermis", "epidermis"]
    mu = {
        n: np.array([
            optical_properties(tissues[n], f, p.get("absorption_wavelength", "effective")).mu_abs
            for f in freqs
        ])
        for n in names
    }
    rows = [
        (freqs[i], mu["blood"][i], mu["dermis"][i], mu["epidermis"][i])
        for i in range(len(freqs))
    ]
    table = Table(
        "absorption",
        ["frequency_hz", "mu_abs_blood_per_m", "mu_abs_dermis_per_m", "mu_abs_epidermis_per_m"],
        rows,
    )
    dominant = bool(np.all(mu["blood"] > mu["dermis"]) and np.all(mu["blood"] > mu["epidermis"]))
    checks = [Check(
        "blood_absorption_dominates",
        dominant,
        "mu_abs(blood) > mu_abs(dermis), mu_abs(epidermis) at every grid frequency",
    )]
    return [table], checks


def _run_fig5(cfg: ScenarioConfig) -> Tuple[List[Table], List[Check]]:
    p = cfg.params
    f = p["frequency_hz"]
    tissues = default_tissues()
    model = tissues[p.get("tissue", "blood")]
    config = _channel_config(p)
    distances = np.linspace(p["d_min_m"], p["d_max_m"], p["n_points"])[1:]
    rows = []
    for d in distances:
        layer = TissueLayer(dielectric=model, thickness=float(d))
        spread_db, abs_db = path_loss_layer(layer, f, float(d), config)
        rows.append((float(d), spread_db, abs_db, spread_db + abs_db))
    table = Table("losses", ["distance_m", "loss_spread_db", "loss_abs_db", "loss_total_db"], rows)
    last = rows[-1]
    checks = [Check(
        "absorption_exceeds_spreading_at_max_depth",
        last[2] > last[1],
        f"abs {last[2]:.1f} dB vs spread {last[1]:.1f} dB at {last[0]*1e3:.1f} mm",
    )]
    return [table], checks


def _run_fig6(cfg: ScenarioConfig) -> Tuple[List[Table], List[Check]]:
    p = cfg.params
    stack = _resolve_stack(p)
    config = _channel_config(p)
    params = default_link_params()
    freqs = p["frequencies_hz"]
    depths = np.linspace(0.0, stack.total_thickness, p["n_points"])[1:]
    columns = ["depth_m"] + [f"p_rb_db_{int(round(f/1e9))}ghz" for f in freqs]
    rows = []
    for d in depths:
        sub = _truncate_stack(stack, float(d))
        rows.append(tuple([float(d)] + [backscatter_power(sub, params, f, config) for f in freqs]))
    table = Table("power", columns, rows)
    checks = []
    expected = p.get("expected_terminal_db", [])
    tol = p.get("terminal_tolerance_db", 4.0)
    for i, f in enumerate(freqs):
        if i < len(expected):
            got = rows[-1][1 + i]
            ok = abs(got - expected[i]) <= tol
            checks.append(Check(
                f"terminal_power_{int(round(f/1e9))}ghz",
                ok,
                f"got {got:.1f} dBW, expected {expected[i]:.1f} +/- {tol:.1f} dB",
            ))
    return [table], checks


def _run_fig7cap(cfg: ScenarioConfig) -> Tuple[List[Table], List[Check]]:
    p = cfg.params
    stack = _resolve_stack(p)
    config = _channel_config(p)
    params = default_link_params()
    depths = np.linspace(0.0, stack.total_thickness, p["n_points"])[1:]
    rows = []
    for d in depths:
        sub = _truncate_stack(stack, float(d))
        fwd = channel_capacity(sub, params, "forward", config)
        back = channel_capacity(sub, params, "backward", config)
        rows.append((float(d), fwd.bits_per_s, back.bits_per_s))
    table = Table("capacity", ["depth_m", "capacity_fwd_bps", "capacity_back_bps"], rows)
    last = rows[-1]
    fb = p.get("forward_band_bps", [1e11, 1e14])
    bb = p.get("backward_band_bps", [200.0, 5000.0])
    checks = [
        Check("forward_capacity_band", fb[0] <= last[1] <= fb[1],
              f"forward {last[1]:.4g} bps vs [{fb[0]:.3g}, {fb[1]:.3g}]"),
        Check("backward_capacity_band", bb[0] <= last[2] <= bb[1],
              f"backward {last[2]:.4g} bps vs [{bb[0]:.3g}, {bb[1]:.3g}]"),
    ]
    return [table], checks


UPPER_BODY_Y = 1.0  # body-frame height separating torso/head from the legs


def _run_fig7visits(cfg: ScenarioConfig) -> Tuple[List[Table], List[Check]]:
    p = cfg.params
    graph = _resolve_graph(p)
    traj = trajectory(
        graph, graph.injection_points[0], p["duration_s"], p["dt_s"], cfg.seeds[0]
    )
    rows = [(float(t), int(s)) for t, s in zip(traj.times, traj.segment_ids)]
    visits = Table("visits", ["t_s", "segment_id"], rows)

    ids, counts = np.unique(traj.segment_ids, return_counts=True)
    frac = counts / counts.sum()
    occ_rows = sorted(
        ((int(i), float(fr)) for i, fr in zip(ids, frac)),
        key=lambda r: -r[1],
    )
    occupancy = Table("segment_occupancy", ["segment_id", "fraction_of_time"], occ_rows)

    upper = sum(
        fr for i, fr in occ_rows
        if graph.segments[i].start[1] >= UPPER_BODY_Y or graph.segments[i].end[1] >= UPPER_BODY_Y
    )
    checks = [Check(
        "upper_body_majority",
        upper > 0.5,
        f"fraction of time in segments above y={UPPER_BODY_Y}: {upper:.3f}",
    )]
    return [visits, occupancy], checks


def _run_fig8(cfg: ScenarioConfig) -> Tuple[List[Table], List[Check]]:
    p = cfg.params
    graph = _resolve_graph(p)
    anchors = load_anchor_layout(p.get("anchor_path"), preset=p.get("anchor_layout", "paper20"))
    duration = p["duration_s"]
    injection = graph.injection_points[0]

    def cell(seed):
        return seed, visit_intervals(graph, anchors, injection, duration, seed)

    results = _map_cells(cell, cfg.seeds)
    rows = []
    for seed, intervals in sorted(results, key=lambda r: r[0]):
        rows.extend((int(seed), float(iv)) for iv in intervals)
    table = Table("intervals", ["seed", "interval_s"], rows)

    all_iv = np.array([r[1] for r in rows])
    frac10 = float((all_iv <= 10.0).mean())
    max_iv = float(all_iv.max())
    stats = Table(
        "interval_stats",
        ["n_intervals", "fraction_le_10s", "max_interval_s", "median_interval_s"],
        [(len(all_iv), frac10, max_iv, float(np.median(all_iv)))],
    )
    band = p.get("fraction_band", [0.65, 0.95])
    max_allowed = p.get("max_interval_s", 120.0)
    checks = [
        Check("fraction_le_10s_band", band[0] <= frac10 <= band[1],
              f"fraction {frac10:.3f} vs [{band[0]}, {band[1]}]"),
        Check("max_interval_bound", max_iv <= max_allowed,
              f"max interval {max_iv:.1f} s vs <= {max_allowed} s"),
    ]
    return [table, stats], checks


def _run_fig9(cfg: ScenarioConfig) -> Tuple[List[Table], List[Check]]:
    p = cfg.params
    graph = _resolve_graph(p)
    duration = p["duration_s"]
    bin_w = p.get("bin_width_m", 0.025)
    max_d = p.get("max_distance_m", 1.0)
    levels = [tuple(lv) for lv in p["noise_levels"]]  # (accel_std, gyro_std)
    bias_levels = [tuple(bv) for bv in p.get("bias_levels", [])]
    constraint_std = p.get("constraint_std_m", 1e-3)
    seeds = cfg.seeds

    def drift_cell(cell):
        (a_std, g_std), seed = cell
        run = run_localization(
            graph, [], [], ImuSpec(accel_noise_std=a_std, gyro_noise_std=g_std),
            duration, seed, enable_vessel_constraint=False,
        )
        return cell, run.error_samples

    def curve_rows(level_samples, extra):
        rows = []
        for key, samples in level_samples:
            curve = binned_error_curve(np.vstack(samples), bin_w, max_d)
            for center, err, n in curve:
                rows.append(tuple(list(key) + [float(center), float(err), int(n)]))
        return rows

    cells = [(lv, s) for lv in levels for s in seeds]
    results = dict(zip(cells, (r for _, r in _map_cells(drift_cell, cells))))
    drift_rows = curve_rows(
        [(lv, [results[(lv, s)] for s in seeds]) for lv in levels], None
    )
    drift = Table(
        "drift_curve",
        ["accel_noise_std", "gyro_noise_std", "bin_center_m", "mean_error_m", "n_samples"],
        drift_rows,
    )

    tables = [drift]
    checks = []

    # (a) monotone rising phase over [0, 0.5] m for every level
    for lv in levels:
        sub = np.array([
            (r[2], r[3]) for r in drift_rows if (r[0], r[1]) == lv and r[2] < 0.5
        ])
        mono = bool(np.all(np.diff(sub[:, 1]) >= -1e-12))
        checks.append(Check(
            f"monotone_rise_gyro_{lv[1]:g}",
            mono,
            "binned mean error non-decreasing over [0, 500] mm",
        ))
    # (b) ordering by gyro noise at every bin under 0.5 m
    ordered = True
    by_level = {
        lv: {r[2]: r[3] for r in drift_rows if (r[0], r[1]) == lv} for lv in levels
    }
    sorted_levels = sorted(levels, key=lambda lv: lv[1])
    for lo, hi in zip(sorted_levels[:-1], sorted_levels[1:]):
        common = sorted(set(by_level[lo]) & set(by_level[hi]))
        for b in common:
            if b < 0.5 and by_level[lo][b] > by_level[hi][b]:
                ordered = False
    checks.append(Check(
        "noise_ordering", ordered, "curves ordered by gyro noise std at every bin in [0, 500] mm"
    ))
    # (d) error at the 500 mm bin under the default (lowest) noise level
    default_lv = sorted_levels[0]
    bins_d = by_level[default_lv]
    last_bin = max(b for b in bins_d if b < 0.5)
    err500 = bins_d[last_bin]
    bound = p.get("error_at_500mm_bound_m", 0.002)
    checks.append(Check(
        "error_at_500mm",
        err500 <= bound,
        f"default-noise drift {err500*1e3:.3f} mm at the 500 mm bin vs <= {bound*1e3:g} mm",
    ))

    # (c) vessel-constraint plateau at the default noise level
    def constraint_cell(seed):
        run = run_localization(
            graph, [], [],
            ImuSpec(accel_noise_std=default_lv[0], gyro_noise_std=default_lv[1]),
            duration, seed,
            enable_vessel_constraint=True, constraint_std=constraint_std,
        )
        return seed, run.error_samples

    cres = sorted(_map_cells(constraint_cell, seeds), key=lambda r: r[0])
    curve = binned_error_curve(np.vstack([r[1] for r in cres]), bin_w, max_d)
    ctable = Table(
        "constraint_curve",
        ["bin_center_m", "mean_error_m", "n_samples"],
        [(float(c), float(e), int(n)) for c, e, n in curve],
    )
    tables.append(ctable)
    window = p.get("plateau_window_m", [0.5, 1.0])
    sel = curve[(curve[:, 0] >= window[0]) & (curve[:, 0] <= window[1])]
    plateau = float(sel[:, 1].mean())
    band = p.get("plateau_band_m", [0.002, 0.005])
    tables.append(Table("plateau", ["plateau_m", "window_lo_m", "window_hi_m"],
                        [(plateau, window[0], window[1])]))
    checks.append(Check(
        "constraint_plateau",
        band[0] <= plateau <= band[1],
        f"plateau {plateau*1e3:.2f} mm vs [{band[0]*1e3:g}, {band[1]*1e3:g}] mm",
    ))

    # bias sweep (informational table)
    if bias_levels:
        def bias_cell(cell):
            (a_b, g_b), seed = cell
            run = run_localization(
                graph, [], [],
                ImuSpec(accel_noise_std=default_lv[0], gyro_noise_std=default_lv[1],
                        accel_bias=a_b, gyro_bias=g_b),
                duration, seed, enable_vessel_constraint=False,
            )
            return cell, run.error_samples

        bcells = [(bv, s) for bv in bias_levels for s in seeds]
        bres = dict(zip(bcells, (r for _, r in _map_cells(bias_cell, bcells))))
        bias_rows = curve_rows(
            [(bv, [bres[(bv, s)] for s in seeds]) for bv in bias_levels], None
        )
        tables.append(Table(
            "bias_curve",
            ["accel_bias", "gyro_bias", "bin_center_m", "mean_error_m", "n_samples"],
            bias_rows,
        ))

    return tables, checks


_RUNNERS = {
    "fig4": _run_fig4,
    "fig5": _run_fig5,
    "fig6": _run_fig6,
    "fig7cap": _run_fig7cap,
    "fig7visits": _run_fig7visits,
    "fig8": _run_fig8,
    "fig9": _run_fig9,
}


def run_scenario(config: ScenarioConfig) -> MetricsReport:
    """Execute a scenario and return its metrics report (nothing written)."""
    config.validate()
    kind = config.params.get("kind", config.name)
    runner = _RUNNERS.get(kind)
    if runner is None:
        raise ValidationError(
            f"unknown scenario kind {kind!r}; expected one of {sorted(_RUNNERS)}"
        )
    tables, checks = runner(config)
    return MetricsReport(
        scenario=config.name,
        tables={t.name: t for t in tables},
        checks=checks,
        fingerprint=config.fingerprint(),
    )


def write_report(report: MetricsReport, out_dir) -> Path:
    """Emit out/<scenario>/<table>.csv plus summary.md; returns the directory."""
    base = Path(out_dir) / report.scenario
    base.mkdir(parents=True, exist_ok=True)
    try:
        for table in report.tables.values():
            with open(base / f"{table.name}.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(table.columns)
                for row in table.rows:
                    writer.writerow([_fmt(v) for v in row])
        lines = [
            f"# Scenario {report.scenario}",
            "",
            f"- fingerprint: `{report.fingerprint}`",
            f"- tables: {', '.join(sorted(report.tables))}",
            "",
            "## Checks",
            "",
        ]
        for check in report.checks:
            mark = "PASS" if check.passed else "FAIL"
            lines.append(f"- [{mark}] {check.name}: {check.detail}")
        (base / "summary.md").write_text("\n".join(lines) + "\n")
    except Exception:
        for leftover in base.glob("*"):
            leftover.unlink()
        base.rmdir()
        raise
    return base


def _parse_cell(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_report(path) -> MetricsReport:
    """Reconstruct a report from an out/<scenario>/ directory for comparison."""
    base = Path(path)
    if not base.is_dir():
        raise ValidationError(f"{base} is not a scenario output directory")
    tables = {}
    for csv_path in sorted(base.glob("*.csv")):
        with open(csv_path, newline="") as fh:
            reader = csv.reader(fh)
            columns = next(reader)
            rows = [tuple(_parse_cell(v) for v in row) for row in reader]
        tables[csv_path.stem] = Table(csv_path.stem, columns, rows)
    fingerprint = ""
    summary = base / "summary.md"
    if summary.exists():
        for line in summary.read_text().splitlines():
            if line.startswith("- fingerprint:"):
                fingerprint = line.split("`")[1] if "`" in line else ""
    return MetricsReport(
        scenario=base.name, tables=tables, checks=[], fingerprint=fingerprint
    )


@dataclass
class TableDiff:
    table: str
    max_abs: float
    max_rel: float
    worst_cell: str


@dataclass
class ReportDiff:
    scenario: str
    tables: List[TableDiff]
    failures: List[str]

    @property
    def within_tolerance(self) -> bool:
        return not self.failures


def compare_report(
    report: MetricsReport,
    baseline: MetricsReport,
    abs_tolerance: float = 0.0,
    rel_tolerance: float = 0.0,
) -> ReportDiff:
    """Cell-wise numeric comparison of two reports of the same scenario."""
    if report.scenario != baseline.scenario:
        raise ValidationError(
            f"scenario mismatch: {report.scenario!r} vs {baseline.scenario!r}"
        )
    diffs = []
    failures = []
    for name in sorted(set(report.tables) | set(baseline.tables)):
        if name not in report.tables or name not in baseline.tables:
            failures.append(f"table {name!r} present in only one report")
            continue
        a, b = report.tables[name], baseline.tables[name]
        if a.columns != b.columns or len(a.rows) != len(b.rows):
            failures.append(f"table {name!r}: shape/columns mismatch")
            continue
        max_abs = max_rel = 0.0
        worst = ""
        for i, (ra, rb) in enumerate(zip(a.rows, b.rows)):
            for j, (va, vb) in enumerate(zip(ra, rb)):
                if not isinstance(va, (int, float, np.integer, np.floating)):
                    if va != vb:
                        failures.append(f"{name}[{i}].{a.columns[j]}: {va!r} != {vb!r}")
                    continue
                d = abs(float(va) - float(vb))
                scale = max(abs(float(va)), abs(float(vb)), 1e-300)
                if d > max_abs:
                    max_abs, worst = d, f"{name}[{i}].{a.columns[j]}"
                max_rel = max(max_rel, d / scale)
                if d > abs_tolerance and d / scale > rel_tolerance:
                    failures.append(
                        f"{name}[{i}].{a.columns[j]}: |{_fmt(va)} - {_fmt(vb)}| = {d:.6g}"
                    )
        diffs.append(TableDiff(table=name, max_abs=max_abs, max_rel=max_rel, worst_cell=worst))
    return ReportDiff(scenario=report.scenario, tables=diffs, failures=failures)
