"""Command-line interface.

Subcommands:
  channel sweep       per-sub-band link budget CSV for a tissue stack
  simulate trajectory ground-truth sensor trajectory CSV
  simulate visits     anchor visit-interval CSV over seeded runs
  simulate localize   closed-loop localization; per-event and binned CSVs
  run <scenario>      execute a shipped or custom scenario; --check gates exit
  compare <a> <b>     diff two scenario output directories
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .anchors import load_anchor_layout, visit_intervals
from .channel import ChannelConfig, default_link_params, load_stack, sweep
from .errors import NanolocError
from .experiments import (
    _fmt,
    compare_report,
    load_events,
    load_scenario,
    read_report,
    run_scenario,
    write_report,
)
from .imu import ImuSpec, binned_error_curve, run_localization
from .vasculature import default_graph, load_graph, trajectory


def _write_csv(path, columns, rows):
    out = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        writer = csv.writer(out)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    finally:
        if out is not sys.stdout:
            out.close()


def _cmd_channel_sweep(args) -> int:
    stack = load_stack(args.stack)
    config = ChannelConfig(
        absorption_wavelength=args.absorption_wavelength,
        spreading=args.spreading,
    )
    rows = sweep(stack, default_link_params(), config)
    columns = list(rows[0].keys())
    _write_csv(args.out, columns, [tuple(r[c] for c in columns) for r in rows])
    return 0


def _load_graph_arg(args):
    return load_graph(args.graph) if args.graph else default_graph()


def _cmd_simulate_trajectory(args) -> int:
    graph = _load_graph_arg(args)
    traj = trajectory(
        graph, graph.injection_points[0], args.duration, args.dt, args.seed
    )
    rows = [
        (float(t), float(p[0]), float(p[1]), float(p[2]), int(s))
        for t, p, s in zip(traj.times, traj.positions, traj.segment_ids)
    ]
    _write_csv(args.out, ["t_s", "x_m", "y_m", "z_m", "segment_id"], rows)
    return 0


def _cmd_simulate_visits(args) -> int:
    graph = _load_graph_arg(args)
    anchors = (
        load_anchor_layout(args.anchors)
        if args.anchors and Path(args.anchors).exists()
        else load_anchor_layout(None, preset=args.anchors or "paper20")
    )
    rows = []
    for seed in range(args.seed_offset, args.seed_offset + args.seeds):
        for iv in visit_intervals(
            graph, anchors, graph.injection_points[0], args.duration, seed
        ):
            rows.append((seed, float(iv)))
    _write_csv(args.out, ["seed", "interval_s"], rows)
    if rows:
        intervals = np.array([r[1] for r in rows])
        qs = np.percentile(intervals, [50, 90, 99])
        print(
            f"# {len(intervals)} intervals; frac<=10s {float((intervals <= 10).mean()):.3f}; "
            f"p50/p90/p99 {qs[0]:.2f}/{qs[1]:.2f}/{qs[2]:.2f} s; max {intervals.max():.2f} s",
            file=sys.stderr,
        )
    return 0


def _cmd_simulate_localize(args) -> int:
    graph = _load_graph_arg(args)
    anchors = load_anchor_layout(args.anchors) if args.anchors else []
    events = load_events(args.events)
    spec = ImuSpec(
        accel_noise_std=args.accel_noise_std,
        gyro_noise_std=args.gyro_noise_std,
        accel_bias=args.accel_bias,
        gyro_bias=args.gyro_bias,
    )
    event_rows = []
    samples = []
    for seed in range(args.seed_offset, args.seed_offset + args.seeds):
        run = run_localization(
            graph, anchors, events, spec, args.duration, seed,
            enable_vessel_constraint=args.enable_vessel_constraint,
        )
        for ev in run.stamped_events:
            event_rows.append((
                ev.event_id, seed, ev.distance_since_reset_at_stamp, ev.error_m,
                spec.accel_noise_std, spec.gyro_noise_std,
            ))
        samples.append(run.error_samples)
    _write_csv(
        args.out,
        ["event_id", "seed", "distance_since_reset_m", "error_m",
         "accel_noise_std", "gyro_noise_std"],
        event_rows,
    )
    if args.curve_out:
        curve = binned_error_curve(np.vstack(samples))
        _write_csv(
            args.curve_out,
            ["bin_center_m", "mean_error_m", "n_samples"],
            [(float(c), float(e), int(n)) for c, e, n in curve],
        )
    return 0


def _cmd_run(args) -> int:
    config = load_scenario(args.config or args.scenario, seed_offset=args.seed_offset)
    report = run_scenario(config)
    out_dir = write_report(report, args.out)
    for check in report.checks:
        mark = "PASS" if check.passed else "FAIL"
        print(f"[{mark}] {check.name}: {check.detail}")
    print(f"wrote {out_dir}")
    if args.check and not report.all_passed:
        return 1
    return 0


def _cmd_compare(args) -> int:
    a = read_report(args.a)
    b = read_report(args.b)
    diff = compare_report(a, b, abs_tolerance=args.abs_tol, rel_tolerance=args.rel_tol)
    for td in diff.tables:
        print(f"{td.table}: max_abs={td.max_abs:.6g} max_rel={td.max_rel:.6g} "
              f"worst={td.worst_cell or '-'}")
    for failure in diff.failures[:20]:
        print(f"FAIL {failure}")
    if len(diff.failures) > 20:
        print(f"... and {len(diff.failures) - 20} more")
    return 0 if diff.within_tolerance else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nanoloc",
        description="In-body bionanosensor localization simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    channel = sub.add_parser("channel", help="link-budget tools")
    channel_sub = channel.add_subparsers(dest="subcommand", required=True)
    cs = channel_sub.add_parser("sweep", help="per-sub-band link budget CSV")
    cs.add_argument("--stack", default=None, help="stack JSON (default: shipped 2.5 mm)")
    cs.add_argument("--absorption-wavelength", choices=["effective", "vacuum"],
                    default="effective")
    cs.add_argument("--spreading", choices=["per_layer", "total_distance"],
                    default="per_layer")
    cs.add_argument("--out", default="-")
    cs.set_defaults(fn=_cmd_channel_sweep)

    simulate = sub.add_parser("simulate", help="mobility and localization runs")
    sim_sub = simulate.add_subparsers(dest="subcommand", required=True)

    st = sim_sub.add_parser("trajectory", help="ground-truth trajectory CSV")
    st.add_argument("--graph", default=None)
    st.add_argument("--duration", type=float, default=60.0)
    st.add_argument("--dt", type=float, default=0.01)
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--out", default="-")
    st.set_defaults(fn=_cmd_simulate_trajectory)

    sv = sim_sub.add_parser("visits", help="anchor visit-interval CSV")
    sv.add_argument("--graph", default=None)
    sv.add_argument("--anchors", default="paper20",
                    help="layout preset name or JSON path")
    sv.add_argument("--duration", type=float, default=10000.0)
    sv.add_argument("--seeds", type=int, default=50)
    sv.add_argument("--seed-offset", type=int, default=0)
    sv.add_argument("--out", default="-")
    sv.set_defaults(fn=_cmd_simulate_visits)

    sl = sim_sub.add_parser("localize", help="closed-loop localization CSVs")
    sl.add_argument("--graph", default=None)
    sl.add_argument("--anchors", default=None, help="layout JSON path (default: none)")
    sl.add_argument("--events", default=None, help="events JSON path")
    sl.add_argument("--duration", type=float, default=60.0)
    sl.add_argument("--seeds", type=int, default=1)
    sl.add_argument("--seed-offset", type=int, default=0)
    sl.add_argument("--accel-noise-std", type=float, default=ImuSpec().accel_noise_std)
    sl.add_argument("--gyro-noise-std", type=float, default=ImuSpec().gyro_noise_std)
    sl.add_argument("--accel-bias", type=float, default=0.0)
    sl.add_argument("--gyro-bias", type=float, default=0.0)
    sl.add_argument("--enable-vessel-constraint", action="store_true")
    sl.add_argument("--out", default="-", help="per-event CSV")
    sl.add_argument("--curve-out", default=None, help="binned error-curve CSV")
    sl.set_defaults(fn=_cmd_simulate_localize)

    run = sub.add_parser("run", help="execute a scenario")
    run.add_argument("scenario", help="shipped name (fig4..fig9) or JSON path")
    run.add_argument("--config", default=None, help="override scenario JSON path")
    run.add_argument("--out", default="out")
    run.add_argument("--seed-offset", type=int, default=0)
    run.add_argument("--check", action="store_true",
                     help="exit nonzero if any scenario check fails")
    run.set_defaults(fn=_cmd_run)

    cmp_parser = sub.add_parser("compare", help="diff two scenario output dirs")
    cmp_parser.add_argument("a")
    cmp_parser.add_argument("b")
    cmp_parser.add_argument("--abs-tol", type=float, default=0.0)
    cmp_parser.add_argument("--rel-tol", type=float, default=0.0)
    cmp_parser.set_defaults(fn=_cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except NanolocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
