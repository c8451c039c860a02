"""Command-line front end: simulate, eval, bench, demux.

Exit codes: 0 success, 2 configuration error, 3 data error (bad input files
or insufficient data).
"""

from __future__ import annotations

import argparse
import sys

from .config import RunConfig
from .errors import ConfigError, FormatError, InsufficientDataError
from .harness import cmd_bench, cmd_demux, cmd_eval, cmd_simulate


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="run configuration (JSON)")
    parser.add_argument("--out", default=None, help="output directory (default: from config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evspin",
        description=(
            "Desk-scale spinning-event-camera pipeline: synthesize event "
            "streams, detect an independently moving aerial target, and "
            "estimate its bearing."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="synthesize events, triggers, ground truth")
    _add_common(p_sim)
    p_sim.add_argument("--seed", type=int, default=None, help="override the config seed")

    p_eval = sub.add_parser("eval", help="run the detection + bearing pipeline and score it")
    _add_common(p_eval)
    p_eval.add_argument("--events", required=True, help=".evb or .csv event file")
    p_eval.add_argument("--gt", required=True, help="ground-truth CSV")
    p_eval.add_argument("--detector", choices=("oracle", "reference"), default=None)
    p_eval.add_argument("--window-us", type=int, default=None, help="override window length")
    p_eval.add_argument("--slices", type=int, default=None, help="override slice count")
    p_eval.add_argument("--serial", action="store_true", help="disable pipeline parallelism")
    p_eval.add_argument("--plots", action="store_true", help="emit SVG angle plots")
    p_eval.add_argument(
        "--dump-slices", type=int, default=0, metavar="K",
        help="write PGM slice images for the first K windows",
    )

    p_bench = sub.add_parser("bench", help="per-stage latency breakdown")
    _add_common(p_bench)
    p_bench.add_argument("--events", required=True)
    p_bench.add_argument("--windows", type=int, default=None, help="cap the window count")
    p_bench.add_argument("--serial", action="store_true")

    p_demux = sub.add_parser("demux", help="split a merged trigger stream")
    _add_common(p_demux)
    p_demux.add_argument("--triggers", required=True, help="merged trigger CSV")
    return parser


def _run(args) -> int:
    cfg = RunConfig.from_file(args.config)
    out_dir = args.out or cfg.output_dir

    if args.command == "simulate":
        out = cmd_simulate(cfg, out_dir, seed=args.seed)
        print(f"events: {len(out.result.stream)} ({out.event_bytes} bytes)")
        print(
            f"triggers: {len(out.result.pps_times)} pps + "
            f"{len(out.result.rotation_times)} rotation"
        )
        print(f"wrote {out.events_path}, {out.triggers_path}, {out.ground_truth_path}")
        return 0

    if args.command == "eval":
        report = cmd_eval(
            cfg,
            args.events,
            args.gt,
            out_dir,
            detector_kind=args.detector,
            window_us=args.window_us,
            n_slices=args.slices,
            parallel=not args.serial,
            plots=args.plots,
            dump_slices=args.dump_slices,
        )
        print(
            f"windows: {report.n_windows} total, {report.n_skipped_no_gt} skipped, "
            f"{report.n_in_fov} in fov, {report.n_detected_in_fov} detected"
        )
        if report.recall is not None:
            print(f"recall: {report.recall:.4f}")
        if report.errors is not None:
            print(
                f"angular error [deg]: mean {report.errors.mean:.4f} "
                f"median {report.errors.median:.4f} max {report.errors.max:.4f}"
            )
        print(f"false positives: {report.false_positives}")
        print(f"ap {report.ap.ap:.4f}  ap75 {report.ap.ap75:.4f}  ar100 {report.ap.ar100:.4f}")
        print(f"wrote report to {out_dir}/report.json")
        return 0

    if args.command == "bench":
        timings = cmd_bench(
            cfg, args.events, out_dir, max_windows=args.windows, parallel=not args.serial
        )
        print(f"{'stage':<20} {'mean ms':>10} {'p50 ms':>10} {'p95 ms':>10} {'samples':>8}")
        for t in timings:
            print(
                f"{t.stage:<20} {t.mean_ms:>10.3f} {t.p50_ms:>10.3f} "
                f"{t.p95_ms:>10.3f} {t.samples:>8}"
            )
        return 0

    if args.command == "demux":
        n_pps, n_rot, n_unknown = cmd_demux(cfg, args.triggers, out_dir)
        print(f"pps: {n_pps}  rotation: {n_rot}  unknown: {n_unknown}")
        return 0

    raise AssertionError(f"unhandled command {args.command}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, InsufficientDataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
