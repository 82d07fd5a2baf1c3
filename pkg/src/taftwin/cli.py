"""Command-line entry point (``taf-twin``).

Subcommands cover the headless workflows: running and serving scenarios,
the bundled experiments, sensor ingest, recording replay and over-dubbing,
network validation, and the threat register. Exit codes: 0 success, 1
usage or configuration error, 2 runtime failure. Output for identical
inputs and seeds is byte-identical.
"""

import argparse
import json
import sys
import time
from pathlib import Path

from taftwin import PROTOCOL_VERSION, __version__
from taftwin.config import ScenarioConfig, load_config
from taftwin.core.network import RoadNetwork, load_network, validate_network
from taftwin.cosim.kernel import SimulationKernel, ghost_metadata
from taftwin.cosim.protocol import encode_message
from taftwin.cosim.recording import (
    load_recording,
    overdub,
    playback,
    record_frames,
    save_recording,
)
from taftwin.cosim.server import CosimServer
from taftwin.core.types import GeoAnchor
from taftwin.experiment import (
    build_four_arm_network,
    build_straight_network,
    run_attack_detection,
    run_ghost_demo,
    run_signal_experiment,
)
from taftwin.ingest import load_calibrations, load_detections, run_ingest
from taftwin.signals import aggregate_lost_time, lost_time_csv
from taftwin.v2x import load_default_register, score_threats

#: Builtin networks addressable from a scenario's network_path.
BUILTIN_NETWORKS = {
    ":four-arm:": build_four_arm_network,
    ":straight:": build_straight_network,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # usage errors exit 1, not 2
        self.print_usage(sys.stderr)
        raise UsageError(message)


def resolve_network(path: str) -> RoadNetwork:
    builder = BUILTIN_NETWORKS.get(path)
    if builder is not None:
        return builder()
    if not Path(path).exists():
        raise UsageError(f"network file not found: {path}")
    return load_network(path)


def _load_scenario(args: argparse.Namespace) -> tuple[RoadNetwork, ScenarioConfig]:
    if not Path(args.config).exists():
        raise UsageError(f"config file not found: {args.config}")
    try:
        config = load_config(args.config)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise UsageError(f"bad config {args.config}: {exc}") from exc
    config = config.with_overrides(
        seed=args.seed, duration=args.duration, dt=args.dt
    )
    return resolve_network(config.network_path), config


def _add_scenario_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="scenario JSON file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--duration", type=float, default=None, help="seconds")
    parser.add_argument("--dt", type=float, default=None, help="tick length, seconds")


def cmd_run(args: argparse.Namespace) -> int:
    network, config = _load_scenario(args)
    kernel = SimulationKernel(network, config)
    frames = kernel.run(record=args.out is not None)
    if args.out is not None:
        recording = record_frames(
            network.anchor,
            config.dt,
            frames,
            metadata={"scenario": config.to_dict(), "ghost": ghost_metadata(kernel)},
        )
        save_recording(recording, args.out)
    if args.lost_csv is not None:
        Path(args.lost_csv).write_text(
            lost_time_csv(kernel.lost_time_records), encoding="utf-8"
        )
    if args.summary is not None:
        doc = {
            "frames": kernel.frame_no,
            "sim_time_s": kernel.sim_time,
            "participants": len(kernel.lost_time_records),
            "lost_time": (
                aggregate_lost_time(kernel.lost_time_records)
                if kernel.lost_time_records
                else {}
            ),
        }
        Path(args.summary).write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    print(
        f"ran {kernel.frame_no} frames ({kernel.sim_time:.1f} s), "
        f"{len(kernel.lost_time_records)} participants completed"
    )
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    network, config = _load_scenario(args)
    kernel = SimulationKernel(network, config)
    server = CosimServer(
        kernel,
        port=args.port,
        barrier_timeout_s=args.barrier_timeout,
        realtime=args.realtime,
    )
    port = server.start_listening()
    print(f"listening on 127.0.0.1:{port} (protocol {PROTOCOL_VERSION})", flush=True)
    try:
        server.run()
    finally:
        server.stop()
    if args.out is not None:
        recording = record_frames(
            network.anchor, config.dt, server.frames,
            metadata={"scenario": config.to_dict()},
        )
        save_recording(recording, args.out)
    print(f"served {kernel.frame_no} frames")
    return 0


def cmd_signal_exp(args: argparse.Namespace) -> int:
    result = run_signal_experiment(
        seeds=tuple(args.seeds), duration=args.duration, dt=args.dt
    )
    print(result.summary())
    if args.json is not None:
        doc = {
            "seeds": list(result.seeds),
            "baseline": result.baseline,
            "optimized": result.optimized,
            "vru_reduction": result.vru_reduction,
            "vehicle_change": result.vehicle_change,
        }
        Path(args.json).write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return 0


def cmd_attack(args: argparse.Namespace) -> int:
    if args.what == "demo":
        demo = run_ghost_demo(seed=args.seed)
        t_half = demo.time_to_fraction(0.5)
        print(
            f"victim {demo.victim_id}: v_set {demo.v_set:.2f} m/s, "
            f"below 50% after {t_half:.2f} s" if t_half is not None
            else f"victim {demo.victim_id}: never dropped below 50% of v_set"
        )
        return 0
    result = run_attack_detection(seed=args.seed, attack=args.what == "detect")
    print(
        f"spoofed={sorted(result.spoofed_ids)} flagged={sorted(result.flagged_ids)} "
        f"precision={result.precision:.3f} recall={result.recall:.3f}"
    )
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    for path in (args.calibration, args.detections):
        if not Path(path).exists():
            raise UsageError(f"input file not found: {path}")
    try:
        calibrations = load_calibrations(args.calibration)
        detections = load_detections(args.detections)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise UsageError(f"bad ingest input: {exc}") from exc
    anchor = GeoAnchor(origin_lat=args.lat, origin_lon=args.lon)
    _tracks, csv_text = run_ingest(
        calibrations,
        detections,
        anchor,
        merge_radius=args.merge_radius,
        frame_dt=args.frame_dt,
        gate=args.gate,
    )
    if args.out is not None:
        Path(args.out).write_text(csv_text, encoding="utf-8")
    else:
        sys.stdout.write(csv_text)
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    if not Path(args.recording).exists():
        raise UsageError(f"recording not found: {args.recording}")
    recording = load_recording(args.recording)
    for delay, msg in playback(recording, speed=args.speed):
        if args.realtime:
            time.sleep(delay)
        sys.stdout.buffer.write(encode_message(msg))
    sys.stdout.buffer.flush()
    return 0


def cmd_overdub(args: argparse.Namespace) -> int:
    for path in (args.base, args.overlay):
        if not Path(path).exists():
            raise UsageError(f"recording not found: {path}")
    merged = overdub(load_recording(args.base), load_recording(args.overlay))
    save_recording(merged, args.out)
    print(f"wrote {args.out} ({len(merged.frames)} frames)")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    network = resolve_network(args.network)
    report = validate_network(network)
    for finding in report.findings:
        print(f"{finding.kind}: {finding.message}")
    if report.ok:
        print(
            f"ok: {len(network.lanes)} lanes, {len(network.junctions)} junctions, "
            f"{len(network.signal_groups)} signal groups"
        )
        return 0
    return 1


def cmd_threats(args: argparse.Namespace) -> int:
    ranked = score_threats(load_default_register())
    if args.top is not None:
        ranked = ranked[: args.top]
    if args.json:
        print(json.dumps([t.to_dict() for t in ranked], indent=2, sort_keys=True))
    else:
        for entry in ranked:
            tag = " [analysis-only]" if entry.analysis_only else ""
            print(f"{entry.score:3d}  #{entry.id:<3d} {entry.name}{tag}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="taf-twin", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario headless, optionally recording")
    _add_scenario_args(p)
    p.add_argument("--out", default=None, help="recording output (.dtrec / .dtrec.gz)")
    p.add_argument("--lost-csv", default=None, help="per-participant lost-time CSV")
    p.add_argument("--summary", default=None, help="aggregate lost-time JSON")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("serve", help="run a scenario as a TCP co-simulation master")
    _add_scenario_args(p)
    p.add_argument("--port", type=int, default=0, help="0 picks a free port")
    p.add_argument("--barrier-timeout", type=float, default=0.2)
    p.add_argument("--realtime", action="store_true")
    p.add_argument("--out", default=None, help="recording output path")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("signal-exp", help="fixed vs VRU-optimized control experiment")
    p.add_argument("--seeds", type=int, nargs="+", default=[11, 23, 37, 41, 53])
    p.add_argument("--duration", type=float, default=600.0)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--json", default=None, help="write full results JSON here")
    p.set_defaults(func=cmd_signal_exp)

    p = sub.add_parser("attack", help="ghost-vehicle injection experiments")
    p.add_argument("what", choices=["demo", "detect", "clean"])
    p.add_argument("--seed", type=int, default=3)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("ingest", help="camera detections -> tracked object list CSV")
    p.add_argument("--calibration", required=True, help="calibration JSON")
    p.add_argument("--detections", required=True, help="detections JSON lines")
    p.add_argument("--lat", type=float, required=True, help="anchor latitude")
    p.add_argument("--lon", type=float, required=True, help="anchor longitude")
    p.add_argument("--merge-radius", type=float, default=1.5)
    p.add_argument("--frame-dt", type=float, default=0.1)
    p.add_argument("--gate", type=float, default=3.0)
    p.add_argument("--out", default=None, help="CSV output (default stdout)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("replay", help="print a recording as FRAME messages")
    p.add_argument("recording")
    p.add_argument("--speed", type=float, default=1.0)
    p.add_argument("--realtime", action="store_true", help="sleep between frames")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("overdub", help="layer one recording onto another")
    p.add_argument("--base", required=True)
    p.add_argument("--overlay", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_overdub)

    p = sub.add_parser("validate", help="structural checks on a network file")
    p.add_argument("network", help="network JSON path or builtin (:four-arm:)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("threats", help="print the ranked threat register")
    p.add_argument("--top", type=int, default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_threats)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
