"""Headless entry points: run, bench, compare, serve, replay.

Exit codes: 0 success; 2 a file or document could not be parsed (argparse
uses the same code for bad flags); 3 a scenario loaded cleanly but its
initial state already violates a barrier; 4 a runtime failure (solver
breakdown, port in use, divergence).

All flags are long-form.  A scenario file carries every default (rates,
tick budget, speed limit), so a run is reproducible from that one
artifact; flags only override or point at other files.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np
import yaml

from .scenario_io import (
    RuntimeScene,
    SafetyError,
    ScenarioError,
    build_runtime,
    load_scenario,
    load_trajectory,
    mean_error,
    run_scripted,
    save_trajectory,
)
from .sim import SimulationError

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_SAFETY = 3
EXIT_RUNTIME = 4

INPUT_LOG_FORMAT = "threadsim-inputs"

_BENCH_PRESETS = ["scenarios/drag_n25.yaml", "scenarios/hernia_ring.yaml", "scenarios/bench_n81.yaml"]


def _load_scene(path) -> RuntimeScene:
    with open(path, "r", encoding="utf-8") as fh:
        return build_runtime(load_scenario(fh.read()))


def _load_commands(path, scene: RuntimeScene, total: int) -> np.ndarray:
    """External needle script in SI units -> per-tick commands, normalized.

    Accepts an input log written by ``serve --input-log`` (one velocity per
    tick) or a script document: a list of [t, vx, vy] rows where each
    velocity holds until the next row, optionally wrapped as {script: ...}.
    """
    from .sim import expand_script

    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if isinstance(doc, dict) and doc.get("format") == INPUT_LOG_FORMAT:
        if doc.get("version") != 1:
            raise ScenarioError("unsupported input log version")
        vel = np.asarray(doc.get("velocities"), dtype=float)
        if vel.ndim != 2 or vel.shape[1] != 2 or not np.all(np.isfinite(vel)):
            raise ScenarioError("input log velocities must be finite [vx, vy] rows")
        out = np.zeros((total, 2))
        k = min(total, vel.shape[0])
        out[:k] = vel[:k] / scene.scale
        return out
    if isinstance(doc, dict) and "script" in doc:
        doc = doc["script"]
    arr = np.asarray(doc, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3 or not np.all(np.isfinite(arr)):
        raise ScenarioError("script must be finite [t, vx, vy] rows")
    arr = arr.copy()
    arr[:, 1:] /= scene.scale
    return expand_script(arr, total, scene.config.dt)


def _fmt_h(value) -> str:
    return f"{value:.3e} m^2"


def _cmd_run(args) -> int:
    scene = _load_scene(args.scenario)
    total = scene.ticks if args.ticks is None else args.ticks
    commands = None
    if args.script is not None:
        commands = _load_commands(args.script, scene, total)
    t0 = time.perf_counter()
    record = run_scripted(scene, ticks=total, solver=args.solver, commands=commands)
    wall = time.perf_counter() - t0
    if args.out is not None:
        save_trajectory(record, args.out)
    h_obs = _fmt_h(np.min(record.min_h_obs)) if record.min_h_obs.size else "n/a"
    print(
        f"{record.scenario_name}: {total} ticks at {record.rate_hz:g} Hz"
        f" | min h_con {_fmt_h(np.min(record.min_h_con))}"
        f" | min h_enh {_fmt_h(np.min(record.min_h_enh))}"
        f" | min h_obs {h_obs}"
        f" | mean slack con {np.mean(record.slack_con):.2e}"
        f" enh {np.mean(record.slack_enh):.2e}"
        f" stiff {np.mean(record.slack_stiff):.2e}"
        f" | qp iters mean {np.mean(record.qp_iterations[1:]):.0f}"
        f" | wall {wall:.2f} s ({total / wall:.0f} Hz)"
    )
    return EXIT_OK


def _cmd_bench(args) -> int:
    from .sim import Engine, bench, expand_script
    from .scenario_io import clamp_speed

    paths = args.scenario if args.scenario else list(_BENCH_PRESETS)
    rows = []
    for path in paths:
        scene = _load_scene(path)
        ticks = args.ticks if args.ticks is not None else min(scene.ticks, 300)
        engine = Engine(scene.params, scene.state0, scene.obstacles, scene.config)
        commands = clamp_speed(
            expand_script(scene.script, ticks, scene.config.dt), scene.max_input_speed
        )
        result = bench(engine, commands)
        budget_ms = 1000.0 / scene.config.rate_hz
        verdict = "ok" if result.mean_ms < budget_ms else "SLOW"
        rows.append(
            f"{scene.name:<16} n={scene.params.n:<3} M={len(scene.obstacles):<2} "
            f"{result.summary()}  [{scene.config.rate_hz:g} Hz budget "
            f"{budget_ms:.1f} ms: {verdict}]"
        )
    print("\n".join(rows))
    return EXIT_OK


def _cmd_compare(args) -> int:
    sim = load_trajectory(args.sim)
    ref = load_trajectory(args.ref)
    pct = mean_error(sim, ref, thread_length=args.length)
    print(f"mean error {pct:.6f} % of thread length")
    return EXIT_OK


def _cmd_serve(args) -> int:
    from . import service

    scene = _load_scene(args.scenario)

    def banner(bound: int):
        print(f"serving ws://{args.host}:{bound}{service.ENDPOINT} ({scene.name})", flush=True)

    try:
        session = service.serve(
            scene, port=args.port, host=args.host, ticks=args.ticks, on_bound=banner
        )
    except KeyboardInterrupt:
        return EXIT_OK
    if args.input_log is not None:
        doc = {
            "format": INPUT_LOG_FORMAT,
            "version": 1,
            "scenario_hash": scene.scenario_hash,
            "rate_hz": scene.config.rate_hz,
            "velocities": [list(v) for v in session.applied_inputs],
        }
        with open(args.input_log, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")
    return EXIT_OK


def _cmd_replay(args) -> int:
    from . import service

    record = load_trajectory(args.record)
    scene = _load_scene(args.scenario) if args.scenario is not None else None

    def banner(bound: int):
        print(
            f"replaying {record.scenario_name} ({record.n_frames} frames) on "
            f"ws://{args.host}:{bound}{service.ENDPOINT}",
            flush=True,
        )

    try:
        service.replay_serve(record, port=args.port, host=args.host, scene=scene, on_bound=banner)
    except KeyboardInterrupt:
        return EXIT_OK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="threadsim",
        description="Thread simulation runner and session host.",
        epilog="Exit codes: 0 ok, 2 parse failure, 3 unsafe initial state, 4 runtime failure.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario open loop and write its trajectory")
    p.add_argument("--scenario", required=True, help="scenario YAML file")
    p.add_argument("--script", help="override needle script: [t, vx, vy] rows or an input log (SI units)")
    p.add_argument("--out", help="trajectory JSON output path")
    p.add_argument("--ticks", type=int, help="tick count override")
    p.add_argument("--solver", choices=("sparse", "dense"), default="sparse")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("bench", help="timing table for one or more scenarios")
    p.add_argument("--scenario", action="append", help="scenario file; repeatable (default: bundled presets)")
    p.add_argument("--ticks", type=int, help="ticks per scenario (default min(scenario, 300))")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("compare", help="mean node error between two trajectories")
    p.add_argument("--sim", required=True, help="simulated trajectory JSON")
    p.add_argument("--ref", required=True, help="reference trajectory JSON")
    p.add_argument("--length", type=float, help="thread length in meters (default: from reference)")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("serve", help="host a live steering session")
    p.add_argument("--scenario", required=True, help="scenario YAML file (interactive mode)")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ticks", type=int, help="stop after N ticks (default: run until interrupted)")
    p.add_argument("--input-log", help="write the applied per-tick inputs (m/s) as JSON on exit")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("replay", help="stream a recorded trajectory to clients")
    p.add_argument("--record", required=True, help="trajectory JSON file")
    p.add_argument("--scenario", help="matching scenario file, supplies obstacle geometry")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=_cmd_replay)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SafetyError as exc:
        print(f"safety: {exc}", file=sys.stderr)
        return EXIT_SAFETY
    except (ValueError, FileNotFoundError, IsADirectoryError, yaml.YAMLError) as exc:
        # ScenarioError, record mismatches and JSON decoding all come
        # through ValueError: bad input artifacts, not runtime faults
        print(f"parse: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (SimulationError, OSError) as exc:
        print(f"runtime: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
