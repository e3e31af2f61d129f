"""Command line entry point: run, bench and validate scenario files."""

from __future__ import annotations

import argparse
import json
import logging
import statistics
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from .scenario_io import ScenarioError, load_scenario, result_summary, write_json, write_trajectory_log
from .sim import run_scenario

EXIT_OK, EXIT_PIPELINE, EXIT_INPUT = 0, 1, 2

log = logging.getLogger("bridgenav")


@dataclass(frozen=True)
class RunConfig:
    scenario: Path
    out_dir: Path = Path("bridgenav-out")
    seed: int | None = None
    emit_plots: bool = False
    bench_repetitions: int = 1

    def __post_init__(self):
        if self.bench_repetitions < 1:
            raise ValueError("repetitions must be at least 1")


def _load(cfg: RunConfig):
    s = load_scenario(cfg.scenario)
    if cfg.seed is not None:
        if not 0 <= cfg.seed < 2**64:
            raise ScenarioError("must be an integer in [0, 2^64)", "--seed")
        s = replace(s, seed=cfg.seed)
    return s


def run(cfg: RunConfig) -> int:
    try:
        s = _load(cfg)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        result = run_scenario(s)
    except Exception as exc:  # any pipeline failure maps to exit status 1
        print(f"pipeline failed: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_log(result, s.dimension, out / "trajectories.csv")
    write_json(result.metrics, out / "metrics.json")
    write_json(result_summary(result), out / "result.json")
    files = ["trajectories.csv", "metrics.json", "result.json"]
    if cfg.emit_plots:
        from .plotting import plot_result

        files += [p.name for p in plot_result(s, result, out)]
    m = result.metrics
    print("key\tvalue")
    for key in ("agents", "bridge_count", "agent_agent_collision_events", "agent_obstacle_collision_events",
                "frames", "frames_seconds", "max_delay_seconds", "interpolate_median_ms"):
        print(f"{key}\t{m[key]}")
    for name in files:
        print(f"file\t{out / name}")
    return EXIT_OK


def bench(cfg: RunConfig) -> int:
    try:
        s = _load(cfg)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INPUT
    samples: dict[str, list[float]] = {}
    try:
        for _ in range(cfg.bench_repetitions):
            m = run_scenario(s).metrics
            for phase, secs in m["timing_seconds"].items():
                samples.setdefault(phase, []).append(secs)
            samples.setdefault("total", []).append(sum(m["timing_seconds"].values()))
    except Exception as exc:
        print(f"pipeline failed: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    summary = {k: {"min": min(v), "median": statistics.median(v), "reps": len(v)} for k, v in samples.items()}
    print("phase\tmin_s\tmedian_s")
    for k, v in summary.items():
        print(f"{k}\t{v['min']:.6f}\t{v['median']:.6f}")
    if cfg.out_dir is not None:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        write_json(summary, cfg.out_dir / "bench.json")
    return EXIT_OK


def validate(cfg: RunConfig) -> int:
    try:
        s = load_scenario(cfg.scenario)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(json.dumps({"name": s.name, "dimension": s.dimension, "agents": len(s.agents),
                      "obstacles": len(s.obstacles.obstacles), "dt": s.dt, "tau": s.tau}))
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bridgenav", description="Multi-agent navigation through precomputed bridges.")
    p.add_argument("-v", "--verbose", action="store_true", help="log pipeline progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="solve a scenario and write logs, metrics and optional plots")
    r.add_argument("scenario", type=Path)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", type=Path, default=Path("bridgenav-out"))
    r.add_argument("--plots", action="store_true")
    b = sub.add_parser("bench", help="time the pipeline phases over repeated runs")
    b.add_argument("scenario", type=Path)
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--seed", type=int)
    b.add_argument("--out", type=Path)
    v = sub.add_parser("validate", help="parse and check a scenario file")
    v.add_argument("scenario", type=Path)
    return p


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad usage, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.command == "validate":
        return validate(RunConfig(args.scenario))
    if args.command == "bench" and args.reps < 1:
        print("--reps must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    if args.command == "bench":
        return bench(RunConfig(args.scenario, args.out, args.seed, False, args.reps))
    return run(RunConfig(args.scenario, args.out, args.seed, args.plots))


if __name__ == "__main__":
    sys.exit(main())
