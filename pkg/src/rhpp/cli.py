"""Experiment runner: episodes, sweeps, metric/heatmap/trace exports."""

from __future__ import annotations

import argparse
import csv
import importlib.resources
import json
import os
import statistics
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .bridge import serve_stdio, serve_tcp
from .grid import MapFormatError, parse_map
from .policies import make_policy
from .sim import SimConfig, run_episode

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_MAP = 2
EXIT_POLICY = 3

BUNDLED_MAPS = ("amazon", "symbotic", "desk10", "train8")

METRIC_FIELDS = ("tpa", "total_throughput", "mean_solve_s", "max_solve_s", "infeasibility_rate")


def load_map(name_or_path):
    """Resolve a bundled map name or a filesystem path to (GridMap, text)."""
    if name_or_path in BUNDLED_MAPS:
        text = (
            importlib.resources.files("rhpp").joinpath(f"maps/{name_or_path}.map").read_text()
        )
    else:
        path = Path(name_or_path)
        if not path.is_file():
            raise MapFormatError(f"map file not found: {name_or_path}")
        text = path.read_text()
    return parse_map(text), text


def build_parser():
    p = argparse.ArgumentParser(prog="rhpp", description=__doc__)
    p.add_argument("--map", required=True, help="bundled map name or path to a .map file")
    p.add_argument("--assigner", choices=("amazon", "symbotic"), default="amazon")
    p.add_argument("-n", "--agents", type=int, default=8)
    p.add_argument("-w", "--horizon", type=int, default=20, help="planning horizon w")
    p.add_argument("--exec-h", type=int, default=5, help="execution horizon h")
    p.add_argument("-t", "--sim-horizon", type=int, default=800, help="simulation horizon T")
    p.add_argument("-k", "--candidates", type=int, default=5)
    p.add_argument("--beta", type=float, default=100.0)
    p.add_argument("--kappa", type=float, default=1000.0)
    p.add_argument("--sigma", type=float, default=1000.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=str, default=None, help="comma-separated seed list")
    p.add_argument("--policy", choices=("random", "dq"), default="random")
    p.add_argument("--bridge", default=None, help="serve externally: 'stdio' or 'tcp:PORT'")
    p.add_argument("--episodes", type=int, default=1, help="episodes per bridge connection")
    p.add_argument("--out", type=str, default="out")
    p.add_argument(
        "--export",
        nargs="*",
        default=["metrics_csv"],
        choices=("metrics_csv", "heatmap_csv", "trace_jsonl", "directions_csv"),
    )
    p.add_argument("--heatmap-steps", type=str, default="0")
    p.add_argument("--heatmap-samples", type=int, default=100)
    p.add_argument("--directions-step", type=int, default=0)
    return p


def _seeds(args):
    if args.seeds:
        return [int(s) for s in args.seeds.split(",")]
    return [args.seed]


def _round4(x):
    return f"{x:.4f}"


def write_metrics_csv(path, rows):
    """Per-seed rows at 4 decimals; aggregate mean/std rows at full precision,
    computed from the rounded per-seed values so they recompute exactly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("seed",) + METRIC_FIELDS)
        rounded = {f: [] for f in METRIC_FIELDS}
        for seed, metrics in rows:
            out = [seed]
            for f in METRIC_FIELDS:
                val = round(getattr(metrics, f), 4)
                rounded[f].append(val)
                out.append(_round4(val))
            writer.writerow(out)
        means = [repr(statistics.fmean(rounded[f])) for f in METRIC_FIELDS]
        stds = [
            repr(statistics.stdev(rounded[f]) if len(rounded[f]) > 1 else 0.0)
            for f in METRIC_FIELDS
        ]
        writer.writerow(["mean"] + means)
        writer.writerow(["std"] + stds)


def export_heatmap(traces, steps, out_path):
    """CSV of per-agent mean priority rank at the requested steps."""
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("seed", "step", "agent", "loc", "mean_rank", "samples"))
        for seed, trace in traces:
            by_step = {entry["step"]: entry for entry in trace}
            for step in steps:
                entry = by_step.get(step)
                if entry is None or "heatmap" not in entry:
                    raise ValueError(f"step {step} not in trace for seed {seed}")
                heat = entry["heatmap"]
                for agent, (loc, rank) in enumerate(zip(heat["loc"], heat["mean_rank"])):
                    writer.writerow(
                        (seed, step, agent, loc, repr(rank), heat["samples"])
                    )


def export_directions(traces, step, out_path):
    """CSV comparing each agent's shortest-path move with its executed move."""
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("seed", "agent", "loc", "sp_move", "move", "agree"))
        for seed, trace in traces:
            by_step = {entry["step"]: entry for entry in trace}
            entry = by_step.get(step)
            if entry is None:
                raise ValueError(f"step {step} not in trace for seed {seed}")
            for agent, rec in enumerate(entry["per_agent"]):
                writer.writerow(
                    (
                        seed,
                        agent,
                        rec["loc"],
                        rec["sp_move"],
                        rec["move"],
                        int(rec["sp_move"] == rec["move"]),
                    )
                )


def run(args):
    try:
        grid, map_text = load_map(args.map)
    except (MapFormatError, OSError) as exc:
        print(f"map error: {exc}", file=sys.stderr)
        return EXIT_MAP

    try:
        base_config = SimConfig(
            map_path=str(args.map),
            n_agents=args.agents,
            w=args.horizon,
            h=args.exec_h,
            sim_horizon=args.sim_horizon,
            k=args.candidates,
            beta=args.beta,
            kappa=args.kappa,
            sigma=args.sigma,
            seed=args.seed,
            assigner=args.assigner,
            policy="external" if args.bridge else args.policy,
        )
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.bridge:
        return _run_bridge(args, base_config, grid, map_text)

    seeds = _seeds(args)
    heatmap_steps = []
    if "heatmap_csv" in args.export:
        heatmap_steps = [int(s) for s in args.heatmap_steps.split(",")]

    def one_seed(seed):
        import dataclasses

        config = dataclasses.replace(base_config, seed=seed)
        policy = make_policy(args.policy)
        return run_episode(
            config, grid, policy, heatmap_steps=heatmap_steps, heatmap_samples=args.heatmap_samples
        )

    try:
        with ThreadPoolExecutor(max_workers=min(len(seeds), os.cpu_count() or 1)) as pool:
            results = list(pool.map(one_seed, seeds))
    except Exception as exc:  # noqa: BLE001 - surface any policy failure as exit 3
        print(f"policy error: {exc}", file=sys.stderr)
        return EXIT_POLICY
    if any(not metrics.valid for metrics, _ in results):
        print("policy error: episode aborted", file=sys.stderr)
        return EXIT_POLICY

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    traces = [(seed, trace) for seed, (_, trace) in zip(seeds, results)]
    if "metrics_csv" in args.export:
        write_metrics_csv(
            out_dir / "metrics.csv", [(s, m) for s, (m, _) in zip(seeds, results)]
        )
    if "trace_jsonl" in args.export:
        for seed, trace in traces:
            with open(out_dir / f"trace_seed{seed}.jsonl", "w") as fh:
                for entry in trace:
                    fh.write(json.dumps(entry) + "\n")
    if "heatmap_csv" in args.export:
        export_heatmap(traces, heatmap_steps, out_dir / "heatmap.csv")
    if "directions_csv" in args.export:
        export_directions(traces, args.directions_step, out_dir / "directions.csv")
    return EXIT_OK


def _run_bridge(args, base_config, grid, map_text):
    seeds = _seeds(args)
    if len(seeds) == 1 and args.episodes > 1:
        seeds = list(range(args.seed, args.seed + args.episodes))
    try:
        if args.bridge == "stdio":
            serve_stdio(base_config, grid, map_text, seeds)
        elif args.bridge.startswith("tcp:"):
            port = int(args.bridge.split(":", 1)[1])
            server = serve_tcp(base_config, grid, map_text, port, args.episodes, args.seed)
            print(f"bridge: listening on 127.0.0.1:{server.server_address[1]}", file=sys.stderr)
            server.serve_forever()
        else:
            print(f"config error: bad --bridge {args.bridge!r}", file=sys.stderr)
            return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"bridge error: {exc}", file=sys.stderr)
        return EXIT_POLICY
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
