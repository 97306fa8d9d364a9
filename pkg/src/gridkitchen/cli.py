"""Command line front end: run one episode, sweep a matrix, correlate beliefs."""
from __future__ import annotations

import argparse
import json
import sys

from . import harness


def _cmd_run(args) -> int:
    config = harness.EpisodeConfig(
        kitchen=args.kitchen,
        recipe=args.recipe,
        agents=tuple(args.agents.split(",")),
        seed=args.seed,
        max_steps=args.max_steps,
        beta=args.beta,
    )
    result = harness.run_episode(config)
    if args.trace:
        harness.write_trace(result, args.trace)
    table = harness.ResultsTable()
    table.add(result)
    if args.out:
        table.write_csv(args.out)
    status = "completed" if result.completed else "timed out"
    print(f"{config.scenario()}: {status} in {result.time_steps} steps, "
          f"completion {result.completion:.2f}, "
          f"shuffles {result.shuffles_total}")
    return 0 if result.completed else 1


def _cmd_matrix(args) -> int:
    with open(args.config) as fh:
        spec = json.load(fh)
    configs = harness.matrix_configs(spec, args.seeds)
    table = harness.run_matrix(configs, jobs=args.jobs)
    table.write_csv(args.out)
    for summary in table.summarize():
        print(f"{summary['kitchen']}/{summary['recipe']}/{summary['agents']}: "
              f"time {summary['time_steps_mean']:.2f}±{summary['time_steps_sem']:.2f} "
              f"completion {summary['completion_mean']:.2f}±{summary['completion_sem']:.2f} "
              f"shuffles {summary['shuffles_total_mean']:.2f}±{summary['shuffles_total_sem']:.2f} "
              f"(n={summary['episodes']})")
    return 0


def _cmd_correlate(args) -> int:
    import csv
    from pathlib import Path

    traces = Path(args.traces)
    paths = sorted(traces.glob("*.jsonl")) if traces.is_dir() else [traces]
    model_rows = []
    for path in paths:
        model_rows.extend(harness.read_trace_beliefs(path))
    with open(args.reference, newline="") as fh:
        reference_rows = [(row["scenario"], int(row["time"]), row["allocation"],
                           float(row["mass"])) for row in csv.DictReader(fh)]
    r, n = harness.correlate(model_rows, reference_rows)
    payload = {"pearson_r": r, "n_pairs": n}
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(payload, fh, sort_keys=True)
            fh.write("\n")
    print(f"r={r:.6f} over {n} matched points")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridkitchen")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a single episode")
    run.add_argument("--kitchen", required=True,
                     help="builtin map name or path to a map file")
    run.add_argument("--recipe", required=True)
    run.add_argument("--agents", required=True,
                     help="comma separated model kinds, e.g. bd,bd")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--max-steps", type=int, default=100)
    run.add_argument("--beta", type=float, default=1.3)
    run.add_argument("--trace", help="write a JSONL trace here")
    run.add_argument("--out", help="write a one-row results CSV here")
    run.set_defaults(func=_cmd_run)

    matrix = sub.add_parser("matrix", help="run an experiment grid")
    matrix.add_argument("--config", required=True, help="JSON matrix declaration")
    matrix.add_argument("--seeds", type=int, default=10)
    matrix.add_argument("--out", required=True)
    matrix.add_argument("--jobs", type=int, default=1)
    matrix.set_defaults(func=_cmd_matrix)

    correlate = sub.add_parser("correlate",
                               help="Pearson r of belief traces vs a reference")
    correlate.add_argument("--traces", required=True,
                           help="trace file or directory of .jsonl traces")
    correlate.add_argument("--reference", required=True,
                           help="CSV with scenario,time,allocation,mass")
    correlate.add_argument("--out", help="write {pearson_r, n_pairs} JSON here")
    correlate.set_defaults(func=_cmd_correlate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
