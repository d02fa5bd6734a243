"""Command line entry points.

Subcommands:

    train-ref  train a bundled reference network and write workload.json
    search     run the multi-species search from a run.json configuration
    oracle     enumerate a small search space and export the exact front
    eval       print the objectives of one bit configuration
    bench      validate the engine on an analytic benchmark problem

Exit codes: 0 success, 2 configuration error, 3 runtime failure. All
randomness flows from the seeds in the configuration (or the --seed flag).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .benchmarks import make_benchmark_engine_evaluator
from .dataset import make_blobs_dataset
from .direct import make_direct_species
from .engine import EngineConfig, run_search
from .harness import (
    RunConfig,
    execute_run,
    exhaustive_oracle,
    resolve_workload,
    write_run_outputs,
)
from .workload import calibrate, evaluate_objectives, save_workload, train_reference

__all__ = ["main"]


class ConfigError(Exception):
    """Bad user input: malformed files, unknown names, invalid values."""


def _cmd_train_ref(args) -> int:
    dataset = make_blobs_dataset()
    if args.arch not in ("tiny", "small"):
        raise ConfigError(f"unknown architecture {args.arch!r}; choose tiny or small")
    workload = train_reference(args.arch, dataset, rng=np.random.default_rng(args.seed))
    workload.metadata["training_seed"] = args.seed
    save_workload(workload, args.out)
    print(
        json.dumps(
            {
                "out": str(args.out),
                "arch": args.arch,
                "val_accuracy": workload.metadata["val_accuracy"],
                "quantizers": workload.quantizer_count,
            }
        )
    )
    return 0


def _cmd_search(args) -> int:
    try:
        config = RunConfig.load(args.config)
    except FileNotFoundError:
        raise ConfigError(f"run configuration {args.config!r} not found") from None
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid run configuration {args.config!r}: {exc}") from None
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.threads is not None:
        config = replace(config, threads=args.threads)
    prepared, result = execute_run(config)
    paths = write_run_outputs(prepared, result, args.out_dir)
    print(
        json.dumps(
            {
                "archive_size": len(result.archive),
                "total_evaluations": result.total_evaluations,
                "outputs": {k: str(v) for k, v in paths.items()},
            }
        )
    )
    return 0


def _parse_bits(text: str) -> tuple[int, ...]:
    try:
        bits = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise ConfigError(f"could not parse bit set {text!r}") from None
    if len(bits) < 2 or any(b2 <= b1 for b1, b2 in zip(bits, bits[1:])):
        raise ConfigError("bit set must be ascending with at least two entries")
    return bits


def _cmd_oracle(args) -> int:
    bits = _parse_bits(args.bits)
    workload, dataset = resolve_workload(args.workload)
    workload = calibrate(workload, dataset.calib_x)
    try:
        report = exhaustive_oracle(
            workload,
            bits,
            dataset.eval_x,
            dataset.eval_y,
            top_k=args.top_k,
            threads=args.threads,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    report.write_csv(args.out)
    print(json.dumps({"out": str(args.out), "front_size": len(report.rows)}))
    return 0


def _cmd_eval(args) -> int:
    workload, dataset = resolve_workload(args.workload)
    workload = calibrate(workload, dataset.calib_x)
    try:
        bits = json.loads(Path(args.bit_config).read_text())
    except FileNotFoundError:
        raise ConfigError(f"bit configuration {args.bit_config!r} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid bit configuration file: {exc}") from None
    if not isinstance(bits, list) or not all(isinstance(b, int) for b in bits):
        raise ConfigError("bit configuration must be a JSON array of integers")
    try:
        vec = evaluate_objectives(
            workload, bits, dataset.eval_x, dataset.eval_y, top_k=args.top_k
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(
        json.dumps(
            {
                "one_minus_topk": vec[0],
                "topk_accuracy": 1.0 - vec[0],
                "model_ratio": vec[1],
                "bitops_ratio": vec[2],
            }
        )
    )
    return 0


def _cmd_bench(args) -> int:
    try:
        evaluator, n_objectives = make_benchmark_engine_evaluator(args.problem)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    species = [
        make_direct_species("continuous", args.n_var, "nearest"),
        make_direct_species("floor", args.n_var, "floor"),
    ]
    config = EngineConfig(
        max_generations=args.generations,
        population_size=args.population,
        min_species_size=max(1, args.population // (2 * len(species))),
        n_objectives=n_objectives,
        seed=args.seed,
    )
    result = run_search(config, species, evaluator)
    matrix = result.archive.objective_matrix()
    summary = {
        "problem": args.problem,
        "generations": args.generations,
        "archive_size": len(result.archive),
        "total_evaluations": result.total_evaluations,
    }
    if args.problem == "dtlz2-3d":
        summary["mean_front_distance"] = float(np.mean(np.abs(np.sum(matrix**2, axis=1) - 1.0)))
    print(json.dumps(summary))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evoquant",
        description="Multi-species evolutionary search for mixed-precision quantization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-ref", help="train a reference network")
    p.add_argument("--arch", required=True, help="tiny or small")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output workload.json path")
    p.set_defaults(handler=_cmd_train_ref)

    p = sub.add_parser("search", help="run the multi-species search")
    p.add_argument("--config", required=True, help="run.json path")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the configured seed")
    p.add_argument("--threads", type=int, default=None, help="override the thread count")
    p.set_defaults(handler=_cmd_search)

    p = sub.add_parser("oracle", help="enumerate a small space exhaustively")
    p.add_argument("--workload", required=True, help="tiny, small, or a workload.json path")
    p.add_argument("--bits", required=True, help="comma-separated bit set, e.g. 2,4,8")
    p.add_argument("--top-k", type=int, default=1)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(handler=_cmd_oracle)

    p = sub.add_parser("eval", help="evaluate one bit configuration")
    p.add_argument("--workload", required=True)
    p.add_argument("--bit-config", required=True, help="JSON array of bit widths")
    p.add_argument("--top-k", type=int, default=1)
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("bench", help="engine-only validation on an analytic problem")
    p.add_argument("--problem", required=True, help="sphere-2d or dtlz2-3d")
    p.add_argument("--generations", type=int, default=100)
    p.add_argument("--population", type=int, default=50)
    p.add_argument("--n-var", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
