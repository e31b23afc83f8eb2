"""
NonSENS command line
Generate synthetic non-stationary data, discover causal direction, run benchmark sweeps.
"""
import argparse
import json
import logging
import os
import sys
from typing import Dict, List, Optional

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
from src.bench.experiments import ExperimentConfig, ExperimentMode, run_benchmark, summary_path
from src.bench.registry import DISCOVER_METHODS, run_method
from src.data.loader import DatasetLoader, export_dataset, read_truth_json
from src.data.simulator import MixingMode, ScaleScheme, SourceFamily, make_dataset
from src.engine.graph import Dag, dag_metrics
from src.errors import DatasetError, DimensionError, NonsensError, ParameterError

logger = logging.getLogger("nonsens")

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_METHOD_FAILED = 3

GEN_DEFAULTS = {
    "d": 2,
    "E": 10,
    "n_e": 512,
    "depth": 1,
    "seed": 0,
    "mode": MixingMode.ACYCLIC.value,
    "family": SourceFamily.LAPLACE_VARIANCE.value,
    "scheme": ScaleScheme.RANDOM.value,
    "edge_prob": None,
}


def _read_json_object(path: str) -> Dict:
    try:
        with open(path, encoding="utf-8") as handle:
            payload = json.load(handle)
    except FileNotFoundError:
        raise ParameterError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ParameterError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(payload, dict):
        raise ParameterError(f"config file {path} must hold a JSON object")
    return payload


def _emit(payload: Dict, out: Optional[str]):
    text = json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n"
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _experiment_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    return config.apply_overrides(_overrides(args))


def _overrides(args) -> Dict:
    overrides = {
        "alpha": args.alpha,
        "jobs": args.jobs,
        "tcl_depth": getattr(args, "tcl_depth", None),
        "epochs": getattr(args, "epochs", None),
        "hsic_method": getattr(args, "hsic_method", None),
        "permutations": getattr(args, "permutations", None),
    }
    return {k: v for k, v in overrides.items() if v is not None}


def cmd_gen(args) -> int:
    options = dict(GEN_DEFAULTS)
    if args.config:
        payload = _read_json_object(args.config)
        unknown = sorted(set(payload) - set(GEN_DEFAULTS))
        if unknown:
            raise ParameterError(f"unknown config keys: {', '.join(unknown)}")
        options.update(payload)
    flags = {"d": args.d, "E": args.segments, "n_e": args.samples, "depth": args.depth, "seed": args.seed,
             "mode": args.mode, "family": args.family, "scheme": args.scheme, "edge_prob": args.edge_prob}
    options.update({k: v for k, v in flags.items() if v is not None})

    data, truth = make_dataset(**options)
    paths = export_dataset(data, truth, args.out)
    logger.info("wrote %d rows to %s", data.n_tot, paths["csv"])
    return EXIT_OK


def cmd_discover(args) -> int:
    data = DatasetLoader.read_csv(args.dataset)
    config = _experiment_config(args)
    seed = args.seed if args.seed is not None else config.base_seed
    nonsens = config.nonsens_config(config.tcl_depth or 1, seed)
    baseline = config.baseline_config(seed)
    nonsens.assume_cause = baseline.assume_cause = args.assume_cause
    outcome = run_method(args.method, data, nonsens, baseline, jobs=config.jobs)
    payload = dict(outcome.payload)
    payload.update(dataset=args.dataset, seed=seed)
    _emit(payload, args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    config = _experiment_config(args)
    overrides = {"mode": args.mode, "seeds": args.seeds, "base_seed": args.seed, "output": args.out,
                 "methods": args.method or None}
    config = config.apply_overrides(overrides)
    results, summary = run_benchmark(config)
    sys.stdout.write(f"{len(results)} result rows -> {config.output}\n")
    sys.stdout.write(f"{len(summary)} summary rows -> {summary_path(config.output)}\n")
    return EXIT_OK


def cmd_metrics(args) -> int:
    estimated = Dag.from_dict(read_truth_json(args.estimated))
    truth = Dag.from_dict(read_truth_json(args.truth))
    metrics = dag_metrics(estimated, truth)
    _emit({"f1": metrics.f1, "hamming": metrics.hamming}, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nonsens", description="Causal discovery on non-stationary data")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic dataset and its ground truth")
    gen.add_argument("--config", help="JSON file with generation options")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--d", type=int)
    gen.add_argument("-E", "--segments", type=int)
    gen.add_argument("--samples", type=int, help="samples per segment")
    gen.add_argument("--depth", type=int)
    gen.add_argument("--mode", choices=[m.value for m in MixingMode])
    gen.add_argument("--family", choices=[f.value for f in SourceFamily])
    gen.add_argument("--scheme", choices=[s.value for s in ScaleScheme])
    gen.add_argument("--edge-prob", type=float)
    gen.add_argument("--out", required=True, help="output prefix for <out>.csv and <out>.truth.json")
    gen.set_defaults(handler=cmd_gen)

    discover = sub.add_parser("discover", help="run one method on a CSV dataset")
    discover.add_argument("dataset")
    discover.add_argument("--method", choices=DISCOVER_METHODS, default="nonsens")
    discover.add_argument("--config", help="JSON file with experiment options")
    discover.add_argument("--seed", type=int)
    discover.add_argument("--alpha", type=float)
    discover.add_argument("--jobs", type=int)
    discover.add_argument("--tcl-depth", type=int)
    discover.add_argument("--epochs", type=int)
    discover.add_argument("--hsic-method", choices=["permutation", "gamma"])
    discover.add_argument("--permutations", type=int)
    discover.add_argument("--assume-cause", action="store_true")
    discover.add_argument("--out", help="write the verdict JSON here instead of stdout")
    discover.set_defaults(handler=cmd_discover)

    bench = sub.add_parser("bench", help="run a benchmark sweep")
    bench.add_argument("--config", help="JSON file with experiment options")
    bench.add_argument("--mode", choices=[m.value for m in ExperimentMode])
    bench.add_argument("--method", action="append", help="repeat to run several methods")
    bench.add_argument("--seed", type=int, help="base seed")
    bench.add_argument("--seeds", type=int, help="trials per grid cell")
    bench.add_argument("--alpha", type=float)
    bench.add_argument("--jobs", type=int)
    bench.add_argument("--tcl-depth", type=int)
    bench.add_argument("--epochs", type=int)
    bench.add_argument("--hsic-method", choices=["permutation", "gamma"])
    bench.add_argument("--permutations", type=int)
    bench.add_argument("--out", help="results CSV; the summary goes next to it")
    bench.set_defaults(handler=cmd_bench)

    metrics = sub.add_parser("metrics", help="F1 and Hamming distance between two DAG JSON files")
    metrics.add_argument("--estimated", required=True)
    metrics.add_argument("--truth", required=True)
    metrics.add_argument("--out")
    metrics.set_defaults(handler=cmd_metrics)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.handler(args)
    except (DatasetError, ParameterError, DimensionError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_BAD_INPUT
    except NonsensError as exc:
        sys.stderr.write(f"method failed: {type(exc).__name__}: {exc}\n")
        return EXIT_METHOD_FAILED


if __name__ == "__main__":
    sys.exit(main())
