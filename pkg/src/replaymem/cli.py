import argparse
from collections.abc import Sequence
from dataclasses import replace
import json
from pathlib import Path
import sys
from typing import Any, NoReturn

from replaymem.__about__ import __version__
from replaymem.config import ExperimentConfig, dump_config, load_config
from replaymem.data import SyntheticSpec, generate_synthetic, load_tasks
from replaymem.errors import ConfigurationError, ReplayMemError
from replaymem.metrics import write_records_csv, write_records_jsonl
from replaymem.reporting import build_report
from replaymem.sweep import (
    RECORDS_CSV,
    RECORDS_JSONL,
    SweepPlan,
    parse_capacities,
    parse_orders,
    parse_policies,
    parse_seeds,
    run_sweep,
    write_outcomes,
)
from replaymem.trainer import run_experiment
from replaymem.utils.logger import ReplayLogger, get_logger, set_logger

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors with the configuration exit code."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="replaymem", description="Selective episodic memory and lifelong-learning harness")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log progress to stdout")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="Run one experiment")
    run.add_argument("--config", required=True, type=Path, help="Experiment config JSON")
    run.add_argument("--out", type=Path, help="Output directory (default: the config's output_dir)")
    run.add_argument("--seed", type=int, help="Override the config seed")
    run.add_argument("--policy", help="Override the config policy")
    run.add_argument("--capacity", type=float, help="Override the config capacity fraction")

    sweep = sub.add_parser("sweep", help="Run a cross-product of experiments")
    sweep.add_argument("--config", required=True, type=Path, help="Base experiment config JSON")
    sweep.add_argument("--capacities", default="0.1,0.3,0.5,0.7", help="Comma-separated capacity fractions")
    sweep.add_argument("--seeds", default="5", help="Seed count, or comma-separated seeds")
    sweep.add_argument("--policies", default="all", help="'all' or comma-separated policy names")
    sweep.add_argument("--orders", help="Comma-separated order names (default: the config's order)")
    sweep.add_argument("--jobs", type=int, help="Parallel workers (capped by REPLAYMEM_THREADS)")
    sweep.add_argument("--out", type=Path, help="Output directory (default: the config's output_dir)")

    gen = sub.add_parser("gen-data", help="Generate synthetic corpora, manifests and orders")
    gen.add_argument("--spec", type=Path, help="Synthetic spec JSON (default: the built-in 5-task stream)")
    gen.add_argument("--out", required=True, type=Path, help="Output directory")

    report = sub.add_parser("report", help="Summaries, composition/forgetting tables and SVG charts")
    report.add_argument("--in", dest="in_dir", type=Path, help="Directory with records from run or sweep")
    report.add_argument("--out", type=Path, help="Output directory")
    report.add_argument("--capacity", type=float, help="Capacity fraction for the summary table")
    report.add_argument("--no-charts", action="store_true", help="Skip SVG charts")
    report.add_argument("--print-config", action="store_true", help="Print the fully defaulted config and exit")
    report.add_argument("--config", type=Path, help="Config to print with --print-config")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    overrides: dict[str, Any] = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.capacity is not None:
        overrides["capacity_fraction"] = args.capacity
    if args.policy is not None:
        overrides["policy"] = replace(config.policy, name=args.policy)
    if overrides:
        config = replace(config, **overrides)
        config.validate()

    tasks = load_tasks(config.manifests, test_fraction=config.test_fraction, split_seed=config.seed)
    record = run_experiment(config, tasks)
    out = args.out or Path(config.output_dir)
    write_records_csv([record], out / RECORDS_CSV)
    write_records_jsonl([record], out / RECORDS_JSONL)
    dump_config(config, _ensure(out) / "config.json")
    get_logger().success(f"{record.run_id}: final average accuracy {record.final_average_accuracy():.4f} -> {out}")
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    plan = SweepPlan(
        capacities=parse_capacities(args.capacities),
        policies=parse_policies(args.policies),
        seeds=parse_seeds(args.seeds),
        orders=parse_orders(args.orders),
    )
    if args.jobs is not None and args.jobs < 1:
        raise ConfigurationError(f"--jobs must be >= 1, got {args.jobs}")
    outcomes = run_sweep(config, plan, n_jobs=args.jobs)
    out = args.out or Path(config.output_dir)
    write_outcomes(outcomes, out)
    dump_config(config, _ensure(out) / "config.json")
    failed = [o for o in outcomes if not o.success]
    for outcome in failed:
        print(f"run {outcome.run_id} failed: {outcome.error}", file=sys.stderr)
    return EXIT_RUNTIME if failed else EXIT_OK


def _cmd_gen_data(args: argparse.Namespace) -> int:
    if args.spec is None:
        spec = SyntheticSpec()
    else:
        try:
            data = json.loads(args.spec.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigurationError(f"synthetic spec not found: {args.spec}") from None
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{args.spec}: invalid JSON ({e})") from e
        spec = SyntheticSpec.from_dict(data)
    generate_synthetic(spec, args.out)
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    if args.print_config:
        config = load_config(args.config) if args.config is not None else ExperimentConfig()
        sys.stdout.write(dump_config(config))
        return EXIT_OK
    if args.in_dir is None or args.out is None:
        raise ConfigurationError("report needs --in and --out (or --print-config)")
    build_report(args.in_dir, args.out, capacity_fraction=args.capacity, charts=not args.no_charts)
    return EXIT_OK


def _ensure(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


_COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "gen-data": _cmd_gen_data,
    "report": _cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point of the ``replaymem`` command.

    Returns:
        0 on success, 1 on a configuration or usage error, 2 on a runtime failure
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        set_logger(ReplayLogger(enabled=True, level="INFO"))
    logger = get_logger()
    logger.debug(f"replaymem v{__version__}: {args.command}")

    try:
        return _COMMANDS[args.command](args)
    except ConfigurationError as e:
        parser.print_usage(sys.stderr)
        print(f"replaymem: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ReplayMemError as e:
        print(f"replaymem: error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:
        logger.error(f"unexpected failure: {e}")
        print(f"replaymem: unexpected error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
