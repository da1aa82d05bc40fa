"""Command-line interface for iwpairs.

Examples:
iwpairs catalog
iwpairs classify --config catalog:inverse-square
iwpairs solve --config catalog:delta --out results/
iwpairs verify --config example/data/delta_verify.toml --seed 7
iwpairs solve --config catalog:exp-natural --dump-config
"""

import argparse
import logging
import os
import sys
from typing import Any, List, Optional

from . import catalog
from .config import Config, dump_config, load_config
from .exceptions import InconclusiveError, IWPairsError, PreconditionError
from .tasks import TaskResult, TaskStatus, run_task
from .utils import format_table, write_table

logger = logging.getLogger(__name__)

TASK_COMMANDS = ["classify", "solve", "decompose", "transform", "verify"]

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INCONCLUSIVE = 2


def get_parser() -> argparse.ArgumentParser:
    """Create and configure the argument parser"""
    parser = argparse.ArgumentParser(
        prog="iwpairs",
        description="Potential theory of one-dimensional diffusions: boundary classes, "
        "Itô–Watanabe pairs, Choquet decompositions, path transformations and Monte Carlo checks",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  iwpairs catalog
  iwpairs classify --config catalog:inverse-square
  iwpairs solve --config catalog:delta --out results/
  iwpairs solve --config catalog:exp-natural --tol 1e-9
  iwpairs verify --config example/data/delta_verify.toml --seed 7
        """,
    )
    parser.add_argument(
        "command",
        choices=TASK_COMMANDS + ["catalog"],
        help="Task to run; 'catalog' lists the built-in diffusions, measures and configs",
    )
    parser.add_argument(
        "--config",
        help="Path to a TOML config, or catalog:<name> for a built-in config",
    )

    output_group = parser.add_argument_group("Output Options")
    output_group.add_argument(
        "--out",
        default=None,
        help="Directory for CSV tables (default: the config's [output] dir, else tables go to stdout)",
    )
    output_group.add_argument(
        "--precision",
        type=int,
        default=None,
        help="Significant digits of CSV numbers (default 17)",
    )
    output_group.add_argument(
        "--dump-config",
        action="store_true",
        help="Print the parsed config as TOML and exit",
    )
    output_group.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        default="WARNING",
        help="Set the logging level",
    )

    numeric_group = parser.add_argument_group("Numeric Options")
    numeric_group.add_argument(
        "--tol",
        type=float,
        default=None,
        help="Override the solver tolerance of every task",
    )
    numeric_group.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Override the Monte Carlo seed of every verify task",
    )
    return parser


def _with_overrides(task: Any, tol: Optional[float], seed: Optional[int]) -> Any:
    updates = {}
    if tol is not None and "tol" in type(task).model_fields:
        updates["tol"] = tol
    if seed is not None and task.kind == "verify":
        updates["simulation"] = task.simulation.model_copy(update={"seed": seed})
    return task.model_copy(update=updates) if updates else task


def _select(config: Config, command: str) -> List[Any]:
    tasks = [task for task in config.pipeline() if task.kind == command]
    if not tasks:
        kinds = ", ".join(task.kind for task in config.pipeline())
        raise PreconditionError(
            f"the config holds no {command} task (it holds: {kinds})",
            rule="the subcommand must match a task of the config",
        )
    return tasks


def _emit(result: TaskResult, name: str, out_dir: Optional[str], precision: int) -> None:
    print(result.report())
    for table in result.tables:
        if out_dir:
            path = write_table(os.path.join(out_dir, f"{name}_{table.name}.csv"), table.columns, table.rows, precision)
            print(f"wrote {path}")
        else:
            print(f"-- {name}_{table.name}.csv --")
            sys.stdout.write(format_table(table.columns, table.rows, precision))


def run(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the selected tasks and return the exit code."""
    parser = get_parser()
    args = parser.parse_args(argv)

    if args.command == "catalog":
        print("\n".join(catalog.listing()))
        return EXIT_OK
    if not args.config:
        parser.error(f"{args.command} needs --config")

    try:
        config = load_config(args.config)
        if args.dump_config:
            sys.stdout.write(dump_config(config))
            return EXIT_OK
        tasks = _select(config, args.command)
        out_dir = args.out if args.out is not None else config.output.dir
        precision = args.precision if args.precision is not None else config.output.precision
        spec = config.build_diffusion()
        status = TaskStatus.OK
        for index, task in enumerate(tasks):
            task = _with_overrides(task, args.tol, args.seed)
            result = run_task(task, config, spec)
            name = task.name or (task.kind if len(tasks) == 1 else f"{task.kind}{index + 1}")
            _emit(result, name, out_dir, precision)
            if result.status is TaskStatus.FLAGGED:
                status = TaskStatus.FLAGGED
        logger.info(f"{args.command} finished: {status.value}")
    except InconclusiveError as e:
        print(e.describe(), file=sys.stderr)
        for key, value in e.diagnostics.items():
            print(f"  {key}: {value}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except IWPairsError as e:
        print(e.describe(), file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, KeyError) as e:
        logger.error(f"Error running {args.command}: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point of the iwpairs console script."""
    parser = get_parser()
    known, _ = parser.parse_known_args(argv)
    logging.basicConfig(
        level=getattr(logging, known.log_level),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
