"""Command-line interface: train, sweep, validate, fdm and eval.

Exit codes: 0 success, 1 usage or configuration error, 2 numeric failure
(non-finite values, solver failure, aborted training), 3 failed validation.
"""

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Optional, Sequence

import numpy as np

from .checks import CHECKS, assert_all_passed, format_report, run_checks
from .config import ConfigSchema, ExperimentConfig, build_config, load_config, resolve_problem
from .constants import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, OUTPUT_DIR_ENV
from .exceptions import (
    CheckFailed,
    ConfigurationError,
    FieldError,
    NumericError,
    SolverError,
    TrainingAborted,
)
from .fdm import GridField, fdm_solve, interpolate, relative_error
from .network import MscaleNetwork, load_checkpoint
from .problems import PROBLEM_NAME
from .reporting import (
    PointwiseError,
    RunRecord,
    sweep_row,
    write_pointwise_csv,
    write_run_artifacts,
    write_summary,
    write_sweep_csv,
)
from .trainer import (
    build_reference_set,
    check_compatible,
    evaluation_points,
    predict,
    relative_l2,
    train,
)

logger = logging.getLogger("fmpinn")

SWEEP_AXES = ("epsilon", "beta", "method")

# Command-line flags mapped to configuration keys.
FLAG_KEYS = {
    "problem": "problem.name",
    "problem_file": "problem.file",
    "method": "training.method",
    "epochs": "training.epochs",
    "seed": "training.seed",
    "beta": "training.beta",
    "gamma0": "training.gamma0",
    "lr0": "training.lr0",
    "eval_every": "training.eval_every",
    "n_interior": "training.n_interior",
    "n_boundary": "training.n_boundary",
}


class UsageArgumentParser(argparse.ArgumentParser):
    """Argument parser exiting with the usage exit code on bad arguments."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_experiment_arguments(parser):
    parser.add_argument("--config", help="INI config file or a run summary.json")
    parser.add_argument("--problem", help="Problem name, e.g. ex1_eps0.1")
    parser.add_argument("--problem-file", help="INI file defining a custom problem")
    parser.add_argument("--method", help="fmpinn or mpinn")
    parser.add_argument("--epochs", help="Epoch budget")
    parser.add_argument("--seed", help="Seed of initialization and sampling")
    parser.add_argument("--beta", help="Flux weight")
    parser.add_argument("--gamma0", help="Base boundary penalty")
    parser.add_argument("--lr0", help="Initial learning rate")
    parser.add_argument("--eval-every", help="Epochs between evaluations")
    parser.add_argument("--n-interior", help="Interior points per epoch")
    parser.add_argument("--n-boundary", help="Boundary points per epoch")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="Override a configuration entry; may be repeated",
    )
    parser.add_argument("--output", help=f"Artifact directory (overrides ${OUTPUT_DIR_ENV})")


def build_parser() -> argparse.ArgumentParser:
    parser = UsageArgumentParser(
        prog="fmpinn", description="Fourier-feature mixed PINN for multi-scale elliptic problems."
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG logging"
    )
    commands = parser.add_subparsers(dest="command", parser_class=UsageArgumentParser)

    train_parser = commands.add_parser(
        "train",
        help="Train one model and write its artifacts",
        epilog=ConfigSchema().description,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _add_experiment_arguments(train_parser)

    sweep_parser = commands.add_parser("sweep", help="Compare runs over epsilon, beta or method")
    _add_experiment_arguments(sweep_parser)
    sweep_parser.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sweep_parser.add_argument("--values", required=True, help="Comma separated values")
    sweep_parser.add_argument("--jobs", type=int, default=1, help="Concurrent runs")

    validate_parser = commands.add_parser("validate", help="Run the fast self-checks")
    validate_parser.add_argument(
        "--check", action="append", choices=sorted(CHECKS), help="Run only this check"
    )

    fdm_parser = commands.add_parser("fdm", help="Solve a problem with finite differences")
    fdm_parser.add_argument("--problem", help="Problem name")
    fdm_parser.add_argument("--problem-file", help="INI file defining a custom problem")
    fdm_parser.add_argument("--h", type=float, help="Mesh size; the problem default if omitted")
    fdm_parser.add_argument("--method", default="auto", choices=("auto", "cg", "direct"))
    fdm_parser.add_argument("--allow-underresolved", action="store_true")
    fdm_parser.add_argument("--output", help="Directory for grid.bin and grid.csv")

    eval_parser = commands.add_parser("eval", help="REL of a checkpoint against a reference")
    eval_parser.add_argument("checkpoint", help="Checkpoint file")
    eval_parser.add_argument("--problem", help="Problem name")
    eval_parser.add_argument("--problem-file", help="INI file defining a custom problem")
    eval_parser.add_argument("--reference", help="Grid field file used as reference")
    eval_parser.add_argument("--output", help="Directory for the pointwise error CSV")
    return parser


def _flags(args) -> dict:
    return {key: getattr(args, name, None) for name, key in FLAG_KEYS.items()}


def experiment_config(args) -> ExperimentConfig:
    """Config file plus '--set' overrides plus flags."""
    return load_config(args.config, args.overrides, _flags(args))


def run_experiment(config: ExperimentConfig, output_dir: str) -> RunRecord:
    """Train one configuration and write run.csv, pointwise.csv, summary.json.

    Partial artifacts are written when training aborts.
    """
    problem = config.problem()
    os.makedirs(output_dir, exist_ok=True)
    try:
        _, record = train(
            problem,
            config.network,
            config.training,
            output_dir=output_dir,
            config_hash=config.config_hash(),
            config_echo=config.to_dict(),
        )
    except TrainingAborted as err:
        if err.record is not None:
            write_run_artifacts(output_dir, err.record)
        raise
    if not config.output.get("pointwise", True):
        record.pointwise = None
    write_run_artifacts(output_dir, record)
    return record


def cmd_train(args) -> int:
    config = experiment_config(args)
    output_dir = args.output or config.output_dir()
    record = run_experiment(config, output_dir)
    rel = "-" if record.final_rel is None else f"{record.final_rel:.6e}"
    print(f"{record.problem} {record.method}: final REL {rel}")
    print(f"artifacts in {output_dir}")
    return EXIT_OK


def sweep_configs(base: ExperimentConfig, axis: str, values: Sequence[str]):
    """One (value, config) pair per swept value."""
    if len(values) < 2:
        raise ConfigurationError("A sweep needs at least two values")
    configs = []
    for value in values:
        if axis == "beta":
            configs.append((value, base.with_override("training.beta", value)))
        elif axis == "method":
            configs.append((value, base.with_override("training.method", value)))
        else:
            match = PROBLEM_NAME.match(base.problem_name)
            if match is None:
                raise ConfigurationError(
                    f"Epsilon sweeps need a catalog problem, got '{base.problem_name}'"
                )
            name = f"{match.group('prefix')}_eps{value}"
            configs.append((value, base.with_override("problem.name", name)))
    return configs


def _sweep_task(task):
    axis, value, data, output_dir = task
    try:
        config = build_config(data)
        return sweep_row(axis, value, run_experiment(config, output_dir))
    except (FieldError, ConfigurationError, NumericError, SolverError) as err:
        logger.error("Sweep run %s=%s failed: %s", axis, value, err)
        problem = data["problem"]["name"]
        return sweep_row(axis, value, error=err, problem=problem, method=data["training"]["method"])


def cmd_sweep(args) -> int:
    base = experiment_config(args)
    output_dir = args.output or base.output_dir()
    values = [value.strip() for value in args.values.split(",") if value.strip()]
    tasks = [
        (args.axis, value, config.to_dict(), os.path.join(output_dir, f"{args.axis}_{value}"))
        for value, config in sweep_configs(base, args.axis, values)
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_task, tasks))
    else:
        rows = [_sweep_task(task) for task in tasks]
    os.makedirs(output_dir, exist_ok=True)
    path = write_sweep_csv(os.path.join(output_dir, f"sweep_{args.axis}.csv"), rows)
    for row in rows:
        rel = "-" if row["final_rel"] is None else f"{row['final_rel']:.6e}"
        print(f"{args.axis}={row['value']}: {row['status']} REL {rel}")
    print(f"table written to {path}")
    return EXIT_OK if all(row["status"] == "ok" for row in rows) else EXIT_NUMERIC


def cmd_validate(args) -> int:
    results = run_checks(args.check)
    print(format_report(results))
    assert_all_passed(results)
    return EXIT_OK


def _problem(args):
    if not args.problem and not args.problem_file:
        raise FieldError("Value required for 'problem.name'", "problem.name")
    return resolve_problem(args.problem, args.problem_file)


def cmd_fdm(args) -> int:
    problem = _problem(args)
    h = args.h or problem.reference_h
    if h is None:
        raise ConfigurationError(f"No mesh size given and '{problem.name}' has no default")
    grid = fdm_solve(
        problem, h, method=args.method, allow_underresolved=args.allow_underresolved
    )
    print(f"{problem.name}: {grid.values.size} nodes, h={h:g}")
    if problem.has_exact:
        print(f"REL against the exact solution {relative_error(problem, grid):.6e}")
    if args.output:
        os.makedirs(args.output, exist_ok=True)
        grid.save(os.path.join(args.output, "grid.bin"))
        pinned = problem.evaluation_set.pinned if problem.dim == 3 else None
        grid.write_csv(os.path.join(args.output, "grid.csv"), pinned)
        print(f"grid written to {args.output}")
    return EXIT_OK


def cmd_eval(args) -> int:
    params, net_config = load_checkpoint(args.checkpoint)
    problem = _problem(args)
    method = "fmpinn" if net_config.dim_out == problem.dim + 1 else "mpinn"
    check_compatible(problem, net_config, method)
    if args.reference:
        points = evaluation_points(problem)
        reference = interpolate(GridField.load(args.reference), points)
    else:
        points, reference, _ = build_reference_set(problem)
    prediction = predict(MscaleNetwork(net_config), params, points)
    rel = relative_l2(prediction, reference)
    print(f"{problem.name}: REL {rel:.6e}")
    if args.output:
        os.makedirs(args.output, exist_ok=True)
        record = RunRecord(problem=problem.name, method=method, seed=0, status="ok")
        record.config = {"checkpoint": args.checkpoint, "rel": rel}
        record.pointwise = PointwiseError(
            points, prediction, reference, np.abs(prediction - reference)
        )
        write_pointwise_csv(os.path.join(args.output, "pointwise.csv"), record)
        write_summary(os.path.join(args.output, "eval.json"), record)
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "sweep": cmd_sweep,
    "validate": cmd_validate,
    "fdm": cmd_fdm,
    "eval": cmd_eval,
}


def configure_logging(verbosity: int):
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("fmpinn").setLevel(level)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the `fmpinn` command; returns the exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (FieldError, ConfigurationError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except CheckFailed as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericError, SolverError) as err:
        print(f"error: {err}", file=sys.stderr)
        if isinstance(err, TrainingAborted) and err.checkpoint:
            print(f"last finite parameters in {err.checkpoint}", file=sys.stderr)
        return EXIT_NUMERIC
