"""Provides the command line interface.

    python -m fnlbsde.harness.cli solve --problem merton --steps 10 --runs 5 --out results/merton.csv
    python -m fnlbsde.harness.cli study --config configs/case1.cfg --grid-N 30,60,120 --grid-sigma 1,1.5
    python -m fnlbsde.harness.cli profile --config configs/monge-ampere.cfg --step 10 --out profile.csv
    python -m fnlbsde.harness.cli summary --log results/merton.log.csv --run 0

`solve` also writes the training records next to the report, as `<out stem>.log.csv`; `summary`
condenses such a file to one row per time step. Exit codes are 0 on success, 2 for configuration
errors, 3 for training divergence, 4 for simulation blowup, 5 for Riccati accuracy failures and 1
for any other library error. A failed run inside an experiment sets the exit code of its failure
after the report has been written.
"""

import argparse
import dataclasses
import logging
import pathlib
import sys
from collections.abc import Callable, Sequence

import dotenv
import numpy as np
import pandas as pd
import pydantic

from fnlbsde.common import errors
from fnlbsde.harness import config as config_lib
from fnlbsde.harness import csv_io, experiment

_LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CODES = {
    "error": 1,
    "configuration": 2,
    "divergence": 3,
    "blowup": 4,
    "riccati": 5,
}

_PROFILE_OFFSETS = tuple(np.linspace(-1.0, 1.0, 21))
_UNSET = object()


def _list_of(convert: Callable[[str], object]) -> Callable[[str], list]:
    def parse(text: str) -> list:
        try:
            return [convert(item) for item in text.split(",") if item.strip()]
        except ValueError as error:
            error_message = f"Expected a comma-separated list, got {text!r}"
            raise argparse.ArgumentTypeError(error_message) from error
    return parse


def _quantile(text: str) -> float | None:
    if text.strip().lower() == "none":
        return None
    try:
        return float(text)
    except ValueError as error:
        error_message = f"Expected a probability or 'none', got {text!r}"
        raise argparse.ArgumentTypeError(error_message) from error


def _parameter(text: str) -> tuple[str, float]:
    name, separator, value = text.partition("=")
    try:
        if not separator:
            raise ValueError(text)
        return name.strip(), float(value)
    except ValueError as error:
        error_message = f"Expected name=number, got {text!r}"
        raise argparse.ArgumentTypeError(error_message) from error


def _add_run_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=pathlib.Path, help="A key=value configuration file; flags override it.")
    parser.add_argument("--problem", help="The registered problem name.")
    parser.add_argument("--param", dest="parameters", type=_parameter, action="append", default=[],
                        metavar="NAME=VALUE", help="Overrides a problem parameter; may be repeated.")
    parser.add_argument("--dim", type=int, help="The dimension d.")
    parser.add_argument("--steps", type=int, help="The number N of time steps.")
    parser.add_argument("--maturity", type=float, help="The maturity T.")
    parser.add_argument("--sigma-hat", dest="sigma_hat", type=float, help="The training diffusion scale.")
    parser.add_argument("--quantile", type=_quantile, default=_UNSET, help="The truncation quantile p or 'none'.")
    parser.add_argument("--neurons", dest="width", type=int, help="The hidden layer width m.")
    parser.add_argument("--layers", dest="hidden_layers", type=int, help="The number of hidden layers.")
    parser.add_argument("--mode", choices=["explicit", "implicit"], help="The Hessian mode.")
    parser.add_argument("--runs", type=int, help="The number R of independent runs.")
    parser.add_argument("--seed", type=int, help="The master seed.")
    parser.add_argument("--scale", type=float, help="The training protocol scale; 1.0 is full scale.")
    parser.add_argument("--terminal-gradient", dest="terminal_gradient", choices=["analytic", "network"],
                        help="How the terminal gradient is obtained.")


_OVERRIDES = ("dim", "steps", "maturity", "sigma_hat", "width", "hidden_layers", "mode", "runs", "seed", "scale",
              "terminal_gradient")


def run_config(args: argparse.Namespace) -> config_lib.RunConfig:
    """Builds the experiment configuration from a configuration file and command line overrides.

    Raises:
        ConfigurationError: If neither a file nor a problem is given, or the file is invalid.
        pydantic.ValidationError: If an override is invalid.
    """
    if args.config is not None:
        cfg = config_lib.load_config(args.config)
    elif args.problem is not None:
        cfg = config_lib.RunConfig(problem=args.problem)
    else:
        error_message = "Either --config or --problem is required"
        raise errors.ConfigurationError(error_message)
    overrides: dict[str, object] = {name: getattr(args, name) for name in _OVERRIDES
                                    if getattr(args, name) is not None}
    if args.config is not None and args.problem is not None:
        overrides["problem"] = args.problem
    if args.quantile is not _UNSET:
        overrides["quantile"] = args.quantile
    if args.parameters:
        overrides["parameters"] = {**cfg.parameters, **dict(args.parameters)}
    return dataclasses.replace(cfg, **overrides)


def _print_frame(frame: pd.DataFrame) -> None:
    print(frame.to_string(index=False))  # noqa: T201


def _solve(args: argparse.Namespace) -> int:
    cfg = run_config(args)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, out=str(args.out))
    report = experiment.run_experiment(cfg)
    if cfg.out is not None:
        out = pathlib.Path(cfg.out)
        csv_io.emit_csv(report, out)
        csv_io.emit_csv(report.training_frame(), out.with_suffix(".log.csv"))
    _print_frame(report.to_frame().tail(1)[["u", "std_u", "ref_u", "rel_err_u", "runtime_s"]])
    if report.failures:
        first = report.failures[0]
        _LOGGER.error("%d of %d runs failed; first: %s", len(report.failures), len(report.results),
                      first.error_message)
        return EXIT_CODES[first.error_kind]
    return EXIT_OK


def _study(args: argparse.Namespace) -> int:
    cfg = config_lib.load_config(args.config)
    frame = experiment.convergence_study(cfg, args.grid_n, args.grid_sigma)
    if args.out is not None:
        csv_io.emit_csv(frame, args.out)
    _print_frame(frame)
    return EXIT_OK


def _profile(args: argparse.Namespace) -> int:
    cfg = run_config(args)
    frame = experiment.profile(cfg, args.step, args.offsets)
    if args.out is not None:
        csv_io.emit_csv(frame, args.out)
    else:
        _print_frame(frame)
    return EXIT_OK


def _summary(args: argparse.Namespace) -> int:
    training_log = csv_io.read_training_log(args.log, args.run)
    frame = training_log.summary()
    if args.out is not None:
        csv_io.emit_csv(frame, args.out)
    _print_frame(frame)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    """Builds the argument parser with the `solve`, `study`, `profile` and `summary` commands."""
    parser = argparse.ArgumentParser(prog="fnlbsde",
                                     description="Deep backward scheme for fully nonlinear PDEs.")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="The logging level.")
    commands = parser.add_subparsers(dest="command", required=True)

    solve = commands.add_parser("solve", help="Run R independent backward solves and report u(0, x0).")
    _add_run_arguments(solve)
    solve.add_argument("--out", type=pathlib.Path, help="The report CSV.")
    solve.set_defaults(handler=_solve)

    study = commands.add_parser("study", help="Run a convergence study over N and sigma_hat.")
    study.add_argument("--config", type=pathlib.Path, required=True, help="The base configuration file.")
    study.add_argument("--grid-N", dest="grid_n", type=_list_of(int), required=True, help="Comma-separated N values.")
    study.add_argument("--grid-sigma", dest="grid_sigma", type=_list_of(float),
                       help="Comma-separated sigma_hat values; the configured one when omitted.")
    study.add_argument("--out", type=pathlib.Path, help="The study CSV.")
    study.set_defaults(handler=_study)

    profile = commands.add_parser("profile", help="Sample one trained solution along a line through x0.")
    _add_run_arguments(profile)
    profile.add_argument("--step", type=int, default=0, help="The time index to sample at.")
    profile.add_argument("--offsets", type=_list_of(float), default=list(_PROFILE_OFFSETS),
                         help="Comma-separated positions along the line.")
    profile.add_argument("--out", type=pathlib.Path, help="The profile CSV.")
    profile.set_defaults(handler=_profile)

    summary = commands.add_parser("summary", help="Condense a training log written by solve to one row per step.")
    summary.add_argument("--log", type=pathlib.Path, required=True, help="The `.log.csv` file.")
    summary.add_argument("--run", type=int, help="The run to summarize; required for multi-run logs.")
    summary.add_argument("--out", type=pathlib.Path, help="The summary CSV.")
    summary.set_defaults(handler=_summary)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Runs the command line interface and returns its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as error:
        return EXIT_OK if error.code in (0, None) else EXIT_CODES["configuration"]
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    dotenv.load_dotenv(dotenv.find_dotenv(usecwd=True))
    try:
        return args.handler(args)
    except pydantic.ValidationError as error:
        _LOGGER.error("Invalid configuration: %s", error)
        return EXIT_CODES["configuration"]
    except errors.FnlBsdeError as error:
        _LOGGER.error("%s: %s", type(error).__name__, error)
        return EXIT_CODES[experiment.error_kind(error)]


if __name__ == "__main__":
    sys.exit(main())
