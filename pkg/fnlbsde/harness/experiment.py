"""Provides multi-run experiments, convergence studies and solution profiles.

Runs of one experiment share nothing mutable: each rebuilds its problem from the configuration and
draws from streams keyed by its own seed, so they may execute in worker processes. Set
`FNLBSDE_WORKERS` to the number of worker processes (default 1). Results are always assembled in
run order.
"""

import concurrent.futures
import dataclasses
import logging
import os
import time
from collections.abc import Sequence

import numpy as np
import pandas as pd

from fnlbsde.common import errors, types
from fnlbsde.harness import config as config_lib
from fnlbsde.harness import metrics
from fnlbsde.problems import base
from fnlbsde.scheme import log as log_lib
from fnlbsde.scheme import solver
from fnlbsde.sde import grid as grid_lib

_LOGGER = logging.getLogger(__name__)

_WORKERS_ENV_VAR = "FNLBSDE_WORKERS"

STUDY_COLUMNS = ("problem", "d", "N", "sigma_hat", "p", "m", "mean_u", "std_u", "ref_u", "rel_err", "mean_z",
                 "std_z", "runtime_s")


def error_kind(error: BaseException) -> str:
    """Names the failure category of an exception, as used for exit codes."""
    if isinstance(error, errors.TrainingDivergenceError):
        return "divergence"
    if isinstance(error, errors.SimulationBlowupError):
        return "blowup"
    if isinstance(error, errors.RiccatiAccuracyError):
        return "riccati"
    if isinstance(error, errors.ConfigurationError):
        return "configuration"
    return "error"


@dataclasses.dataclass(frozen=True)
class Setup:
    """The problem, grid and training protocol an experiment configuration resolves to."""
    problem: base.ProblemSpec
    time_grid: grid_lib.TimeGrid
    scheme: solver.SchemeConfig
    sigma_hat: float


def prepare(cfg: config_lib.RunConfig) -> Setup:
    """Resolves a configuration against the problem registry.

    Raises:
        ConfigurationError: If the problem overrides or the resulting sizes are invalid.
    """
    problem_config = cfg.problem_config()
    problem = problem_config.build()
    time_grid = grid_lib.make_time_grid(problem.maturity, cfg.steps)
    return Setup(problem=problem, time_grid=time_grid, scheme=cfg.scheme_config(problem_config, problem.dim),
                 sigma_hat=problem_config.sigma_hat)


@dataclasses.dataclass(frozen=True, eq=False)
class RunResult:
    """The estimates of one run at `(0, x0)`, or its failure."""
    run: int
    seed: int
    u: float
    z: types.Vector
    gamma00: float
    control: float | None
    """The first control coordinate, for problems that define a control."""
    runtime_s: float
    clamp_count: int
    log_frame: pd.DataFrame
    """The training records of the run."""
    error_kind: str | None = None
    error_message: str | None = None

    @property
    def failed(self) -> bool:
        return self.error_kind is not None


def _control(problem: base.ProblemSpec, triple: base.Triple) -> float | None:
    result = problem.control(0.0, problem.x0[None, :], triple.z[None, :], triple.gamma[None, :, :])
    if result is None:
        return None
    controls, _ = result
    return float(controls[0, 0])


def run_single(cfg: config_lib.RunConfig, run: int) -> RunResult:
    """Solves the problem once with the seed of run `run`.

    Library failures of the run are captured in the result rather than raised.
    """
    setup = prepare(cfg)
    problem = setup.problem
    seed = config_lib.run_seed(cfg.seed, run)
    training_log = log_lib.TrainingLog()
    start = time.perf_counter()
    try:
        solution = solver.solve_backward(problem, setup.time_grid, setup.scheme, seed, training_log=training_log)
    except errors.FnlBsdeError as error:
        _LOGGER.warning("Run %d (seed %d) failed: %s", run, seed, error)
        nan = float("nan")
        return RunResult(run=run, seed=seed, u=nan, z=np.full(problem.dim, np.nan), gamma00=nan, control=None,
                         runtime_s=time.perf_counter() - start, clamp_count=0, log_frame=training_log.to_frame(),
                         error_kind=error_kind(error), error_message=str(error))
    runtime = time.perf_counter() - start
    triple = solver.evaluate_solution(solution, 0, problem.x0)
    _LOGGER.info("Run %d (seed %d): u(0, x0) = %.6g in %.1fs", run, seed, triple.u, runtime)
    return RunResult(run=run, seed=seed, u=float(triple.u), z=np.asarray(triple.z), gamma00=float(triple.gamma[0, 0]),
                     control=_control(problem, triple), runtime_s=runtime, clamp_count=solution.clamp_count,
                     log_frame=training_log.to_frame())


@dataclasses.dataclass
class RunReport:
    """The runs of an experiment with their statistics and the reference values at `(0, x0)`."""
    config: config_lib.RunConfig
    problem: str
    dim: int
    steps: int
    sigma_hat: float
    quantile: float | None
    width: int
    results: list[RunResult]
    reference: base.Triple | None
    reference_control: float | None

    @property
    def succeeded(self) -> list[RunResult]:
        return [result for result in self.results if not result.failed]

    @property
    def failures(self) -> list[RunResult]:
        return [result for result in self.results if result.failed]

    @property
    def u(self) -> tuple[float, float]:
        """Mean and standard deviation of `u(0, x0)` over the successful runs."""
        mean, std = metrics.mean_and_std(values=np.array([result.u for result in self.succeeded]))
        return float(mean), float(std)

    @property
    def z(self) -> tuple[types.Vector, types.Vector]:
        values = np.array([result.z for result in self.succeeded]).reshape(-1, self.dim)
        return metrics.mean_and_std(values=values)

    @property
    def gamma00(self) -> tuple[float, float]:
        mean, std = metrics.mean_and_std(values=np.array([result.gamma00 for result in self.succeeded]))
        return float(mean), float(std)

    @property
    def control(self) -> tuple[float, float] | None:
        values = [result.control for result in self.succeeded if result.control is not None]
        if not values:
            return None
        mean, std = metrics.mean_and_std(values=np.array(values))
        return float(mean), float(std)

    @property
    def ref_u(self) -> float | None:
        return None if self.reference is None else float(self.reference.u[0])

    @property
    def ref_z(self) -> types.Vector | None:
        return None if self.reference is None else self.reference.z[0]

    @property
    def rel_err_u(self) -> float:
        return float(metrics.relative_error(estimate=self.u[0], reference=self.ref_u))

    @property
    def rel_err_z(self) -> types.Vector:
        return metrics.relative_error(estimate=self.z[0], reference=self.ref_z)

    @property
    def rel_err_control(self) -> float:
        if self.control is None:
            return float("nan")
        return float(metrics.relative_error(estimate=self.control[0], reference=self.reference_control))

    @property
    def runtime_s(self) -> float:
        return float(sum(result.runtime_s for result in self.results))

    def to_frame(self) -> pd.DataFrame:
        """One row per run followed by one row with `aggregate` set and the statistics.

        Empty cells mark values that do not apply: controls of problems without a control, the
        statistics on per-run rows and the estimates of failed runs.
        """
        rows = []
        for result in self.results:
            row = {"aggregate": False, "run": result.run, "seed": result.seed, "failed": result.failed,
                   "u": result.u, "gamma_00": result.gamma00, "control": result.control,
                   "runtime_s": result.runtime_s, "clamp_count": result.clamp_count}
            row.update({f"z_{k}": value for k, value in enumerate(result.z)})
            rows.append(row)
        mean_u, std_u = self.u
        mean_z, std_z = self.z
        control = self.control
        aggregate = {"aggregate": True, "failed": bool(self.failures), "u": mean_u, "std_u": std_u,
                     "ref_u": self.ref_u, "rel_err_u": self.rel_err_u, "gamma_00": self.gamma00[0],
                     "control": None if control is None else control[0],
                     "std_control": None if control is None else control[1],
                     "ref_control": self.reference_control, "rel_err_control": self.rel_err_control,
                     "runtime_s": self.runtime_s,
                     "clamp_count": sum(result.clamp_count for result in self.results)}
        for k in range(self.dim):
            aggregate[f"z_{k}"] = mean_z[k]
            aggregate[f"std_z_{k}"] = std_z[k]
            aggregate[f"ref_z_{k}"] = None if self.ref_z is None else self.ref_z[k]
        rows.append(aggregate)
        return pd.DataFrame(rows, columns=report_columns(self.dim))

    def training_frame(self) -> pd.DataFrame:
        """The training records of every run, with a leading `run` column."""
        frames = [result.log_frame.assign(run=result.run) for result in self.results]
        columns = ["run", *log_lib.COLUMNS]
        if not frames:
            return pd.DataFrame(columns=columns)
        return pd.concat(frames, ignore_index=True)[columns]


def report_columns(dim: int) -> list[str]:
    """The column order of `RunReport.to_frame` for dimension `dim`."""
    z_columns = [f"z_{k}" for k in range(dim)]
    return ["aggregate", "run", "seed", "failed", "u", "std_u", "ref_u", "rel_err_u", *z_columns,
            *[f"std_{name}" for name in z_columns], *[f"ref_{name}" for name in z_columns], "gamma_00",
            "control", "std_control", "ref_control", "rel_err_control", "runtime_s", "clamp_count"]


def workers_from_env() -> int:
    """Reads the worker count from `FNLBSDE_WORKERS`.

    Raises:
        ConfigurationError: If the variable is set but not a positive integer.
    """
    value = os.environ.get(_WORKERS_ENV_VAR, "1")
    try:
        workers = int(value)
    except ValueError as error:
        error_message = f"{_WORKERS_ENV_VAR} must be a positive integer, got {value!r}"
        raise errors.ConfigurationError(error_message) from error
    if workers < 1:
        error_message = f"{_WORKERS_ENV_VAR} must be a positive integer, got {value!r}"
        raise errors.ConfigurationError(error_message)
    return workers


def run_experiment(cfg: config_lib.RunConfig, *, workers: int | None = None) -> RunReport:
    """Runs `cfg.runs` independent backward solves and aggregates their estimates at `(0, x0)`.

    Args:
        cfg: The experiment configuration.
        workers: The number of worker processes; read from the environment when omitted.

    Returns:
        The `RunReport`. Failed runs are flagged in it and excluded from the statistics.

    Raises:
        ConfigurationError: If the configuration does not resolve to a valid problem.
        RiccatiAccuracyError: If the reference solution fails its accuracy check.
    """
    setup = prepare(cfg)
    problem = setup.problem
    reference = problem.reference(0.0, problem.x0[None, :])
    reference_control = None
    if reference is not None:
        reference_control = _control(problem, base.Triple(u=reference.u[0], z=reference.z[0],
                                                          gamma=reference.gamma[0]))
    workers = workers_from_env() if workers is None else workers
    _LOGGER.info("Experiment %s: d=%d, N=%d, %d runs on %d workers", problem.name, problem.dim, cfg.steps,
                 cfg.runs, workers)
    runs = range(cfg.runs)
    if workers > 1 and cfg.runs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(run_single, [cfg] * cfg.runs, runs))
    else:
        results = [run_single(cfg, run) for run in runs]
    return RunReport(config=cfg, problem=problem.name, dim=problem.dim, steps=cfg.steps, sigma_hat=setup.sigma_hat,
                     quantile=setup.scheme.quantile, width=setup.scheme.width, results=results,
                     reference=reference, reference_control=reference_control)


def study_row(report: RunReport) -> dict[str, object]:
    """Summarizes a report as one row of a convergence study; gradient statistics are taken on `z_0`."""
    mean_u, std_u = report.u
    mean_z, std_z = report.z
    return {"problem": report.problem, "d": report.dim, "N": report.steps, "sigma_hat": report.sigma_hat,
            "p": report.quantile, "m": report.width, "mean_u": mean_u, "std_u": std_u, "ref_u": report.ref_u,
            "rel_err": report.rel_err_u, "mean_z": float(mean_z[0]), "std_z": float(std_z[0]),
            "runtime_s": report.runtime_s}


def convergence_study(cfg: config_lib.RunConfig, steps: Sequence[int], sigma_hats: Sequence[float] | None = None,
                      *, workers: int | None = None) -> pd.DataFrame:
    """Runs one experiment per `(N, sigma_hat)` cell.

    Args:
        cfg: The base configuration.
        steps: The numbers N of time steps.
        sigma_hats: The training diffusion scales; the configured one when omitted.
        workers: The number of worker processes per experiment.

    Returns:
        A long-form frame with the columns `STUDY_COLUMNS`, one row per cell in `(N, sigma_hat)` order.

    Raises:
        ConfigurationError: If a list is empty.
    """
    sigma_hats = [cfg.sigma_hat] if sigma_hats is None else list(sigma_hats)
    if not steps or not sigma_hats:
        error_message = "A convergence study needs at least one N and one sigma_hat"
        raise errors.ConfigurationError(error_message)
    rows = []
    for num_steps in steps:
        for sigma_hat in sigma_hats:
            cell = dataclasses.replace(cfg, steps=num_steps, sigma_hat=sigma_hat)
            rows.append(study_row(run_experiment(cell, workers=workers)))
    return pd.DataFrame(rows, columns=list(STUDY_COLUMNS))


def profile(cfg: config_lib.RunConfig, step: int, offsets: Sequence[float],
            direction: types.Vector | None = None) -> pd.DataFrame:
    """Trains one run and samples the solution and the reference along a line through `x0`.

    Args:
        cfg: The configuration; the seed of run 0 is used.
        step: The time index to sample at.
        offsets: The positions `s` of the points `x0 + s * direction`.
        direction: The line direction; `1_d / sqrt(d)` when omitted.

    Returns:
        A frame with the columns of `solver.sample_solution`.
    """
    setup = prepare(cfg)
    problem = setup.problem
    if direction is None:
        direction = np.ones(problem.dim) / np.sqrt(problem.dim)
    solution = solver.solve_backward(problem, setup.time_grid, setup.scheme, config_lib.run_seed(cfg.seed, 0))
    points = problem.x0 + np.asarray(offsets, dtype=types.FLOAT_DTYPE)[:, None] * np.asarray(direction)
    return pd.DataFrame(solver.sample_solution(solution, step, points))
