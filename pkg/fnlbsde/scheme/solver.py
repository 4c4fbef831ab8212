"""Provides the backward training driver: terminal fit, per-step losses and solution evaluation.

Each time index i owns one network with `1 + d` outputs `(U_i, Z_i)`. Networks are trained from
`t_N` down to `t_0`, each warm-started from the one trained after it. In explicit mode the Hessian
entering the step loss is the (frozen) Jacobian of the next gradient network at the truncated next
state; in implicit mode it is the Jacobian of the network being trained at the truncated current
state, and the first time index optimizes free variables `(Y_0, Z_0)` instead of a network.
"""

import dataclasses
import logging
from typing import Literal, Protocol

import numpy as np
import pydantic
from pydantic import dataclasses as pydantic_dataclasses

from fnlbsde.common import errors, rng, types
from fnlbsde.nn import mlp, optim
from fnlbsde.problems import base
from fnlbsde.scheme import driver
from fnlbsde.scheme import log as log_lib
from fnlbsde.sde import grid as grid_lib
from fnlbsde.sde import paths, truncation

_LOGGER = logging.getLogger(__name__)

_GRADIENT_HEAD = slice(1, None)
_TERMINAL_FIT_TRAIN = 0
_TERMINAL_FIT_VALIDATION = 1


@pydantic_dataclasses.dataclass(kw_only=True)
class SchemeConfig:
    """Training protocol of a backward run.

    The defaults reproduce the full protocol; `scale` multiplies the outer-iteration counts and
    the batch sizes for shorter desk runs.
    """
    mode: types.Mode = "explicit"
    batch_size: pydantic.PositiveInt = 1000
    validation_size: pydantic.PositiveInt = 10_000
    inner_iterations: pydantic.PositiveInt = 40
    """Adam steps between two validation checks."""
    terminal_outer_iterations: pydantic.PositiveInt = 200
    step_outer_iterations: pydantic.PositiveInt = 100
    terminal_learning_rate: pydantic.PositiveFloat = 1e-2
    step_learning_rate: pydantic.PositiveFloat = 1e-3
    quantile: float | None = None
    """The truncation quantile p, or None for no truncation."""
    width: pydantic.PositiveInt = 20
    hidden_layers: pydantic.PositiveInt = 2
    scale: pydantic.PositiveFloat = 1.0
    terminal_gradient: Literal["analytic", "network"] = "analytic"
    """Where `Dg` comes from: the problem, or the input Jacobian of a network fitted to `g`."""
    lr_window: pydantic.PositiveInt = 10
    lr_threshold: pydantic.PositiveFloat = 0.05

    @pydantic.field_validator("quantile")
    @classmethod
    def _check_quantile(cls, value: float | None) -> float | None:
        if value is not None and not 0.0 < value < 1.0:
            error_message = f"The truncation quantile must lie in (0, 1), got {value}"
            raise ValueError(error_message)
        return value

    def scaled(self, count: int) -> int:
        return max(1, round(count * self.scale))

    @property
    def train_batch(self) -> int:
        return self.scaled(self.batch_size)

    @property
    def validation_batch(self) -> int:
        return self.scaled(self.validation_size)

    @property
    def num_layers(self) -> int:
        """The number L of affine maps."""
        return self.hidden_layers + 1


@dataclasses.dataclass(frozen=True)
class StepSummary:
    """Diagnostics of one time-step optimization."""
    step: int
    initial_validation_loss: float
    """The validation loss of the warm-started parameters, before any update."""
    final_validation_loss: float
    final_learning_rate: float
    halvings: int
    clamp_count: int


@dataclasses.dataclass
class SchemeSolution:
    """The trained networks of every time index and the diagnostics of their training."""
    problem: base.ProblemSpec
    time_grid: grid_lib.TimeGrid
    config: SchemeConfig
    networks: list[mlp.MLP]
    """One network per time index 0, ..., N."""
    summaries: list[StepSummary]
    """One summary per time index, ordered by index."""
    log: log_lib.TrainingLog
    hessian_overrides: dict[int, types.Matrix] = dataclasses.field(default_factory=dict)
    """Hessian estimates replacing the network Jacobian at some indices (implicit first step)."""

    @property
    def num_steps(self) -> int:
        return self.time_grid.num_steps

    @property
    def clamp_count(self) -> int:
        return sum(summary.clamp_count for summary in self.summaries)


class _Objective(Protocol):
    """A training problem: stochastic gradients on fresh batches and a fixed validation loss."""

    def gradient(self, params: types.Array, iteration: int) -> tuple[float, types.Array, int]:
        """Returns the batch loss, its gradient w.r.t. `params` and the clamp count."""
        raise NotImplementedError

    def validate(self, params: types.Array) -> tuple[float, int]:
        """Returns the validation loss and the clamp count."""
        raise NotImplementedError


def _optimize(objective: _Objective, params: types.Array, *, step: int, outer_iterations: int,
              learning_rate: float, config: SchemeConfig,
              training_log: log_lib.TrainingLog | None) -> StepSummary:
    """Runs the outer/inner Adam loop on `params` in place, with one validation check per outer iteration.

    Raises:
        TrainingDivergenceError: If a loss, gradient or parameter becomes non-finite.
    """
    state = optim.AdamState.fresh(params.size, learning_rate)
    controller = optim.LRController(window=config.lr_window, threshold=config.lr_threshold)
    initial_loss, total_clamped = objective.validate(params)
    loss = initial_loss
    halvings = 0
    for outer in range(outer_iterations):
        clamped = 0
        iteration = outer * config.inner_iterations
        try:
            for inner in range(config.inner_iterations):
                iteration = outer * config.inner_iterations + inner
                _, gradient, batch_clamped = objective.gradient(params, iteration)
                clamped += batch_clamped
                optim.adam_step(state, params, gradient)
            loss, validation_clamped = objective.validate(params)
        except errors.TrainingDivergenceError as error:
            raise errors.TrainingDivergenceError(error.reason, step=step, iteration=iteration) from error
        if not np.isfinite(loss):
            error_message = "Non-finite validation loss"
            raise errors.TrainingDivergenceError(error_message, step=step, iteration=iteration)
        clamped += validation_clamped
        total_clamped += clamped
        if optim.lr_update(controller, state, loss):
            halvings += 1
            _LOGGER.info("Step %d: learning rate halved to %.3g after outer iteration %d",
                         step, state.learning_rate, outer)
        if training_log is not None:
            training_log.append(log_lib.TrainingRecord(step=step, outer=outer, validation_loss=loss,
                                                       learning_rate=state.learning_rate, clamp_count=clamped))
    return StepSummary(step=step, initial_validation_loss=initial_loss, final_validation_loss=loss,
                       final_learning_rate=state.learning_rate, halvings=halvings, clamp_count=total_clamped)


def _terminal_states(problem: base.ProblemSpec, time_grid: grid_lib.TimeGrid, batch_size: int,
                     generator: np.random.Generator) -> types.Matrix:
    return paths.simulate_paths(problem, time_grid, batch_size, generator).states[:, -1]


def _squared_error(target: types.Vector) -> mlp.OutputLoss:
    def loss(output: types.Array) -> tuple[float, types.Array]:
        residual = output[:, 0] - target
        return float(np.mean(residual**2)), (2.0 * residual / len(residual))[:, None]
    return loss


class _TerminalValueFit:
    """`E|G(X_{t_N}) - g(X_{t_N})|^2` for a network G with one output."""

    def __init__(self, problem: base.ProblemSpec, time_grid: grid_lib.TimeGrid, config: SchemeConfig,
                 seed: int, net: mlp.MLP) -> None:
        self._problem = problem
        self._time_grid = time_grid
        self._config = config
        self._seed = seed
        self._net = net
        generator = rng.stream(seed, rng.Purpose.TERMINAL_FIT, _TERMINAL_FIT_VALIDATION)
        self._validation_x = _terminal_states(problem, time_grid, config.validation_batch, generator)
        self._validation_g = problem.terminal(self._validation_x)

    def gradient(self, params: types.Array, iteration: int) -> tuple[float, types.Array, int]:
        generator = rng.stream(self._seed, rng.Purpose.TERMINAL_FIT, _TERMINAL_FIT_TRAIN, iteration)
        x = _terminal_states(self._problem, self._time_grid, self._config.train_batch, generator)
        value, gradient = mlp.loss_param_grad(self._net, x, _squared_error(self._problem.terminal(x)))
        return value, gradient, 0

    def validate(self, params: types.Array) -> tuple[float, int]:
        value, _ = _squared_error(self._validation_g)(self._net(self._validation_x))
        return value, 0


def fit_terminal_function(problem: base.ProblemSpec, time_grid: grid_lib.TimeGrid, config: SchemeConfig,
                          seed: int) -> mlp.MLP:
    """Fits a network with one output to the terminal condition `g` at `X_{t_N}`.

    Its input Jacobian serves as `Dg` when the problem's analytic gradient is not used.

    Raises:
        TrainingDivergenceError: If the fit diverges.
    """
    net = mlp.init(problem.dim, 1, config.num_layers, config.width, seed)
    objective = _TerminalValueFit(problem, time_grid, config, seed, net)
    summary = _optimize(objective, net.params, step=time_grid.num_steps,
                        outer_iterations=config.scaled(config.terminal_outer_iterations),
                        learning_rate=config.terminal_learning_rate, config=config, training_log=None)
    _LOGGER.info("Fitted g with validation loss %.6g", summary.final_validation_loss)
    return net


class _TerminalObjective:
    """`E|U_N - g|^2 + dt_{N-1} / d E|Z_N - Dg|^2` at `X_{t_N}`."""

    def __init__(self, problem: base.ProblemSpec, time_grid: grid_lib.TimeGrid, config: SchemeConfig,
                 seed: int, net: mlp.MLP, gradient_fit: mlp.MLP | None) -> None:
        self._problem = problem
        self._time_grid = time_grid
        self._config = config
        self._seed = seed
        self._net = net
        self._gradient_fit = gradient_fit
        self.weight = float(time_grid.increments[-1]) / problem.dim
        generator = rng.stream(seed, rng.Purpose.VALIDATION, time_grid.num_steps)
        x = _terminal_states(problem, time_grid, config.validation_batch, generator)
        self._validation = (x, *self._targets(x))

    def _targets(self, x: types.Matrix) -> tuple[types.Vector, types.Matrix]:
        if self._gradient_fit is None:
            gradient = self._problem.terminal_gradient(x)
        else:
            gradient = self._gradient_fit.input_jacobian(x)[:, 0, :]
        return self._problem.terminal(x), gradient

    def _loss(self, g: types.Vector, dg: types.Matrix) -> mlp.OutputLoss:
        weight = self.weight

        def loss(output: types.Array) -> tuple[float, types.Array]:
            value_residual = output[:, 0] - g
            gradient_residual = output[:, 1:] - dg
            batch = len(g)
            value = np.mean(value_residual**2) + weight * np.mean(np.sum(gradient_residual**2, axis=1))
            output_bar = np.empty_like(output)
            output_bar[:, 0] = 2.0 * value_residual / batch
            output_bar[:, 1:] = 2.0 * weight * gradient_residual / batch
            return float(value), output_bar
        return loss

    def gradient(self, params: types.Array, iteration: int) -> tuple[float, types.Array, int]:
        generator = rng.stream(self._seed, rng.Purpose.TRAIN, self._time_grid.num_steps, iteration)
        x = _terminal_states(self._problem, self._time_grid, self._config.train_batch, generator)
        value, gradient = mlp.loss_param_grad(self._net, x, self._loss(*self._targets(x)))
        return value, gradient, 0

    def validate(self, params: types.Array) -> tuple[float, int]:
        x, g, dg = self._validation
        value, _ = self._loss(g, dg)(self._net(x))
        return value, 0


def train_terminal(problem: base.ProblemSpec, time_grid: grid_lib.TimeGrid, config: SchemeConfig, seed: int,
                   *, training_log: log_lib.TrainingLog | None = None) -> tuple[mlp.MLP, StepSummary]:
    """Trains the network of the last time index on the terminal condition.

    Args:
        problem: The problem.
        time_grid: The time grid.
        config: The training protocol.
        seed: The run seed.
        training_log: Receives one record per outer iteration.

    Returns:
        The trained network and its training summary.

    Raises:
        TrainingDivergenceError: If the training diverges.
    """
    gradient_fit = None
    if config.terminal_gradient == "network":
        gradient_fit = fit_terminal_function(problem, time_grid, config, seed)
    net = mlp.init(problem.dim, 1 + problem.dim, config.num_layers, config.width, seed)
    objective = _TerminalObjective(problem, time_grid, config, seed, net, gradient_fit)
    summary = _optimize(objective, net.params, step=time_grid.num_steps,
                        outer_iterations=config.scaled(config.terminal_outer_iterations),
                        learning_rate=config.terminal_learning_rate, config=config, training_log=training_log)
    return net, summary


@dataclasses.dataclass(frozen=True)
class _StepSample:
    x: types.Matrix
    """`X_{t_i}`."""
    dw: types.Matrix
    target: types.Vector
    """`U_{i+1}(X_{t_{i+1}})` of the frozen next network."""
    next_hessian: types.Array | None
    """The symmetrized `DZ_{i+1}(T(X_{t_{i+1}}))`; only sampled when the next network supplies the Hessian."""
    truncated_x: types.Matrix
    """`T(X_{t_i})`."""


class _StepLoss:
    """Pulls the squared step residual back onto `(y, z, gamma)`; counts clamped denominators."""

    def __init__(self, objective: "_StepObjective", sample: _StepSample) -> None:
        self._objective = objective
        self._sample = sample
        self.clamped = 0

    def _pullback(self, y: types.Vector, z: types.Matrix,
                  gamma: types.Array) -> tuple[float, types.Vector, base.GeneratorValue]:
        residual, step_map = self._objective.residual(self._sample, y, z, gamma)
        self.clamped += step_map.clamped
        return float(np.mean(residual**2)), -2.0 * residual / len(residual), step_map

    def output_loss(self, output: types.Array) -> tuple[float, types.Array]:
        value, scale, step_map = self._pullback(output[:, 0], output[:, 1:], self._sample.next_hessian)
        output_bar = np.empty_like(output)
        output_bar[:, 0] = scale * step_map.dy
        output_bar[:, 1:] = scale[:, None] * step_map.dz
        return value, output_bar

    def jacobian_loss(self, output: types.Array, jacobian: types.Array) -> tuple[float, types.Array, types.Array]:
        value, scale, step_map = self._pullback(output[:, 0], output[:, 1:], types.symmetrize(jacobian))
        output_bar = np.empty_like(output)
        output_bar[:, 0] = scale * step_map.dy
        output_bar[:, 1:] = scale[:, None] * step_map.dz
        return value, output_bar, types.symmetrize(scale[:, None, None] * step_map.dgamma)

    def free_loss(self, params: types.Array) -> tuple[float, types.Array]:
        """The loss and gradient for constant `(y, z) = (params[0], params[1:])` over the batch."""
        batch = len(self._sample.target)
        y = np.full(batch, params[0])
        z = np.broadcast_to(params[1:], (batch, len(params) - 1))
        value, scale, step_map = self._pullback(y, z, self._sample.next_hessian)
        gradient = np.empty_like(params)
        gradient[0] = np.sum(scale * step_map.dy)
        gradient[1:] = np.sum(scale[:, None] * step_map.dz, axis=0)
        return value, gradient


class _StepObjective:
    """`E|U_{i+1}(X_{t_{i+1}}) - F(t_i, X_{t_i}, U_i, Z_i, Gamma, dt_i, dW_{t_i})|^2`."""

    def __init__(self, problem: base.ProblemSpec, time_grid: grid_lib.TimeGrid, config: SchemeConfig,
                 seed: int, step: int, next_net: mlp.MLP, *, explicit: bool) -> None:
        self._problem = problem
        self._time_grid = time_grid
        self._config = config
        self._seed = seed
        self._step = step
        self._next_net = next_net
        self._op = problem.truncation(config.quantile)
        self._explicit = explicit
        self.net = next_net.copy()
        self.validation = self._sample(config.validation_batch, rng.stream(seed, rng.Purpose.VALIDATION, step))

    @property
    def t(self) -> float:
        return float(self._time_grid.nodes[self._step])

    @property
    def h(self) -> float:
        return float(self._time_grid.increments[self._step])

    def _sample(self, batch_size: int, generator: np.random.Generator) -> _StepSample:
        step = self._step
        batch = paths.simulate_paths(self._problem, self._time_grid, batch_size, generator, num_steps=step + 1)
        x = batch.states[:, step]
        x_next = batch.states[:, step + 1]
        next_hessian = None
        if self._explicit:
            t_next = float(self._time_grid.nodes[step + 1])
            truncated_next = truncation.apply_truncation(self._op, x_next, t_next)
            next_hessian = types.symmetrize(self._next_net.input_jacobian(truncated_next, head=_GRADIENT_HEAD))
        return _StepSample(x=x, dw=batch.increments[:, step], target=self._next_net(x_next)[:, 0],
                           next_hessian=next_hessian, truncated_x=truncation.apply_truncation(self._op, x, self.t))

    def train_sample(self, iteration: int) -> _StepSample:
        generator = rng.stream(self._seed, rng.Purpose.TRAIN, self._step, iteration)
        return self._sample(self._config.train_batch, generator)

    def residual(self, sample: _StepSample, y: types.Vector, z: types.Matrix,
                 gamma: types.Array) -> tuple[types.Vector, base.GeneratorValue]:
        """Returns `U_{i+1}(X_{t_{i+1}}) - F` and `F` with its partials."""
        step_map = driver.step_map_F(self._problem, self.t, sample.x, y, z, gamma, self.h, sample.dw)
        return sample.target - step_map.value, step_map

    def gradient(self, params: types.Array, iteration: int) -> tuple[float, types.Array, int]:
        sample = self.train_sample(iteration)
        loss = _StepLoss(self, sample)
        if self._explicit:
            value, gradient = mlp.loss_param_grad(self.net, sample.x, loss.output_loss)
        else:
            points = None if self._op is None else sample.truncated_x
            value, gradient = mlp.jacobian_param_grad(self.net, sample.x, loss.jacobian_loss,
                                                      jacobian_points=points, head=_GRADIENT_HEAD)
        return value, gradient, loss.clamped

    def validate(self, params: types.Array) -> tuple[float, int]:
        sample = self.validation
        output = self.net(sample.x)
        if self._explicit:
            gamma = sample.next_hessian
        else:
            gamma = types.symmetrize(self.net.input_jacobian(sample.truncated_x, head=_GRADIENT_HEAD))
        residual, step_map = self.residual(sample, output[:, 0], output[:, 1:], gamma)
        return float(np.mean(residual**2)), step_map.clamped


def train_step(step: int, next_net: mlp.MLP, problem: base.ProblemSpec, time_grid: grid_lib.TimeGrid,
               config: SchemeConfig, seed: int, *,
               training_log: log_lib.TrainingLog | None = None) -> tuple[mlp.MLP, StepSummary]:
    """Trains the network of time index `step`, warm-started from the trained network of `step + 1`.

    Args:
        step: The time index i, `0 <= i < N`.
        next_net: The trained network of index `i + 1`; left unchanged.
        problem: The problem.
        time_grid: The time grid.
        config: The training protocol; `config.mode` selects how the Hessian is estimated.
        seed: The run seed.
        training_log: Receives one record per outer iteration.

    Returns:
        The trained network and its training summary.

    Raises:
        ConfigurationError: If `step` is out of range.
        TrainingDivergenceError: If the training diverges.
    """
    if not 0 <= step < time_grid.num_steps:
        error_message = f"Step index {step} outside [0, {time_grid.num_steps})"
        raise errors.ConfigurationError(error_message)
    objective = _StepObjective(problem, time_grid, config, seed, step, next_net, explicit=config.mode == "explicit")
    summary = _optimize(objective, objective.net.params, step=step,
                        outer_iterations=config.scaled(config.step_outer_iterations),
                        learning_rate=config.step_learning_rate, config=config, training_log=training_log)
    return objective.net, summary


class _FreeObjective:
    """The index-0 step loss over free variables `(Y_0, Z_0)`, with the next network's Hessian."""

    def __init__(self, objective: _StepObjective) -> None:
        self._objective = objective

    def gradient(self, params: types.Array, iteration: int) -> tuple[float, types.Array, int]:
        loss = _StepLoss(self._objective, self._objective.train_sample(iteration))
        value, gradient = loss.free_loss(params)
        return value, gradient, loss.clamped

    def validate(self, params: types.Array) -> tuple[float, int]:
        loss = _StepLoss(self._objective, self._objective.validation)
        value, _ = loss.free_loss(params)
        return value, loss.clamped


def train_first_step_free(next_net: mlp.MLP, problem: base.ProblemSpec, time_grid: grid_lib.TimeGrid,
                          config: SchemeConfig, seed: int, *, training_log: log_lib.TrainingLog | None = None,
                          ) -> tuple[mlp.MLP, types.Matrix, StepSummary]:
    """Trains index 0 of an implicit run over free variables `(Y_0, Z_0)`.

    Every trajectory starts at `x0`, so `(U_0, Z_0)` reduce to two constants; the Hessian is the
    frozen `DZ_1(T(X_{t_1}))` as in explicit mode. The variables start from the next network at `x0`.

    Returns:
        A constant network holding `(Y_0, Z_0)`, the Hessian estimate at index 0 (the validation
        mean of the next network's Hessians) and the training summary.

    Raises:
        TrainingDivergenceError: If the training diverges.
    """
    objective = _StepObjective(problem, time_grid, config, seed, 0, next_net, explicit=True)
    params = next_net(problem.x0).copy()
    summary = _optimize(_FreeObjective(objective), params, step=0,
                        outer_iterations=config.scaled(config.step_outer_iterations),
                        learning_rate=config.step_learning_rate, config=config, training_log=training_log)
    net = mlp.constant(problem.dim, 1 + problem.dim, config.num_layers, config.width, params)
    return net, objective.validation.next_hessian.mean(axis=0), summary


def _log_summary(summary: StepSummary) -> None:
    _LOGGER.info("Step %d done: validation loss %.6g, learning rate %.3g, %d clamped denominators",
                 summary.step, summary.final_validation_loss, summary.final_learning_rate, summary.clamp_count)


def solve_backward(problem: base.ProblemSpec, time_grid: grid_lib.TimeGrid, config: SchemeConfig, seed: int,
                   *, training_log: log_lib.TrainingLog | None = None) -> SchemeSolution:
    """Runs the backward scheme: the terminal fit, then one step for i = N - 1, ..., 0.

    Args:
        problem: The problem.
        time_grid: The time grid.
        config: The training protocol.
        seed: The run seed; every random draw of the run derives from it.
        training_log: Receives one record per outer iteration; a new log is created when omitted.

    Returns:
        The `SchemeSolution` holding N + 1 networks.

    Raises:
        ConfigurationError: If the problem dimensions are inconsistent.
        TrainingDivergenceError: If a step diverges; carries the failing step index.
        SimulationBlowupError: If a simulated state becomes non-finite.
    """
    if problem.dim < 1 or np.shape(problem.x0) != (problem.dim,):
        error_message = f"Inconsistent problem dimensions: d={problem.dim}, x0 shape {np.shape(problem.x0)}"
        raise errors.ConfigurationError(error_message)
    training_log = log_lib.TrainingLog() if training_log is None else training_log
    num_steps = time_grid.num_steps
    _LOGGER.info("Solving %s (d=%d) backward over %d steps in %s mode", problem.name, problem.dim, num_steps,
                 config.mode)
    networks: list[mlp.MLP | None] = [None] * (num_steps + 1)
    summaries: list[StepSummary | None] = [None] * (num_steps + 1)
    overrides: dict[int, types.Matrix] = {}
    progress = log_lib.LoggingObserver(_LOGGER)
    training_log.add_observer(progress)
    try:
        networks[num_steps], summaries[num_steps] = train_terminal(problem, time_grid, config, seed,
                                                                   training_log=training_log)
        _log_summary(summaries[num_steps])
        for step in range(num_steps - 1, -1, -1):
            if config.mode == "implicit" and step == 0:
                networks[0], overrides[0], summaries[0] = train_first_step_free(
                    networks[1], problem, time_grid, config, seed, training_log=training_log)
            else:
                networks[step], summaries[step] = train_step(step, networks[step + 1], problem, time_grid, config,
                                                             seed, training_log=training_log)
            _log_summary(summaries[step])
    finally:
        training_log.remove_observer(progress)
    return SchemeSolution(problem=problem, time_grid=time_grid, config=config, networks=networks,
                          summaries=summaries, log=training_log, hessian_overrides=overrides)


def evaluate_solution(solution: SchemeSolution, step: int, x: types.Array) -> base.Triple:
    """Evaluates `(u, Du, D^2u)` at time index `step`.

    Args:
        solution: The trained solution.
        step: The time index, `0 <= step <= N`.
        x: A point `(d,)` or a batch `(B, d)`.

    Returns:
        `u = U_i(x)`, `z = Z_i(x)` and the symmetrized `gamma = DZ_i(x)`; unbatched for a single point.

    Raises:
        ConfigurationError: If `step` is out of range.
        ShapeError: If `x` has the wrong dimension.
    """
    if not 0 <= step <= solution.num_steps:
        error_message = f"Step index {step} outside [0, {solution.num_steps}]"
        raise errors.ConfigurationError(error_message)
    single = np.ndim(x) == 1
    points = types.as_batch(x, solution.problem.dim)
    output, jacobian = solution.networks[step].forward_with_jacobian(points, head=_GRADIENT_HEAD)
    if step in solution.hessian_overrides:
        gamma = np.broadcast_to(solution.hessian_overrides[step], jacobian.shape).copy()
    else:
        gamma = types.symmetrize(jacobian)
    triple = base.Triple(u=output[:, 0], z=output[:, 1:], gamma=gamma)
    if single:
        return base.Triple(u=triple.u[0], z=triple.z[0], gamma=triple.gamma[0])
    return triple


def sample_solution(solution: SchemeSolution, step: int, x: types.Array) -> dict[str, types.Array]:
    """Evaluates the solution and, when known, the reference at time index `step` on a batch.

    Returns:
        Columns `x_k`, `u`, `z_k`, `gamma_kl` (upper triangle) and the matching `ref_` columns.
    """
    points = types.as_batch(x, solution.problem.dim)
    estimate = evaluate_solution(solution, step, points)
    t = float(solution.time_grid.nodes[step])
    columns: dict[str, types.Array] = {"t": np.full(len(points), t)}
    for k in range(points.shape[1]):
        columns[f"x_{k}"] = points[:, k]
    triples = [("", estimate)]
    reference = solution.problem.reference(t, points)
    if reference is not None:
        triples.append(("ref_", reference))
    rows, cols = np.triu_indices(points.shape[1])
    for prefix, triple in triples:
        columns[f"{prefix}u"] = triple.u
        for k in range(points.shape[1]):
            columns[f"{prefix}z_{k}"] = triple.z[:, k]
        for k, j in zip(rows, cols, strict=True):
            columns[f"{prefix}gamma_{k}{j}"] = triple.gamma[:, k, j]
    return columns
