import logging

import numpy as np
import pydantic
import pytest

from fnlbsde.common import errors, rng
from fnlbsde.nn import mlp
from fnlbsde.problems import base, registry
from fnlbsde.scheme import driver, log, solver
from fnlbsde.sde import grid

_TEST_STREAM = 99


class _Affine(base.ProblemSpec):
    """`f = c`, zero drift, unit diffusion and `g(x) = a.x + b`, so `u(t, x) = g(x) + c (T - t)`."""

    def __init__(self, dim, c=0.0, slope=None, intercept=0.0):
        self.name = "affine"
        self.dim = dim
        self.maturity = 1.0
        self.x0 = np.zeros(dim)
        self.c = c
        self.slope = np.zeros(dim) if slope is None else np.asarray(slope, dtype=float)
        self.intercept = intercept

    def generator(self, t, x, y, z, gamma):
        return base.GeneratorValue(value=np.full(len(y), self.c), dy=np.zeros_like(y), dz=np.zeros_like(z),
                                   dgamma=np.zeros_like(gamma))

    def terminal(self, x):
        return x @ self.slope + self.intercept

    def terminal_gradient(self, x):
        return np.broadcast_to(self.slope, x.shape).copy()

    def drift(self, t, x):
        return np.zeros_like(x)

    def diffusion(self, t, x):
        return self._constant_diffusion(np.eye(self.dim), x)


class _Collector:
    def __init__(self):
        self.records = []

    def update(self, record):
        self.records.append(record)


def _config(**overrides):
    values = {"batch_size": 64, "validation_size": 128, "inner_iterations": 4, "terminal_outer_iterations": 3,
              "step_outer_iterations": 2, "width": 6, "hidden_layers": 2}
    values.update(overrides)
    return solver.SchemeConfig(**values)


def test_config_defaults_and_scale():
    config = solver.SchemeConfig()
    assert (config.train_batch, config.validation_batch) == (1000, 10_000)
    assert config.scaled(config.terminal_outer_iterations) == 200
    assert config.scaled(config.step_outer_iterations) == 100
    assert (config.terminal_learning_rate, config.step_learning_rate) == (1e-2, 1e-3)
    assert config.num_layers == 3
    desk = solver.SchemeConfig(scale=0.25)
    assert (desk.train_batch, desk.validation_batch) == (250, 2500)
    assert desk.scaled(desk.terminal_outer_iterations) == 50
    assert desk.scaled(desk.step_outer_iterations) == 25
    assert solver.SchemeConfig(scale=1e-6).train_batch == 1


@pytest.mark.parametrize("overrides", [
    {"batch_size": 0},
    {"inner_iterations": -1},
    {"quantile": 1.0},
    {"quantile": 0.0},
    {"mode": "semi-implicit"},
    {"scale": 0.0},
    {"terminal_gradient": "finite-differences"},
])
def test_config_rejects_invalid_values(overrides):
    with pytest.raises(pydantic.ValidationError):
        solver.SchemeConfig(**overrides)


def test_terminal_weight_halves_when_steps_double():
    problem = registry.make_problem("case1", dim=2)
    config = _config()
    weights = [solver._TerminalObjective(problem, grid.make_time_grid(1.0, n), config, 0,  # noqa: SLF001
                                         mlp.init(2, 3, 3, 6, 0), None).weight for n in (10, 20)]
    assert weights[0] == pytest.approx(0.1 / 2)
    assert weights[1] == pytest.approx(weights[0] / 2)


def _objective(problem, config, step=1, num_steps=3, explicit=True, seed=5):
    next_net = mlp.init(problem.dim, 1 + problem.dim, config.num_layers, config.width, seed)
    time_grid = grid.make_time_grid(problem.maturity, num_steps)
    objective = solver._StepObjective(problem, time_grid, config, 0, step, next_net,  # noqa: SLF001
                                      explicit=explicit)
    objective.net.params += 0.1 * rng.stream(seed, _TEST_STREAM).standard_normal(objective.net.params.size)
    return objective, next_net


def test_explicit_gradient_uses_frozen_hessians():
    problem = registry.make_problem("case1", dim=2)
    config = _config(quantile=0.9)
    objective, next_net = _objective(problem, config)
    frozen = next_net.params.copy()
    value, gradient, _ = objective.gradient(objective.net.params, 7)
    np.testing.assert_array_equal(next_net.params, frozen)

    sample = objective.train_sample(7)
    time_grid = grid.make_time_grid(1.0, 3)
    t, h = time_grid.nodes[1], time_grid.increments[1]

    def loss(output):
        step_map = driver.step_map_F(problem, t, sample.x, output[:, 0], output[:, 1:], sample.next_hessian, h,
                                     sample.dw)
        residual = sample.target - step_map.value
        scale = -2.0 * residual / len(residual)
        output_bar = np.column_stack([scale * step_map.dy, scale[:, None] * step_map.dz])
        return float(np.mean(residual**2)), output_bar

    cached_value, cached_gradient = mlp.loss_param_grad(objective.net, sample.x, loss)
    assert value == cached_value
    np.testing.assert_array_equal(gradient, cached_gradient)


def _directional_check(objective, params, seed):
    value, gradient, _ = objective.gradient(params, 3)
    direction = rng.stream(seed, _TEST_STREAM, 1).standard_normal(params.size)
    start = params.copy()
    step = 1e-6
    params[...] = start + step * direction
    plus = objective.gradient(params, 3)[0]
    params[...] = start - step * direction
    minus = objective.gradient(params, 3)[0]
    params[...] = start
    assert gradient @ direction == pytest.approx((plus - minus) / (2 * step), rel=1e-5, abs=1e-10)
    assert objective.gradient(params, 3)[0] == value


@pytest.mark.parametrize(("name", "overrides", "quantile", "explicit"), [
    ("case1", {"dim": 2}, 0.9, True),
    ("case1", {"dim": 2}, 0.9, False),
    ("case1", {"dim": 1}, None, False),
    ("monge-ampere", {"dim": 2}, None, True),
    ("monge-ampere", {"dim": 2}, None, False),
    ("lq", {"dim": 2}, 0.95, True),
    ("lq", {"dim": 2}, 0.95, False),
    ("no-leverage-scott1", {}, 0.95, True),
])
def test_step_gradient_matches_finite_differences(name, overrides, quantile, explicit):
    problem = registry.make_problem(name, **overrides)
    objective, _ = _objective(problem, _config(quantile=quantile), explicit=explicit)
    _directional_check(objective, objective.net.params, seed=2)


def test_free_gradient_matches_finite_differences():
    problem = registry.make_problem("merton")
    objective, next_net = _objective(problem, _config(quantile=0.98), step=0)
    params = next_net(problem.x0) + np.array([0.05, -0.02])
    _directional_check(solver._FreeObjective(objective), params, seed=3)  # noqa: SLF001


def test_single_step_run():
    problem = registry.make_problem("case1", dim=1)
    config = _config(quantile=0.999)
    solution = solver.solve_backward(problem, grid.make_time_grid(1.0, 1), config, 11)
    assert len(solution.networks) == 2
    assert [summary.step for summary in solution.summaries] == [0, 1]
    records = solution.log.records
    assert len(records) == 3 + 2
    assert [record.step for record in records] == [1, 1, 1, 0, 0]
    for network in solution.networks:
        assert network.output_dim == 2
        assert np.all(np.isfinite(network.params))


def test_progress_is_logged_while_solving(caplog):
    caplog.set_level(logging.DEBUG, logger="fnlbsde.scheme.solver")
    training_log = log.TrainingLog()
    collector = _Collector()
    training_log.add_observer(collector)
    problem = registry.make_problem("case1", dim=1)
    solver.solve_backward(problem, grid.make_time_grid(1.0, 1), _config(quantile=0.999), 11, training_log=training_log)
    progress = [record for record in caplog.records
                if record.levelno == logging.DEBUG and ", outer " in record.getMessage()]
    assert len(progress) == len(training_log.records) == 5
    assert collector.records == training_log.records
    assert training_log._observers == [collector]


def test_runs_are_reproducible():
    problem = registry.make_problem("merton", maturity=0.1)
    time_grid = grid.make_time_grid(0.1, 2)
    first = solver.solve_backward(problem, time_grid, _config(quantile=0.98), 3)
    second = solver.solve_backward(problem, time_grid, _config(quantile=0.98), 3)
    third = solver.solve_backward(problem, time_grid, _config(quantile=0.98), 4)
    for a, b in zip(first.networks, second.networks, strict=True):
        np.testing.assert_array_equal(a.params, b.params)
    assert not np.array_equal(first.networks[0].params, third.networks[0].params)


def test_learning_rates_are_non_increasing():
    problem = registry.make_problem("merton", maturity=0.1)
    config = _config(quantile=0.98, step_outer_iterations=4, lr_window=1)
    solution = solver.solve_backward(problem, grid.make_time_grid(0.1, 2), config, 0)
    for step in range(3):
        initial = config.terminal_learning_rate if step == 2 else config.step_learning_rate
        rates = [initial] + [record.learning_rate for record in solution.log.for_step(step)]
        pairs = list(zip(rates, rates[1:], strict=False))
        assert all(later <= earlier for earlier, later in pairs)
        assert solution.summaries[step].final_learning_rate == rates[-1]
        assert solution.summaries[step].halvings == sum(later < earlier for earlier, later in pairs)


def test_evaluate_solution():
    problem = registry.make_problem("case1", dim=3)
    solution = solver.solve_backward(problem, grid.make_time_grid(1.0, 2), _config(quantile=0.999), 1)
    triple = solver.evaluate_solution(solution, 0, problem.x0)
    assert np.shape(triple.u) == ()
    assert triple.z.shape == (3,)
    np.testing.assert_array_equal(triple.gamma, triple.gamma.T)
    points = rng.stream(0, _TEST_STREAM).standard_normal((5, 3))
    batch = solver.evaluate_solution(solution, 2, points)
    np.testing.assert_array_equal(batch.gamma, np.swapaxes(batch.gamma, 1, 2))
    output = solution.networks[2](points)
    np.testing.assert_allclose(batch.u, output[:, 0], rtol=1e-14)
    np.testing.assert_allclose(batch.z, output[:, 1:], rtol=1e-14)
    with pytest.raises(errors.ConfigurationError):
        solver.evaluate_solution(solution, 3, problem.x0)
    with pytest.raises(errors.ShapeError):
        solver.evaluate_solution(solution, 0, np.zeros(2))


def test_implicit_run_uses_free_first_step():
    problem = registry.make_problem("merton", maturity=0.1)
    config = _config(mode="implicit", quantile=0.98)
    solution = solver.solve_backward(problem, grid.make_time_grid(0.1, 2), config, 2)
    assert set(solution.hessian_overrides) == {0}
    first = solver.evaluate_solution(solution, 0, np.array([1.0]))
    other = solver.evaluate_solution(solution, 0, np.array([3.0]))
    assert first.u == other.u
    np.testing.assert_array_equal(first.gamma, solution.hessian_overrides[0])
    assert np.all(np.isfinite(solver.evaluate_solution(solution, 1, np.array([1.0])).gamma))


def test_divergence_reports_the_step():
    problem = _Affine(1, c=np.nan)
    with pytest.raises(errors.TrainingDivergenceError) as info:
        solver.solve_backward(problem, grid.make_time_grid(1.0, 2), _config(), 0)
    assert info.value.step == 1
    assert info.value.iteration == 0


def test_inconsistent_dimensions_are_rejected():
    problem = _Affine(2)
    problem.x0 = np.zeros(3)
    with pytest.raises(errors.ConfigurationError):
        solver.solve_backward(problem, grid.make_time_grid(1.0, 1), _config(), 0)


def test_network_terminal_gradient():
    problem = registry.make_problem("case1", dim=2)
    config = _config(terminal_gradient="network")
    fit = solver.fit_terminal_function(problem, grid.make_time_grid(1.0, 2), config, 0)
    assert fit.output_dim == 1
    net, summary = solver.train_terminal(problem, grid.make_time_grid(1.0, 2), config, 0)
    assert net.output_dim == 3
    assert np.isfinite(summary.final_validation_loss)


def test_sample_solution_columns():
    problem = registry.make_problem("case1", dim=2)
    solution = solver.solve_backward(problem, grid.make_time_grid(1.0, 1), _config(quantile=0.999), 0)
    columns = solver.sample_solution(solution, 0, np.zeros((4, 2)))
    for name in ("t", "x_0", "x_1", "u", "z_0", "z_1", "gamma_00", "gamma_01", "gamma_11", "ref_u", "ref_gamma_01"):
        assert len(columns[name]) == 4
    np.testing.assert_allclose(columns["ref_u"], problem.reference(0.0, np.zeros((4, 2))).u)


# Desk-scale training runs.

def _desk(problem, num_steps, **overrides):
    config = solver.SchemeConfig(scale=0.25, **overrides)
    solution = solver.solve_backward(problem, grid.make_time_grid(problem.maturity, num_steps), config, 0)
    return solution, solver.evaluate_solution(solution, 0, problem.x0)


@pytest.mark.slow
def test_zero_terminal_condition_is_fitted():
    problem = _Affine(2)
    net, summary = solver.train_terminal(problem, grid.make_time_grid(1.0, 4), solver.SchemeConfig(scale=0.25), 0)
    assert summary.final_validation_loss < 1e-6
    assert abs(net(np.array([0.3, -0.7]))[0]) < 1e-3


@pytest.mark.slow
def test_affine_solution_is_representable():
    problem = _Affine(2, slope=[0.5, -1.0], intercept=0.2)
    solution, triple = _desk(problem, 4, width=12)
    assert all(summary.final_validation_loss < 1e-5 for summary in solution.summaries)
    assert triple.u == pytest.approx(0.2, abs=1e-2)


@pytest.mark.slow
def test_merton_desk_run():
    problem = registry.make_problem("merton", maturity=0.1)
    solution, triple = _desk(problem, 10, quantile=0.98)
    assert triple.u == pytest.approx(-0.59571, rel=0.01)
    assert triple.z[0] == pytest.approx(0.29786, rel=0.02)
    for step in range(solution.num_steps):
        later = solution.summaries[step + 1]
        assert solution.summaries[step].initial_validation_loss < 10 * later.final_validation_loss


@pytest.mark.slow
def test_merton_implicit_agrees_with_explicit():
    problem = registry.make_problem("merton", maturity=0.1)
    _, explicit = _desk(problem, 10, quantile=0.98)
    _, implicit = _desk(problem, 10, quantile=0.98, mode="implicit")
    assert implicit.u == pytest.approx(explicit.u, rel=0.02)
    assert implicit.u == pytest.approx(-0.59571, rel=0.02)


@pytest.mark.slow
def test_case1_desk_run():
    problem = registry.make_problem("case1", dim=1, sigma_hat=1.5)
    _, triple = _desk(problem, 20, quantile=0.999)
    assert triple.u == pytest.approx(0.761902, rel=0.02)
    assert triple.z[0] * np.sqrt(problem.dim) == pytest.approx(1.2966, rel=0.05)
    exact = problem.reference(0.0, problem.x0[None, :])
    assert exact.z[0, 0] == pytest.approx(1.2966, abs=1e-4)


def _windows_around_halvings(records, window):
    losses = np.array([record.validation_loss for record in records])
    rates = [record.learning_rate for record in records]
    pairs = []
    for outer in range(1, len(records)):
        if rates[outer] < rates[outer - 1] and outer + 1 + window <= len(records):
            pairs.append((losses[outer + 1 - window:outer + 1].mean(), losses[outer + 1:outer + 1 + window].mean()))
    return pairs


@pytest.mark.slow
@pytest.mark.parametrize(("name", "overrides"), [("case1", {"dim": 1}), ("merton", {"maturity": 0.1})])
def test_windowed_validation_loss_does_not_rise_after_halvings(name, overrides):
    problem = registry.make_problem(name, **overrides)
    config = solver.SchemeConfig(quantile=problem.default_quantile)
    training_log = log.TrainingLog()
    solver.train_terminal(problem, grid.make_time_grid(problem.maturity, 10), config, 0, training_log=training_log)
    for before, after in _windows_around_halvings(training_log.records, config.lr_window):
        assert after <= 1.01 * before
