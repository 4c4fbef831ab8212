"""Provides the exponential-utility portfolio problems: Merton and the Scott stochastic-volatility model.

The state is `(wealth, v_1, ..., v_n)` where the `v_i` are Ornstein-Uhlenbeck volatility factors with
`sigma(v) = exp(v)` and risk premia `lambda_i(v) = lambda_i v_i`.
"""

import dataclasses

import numpy as np

from fnlbsde.common import errors, types
from fnlbsde.oracles import closed_form, scott
from fnlbsde.problems import base
from fnlbsde.sde import truncation


def _vector(values: tuple[float, ...] | types.Vector) -> types.Vector:
    return np.asarray(values, dtype=types.FLOAT_DTYPE)


@dataclasses.dataclass(frozen=True, kw_only=True)
class PortfolioParams:
    """Parameters of the portfolio problem with n assets."""
    risk_aversion: float
    """`eta` of the utility `U(x) = -exp(-eta x)`."""
    risk_premium: types.Vector
    kappa: types.Vector
    theta: types.Vector
    nu: types.Vector
    rho: types.Vector
    maturity: float = 1.0
    wealth0: float = 1.0

    def __post_init__(self) -> None:
        sizes = {len(self.risk_premium), len(self.kappa), len(self.theta), len(self.nu), len(self.rho)}
        if len(sizes) != 1:
            error_message = f"Portfolio parameter vectors have different lengths: {sorted(sizes)}"
            raise errors.ConfigurationError(error_message)
        if (self.risk_aversion <= 0.0 or np.any(self.risk_premium <= 0.0) or np.any(self.kappa <= 0.0)
                or np.any(self.theta <= 0.0) or np.any(self.nu <= 0.0) or np.any(np.abs(self.rho) >= 1.0)):
            error_message = "Portfolio parameters violate eta, lambda, kappa, theta, nu > 0 or |rho| < 1"
            raise errors.ConfigurationError(error_message)

    @property
    def num_assets(self) -> int:
        return len(self.kappa)

    def factor_model(self) -> scott.FactorModel:
        return scott.FactorModel(risk_premium=self.risk_premium, kappa=self.kappa, theta=self.theta,
                                 nu=self.nu, rho=self.rho)


def volatility(v: types.Array) -> types.Array:
    """The volatility map `sigma(v) = exp(v)`."""
    return np.exp(v)


def optimal_control(params: PortfolioParams, v: types.Matrix, z: types.Matrix,
                    gamma: types.Array) -> tuple[types.Matrix, int]:
    """Evaluates the feedback `a_i = -(lambda_i(v_i) z_0 + rho_i nu_i gamma_0i) / (sigma(v_i) gamma_00)`.

    Args:
        params: The portfolio parameters.
        v: The factor values `(B, n)`.
        z: The gradients `(B, n + 1)`.
        gamma: The Hessians `(B, n + 1, n + 1)`.

    Returns:
        The controls `(B, n)` and the number of clamped `gamma_00`.
    """
    gamma00, clamped = base.clamp_denominator(gamma[:, 0, 0])
    numerator = params.risk_premium * v * z[:, :1] + params.rho * params.nu * gamma[:, 0, 1:]
    return -numerator / (volatility(v) * gamma00[:, None]), clamped


def portfolio_generator(params: PortfolioParams, x: types.Matrix, z: types.Matrix,
                        gamma: types.Array) -> base.GeneratorValue:
    """Evaluates the Bellman generator of the Scott-model portfolio problem and its partials."""
    v = x[:, 1:]
    z0 = z[:, 0]
    gamma00, clamped = base.clamp_denominator(gamma[:, 0, 0])
    gamma0 = gamma[:, 0, 1:]
    diagonal = np.diagonal(gamma[:, 1:, 1:], axis1=1, axis2=2)
    premium = params.risk_premium * v
    sharpe = np.sum(premium**2, axis=1)
    pull = params.kappa * (params.theta - v)
    leverage = params.rho * premium * params.nu
    leverage2 = params.rho**2 * params.nu**2

    cross = np.sum(leverage * z0[:, None] * gamma0 + 0.5 * leverage2 * gamma0**2, axis=1)
    value = (np.sum(pull * z[:, 1:] + 0.5 * params.nu**2 * diagonal, axis=1)
             - 0.5 * sharpe * z0**2 / gamma00 - cross / gamma00)

    dz = np.empty_like(z)
    dz[:, 0] = -(sharpe * z0 + np.sum(leverage * gamma0, axis=1)) / gamma00
    dz[:, 1:] = pull
    dgamma = np.zeros_like(gamma)
    dgamma[:, 0, 0] = (0.5 * sharpe * z0**2 + cross) / gamma00**2
    # f reads gamma_0i only; the derivative is split evenly over the two symmetric entries.
    off_diagonal = -0.5 * (leverage * z0[:, None] + leverage2 * gamma0) / gamma00[:, None]
    dgamma[:, 0, 1:] = off_diagonal
    dgamma[:, 1:, 0] = off_diagonal
    factor_index = np.arange(1, x.shape[1])
    dgamma[:, factor_index, factor_index] = 0.5 * params.nu**2
    return base.GeneratorValue(value=value, dy=np.zeros_like(z0), dz=dz, dgamma=dgamma, clamped=clamped)


def _utility_terminal(x: types.Matrix, risk_aversion: float) -> types.Vector:
    return -np.exp(-risk_aversion * x[:, 0])


def _utility_terminal_gradient(x: types.Matrix, risk_aversion: float) -> types.Matrix:
    gradient = np.zeros_like(x)
    gradient[:, 0] = risk_aversion * np.exp(-risk_aversion * x[:, 0])
    return gradient


class ScottPortfolio(base.ProblemSpec):
    """The n-asset problem with Ornstein-Uhlenbeck volatility factors.

    Trained with wealth drift `wealth_drift`, unit wealth diffusion, factor diffusion `nu_i` and
    (by default) independent Brownian motions. A non-zero `training_correlation` correlates each factor
    with the wealth noise.
    """
    default_quantile = 0.95

    def __init__(self, *, name: str, params: PortfolioParams, wealth_drift: float = 0.0,
                 training_correlation: float = 0.0, default_quantile: float = 0.95) -> None:
        self.name = name
        self.params = params
        self.dim = params.num_assets + 1
        self.num_factors = params.num_assets
        self.maturity = params.maturity
        self.default_quantile = default_quantile
        self.wealth_drift = wealth_drift
        self.x0 = np.concatenate([[params.wealth0], params.theta]).astype(types.FLOAT_DTYPE)
        sigma = np.zeros((self.dim, self.dim), dtype=types.FLOAT_DTYPE)
        sigma[0, 0] = 1.0
        for i in range(1, self.dim):
            sigma[i, 0] = training_correlation * params.nu[i - 1]
            sigma[i, i] = np.sqrt(1.0 - training_correlation**2) * params.nu[i - 1]
        self._sigma = sigma
        self._mu = np.zeros(self.dim, dtype=types.FLOAT_DTYPE)
        self._mu[0] = wealth_drift
        self.closed_form = scott.scott_closed_form(params.factor_model(), params.maturity)

    def generator(self, t: float, x: types.Matrix, y: types.Vector, z: types.Matrix,
                  gamma: types.Array) -> base.GeneratorValue:
        """The portfolio generator with the Scott factor dynamics."""
        return portfolio_generator(self.params, x, z, gamma)

    def terminal(self, x: types.Matrix) -> types.Vector:
        """Exponential utility of the wealth coordinate."""
        return _utility_terminal(x, self.params.risk_aversion)

    def terminal_gradient(self, x: types.Matrix) -> types.Matrix:
        """The utility gradient, zero in the factor coordinates."""
        return _utility_terminal_gradient(x, self.params.risk_aversion)

    def drift(self, t: float, x: types.Matrix) -> types.Matrix:
        """`(wealth_drift, 0, ..., 0)`."""
        return np.broadcast_to(self._mu, x.shape)

    def diffusion(self, t: float, x: types.Matrix) -> types.Array:
        """The constant training diffusion, with unit wealth noise and factor noise `nu`."""
        return self._constant_diffusion(self._sigma, x)

    def truncation(self, quantile: float | None) -> truncation.TruncationOp | None:
        """Drifted truncation with the row norms of the training diffusion."""
        if quantile is None:
            return None
        scale = np.sqrt(np.sum(self._sigma**2, axis=1))
        return truncation.TruncationOp(variant="drifted", quantile=quantile, x0=self.x0, sigma=scale,
                                       drift=self._mu.copy())

    def reference(self, t: float, x: types.Matrix) -> base.Triple:
        """The closed form from the factor ODEs."""
        return scott.scott_exact(t, x, self.closed_form, self.params.risk_aversion)

    def control(self, t: float, x: types.Matrix, z: types.Matrix,
                gamma: types.Array) -> tuple[types.Matrix, int]:
        """The optimal amounts invested in each asset, and the number of clamped denominators."""
        return optimal_control(self.params, x[:, 1:], z, gamma)


class Merton(base.ProblemSpec):
    """The constant-coefficient case `f = -lambda^2 z^2 / (2 gamma)` in dimension one.

    Trained with `X_{k+1} = X_k + lambda dt + dW` from `x0 = 1`.
    """
    default_quantile = 0.98

    def __init__(self, *, risk_premium: float = 0.6, risk_aversion: float = 0.5, sigma: float = float(np.exp(0.4)),
                 maturity: float = 1.0, wealth0: float = 1.0) -> None:
        self.name = "merton"
        self.dim = 1
        self.risk_premium = risk_premium
        self.risk_aversion = risk_aversion
        self.sigma = sigma
        self.maturity = maturity
        self.x0 = np.array([wealth0], dtype=types.FLOAT_DTYPE)
        self._mu = np.array([risk_premium], dtype=types.FLOAT_DTYPE)

    def generator(self, t: float, x: types.Matrix, y: types.Vector, z: types.Matrix,
                  gamma: types.Array) -> base.GeneratorValue:
        """`-lambda^2 z^2 / (2 gamma)`, with `gamma` clamped away from zero."""
        lam2 = self.risk_premium**2
        gamma00, clamped = base.clamp_denominator(gamma[:, 0, 0])
        z0 = z[:, 0]
        value = -0.5 * lam2 * z0**2 / gamma00
        dz = (-lam2 * z0 / gamma00)[:, None]
        dgamma = (0.5 * lam2 * z0**2 / gamma00**2)[:, None, None]
        return base.GeneratorValue(value=value, dy=np.zeros_like(y), dz=dz, dgamma=dgamma, clamped=clamped)

    def terminal(self, x: types.Matrix) -> types.Vector:
        """Exponential utility of wealth."""
        return _utility_terminal(x, self.risk_aversion)

    def terminal_gradient(self, x: types.Matrix) -> types.Matrix:
        """The utility gradient."""
        return _utility_terminal_gradient(x, self.risk_aversion)

    def drift(self, t: float, x: types.Matrix) -> types.Matrix:
        """The constant wealth drift `lambda`."""
        return np.broadcast_to(self._mu, x.shape)

    def diffusion(self, t: float, x: types.Matrix) -> types.Array:
        """Unit diffusion."""
        return self._constant_diffusion(np.eye(1), x)

    def truncation(self, quantile: float | None) -> truncation.TruncationOp | None:
        """Drifted truncation with unit scale."""
        if quantile is None:
            return None
        return truncation.TruncationOp(variant="drifted", quantile=quantile, x0=self.x0, sigma=np.ones(1),
                                       drift=self._mu.copy())

    def reference(self, t: float, x: types.Matrix) -> base.Triple:
        """The closed form of the Merton problem."""
        return closed_form.merton_exact(t, x, risk_premium=self.risk_premium, risk_aversion=self.risk_aversion,
                                        maturity=self.maturity)

    def control(self, t: float, x: types.Matrix, z: types.Matrix,
                gamma: types.Array) -> tuple[types.Matrix, int]:
        """The Merton amount `-lambda z / (sigma gamma)` and the number of clamped denominators."""
        gamma00, clamped = base.clamp_denominator(gamma[:, 0, 0])
        return (-self.risk_premium * z[:, :1] / (self.sigma * gamma00[:, None])), clamped
