"""Provides the named benchmark problems and their default parameter sets."""

import dataclasses

import numpy as np
import pydantic

from fnlbsde.common import errors
from fnlbsde.problems import base, case1, linear_quadratic, monge_ampere, portfolio


@dataclasses.dataclass(kw_only=True)
class ProblemConfig:
    """Base class for all registered problems.

    Holds the overridable settings shared by every problem and the defaults of the network and
    truncation used to solve it.
    """

    name: str
    """The registry key."""
    dim: int = 1
    """The state dimension d; ignored by problems whose dimension is fixed by their parameters."""
    maturity: float = 1.0
    sigma_hat: float = 1.0
    """The training diffusion scale."""
    quantile: float | None = None
    """The default truncation quantile p, or None for no truncation."""
    width: int | None = None
    """The hidden width m; `d + 10` when None."""
    hidden_layers: int = 2

    def build(self) -> base.ProblemSpec:
        """Returns the `ProblemSpec` described by this configuration."""
        raise NotImplementedError

    def network_width(self, dim: int) -> int:
        return dim + 10 if self.width is None else self.width


@dataclasses.dataclass(kw_only=True)
class Case1Config(ProblemConfig):
    """The tanh test problem."""
    name: str = "case1"
    quantile: float | None = 0.999
    width: int | None = 20

    def build(self) -> base.ProblemSpec:
        return case1.Case1(dim=self.dim, maturity=self.maturity, sigma_hat=self.sigma_hat)


@dataclasses.dataclass(kw_only=True)
class LinearQuadraticConfig(ProblemConfig):
    """The linear-quadratic problem with `A = I`, `b = d = 1_d`, `Q = P = I / d`, `N = d`."""
    name: str = "lq"
    quantile: float | None = 0.999
    width: int | None = 50

    def build(self) -> base.ProblemSpec:
        params = linear_quadratic.default_params(self.dim, self.maturity)
        return linear_quadratic.LinearQuadratic(params=params, sigma_hat=self.sigma_hat)


@dataclasses.dataclass(kw_only=True)
class MongeAmpereConfig(ProblemConfig):
    """The parabolic Monge-Ampere problem, solved without truncation."""
    name: str = "monge-ampere"
    dim: int = 5
    hidden_layers: int = 3

    def build(self) -> base.ProblemSpec:
        return monge_ampere.MongeAmpere(dim=self.dim, maturity=self.maturity, sigma_hat=self.sigma_hat)


@dataclasses.dataclass(kw_only=True)
class MertonConfig(ProblemConfig):
    """The Merton problem with `eta = 0.5`, `lambda = 0.6` and `sigma = exp(0.4)`."""
    name: str = "merton"
    quantile: float | None = 0.98
    width: int | None = 20
    risk_premium: float = 0.6
    risk_aversion: float = 0.5

    def build(self) -> base.ProblemSpec:
        return portfolio.Merton(risk_premium=self.risk_premium, risk_aversion=self.risk_aversion,
                                maturity=self.maturity)


@dataclasses.dataclass(kw_only=True)
class ScottConfig(ProblemConfig):
    """Base class for the Scott-model portfolio problems."""
    risk_aversion: float = 0.5
    risk_premium: tuple[float, ...]
    theta: tuple[float, ...]
    nu: tuple[float, ...]
    kappa: tuple[float, ...]
    rho: tuple[float, ...] | None = None
    training_correlation: float = 0.0

    def params(self) -> portfolio.PortfolioParams:
        rho = (0.0,) * len(self.kappa) if self.rho is None else self.rho
        return portfolio.PortfolioParams(risk_aversion=self.risk_aversion,
                                         risk_premium=np.array(self.risk_premium), kappa=np.array(self.kappa),
                                         theta=np.array(self.theta), nu=np.array(self.nu), rho=np.array(rho),
                                         maturity=self.maturity)

    def wealth_drift(self, params: portfolio.PortfolioParams) -> float:
        del params
        return 0.0

    def build(self) -> base.ProblemSpec:
        params = self.params()
        return portfolio.ScottPortfolio(name=self.name, params=params, wealth_drift=self.wealth_drift(params),
                                        training_correlation=self.training_correlation,
                                        default_quantile=self.quantile)


@dataclasses.dataclass(kw_only=True)
class OneAssetScottConfig(ScottConfig):
    """One asset with leverage effect `rho = -0.7`, trained with wealth drift `lambda theta`."""
    name: str = "one-asset-scott"
    quantile: float | None = 0.98
    risk_premium: tuple[float, ...] = (1.5,)
    theta: tuple[float, ...] = (0.4,)
    nu: tuple[float, ...] = (0.4,)
    kappa: tuple[float, ...] = (1.0,)
    rho: tuple[float, ...] | None = (-0.7,)

    def wealth_drift(self, params: portfolio.PortfolioParams) -> float:
        return float(params.risk_premium[0] * params.theta[0])


_LAMBDA_9 = (1.5, 1.1, 2.0, 0.8, 0.5, 1.7, 0.9, 1.0, 0.9)
_THETA_9 = (0.1, 0.2, 0.3, 0.4, 0.25, 0.15, 0.18, 0.08, 0.91)
_NU_9 = (0.2, 0.15, 0.25, 0.31, 0.4, 0.35, 0.22, 0.4, 0.15)
_KAPPA_9 = (1.0, 0.8, 1.1, 1.3, 0.95, 0.99, 1.02, 1.06, 1.6)


@dataclasses.dataclass(kw_only=True)
class NoLeverageScott1Config(ScottConfig):
    """One uncorrelated factor (d = 2)."""
    name: str = "no-leverage-scott1"
    quantile: float | None = 0.95
    risk_premium: tuple[float, ...] = (1.5,)
    theta: tuple[float, ...] = (0.4,)
    nu: tuple[float, ...] = (0.2,)
    kappa: tuple[float, ...] = (1.0,)


@dataclasses.dataclass(kw_only=True)
class NoLeverageScott4Config(ScottConfig):
    """Four uncorrelated factors (d = 5)."""
    name: str = "no-leverage-scott4"
    quantile: float | None = 0.95
    risk_premium: tuple[float, ...] = _LAMBDA_9[:4]
    theta: tuple[float, ...] = _THETA_9[:4]
    nu: tuple[float, ...] = _NU_9[:4]
    kappa: tuple[float, ...] = _KAPPA_9[:4]


@dataclasses.dataclass(kw_only=True)
class NoLeverageScott7Config(ScottConfig):
    """Seven uncorrelated factors (d = 8)."""
    name: str = "no-leverage-scott7"
    quantile: float | None = 0.95
    risk_premium: tuple[float, ...] = _LAMBDA_9[:7]
    theta: tuple[float, ...] = _THETA_9[:7]
    nu: tuple[float, ...] = _NU_9[:7]
    kappa: tuple[float, ...] = _KAPPA_9[:7]


@dataclasses.dataclass(kw_only=True)
class NoLeverageScott9Config(ScottConfig):
    """Nine uncorrelated factors (d = 10)."""
    name: str = "no-leverage-scott9"
    quantile: float | None = 0.95
    risk_premium: tuple[float, ...] = _LAMBDA_9
    theta: tuple[float, ...] = _THETA_9
    nu: tuple[float, ...] = _NU_9
    kappa: tuple[float, ...] = _KAPPA_9


PROBLEMS = {Case1Config, LinearQuadraticConfig, MongeAmpereConfig, MertonConfig, OneAssetScottConfig,
            NoLeverageScott1Config, NoLeverageScott4Config, NoLeverageScott7Config, NoLeverageScott9Config}
PROBLEMS_ENTRY = {problem.name: problem for problem in PROBLEMS}


def get_config(name: str, **overrides: object) -> ProblemConfig:
    """Returns the configuration registered under `name` with the given field overrides.

    Raises:
        ConfigurationError: If `name` is not registered, an override is not a field of the problem, or its
            value does not fit the field, such as a single number for a per-asset tuple.
    """
    if name not in PROBLEMS_ENTRY:
        error_message = f"Unknown problem: {name} (known: {', '.join(sorted(PROBLEMS_ENTRY))})"
        raise errors.ConfigurationError(error_message)
    config_type = PROBLEMS_ENTRY[name]
    known = {field.name for field in dataclasses.fields(config_type)}
    unknown = set(overrides) - known
    if unknown:
        error_message = f"Unknown parameters for problem {name}: {', '.join(sorted(unknown))}"
        raise errors.ConfigurationError(error_message)
    try:
        return pydantic.TypeAdapter(config_type).validate_python(overrides)
    except pydantic.ValidationError as error:
        error_message = f"Invalid parameters for problem {name}: {error}"
        raise errors.ConfigurationError(error_message) from error


def make_problem(name: str, **overrides: object) -> base.ProblemSpec:
    """Builds the problem registered under `name`."""
    return get_config(name, **overrides).build()
