"""Provides the quasi-explicit solutions of the exponential-utility portfolio problem under the Scott model.

With `lambda_i(v) = lambda_i v_i` the value function factorizes as
`u(t, x, v) = -exp(-eta x) exp(-sum_i [phi_i(t) v_i^2 / 2 + psi_i(t) v_i + chi_i(t)])`,
where `(phi_i, psi_i, chi_i)` solve a Riccati system with hyperbolic closed forms.
"""

import dataclasses

import numpy as np

from fnlbsde.common import errors, types
from fnlbsde.problems import base


@dataclasses.dataclass(frozen=True, kw_only=True)
class FactorModel:
    """Per-factor coefficients of the Ornstein-Uhlenbeck volatility factors, each of length n."""
    risk_premium: types.Vector
    """The slopes `lambda_i` of `lambda_i(v) = lambda_i v`."""
    kappa: types.Vector
    theta: types.Vector
    nu: types.Vector
    rho: types.Vector

    @property
    def num_factors(self) -> int:
        return len(self.kappa)

    @property
    def kappa_bar(self) -> types.Vector:
        """`kappa + rho nu lambda`."""
        return self.kappa + self.rho * self.nu * self.risk_premium

    @property
    def kappa_hat(self) -> types.Vector:
        """`sqrt(kappa^2 + 2 rho nu lambda kappa + nu^2 lambda^2)`."""
        return np.sqrt(self.kappa**2 + 2.0 * self.rho * self.nu * self.risk_premium * self.kappa
                       + self.nu**2 * self.risk_premium**2)

    def sharpe_ratio(self, v: types.Matrix) -> types.Vector:
        """`R(v) = sum_i (lambda_i v_i)^2` over a batch `(B, n)`."""
        return np.sum((self.risk_premium * v) ** 2, axis=-1)


@dataclasses.dataclass(frozen=True)
class ScottClosedForm:
    """Closed-form Riccati coefficients `phi_i, psi_i, chi_i` of every factor."""
    factors: FactorModel
    maturity: float

    def coefficients(self, t: float) -> tuple[types.Vector, types.Vector, types.Vector]:
        """Returns `(phi(t), psi(t), chi(t))`, each of length n."""
        factors = self.factors
        tau = self.maturity - t
        kappa_bar = factors.kappa_bar
        kappa_hat = factors.kappa_hat
        sinh = np.sinh(kappa_hat * tau)
        cosh = np.cosh(kappa_hat * tau)
        denominator = kappa_hat * cosh + kappa_bar * sinh
        lam2 = factors.risk_premium**2
        mean_pull = factors.kappa * factors.theta
        phi = lam2 * sinh / denominator
        psi = lam2 * mean_pull / kappa_hat * (cosh - 1.0) / denominator
        b = lam2 * mean_pull**2
        chi = ((np.log(cosh + kappa_bar / kappa_hat * sinh) - kappa_bar * tau) / (2.0 * (1.0 - factors.rho**2))
               - b / (2.0 * kappa_hat**2) * (sinh / denominator - tau)
               - b * kappa_bar / kappa_hat**3 * (cosh - 1.0) / denominator)
        return phi, psi, chi

    def w(self, t: float, v: types.Matrix) -> types.Vector:
        """The factor part `w(t, v) = exp(-sum_i [phi_i v_i^2 / 2 + psi_i v_i + chi_i])`."""
        phi, psi, chi = self.coefficients(t)
        return np.exp(-np.sum(0.5 * phi * v**2 + psi * v + chi, axis=-1))


def scott_closed_form(factors: FactorModel, maturity: float) -> ScottClosedForm:
    """Builds the closed-form coefficients for the given factors.

    Raises:
        ConfigurationError: If a correlation is outside (-1, 1) or a mean-reversion speed is not positive.
    """
    if np.any(np.abs(factors.rho) >= 1.0) or np.any(factors.kappa <= 0.0):
        error_message = f"Invalid factor parameters: rho={factors.rho}, kappa={factors.kappa}"
        raise errors.ConfigurationError(error_message)
    return ScottClosedForm(factors=factors, maturity=maturity)


def scott_exact(t: float, x: types.Matrix, closed_form: ScottClosedForm, risk_aversion: float) -> base.Triple:
    """Returns `u(t, x, v)` and its derivatives for states `x = (wealth, v_1, ..., v_n)`."""
    phi, psi, chi = closed_form.coefficients(t)
    wealth = x[:, 0]
    v = x[:, 1:]
    slope = phi * v + psi
    u = -np.exp(-risk_aversion * wealth - np.sum(0.5 * phi * v**2 + psi * v + chi, axis=1))
    batch, dim = x.shape
    z = np.empty((batch, dim), dtype=types.FLOAT_DTYPE)
    z[:, 0] = -risk_aversion * u
    z[:, 1:] = -slope * u[:, None]
    gamma = np.empty((batch, dim, dim), dtype=types.FLOAT_DTYPE)
    gamma[:, 0, 0] = risk_aversion**2 * u
    gamma[:, 0, 1:] = risk_aversion * slope * u[:, None]
    gamma[:, 1:, 0] = gamma[:, 0, 1:]
    gamma[:, 1:, 1:] = (slope[:, :, None] * slope[:, None, :] - np.diag(phi)) * u[:, None, None]
    return base.Triple(u=u, z=z, gamma=gamma)


def no_leverage_exact(t: float, x: types.Matrix, closed_form: ScottClosedForm, risk_aversion: float) -> base.Triple:
    """Returns the reference solution of the uncorrelated multi-factor problem.

    Raises:
        ConfigurationError: If any correlation is non-zero.
    """
    if np.any(closed_form.factors.rho != 0.0):
        error_message = f"The no-leverage solution needs zero correlations, got {closed_form.factors.rho}"
        raise errors.ConfigurationError(error_message)
    return scott_exact(t, x, closed_form, risk_aversion)
