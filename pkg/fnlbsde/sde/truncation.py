"""Provides the truncation operators clamping network inputs to a quantile band."""

import dataclasses

import numpy as np

from fnlbsde.common import errors, types
from fnlbsde.sde import normal


@dataclasses.dataclass(frozen=True, kw_only=True)
class TruncationOp:
    """A componentwise clamp to a band around the deterministic mean path of the training diffusion.

    Variants:
        static: centre `x0`, half-width `sigma sqrt(t) phi_p`.
        ou-exponential: centre `x0 exp(a t)`, half-width `sigma sqrt((exp(2 a t) - 1) / (2 a)) phi_p`.
        drifted: centre `x0 + mu t`, half-width `sigma sqrt(t) phi_p`.
    """
    variant: types.TruncationVariant
    quantile: float
    x0: types.Vector
    sigma: types.Vector
    """Per-coordinate diffusion scale."""
    rate: types.Vector | None = None
    """Per-coordinate mean-reversion rate of the ou-exponential variant."""
    drift: types.Vector | None = None
    """Per-coordinate constant drift of the drifted variant."""

    def __post_init__(self) -> None:
        if self.variant == "ou-exponential" and self.rate is None:
            error_message = "The ou-exponential truncation needs a rate vector"
            raise errors.ConfigurationError(error_message)
        if self.variant == "drifted" and self.drift is None:
            error_message = "The drifted truncation needs a drift vector"
            raise errors.ConfigurationError(error_message)
        # Validates the quantile.
        normal.inverse_normal_cdf(self.quantile)

    @property
    def phi(self) -> float:
        """The quantile `Phi^{-1}(p)`."""
        return float(normal.inverse_normal_cdf(self.quantile))

    def band(self, t: float) -> tuple[types.Vector, types.Vector]:
        """Returns the lower and upper edges of the band at time `t`."""
        if self.variant == "ou-exponential":
            rate = np.asarray(self.rate, dtype=types.FLOAT_DTYPE)
            center = self.x0 * np.exp(rate * t)
            safe = np.where(rate == 0.0, 1.0, rate)
            spread = np.where(rate == 0.0, t, np.expm1(2.0 * safe * t) / (2.0 * safe))
            half_width = self.sigma * np.sqrt(spread) * self.phi
        else:
            center = self.x0 + (self.drift * t if self.variant == "drifted" else 0.0)
            half_width = self.sigma * np.sqrt(t) * self.phi
        return center - half_width, center + half_width


def apply_truncation(op: TruncationOp | None, x: types.Array, t: float) -> types.Array:
    """Clamps `x` componentwise to the band of `op` at time `t`; identity when `op` is None."""
    if op is None:
        return x
    lower, upper = op.band(t)
    return np.clip(x, lower, upper)
