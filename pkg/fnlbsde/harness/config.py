"""Provides the experiment configuration and its flat `key=value` file format.

A configuration file holds one `key=value` entry per line. Blank lines and `#` comments are
ignored, `none` stands for no value, and keys prefixed with `param.` override parameters of the
registered problem. Keys are the `RunConfig` field names or their short aliases:

    problem=merton
    N=10
    T=0.1
    p=0.98
"""

import dataclasses
import pathlib
from typing import Annotated, Literal

import pydantic
from pydantic import dataclasses as pydantic_dataclasses

from fnlbsde.common import errors, types
from fnlbsde.problems import registry
from fnlbsde.scheme import solver

DEFAULT_SCALE = 0.25
"""The desk-scale factor; 1.0 runs the full training protocol."""
MAX_RUNS = 2**16
"""Runs per experiment; per-run seeds are `master_seed * MAX_RUNS + run`."""

ALIASES = {
    "d": "dim",
    "T": "maturity",
    "N": "steps",
    "sigma": "sigma_hat",
    "p": "quantile",
    "m": "width",
    "neurons": "width",
    "layers": "hidden_layers",
    "R": "runs",
}
_PARAMETER_PREFIX = "param."
_NONE = "none"


@pydantic_dataclasses.dataclass(kw_only=True)
class RunConfig:
    """An experiment: R independent backward runs of one problem.

    Unset (None) problem settings fall back to the registered defaults of the problem.
    """
    problem: str
    parameters: dict[str, float] = dataclasses.field(default_factory=dict)
    """Overrides of registered problem parameters."""
    dim: pydantic.PositiveInt | None = None
    maturity: pydantic.PositiveFloat | None = None
    steps: pydantic.PositiveInt = 20
    """The number N of time steps."""
    sigma_hat: pydantic.PositiveFloat | None = None
    quantile: float | None | Literal["default"] = "default"
    """The truncation quantile p; None disables truncation, "default" uses the problem's."""
    width: pydantic.PositiveInt | None = None
    hidden_layers: pydantic.PositiveInt | None = None
    mode: types.Mode = "explicit"
    runs: Annotated[int, pydantic.Field(ge=1, le=MAX_RUNS)] = 10
    seed: pydantic.NonNegativeInt = 0
    scale: pydantic.PositiveFloat = DEFAULT_SCALE
    terminal_gradient: Literal["analytic", "network"] = "analytic"
    out: str | None = None

    @pydantic.field_validator("problem")
    @classmethod
    def _check_problem(cls, value: str) -> str:
        if value not in registry.PROBLEMS_ENTRY:
            error_message = f"Unknown problem: {value} (known: {', '.join(sorted(registry.PROBLEMS_ENTRY))})"
            raise ValueError(error_message)
        return value

    @pydantic.field_validator("quantile")
    @classmethod
    def _check_quantile(cls, value: float | str | None) -> float | str | None:
        if isinstance(value, float) and not 0.0 < value < 1.0:
            error_message = f"The truncation quantile must lie in (0, 1), got {value}"
            raise ValueError(error_message)
        return value

    def problem_config(self) -> registry.ProblemConfig:
        """Returns the registered problem configuration with this experiment's overrides.

        Raises:
            ConfigurationError: If a parameter override is not a field of the problem.
        """
        overrides: dict[str, object] = dict(self.parameters)
        for name in ("dim", "maturity", "sigma_hat"):
            value = getattr(self, name)
            if value is not None:
                overrides[name] = value
        return registry.get_config(self.problem, **overrides)

    def scheme_config(self, problem_config: registry.ProblemConfig, dim: int) -> solver.SchemeConfig:
        """Returns the training protocol, filling unset settings from the problem defaults."""
        quantile = problem_config.quantile if self.quantile == "default" else self.quantile
        hidden_layers = problem_config.hidden_layers if self.hidden_layers is None else self.hidden_layers
        width = problem_config.network_width(dim) if self.width is None else self.width
        return solver.SchemeConfig(mode=self.mode, quantile=quantile, width=width, hidden_layers=hidden_layers,
                                   scale=self.scale, terminal_gradient=self.terminal_gradient)


def run_seed(master_seed: int, run: int) -> int:
    """Derives the seed of run `run`; injective in `(master_seed, run)` for `run < MAX_RUNS`."""
    return master_seed * MAX_RUNS + run


def _parse_value(value: str) -> str | None:
    return None if value.strip().lower() == _NONE else value.strip()


def parse_config(text: str) -> RunConfig:
    """Parses the `key=value` configuration format.

    Args:
        text: The content of a configuration file.

    Returns:
        The validated `RunConfig`.

    Raises:
        ConfigParseError: If a line is malformed, a key is unknown or repeated, or a value is
            invalid; carries the 1-indexed line number.
    """
    fields = {field.name for field in dataclasses.fields(RunConfig)} - {"parameters"}
    values: dict[str, object] = {}
    parameters: dict[str, float] = {}
    lines: dict[str, int] = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            error_message = f"Expected key=value, got {line!r}"
            raise errors.ConfigParseError(error_message, line_number=line_number)
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith(_PARAMETER_PREFIX):
            name = key.removeprefix(_PARAMETER_PREFIX)
            try:
                parameters[name] = float(value)
            except ValueError as error:
                error_message = f"Problem parameter {name} must be a number, got {value!r}"
                raise errors.ConfigParseError(error_message, line_number=line_number) from error
            lines[key] = line_number
            continue
        name = ALIASES.get(key, key)
        if name not in fields:
            error_message = f"Unknown key: {key}"
            raise errors.ConfigParseError(error_message, line_number=line_number)
        if name in values:
            error_message = f"Duplicate key: {key} (first set on line {lines[name]})"
            raise errors.ConfigParseError(error_message, line_number=line_number)
        values[name] = _parse_value(value)
        lines[name] = line_number
    if "problem" not in values:
        error_message = "Missing required key: problem"
        raise errors.ConfigParseError(error_message)
    try:
        return RunConfig(parameters=parameters, **values)
    except pydantic.ValidationError as error:
        first = error.errors()[0]
        name = str(first["loc"][0]) if first["loc"] else ""
        error_message = f"Invalid value for {name}: {first['msg']}"
        raise errors.ConfigParseError(error_message, line_number=lines.get(name)) from error


def load_config(path: str | pathlib.Path) -> RunConfig:
    """Reads and parses a configuration file.

    Raises:
        ConfigParseError: If the file content is invalid.
        OSError: If the file cannot be read.
    """
    return parse_config(pathlib.Path(path).read_text(encoding="utf-8"))
