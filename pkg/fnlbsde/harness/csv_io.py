"""Provides reading and writing of result tables as CSV.

Floats are written with 17 significant digits so that they read back bit-exact, booleans as
`true`/`false`, and missing values as empty cells. A table without rows still gets its header.
"""

import logging
import pathlib

import pandas as pd

from fnlbsde.common import errors
from fnlbsde.harness import experiment
from fnlbsde.scheme import log as log_lib

_LOGGER = logging.getLogger(__name__)

_FLOAT_FORMAT = "%.17g"


def _to_text(frame: pd.DataFrame) -> pd.DataFrame:
    frame = frame.copy()
    for column in frame.columns:
        if pd.api.types.is_bool_dtype(frame[column]):
            frame[column] = frame[column].map({True: "true", False: "false"})
    return frame


def emit_csv(table: pd.DataFrame | experiment.RunReport, path: str | pathlib.Path) -> pathlib.Path:
    """Writes a result table.

    Args:
        table: A frame, or a report that is written as its `to_frame()`.
        path: The output file; parent directories are created.

    Returns:
        The path written to.
    """
    frame = table.to_frame() if isinstance(table, experiment.RunReport) else table
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _to_text(frame).to_csv(path, index=False, float_format=_FLOAT_FORMAT, na_rep="", lineterminator="\n")
    _LOGGER.info("Wrote %d rows to %s", len(frame), path)
    return path


def read_csv(path: str | pathlib.Path) -> pd.DataFrame:
    """Reads a table written by `emit_csv`; empty cells become NaN."""
    return pd.read_csv(path, float_precision="round_trip", true_values=["true"], false_values=["false"])


def read_training_log(path: str | pathlib.Path, run: int | None = None) -> log_lib.TrainingLog:
    """Reads training records written next to a report back into a `TrainingLog`.

    Args:
        path: A `.log.csv` file, as written by `solve`.
        run: Keeps the records of this run only; required when the file holds several runs.

    Raises:
        ConfigurationError: If the file lacks training columns, or `run` is missing or unknown.
    """
    if not pathlib.Path(path).is_file():
        error_message = f"Training log {path} does not exist"
        raise errors.ConfigurationError(error_message)
    frame = read_csv(path)
    missing = [column for column in log_lib.COLUMNS if column not in frame.columns]
    if missing:
        error_message = f"{path} is not a training log, missing columns {missing}"
        raise errors.ConfigurationError(error_message)
    if "run" in frame.columns:
        runs = sorted(int(value) for value in frame["run"].unique())
        if run is None and len(runs) > 1:
            error_message = f"{path} holds runs {runs}; pick one"
            raise errors.ConfigurationError(error_message)
        run = runs[0] if run is None and runs else run
        if runs and run not in runs:
            error_message = f"Run {run} not found in {path}; available: {runs}"
            raise errors.ConfigurationError(error_message)
        frame = frame[frame["run"] == run]
    return log_lib.TrainingLog.from_frame(frame)
