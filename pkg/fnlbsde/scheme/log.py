"""Provides the per-outer-iteration training log of a backward run.

A `TrainingLog` collects one `TrainingRecord` per outer iteration and forwards each new record to
its observers. `solve_backward` attaches a `LoggingObserver` for the duration of a run, so progress
shows up at DEBUG level while the log is being filled.
"""

import dataclasses
import logging
from collections.abc import Iterable
from typing import Protocol

import dataclass_wizard
import pandas as pd

_LOGGER = logging.getLogger(__name__)

COLUMNS = ("step", "outer", "validation_loss", "learning_rate", "clamp_count")
SUMMARY_COLUMNS = ("step", "outer_iterations", "final_validation_loss", "final_learning_rate", "halvings",
                   "clamp_count")


@dataclasses.dataclass(frozen=True)
class TrainingRecord:
    """The state of one time-step optimization after an outer iteration.

    Attributes:
        step: The time index i of the network being trained.
        outer: The outer iteration, starting at 0.
        validation_loss: The loss on the validation batch.
        learning_rate: The learning rate after the controller update.
        clamp_count: Denominators clamped during the outer iteration.
    """
    step: int
    outer: int
    validation_loss: float
    learning_rate: float
    clamp_count: int


class TrainingObserver(Protocol):
    """Anything that wants to see records as they are appended to a `TrainingLog`."""

    def update(self, record: TrainingRecord) -> None:
        """Receives one freshly appended record."""
        raise NotImplementedError


class LoggingObserver:
    """Writes one DEBUG line per record to a logger."""

    def __init__(self, logger: logging.Logger | None = None) -> None:
        self._logger = _LOGGER if logger is None else logger

    def update(self, record: TrainingRecord) -> None:
        """Logs `record` at DEBUG level."""
        self._logger.debug("Step %d, outer %d: validation loss %.6g, learning rate %.3g, %d clamped",
                           record.step, record.outer, record.validation_loss, record.learning_rate,
                           record.clamp_count)


class TrainingLog:
    """The records of a run, in the order they were produced."""

    _records: list[TrainingRecord]
    _observers: list[TrainingObserver]

    def __init__(self, records: Iterable[TrainingRecord] | None = None) -> None:
        """Initializes a `TrainingLog` instance.

        Args:
            records: Records to start from; observers attached later do not see them.
        """
        self._records = []
        self._observers = []
        if records:
            self.append(*records)

    def append(self, *records: TrainingRecord) -> None:
        """Stores `records` in order and hands each one to every attached observer."""
        for record in records:
            self._records.append(record)
            for observer in self._observers:
                observer.update(record)

    def add_observer(self, observer: TrainingObserver) -> bool:
        """Attaches `observer`; returns False if it was already attached."""
        if observer in self._observers:
            return False
        self._observers.append(observer)
        return True

    def remove_observer(self, observer: TrainingObserver) -> bool:
        """Detaches `observer`; returns False if it was not attached."""
        if observer not in self._observers:
            return False
        self._observers.remove(observer)
        return True

    @property
    def records(self) -> list[TrainingRecord]:
        """A copy of the records, oldest first."""
        return list(self._records)

    def for_step(self, step: int) -> list[TrainingRecord]:
        """Returns the records of time index `step`."""
        return [record for record in self._records if record.step == step]

    def summary(self) -> pd.DataFrame:
        """Condenses the log to one row per time index, in the order the steps were trained.

        Returns:
            A frame with the columns `SUMMARY_COLUMNS`. `halvings` counts the outer iterations after
            which the learning rate dropped; `clamp_count` is summed over the step.
        """
        rows = []
        steps = list(dict.fromkeys(record.step for record in self._records))
        for step in steps:
            records = self.for_step(step)
            rates = [record.learning_rate for record in records]
            halvings = sum(later < earlier for earlier, later in zip(rates, rates[1:], strict=False))
            rows.append((step, len(records), records[-1].validation_loss, rates[-1], halvings,
                         sum(record.clamp_count for record in records)))
        return pd.DataFrame(rows, columns=list(SUMMARY_COLUMNS))

    def to_frame(self) -> pd.DataFrame:
        """Returns the records as a frame with the columns `COLUMNS`."""
        return pd.DataFrame([dataclasses.astuple(record) for record in self._records], columns=list(COLUMNS))

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "TrainingLog":
        """Rebuilds a log from a frame holding at least the columns `COLUMNS`; other columns are ignored."""
        return cls(dataclass_wizard.fromlist(TrainingRecord, frame[list(COLUMNS)].to_dict("records")))
