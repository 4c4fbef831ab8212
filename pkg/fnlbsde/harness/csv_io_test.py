import numpy as np
import pandas as pd
import pytest

from fnlbsde.common import errors
from fnlbsde.harness import csv_io
from fnlbsde.scheme import log


def test_empty_table_writes_header_only(tmp_path):
    path = csv_io.emit_csv(pd.DataFrame(columns=["run", "u"]), tmp_path / "empty.csv")
    assert path.read_text(encoding="utf-8") == "run,u\n"


def test_floats_booleans_and_missing_values_round_trip(tmp_path):
    frame = pd.DataFrame({"aggregate": [False, True], "u": [0.1 + 0.2, -1 / 3], "ref_u": [np.nan, np.pi]})
    path = csv_io.emit_csv(frame, tmp_path / "nested" / "table.csv")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "aggregate,u,ref_u"
    assert lines[1] == "false,0.30000000000000004,"
    loaded = csv_io.read_csv(path)
    assert loaded["aggregate"].tolist() == [False, True]
    assert loaded["u"].tolist() == frame["u"].tolist()
    assert np.isnan(loaded["ref_u"][0])
    assert loaded["ref_u"][1] == np.pi


def _training_table():
    return pd.DataFrame({
        "run": [0, 0, 1],
        "step": [1, 0, 1],
        "outer": [0, 0, 0],
        "validation_loss": [0.5, 0.1 + 0.2, 0.25],
        "learning_rate": [1e-2, 1e-3, 1e-2],
        "clamp_count": [0, 2, 1],
    })


def test_training_log_reads_back_one_run(tmp_path):
    path = csv_io.emit_csv(_training_table(), tmp_path / "merton.log.csv")
    training_log = csv_io.read_training_log(path, run=0)
    assert training_log.records == [
        log.TrainingRecord(step=1, outer=0, validation_loss=0.5, learning_rate=1e-2, clamp_count=0),
        log.TrainingRecord(step=0, outer=0, validation_loss=0.1 + 0.2, learning_rate=1e-3, clamp_count=2),
    ]
    assert csv_io.read_training_log(path, run=1).summary()["clamp_count"].tolist() == [1]


def test_single_run_training_log_needs_no_run(tmp_path):
    table = _training_table()
    path = csv_io.emit_csv(table[table["run"] == 1], tmp_path / "single.log.csv")
    assert len(csv_io.read_training_log(path).records) == 1
    path = csv_io.emit_csv(log.TrainingLog.from_frame(table).to_frame(), tmp_path / "bare.log.csv")
    assert len(csv_io.read_training_log(path).records) == 3


@pytest.mark.parametrize("run", [None, 7])
def test_ambiguous_or_unknown_run_is_rejected(tmp_path, run):
    path = csv_io.emit_csv(_training_table(), tmp_path / "merton.log.csv")
    with pytest.raises(errors.ConfigurationError):
        csv_io.read_training_log(path, run=run)


def test_non_training_tables_are_rejected(tmp_path):
    path = csv_io.emit_csv(pd.DataFrame({"run": [0], "u": [1.0]}), tmp_path / "report.csv")
    with pytest.raises(errors.ConfigurationError):
        csv_io.read_training_log(path)
    with pytest.raises(errors.ConfigurationError):
        csv_io.read_training_log(tmp_path / "missing.log.csv")
