"""Tests for telemetry CSV writing, reading and smoothing."""

import tempfile
from pathlib import Path

import numpy as np
import pytest

from detail_aligned_vae.training.telemetry import (
    FIELDNAMES,
    IntervalMeans,
    TelemetryRecord,
    TelemetryWriter,
    column,
    ema_smooth,
    read_telemetry,
    smooth,
)

RECORDS = [
    TelemetryRecord(
        step=10, stage="train_davae", lr=1e-4, vae_total=1.5, vae_align=0.2
    ),
    TelemetryRecord(
        step=20, stage="train_davae", lr=1e-4, vae_total=1.25, vae_align=0.1
    ),
    TelemetryRecord(
        step=10,
        stage="finetune_dit",
        lr=2e-4,
        w=0.5,
        dit_total=0.9,
        dit_base=0.8,
        dit_detail=1.1,
        ema=1,
    ),
]


def write_records(path: Path, record_wallclock: bool = False) -> None:
    """Append all sample records to ``path``."""
    writer = TelemetryWriter(path, record_wallclock=record_wallclock)
    for record in RECORDS:
        writer.append(record)


class TestTelemetryWriter:
    """Tests for the append-only telemetry writer."""

    def test_header_and_rows(self) -> None:
        """Test that the header is written once and rows are appended."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "telemetry.csv"
            write_records(path)
            lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(FIELDNAMES)
        assert len(lines) == 1 + len(RECORDS)

    def test_same_records_same_bytes(self) -> None:
        """Test that same inputs produce byte-identical telemetry."""
        with tempfile.TemporaryDirectory() as temp_dir:
            first = Path(temp_dir) / "a.csv"
            second = Path(temp_dir) / "b.csv"
            write_records(first)
            write_records(second)
            assert first.read_bytes() == second.read_bytes()

    def test_reopen_appends(self) -> None:
        """Test that a second writer appends without a second header."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "telemetry.csv"
            write_records(path)
            write_records(path)
            rows = read_telemetry(path)
        assert len(rows) == 2 * len(RECORDS)

    def test_foreign_header(self) -> None:
        """Test that a CSV with another header is refused."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "telemetry.csv"
            path.write_text("a,b\n1,2\n", encoding="utf-8")
            with pytest.raises(ValueError, match="header"):
                TelemetryWriter(path)

    def test_wallclock_column(self) -> None:
        """Test that wall-clock time is only recorded when enabled."""
        with tempfile.TemporaryDirectory() as temp_dir:
            plain = Path(temp_dir) / "plain.csv"
            timed = Path(temp_dir) / "timed.csv"
            write_records(plain)
            write_records(timed, record_wallclock=True)
            plain_rows = read_telemetry(plain)
            timed_rows = read_telemetry(timed)
        assert all(row["wallclock"] is None for row in plain_rows)
        assert all(isinstance(row["wallclock"], float) for row in timed_rows)


class TestReadTelemetry:
    """Tests for parsing telemetry back into columns."""

    def test_types(self) -> None:
        """Test that cells parse to int, float, str or None."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "telemetry.csv"
            write_records(path)
            rows = read_telemetry(path)
        assert rows[0]["step"] == 10
        assert rows[0]["stage"] == "train_davae"
        assert rows[0]["vae_total"] == 1.5
        assert rows[0]["dit_total"] is None
        assert rows[2]["ema"] == 1

    def test_column_by_stage(self) -> None:
        """Test selecting one column of one stage, skipping empty cells."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "telemetry.csv"
            write_records(path)
            rows = read_telemetry(path)
        steps, values = column(rows, "vae_total", "train_davae")
        assert steps.tolist() == [10, 20]
        assert values.tolist() == [1.5, 1.25]
        steps, values = column(rows, "dit_detail")
        assert steps.tolist() == [10]
        assert values.tolist() == [1.1]


class TestSmoothing:
    """Tests for moving-average and EMA smoothing."""

    def test_moving_average(self) -> None:
        """Test the trailing window average."""
        smoothed = smooth([1.0, 2.0, 3.0, 4.0], window=2)
        assert smoothed.tolist() == [1.0, 1.5, 2.5, 3.5]

    def test_window_one_is_identity(self) -> None:
        """Test that a window of one keeps the values."""
        values = np.array([3.0, -1.0, 2.0])
        assert np.allclose(smooth(values, 1), values)

    def test_empty_and_invalid(self) -> None:
        """Test empty input and window validation."""
        assert smooth([], 5).size == 0
        with pytest.raises(ValueError, match="window"):
            smooth([1.0], 0)

    def test_ema_smooth(self) -> None:
        """Test s_0 = v_0 and the exponential recursion."""
        smoothed = ema_smooth([1.0, 0.0, 0.0], alpha=0.5)
        assert smoothed.tolist() == [1.0, 0.5, 0.25]
        with pytest.raises(ValueError, match="alpha"):
            ema_smooth([1.0], alpha=1.0)


class TestIntervalMeans:
    """Tests for interval averaging."""

    def test_means_and_reset(self) -> None:
        """Test averaging, skipping None and resetting on pop."""
        means = IntervalMeans()
        means.add(loss=1.0, align=None)
        means.add(loss=3.0, align=0.5)
        assert means.pop() == {"loss": 2.0, "align": 0.5}
        assert means.pop() == {}
