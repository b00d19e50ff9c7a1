"""Append-only training telemetry CSV and curve smoothing helpers."""

import csv
import logging
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, fields
from os.path import isfile
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TelemetryRecord:
    """One row per logging interval.

    Loss columns hold means over the interval. ``dit_base`` and ``dit_detail``
    are the unweighted branch losses, recorded before ``w`` is applied.
    """

    step: int
    stage: str
    lr: float
    w: float | None = None
    vae_total: float | None = None
    vae_l1: float | None = None
    vae_lpips: float | None = None
    vae_adv: float | None = None
    vae_kl: float | None = None
    vae_align: float | None = None
    disc_loss: float | None = None
    dit_total: float | None = None
    dit_base: float | None = None
    dit_detail: float | None = None
    ema: int = 0
    wallclock: float | None = None


FIELDNAMES = [f.name for f in fields(TelemetryRecord)]
TEXT_COLUMNS = {"stage"}
INT_COLUMNS = {"step", "ema"}


def _format(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


class TelemetryWriter:
    """Appends records to ``path``, writing the header when the file is new.

    The ``wallclock`` column is always present but only filled when
    ``record_wallclock`` is set, so same-seed runs stay byte-identical.
    """

    def __init__(self, path: str | Path, record_wallclock: bool = False) -> None:
        self.path = Path(path)
        self.record_wallclock = record_wallclock
        self._start = time.monotonic()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if isfile(self.path):
            with open(self.path, encoding="utf-8", newline="") as csvfile:
                header = next(csv.reader(csvfile), None)
            if header is not None and header != FIELDNAMES:
                raise ValueError(
                    f"Telemetry file {self.path} has header {header}, "
                    f"expected {FIELDNAMES}"
                )
            if header is None:
                self._write_header()
        else:
            self._write_header()

    def _write_header(self) -> None:
        with open(self.path, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=FIELDNAMES)
            writer.writeheader()

    def append(self, record: TelemetryRecord) -> None:
        row = asdict(record)
        if self.record_wallclock:
            row["wallclock"] = round(time.monotonic() - self._start, 3)
        else:
            row["wallclock"] = None
        with open(self.path, "a", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=FIELDNAMES)
            writer.writerow({key: _format(value) for key, value in row.items()})


def _parse(column: str, text: str) -> float | int | str | None:
    if column in TEXT_COLUMNS:
        return text
    if text == "":
        return None
    if column in INT_COLUMNS:
        return int(text)
    return float(text)


def read_telemetry(path: str | Path) -> list[dict[str, float | int | str | None]]:
    with open(path, encoding="utf-8", newline="") as csvfile:
        reader = csv.DictReader(csvfile)
        if reader.fieldnames != FIELDNAMES:
            raise ValueError(
                f"Telemetry file {path} has header {reader.fieldnames}, "
                f"expected {FIELDNAMES}"
            )
        return [
            {column: _parse(column, text) for column, text in row.items()}
            for row in reader
        ]


def column(
    rows: list[dict[str, float | int | str | None]], name: str, stage: str | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """(steps, values) of one column, skipping empty cells."""
    steps = []
    values = []
    for row in rows:
        if stage is not None and row["stage"] != stage:
            continue
        value = row[name]
        if value is None:
            continue
        steps.append(row["step"])
        values.append(value)
    return np.asarray(steps, dtype=np.int64), np.asarray(values, dtype=np.float64)


def smooth(values: np.ndarray | list[float], window: int) -> np.ndarray:
    """Trailing moving average; the first ``window - 1`` points average what exists."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    data = np.asarray(values, dtype=np.float64)
    if data.size == 0:
        return data
    cumsum = np.concatenate([[0.0], np.cumsum(data)])
    index = np.arange(1, data.size + 1)
    start = np.maximum(index - window, 0)
    return (cumsum[index] - cumsum[start]) / (index - start)


def ema_smooth(values: np.ndarray | list[float], alpha: float = 0.98) -> np.ndarray:
    """``s_i = alpha * s_{i-1} + (1 - alpha) * v_i`` with ``s_0 = v_0``."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    data = np.asarray(values, dtype=np.float64)
    out = np.empty_like(data)
    running = 0.0
    for index, value in enumerate(data):
        running = value if index == 0 else alpha * running + (1.0 - alpha) * value
        out[index] = running
    return out


class IntervalMeans:
    """Accumulates scalar losses between two telemetry rows."""

    def __init__(self) -> None:
        self._sums: dict[str, float] = defaultdict(float)
        self._counts: dict[str, int] = defaultdict(int)

    def add(self, **values: float | None) -> None:
        for name, value in values.items():
            if value is None:
                continue
            self._sums[name] += float(value)
            self._counts[name] += 1

    def pop(self) -> dict[str, float]:
        means = {name: self._sums[name] / self._counts[name] for name in self._sums}
        self._sums.clear()
        self._counts.clear()
        return means
