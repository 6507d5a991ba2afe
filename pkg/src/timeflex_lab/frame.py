"""Timestamped multivariate series and its ETT-style CSV representation."""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


class DataError(ValueError):
    """Dataset content violates an invariant (ordering, spacing, length)."""


@dataclass
class SeriesFrame:
    timestamps: np.ndarray  # datetime64[s], strictly increasing and equally spaced
    values: np.ndarray  # [T, C] float64
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[s]")
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"values must be [T, C], got shape {self.values.shape}")
        if not self.feature_names:
            self.feature_names = [f"f{i + 1}" for i in range(self.values.shape[1])]
        if len(self.feature_names) != self.values.shape[1]:
            raise DataError(f"{len(self.feature_names)} names for {self.values.shape[1]} columns")
        if len(self.timestamps) != len(self.values):
            raise DataError(f"{len(self.timestamps)} timestamps for {len(self.values)} rows")
        if len(self.timestamps) > 1:
            steps = np.diff(self.timestamps).astype(np.int64)
            if np.any(steps <= 0):
                row = int(np.argmax(steps <= 0)) + 1
                raise DataError(f"timestamps not strictly increasing at row {row}")
            if np.any(steps != steps[0]):
                row = int(np.argmax(steps != steps[0])) + 1
                raise DataError(f"timestamps not equally spaced at row {row}")

    def __len__(self):
        return len(self.values)

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def slice(self, start: int, stop: int) -> "SeriesFrame":
        return SeriesFrame(self.timestamps[start:stop], self.values[start:stop], list(self.feature_names))

    def with_values(self, values: np.ndarray) -> "SeriesFrame":
        return SeriesFrame(self.timestamps, values, list(self.feature_names))


def format_timestamps(ts: np.ndarray) -> list[str]:
    # datetime64[s] -> 'YYYY-MM-DDTHH:MM:SS'
    return [s.replace("T", " ") for s in np.datetime_as_string(ts, unit="s")]


def write_csv(frame: SeriesFrame, path: str | os.PathLike) -> None:
    """``date,<f1>,...`` header, 17 significant digits (lossless float64), LF endings."""
    dates = format_timestamps(frame.timestamps)
    lines = [",".join(["date", *frame.feature_names])]
    for date, row in zip(dates, frame.values):
        lines.append(date + "," + ",".join(f"{v:.17g}" for v in row))
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
