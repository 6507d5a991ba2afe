"""CSV loading, chronological splits, standard scaling and sliding windows."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from datetime import datetime
from typing import Iterator

import numpy as np

from .frame import DATE_FORMAT, DataError, SeriesFrame


class ParseError(DataError):
    pass


def _parse_date(text: str) -> datetime:
    for fmt in (DATE_FORMAT, "%Y-%m-%d %H:%M", "%Y-%m-%d"):
        try:
            return datetime.strptime(text, fmt)
        except ValueError:
            continue
    return datetime.fromisoformat(text)


def load_csv(path: str | os.PathLike) -> SeriesFrame:
    """Read an ETT-style CSV (``date,<features...>``).  Errors name the 1-based file line."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if not header or header[0].strip().lower() != "date":
            raise ParseError(f"{path}: line 1: header must start with 'date', got {header[:1]}")
        names = [h.strip() for h in header[1:]]
        if not names:
            raise ParseError(f"{path}: line 1: no feature columns")
        stamps, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                stamps.append(_parse_date(row[0].strip()))
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: bad timestamp {row[0]!r}") from None
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: missing or non-numeric value in {row[1:]}") from None
    if not rows:
        raise ParseError(f"{path}: no data rows")
    ts = np.array(stamps, dtype="datetime64[s]")
    steps = np.diff(ts).astype(np.int64)
    bad = np.flatnonzero(steps <= 0)
    if bad.size:
        raise DataError(f"{path}: line {bad[0] + 3}: timestamps not strictly increasing")
    uneven = np.flatnonzero(steps != steps[0]) if steps.size else bad
    if uneven.size:
        raise DataError(f"{path}: line {uneven[0] + 3}: timestamp spacing differs from the first step")
    return SeriesFrame(ts, np.array(rows, dtype=np.float64), names)


def chrono_split(frame: SeriesFrame, ratios=(0.7, 0.2, 0.1)) -> tuple[SeriesFrame, SeriesFrame, SeriesFrame]:
    """Contiguous train/val/test segments with boundaries ``floor(r0 T)`` and ``floor((r0 + r1) T)``."""
    if abs(sum(ratios) - 1.0) > 1e-9 or len(ratios) != 3:
        raise ValueError(f"split ratios must be three values summing to 1, got {ratios}")
    n = len(frame)
    if n < 3:
        raise DataError(f"need at least 3 rows to split, got {n}")
    # round before flooring so 0.7 * 10 = 7.000000000000001 style noise cannot shift a boundary
    a = int(np.floor(round(ratios[0] * n, 9)))
    b = int(np.floor(round((ratios[0] + ratios[1]) * n, 9)))
    return frame.slice(0, a), frame.slice(a, b), frame.slice(b, n)


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, frame: SeriesFrame) -> SeriesFrame:
        return frame.with_values((frame.values - self.mean) / self.std)

    def invert(self, frame: SeriesFrame) -> SeriesFrame:
        return frame.with_values(frame.values * self.std + self.mean)


def fit_scaler(train: SeriesFrame) -> Scaler:
    """Per-channel mean and population std of the training segment; zero std becomes 1."""
    if len(train) == 0:
        raise DataError("cannot fit a scaler on an empty segment")
    mean = train.values.mean(axis=0)
    std = train.values.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return Scaler(mean, std)


@dataclass
class WindowedDataset:
    inputs: np.ndarray  # [N, L_in, C]
    targets: np.ndarray  # [N, L_out, C]

    def __post_init__(self):
        if len(self.inputs) != len(self.targets):
            raise DataError(f"{len(self.inputs)} inputs vs {len(self.targets)} targets")

    def __len__(self):
        return len(self.inputs)

    @property
    def L_in(self) -> int:
        return self.inputs.shape[1]

    @property
    def L_out(self) -> int:
        return self.targets.shape[1]


def make_windows(frame: SeriesFrame | np.ndarray, L_in: int, L_out: int) -> WindowedDataset:
    """All stride-1 windows: input rows ``[i, i+L_in)``, target rows ``[i+L_in, i+L_in+L_out)``."""
    values = frame.values if isinstance(frame, SeriesFrame) else np.asarray(frame, dtype=np.float64)
    T = len(values)
    if T < L_in + L_out:
        raise DataError(f"series of length {T} is too short: need at least L_in + L_out = {L_in + L_out} rows")
    view = np.lib.stride_tricks.sliding_window_view(values, L_in + L_out, axis=0)  # [N, C, L_in+L_out]
    view = np.swapaxes(view, 1, 2)
    return WindowedDataset(view[:, :L_in], view[:, L_in:])


def batches(
    ds: WindowedDataset,
    batch_size: int,
    shuffle: bool = False,
    drop_last: bool = False,
    rng: np.random.Generator | None = None,
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = len(ds)
    order = rng.permutation(n) if shuffle else np.arange(n)
    stop = n - n % batch_size if drop_last else n
    for i in range(0, stop, batch_size):
        idx = order[i : i + batch_size]
        yield ds.inputs[idx], ds.targets[idx]


@dataclass
class PreparedData:
    train: WindowedDataset
    val: WindowedDataset
    test: WindowedDataset
    scaler: Scaler
    n_features: int


def prepare(frame: SeriesFrame, L_in: int, L_out: int, ratios=(0.7, 0.2, 0.1)) -> PreparedData:
    """Split, scale with train statistics, and window each segment independently."""
    train, val, test = chrono_split(frame, ratios)
    scaler = fit_scaler(train)
    return PreparedData(
        make_windows(scaler.apply(train), L_in, L_out),
        make_windows(scaler.apply(val), L_in, L_out),
        make_windows(scaler.apply(test), L_in, L_out),
        scaler,
        frame.n_features,
    )
