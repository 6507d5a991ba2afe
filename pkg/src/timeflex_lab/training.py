"""Optimisation loop: Adam, reduce-on-plateau, early stopping, MSE/MAE metrics."""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Tape, Tensor, backward, mean, square, sub
from .data import PreparedData, WindowedDataset, batches
from .models.base import Forecaster

log = logging.getLogger(__name__)

RESULTS_HEADER = "# results-v1"
RESULT_FIELDS = ("model", "dataset", "horizon", "mse", "mae", "params", "train_seconds", "stop_reason")


class TrainingError(RuntimeError):
    pass


def _check_shapes(yhat, y):
    yhat, y = np.asarray(yhat), np.asarray(y)
    if yhat.shape != y.shape:
        raise ValueError(f"metric shape mismatch: {yhat.shape} vs {y.shape}")
    return yhat, y


def mse(yhat, y) -> float:
    yhat, y = _check_shapes(yhat, y)
    return float(np.mean((yhat - y) ** 2))


def mae(yhat, y) -> float:
    yhat, y = _check_shapes(yhat, y)
    return float(np.mean(np.abs(yhat - y)))


def mse_loss(yhat: Tensor, y: np.ndarray) -> Tensor:
    if yhat.shape != np.shape(y):
        raise ValueError(f"loss shape mismatch: {yhat.shape} vs {np.shape(y)}")
    return mean(square(sub(yhat, y)))


# ---------------------------------------------------------------- config


@dataclass
class TrainConfig:
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    max_epochs: int = 50
    batch_size: int = 32
    sched_patience: int = 2
    sched_factor: float = 0.1
    es_patience: int = 10
    es_delta: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if not 0 < self.sched_factor < 1:
            raise ValueError(f"scheduler factor must be in (0, 1), got {self.sched_factor}")
        if self.sched_patience < 1 or self.es_patience < 1:
            raise ValueError("patience must be >= 1")
        if self.es_delta < 0:
            raise ValueError("early-stop delta must be >= 0")
        if self.lr <= 0 or self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("lr, max_epochs and batch_size must be positive")
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            raise ValueError(f"betas must be two values in [0, 1), got {self.betas}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


# ---------------------------------------------------------------- Adam


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float, betas=(0.9, 0.999), eps: float = 1e-8) -> None:
    """In-place bias-corrected Adam update; parameters without a gradient see g = 0."""
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in parameter {name!r}")
    b1, b2 = betas
    state.t += 1
    c1 = 1 - b1**state.t
    c2 = 1 - b2**state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)


# ---------------------------------------------------------------- schedules


class ReduceOnPlateau:
    """Multiply lr by ``factor`` after ``patience`` consecutive epochs without val < best."""

    def __init__(self, lr: float, patience: int = 2, factor: float = 0.1):
        self.lr = lr
        self.patience = patience
        self.factor = factor
        self.best = np.inf
        self.bad = 0
        self.reductions = 0

    def step(self, val_loss: float) -> float:
        if val_loss < self.best:
            self.best = val_loss
            self.bad = 0
        else:
            self.bad += 1
            if self.bad >= self.patience:
                self.lr *= self.factor
                self.bad = 0
                self.reductions += 1
        return self.lr


class EarlyStopping:
    """Signal a stop after ``patience`` consecutive epochs without val < best - delta."""

    def __init__(self, patience: int = 10, delta: float = 1e-5):
        self.patience = patience
        self.delta = delta
        self.best = np.inf
        self.bad = 0

    def step(self, val_loss: float) -> bool:
        if val_loss < self.best - self.delta:
            self.best = val_loss
            self.bad = 0
        else:
            self.bad += 1
        return self.bad >= self.patience


# ---------------------------------------------------------------- results


@dataclass
class RunResult:
    model: str
    dataset: str
    horizon: int
    mse: float
    mae: float
    params: int
    train_seconds: float
    stop_reason: str
    train_history: list = field(default_factory=list)
    val_history: list = field(default_factory=list)
    initial_val: float = float("nan")

    def to_row(self) -> dict:
        return {
            "model": self.model,
            "dataset": self.dataset,
            "horizon": str(self.horizon),
            "mse": repr(float(self.mse)),
            "mae": repr(float(self.mae)),
            "params": str(self.params),
            "train_seconds": f"{self.train_seconds:.3f}",
            "stop_reason": self.stop_reason,
        }

    def csv_line(self) -> str:
        buf = io.StringIO()
        csv.DictWriter(buf, RESULT_FIELDS, lineterminator="\n").writerow(self.to_row())
        return buf.getvalue()


def append_results(path, results) -> None:
    """Append rows, writing the version line and header first if the file is new or empty."""
    import os

    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        if new:
            fh.write(RESULTS_HEADER + "\n")
            fh.write(",".join(RESULT_FIELDS) + "\n")
        for r in results:
            fh.write(r.csv_line())


def read_results(path) -> tuple[list[dict], list[str]]:
    """Parse a results CSV; returns (rows, warnings) with malformed rows skipped."""
    rows, warnings = [], []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh.read().splitlines()]
    body = [ln for ln in lines if ln.strip() and not ln.startswith("#")]
    if not body:
        return rows, warnings
    reader = csv.reader(body)
    header = next(reader)
    if tuple(header) != RESULT_FIELDS:
        raise ValueError(f"{path}: unexpected results header {header}")
    for lineno, rec in enumerate(reader, start=2):
        if len(rec) != len(RESULT_FIELDS):
            warnings.append(f"row {lineno}: expected {len(RESULT_FIELDS)} fields, got {len(rec)}")
            continue
        row = dict(zip(RESULT_FIELDS, rec))
        try:
            row["horizon"] = int(row["horizon"])
            row["mse"] = float(row["mse"])
            row["mae"] = float(row["mae"])
            row["params"] = int(row["params"])
            row["train_seconds"] = float(row["train_seconds"])
        except ValueError as exc:
            warnings.append(f"row {lineno}: {exc}")
            continue
        rows.append(row)
    return rows, warnings


# ---------------------------------------------------------------- loops


def predict(model: Forecaster, ds: WindowedDataset, batch_size: int = 256) -> np.ndarray:
    out = [model(x, training=False).data for x, _ in batches(ds, batch_size)]
    return np.concatenate(out, axis=0) if out else np.zeros((0,) + ds.targets.shape[1:])


def evaluate(model: Forecaster, ds: WindowedDataset, batch_size: int = 256) -> tuple[float, float]:
    """Unshuffled full pass in eval mode; metrics on the standardised scale."""
    if len(ds) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    yhat = predict(model, ds, batch_size)
    return mse(yhat, ds.targets), mae(yhat, ds.targets)


def train_epoch(model: Forecaster, ds: WindowedDataset, cfg: TrainConfig, state: AdamState, lr: float, rng, epoch: int) -> float:
    total, count = 0.0, 0
    # drop_last keeps batch statistics uniform; tiny splits fall back to a single partial batch
    drop_last = len(ds) >= cfg.batch_size
    for b, (x, y) in enumerate(batches(ds, cfg.batch_size, shuffle=True, drop_last=drop_last, rng=rng)):
        model.zero_grad()
        with Tape() as tape:
            loss = mse_loss(model(x, training=True, rng=rng), y)
            if not np.isfinite(loss.data):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            backward(loss)
        tape.release()
        adam_step(model.params, {k: p.grad for k, p in model.params.items()}, state, lr, cfg.betas, cfg.adam_eps)
        total += float(loss.data) * len(x)
        count += len(x)
    return total / max(count, 1)


def train(model: Forecaster, data: PreparedData, cfg: TrainConfig, dataset_name: str = "") -> RunResult:
    """Fit ``model`` in place and return its test metrics with the best-validation weights."""
    rng = np.random.default_rng(cfg.seed)
    start = time.perf_counter()
    trainable = len(model.params) > 0
    initial_val = evaluate(model, data.val)[0]
    best_val, best_state = np.inf, model.state_dict()
    train_hist, val_hist = [], []
    stop_reason = "max_epochs" if trainable else "no_params"
    if trainable:
        state = AdamState()
        sched = ReduceOnPlateau(cfg.lr, cfg.sched_patience, cfg.sched_factor)
        stopper = EarlyStopping(cfg.es_patience, cfg.es_delta)
        for epoch in range(cfg.max_epochs):
            tr = train_epoch(model, data.train, cfg, state, sched.lr, rng, epoch)
            val = evaluate(model, data.val)[0]
            if not np.isfinite(val):
                raise TrainingError(f"non-finite validation loss at epoch {epoch}")
            train_hist.append(tr)
            val_hist.append(val)
            log.info("epoch %d train %.6f val %.6f lr %.1e", epoch, tr, val, sched.lr)
            if val < best_val:
                best_val, best_state = val, model.state_dict()
            sched.step(val)
            if stopper.step(val):
                stop_reason = "early_stop"
                break
        model.load_state_dict(best_state)
    seconds = time.perf_counter() - start
    test_mse, test_mae = evaluate(model, data.test)
    return RunResult(
        model.kind, dataset_name, model.config.L_out, test_mse, test_mae, model.num_params, seconds,
        stop_reason, train_hist, val_hist, initial_val,
    )
