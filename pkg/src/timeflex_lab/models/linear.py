"""Linear baselines (channel-independent) and parameter-free reference forecasts."""
from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, add, sub, transpose
from ..autodiff.tensor import as_tensor
from .base import Forecaster
from .layers import channel_affine, revin_denormalize, revin_normalize, series_decompose


def _per_channel(model: Forecaster, name: str) -> None:
    cfg = model.config
    model.uniform(f"{name}.W", (cfg.C, cfg.L_in, cfg.L_out), cfg.L_in)
    model.constant(f"{name}.b", np.zeros((cfg.C, cfg.L_out)))


def _apply(model: Forecaster, name: str, x: Tensor) -> Tensor:
    """[N, L_in, C] -> [N, L_out, C] through the named per-channel affine."""
    p = model.params
    return transpose(channel_affine(transpose(x, (0, 2, 1)), p[f"{name}.W"], p[f"{name}.b"]), (0, 2, 1))


class DLinear(Forecaster):
    kind = "dlinear"

    def build(self):
        _per_channel(self, "seasonal")
        _per_channel(self, "trend")

    def forward(self, x, training=False, rng=None):
        seasonal, trend = series_decompose(as_tensor(x), self.config.ma_window, axis=1)
        return add(_apply(self, "seasonal", seasonal), _apply(self, "trend", trend))


class NLinear(Forecaster):
    kind = "nlinear"

    def build(self):
        _per_channel(self, "linear")

    def forward(self, x, training=False, rng=None):
        x = as_tensor(x)
        last = x.data[:, -1:, :]
        return add(_apply(self, "linear", sub(x, last)), last)


class RLinear(Forecaster):
    kind = "rlinear"

    def build(self):
        self.constant("revin.gamma", np.ones(self.config.C))
        self.constant("revin.beta", np.zeros(self.config.C))
        _per_channel(self, "linear")

    def forward(self, x, training=False, rng=None):
        p = self.params
        z, stats = revin_normalize(as_tensor(x), p["revin.gamma"], p["revin.beta"], self.config.revin_eps)
        return revin_denormalize(_apply(self, "linear", z), stats, p["revin.gamma"], p["revin.beta"])


def persistence_forecast(x: np.ndarray, L_out: int) -> np.ndarray:
    """Repeat the last observed row ``L_out`` times: ``[N, L_in, C] -> [N, L_out, C]``."""
    x = np.asarray(x)
    return np.repeat(x[:, -1:, :], L_out, axis=1)


def mean_forecast(train_mean: np.ndarray, L_out: int, n: int = 1) -> np.ndarray:
    """Constant forecast of the per-channel training mean: ``[n, L_out, C]``."""
    m = np.asarray(train_mean, dtype=np.float64).reshape(1, 1, -1)
    return np.broadcast_to(m, (n, L_out, m.shape[-1])).copy()


class Persistence(Forecaster):
    kind = "persistence"

    def build(self):
        pass

    def forward(self, x, training=False, rng=None):
        return Tensor(persistence_forecast(as_tensor(x).data, self.config.L_out))


class MeanForecast(Forecaster):
    """Train-mean forecast; on standardised data the train mean is zero per channel."""

    kind = "mean"

    def build(self):
        self.train_mean = np.zeros(self.config.C)

    def forward(self, x, training=False, rng=None):
        return Tensor(mean_forecast(self.train_mean, self.config.L_out, as_tensor(x).shape[0]))
