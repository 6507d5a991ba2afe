"""Building blocks: RevIN, moving-average decomposition, trend heads,
gated dilated-convolution stacks and the pooling/conv post-processing head.

Seasonal representations are either real tensors or :class:`ComplexTensor`
pairs; the helpers here dispatch on that type so one code path serves the
time-domain and both frequency-domain variants.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..autodiff import (
    ComplexTensor,
    Tensor,
    adaptive_avg_pool1d,
    add,
    causal_conv1d,
    concat,
    getitem,
    div,
    dropout,
    linear_map,
    matmul,
    mul,
    relu,
    reshape,
    sigmoid,
    sub,
    tanh,
    transpose,
)
from ..autodiff.tensor import make_result
from .config import ConfigurationError


class RevINSingularityError(ZeroDivisionError):
    pass


@dataclass
class InstanceStats:
    mean: np.ndarray  # [N, 1, C]
    var: np.ndarray  # [N, 1, C]
    eps: float

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var + self.eps)


def revin_normalize(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> tuple[Tensor, InstanceStats]:
    if eps <= 0:
        raise ValueError("RevIN eps must be positive")
    mean = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    stats = InstanceStats(mean, var, eps)
    # instance statistics come from the (constant) input window, so only gamma/beta carry gradient
    z = Tensor((x.data - mean) / stats.std) if not x.requires_grad else div(sub(x, mean), stats.std)
    return add(mul(z, gamma), beta), stats


def revin_denormalize(y: Tensor, stats: InstanceStats, gamma: Tensor, beta: Tensor) -> Tensor:
    if np.any(gamma.data == 0):
        raise RevINSingularityError(f"RevIN affine weight is zero for channels {np.flatnonzero(gamma.data == 0)}")
    return add(mul(div(sub(y, beta), gamma), stats.std), stats.mean)


@lru_cache(maxsize=32)
def moving_average_matrix(length: int, window: int) -> np.ndarray:
    """``A[i, t]`` weights input ``i`` in the replicate-padded window mean at ``t``."""
    half = window // 2
    A = np.zeros((length, length))
    for t in range(length):
        for p in range(t - half, t + half + 1):
            A[min(max(p, 0), length - 1), t] += 1.0 / window
    A.setflags(write=False)
    return A


def series_decompose(x: Tensor, window: int, axis: int = 1) -> tuple[Tensor, Tensor]:
    """Split into (seasonal, trend) with trend = centred moving average, seasonal = x - trend."""
    if window < 1 or window % 2 == 0:
        raise ConfigurationError(f"moving-average window must be odd, got {window}")
    trend = linear_map(x, moving_average_matrix(x.shape[axis], window), axis=axis)
    return sub(x, trend), trend


def channel_affine(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """Independent affine map per channel: ``x [N, C, L_in]``, ``W [C, L_in, L_out]``, ``b [C, L_out]``."""
    N, C, L_in = x.shape
    if W.shape[:2] != (C, L_in) or b.shape != (C, W.shape[2]):
        raise ConfigurationError(f"channel affine params {W.shape}, {b.shape} do not fit input {x.shape}")
    y = matmul(reshape(x, (N, C, 1, L_in)), W)
    y = add(y, reshape(b, (C, 1, W.shape[2])))
    return reshape(y, (N, C, W.shape[2]))


def trend_head(trend: Tensor, W: Tensor, b: Tensor, channel_mode: str) -> Tensor:
    """Map ``[N, L_in, C]`` to ``[N, L_out, C]``: per-channel (ci) or one joint affine (cd)."""
    N, L_in, C = trend.shape
    if channel_mode == "ci":
        if W.ndim != 3:
            raise ConfigurationError("ci trend head needs per-channel weights [C, L_in, L_out]")
        y = channel_affine(transpose(trend, (0, 2, 1)), W, b)
        return transpose(y, (0, 2, 1))
    if channel_mode == "cd":
        if W.ndim != 2 or W.shape[0] != L_in * C:
            raise ConfigurationError("cd trend head needs a joint weight [L_in*C, L_out*C]")
        y = add(matmul(reshape(trend, (N, L_in * C)), W), b)
        return reshape(y, (N, W.shape[1] // C, C))
    raise ConfigurationError(f"unknown channel mode {channel_mode!r}")


# ---------------------------------------------------------------- real/complex dispatch


def conv(params: dict, name: str, x, dilation: int = 1):
    """Causal conv; on complex input a complex layer built from two real convs.

    The four real products L_r(x_r), L_i(x_r), L_r(x_i), L_i(x_i) come out of a
    single conv call: real and imaginary inputs are stacked on the batch axis
    and the two weight sets on the output-channel axis.
    """
    if not isinstance(x, ComplexTensor):
        return causal_conv1d(x, params[f"{name}.w"], params[f"{name}.b"], dilation)
    wr, br, wi, bi = (params[f"{name}.{p}"] for p in ("re.w", "re.b", "im.w", "im.b"))
    n, co = x.re.shape[0], wr.shape[-3]
    y = causal_conv1d(concat([x.re, x.im], axis=0), concat([wr, wi], axis=-3), concat([br, bi], axis=-1), dilation)
    z = _complex_combine(y, n, co)
    return ComplexTensor(getitem(z, 0), getitem(z, 1))


def _complex_combine(y: Tensor, n: int, co: int) -> Tensor:
    """``y`` holds [L_r x_r; L_i x_r] for batch rows < n and [L_r x_i; L_i x_i] after, stacked on
    channels; returns ``[2, ...]`` with (L_r x_r - L_i x_i, L_r x_i + L_i x_r)."""
    d = y.data
    rr, ir = d[:n, ..., :co, :], d[:n, ..., co:, :]
    ri, ii = d[n:, ..., :co, :], d[n:, ..., co:, :]
    out = np.stack([rr - ii, ri + ir])

    def back(g):
        gy = np.empty_like(d)
        gy[:n, ..., :co, :] = g[0]
        gy[:n, ..., co:, :] = g[1]
        gy[n:, ..., :co, :] = g[1]
        gy[n:, ..., co:, :] = -g[0]
        return (gy,)

    return make_result(out, (y,), back)


def act(x, fn):
    return x.map(fn) if isinstance(x, ComplexTensor) else fn(x)


def _pairwise(op, a, b):
    if isinstance(a, ComplexTensor):
        return ComplexTensor(op(a.re, b.re), op(a.im, b.im))
    return op(a, b)


def dc_block(params: dict, x, dilations, prefix: str = "dc"):
    """Gated dilated causal stack; returns the accumulated skip signal.

    ``x`` is ``[N, G, C_in, P]`` (real or complex); each of the G groups has its
    own weights.  Complex activations and the gate product act split-wise.
    """
    if not dilations:
        raise ConfigurationError("DC block needs at least one dilation rate")
    h = conv(params, f"{prefix}.lift", x)
    skip = None
    for i, d in enumerate(dilations):
        filt = act(conv(params, f"{prefix}.filter{i}", h, d), tanh)
        gate = act(conv(params, f"{prefix}.gate{i}", h, d), sigmoid)
        gated = _pairwise(mul, filt, gate)
        s = conv(params, f"{prefix}.skip{i}", gated)
        h = _pairwise(add, h, gated)
        skip = s if skip is None else _pairwise(add, skip, s)
    return skip


def post_process(params: dict, x, target_len: int, p_drop: float, training: bool, rng, prefix: str = "post"):
    """Pool -> ReLU -> 1x1 conv -> ReLU -> dropout -> 1x1 conv, along the last axis."""
    x = act(x, lambda t: adaptive_avg_pool1d(t, target_len))
    x = act(x, relu)
    x = conv(params, f"{prefix}.conv1", x)
    x = act(x, relu)
    x = act(x, lambda t: dropout(t, p_drop, training, rng))
    return conv(params, f"{prefix}.conv2", x)


def creshape(x, shape):
    if isinstance(x, ComplexTensor):
        return ComplexTensor(reshape(x.re, shape), reshape(x.im, shape))
    return reshape(x, shape)
