"""Convolution, pooling and dropout on top of the tape engine."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .tensor import DimensionError, ParameterError, Tensor, _unbroadcast, linear_map, make_result


def causal_conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, dilation: int = 1) -> Tensor:
    """Dilated causal 1-D convolution, output length == input length.

    Shapes: ``x`` is ``[..., C_in, L]``, ``w`` is ``[..., C_out, C_in, k]`` and
    ``b`` is ``[..., C_out]``.  Leading dims of ``w`` broadcast against those of
    ``x``, which is how per-channel (grouped) stacks are evaluated in one call.
    The input is left-padded with ``(k - 1) * dilation`` zeros and tap ``j``
    reads ``x[t - j * dilation]`` (convolution, not correlation, order).
    """
    k = w.shape[-1]
    if k <= 0 or dilation <= 0:
        raise ParameterError(f"causal_conv1d: kernel size {k} and dilation {dilation} must be positive")
    c_in, length = x.shape[-2], x.shape[-1]
    if w.shape[-2] != c_in:
        raise DimensionError(f"causal_conv1d: input shape {x.shape} does not match weight shape {w.shape}")
    if length < 1:
        raise DimensionError("causal_conv1d: empty time axis")

    lags = [j * dilation for j in range(k)]
    lead = x.shape[1:-2]
    if x.ndim == w.ndim and tuple(w.shape[:-3]) == lead:
        out, back = _conv_folded(x.data, w.data, lags)
    else:
        out, back = _conv_broadcast(x.data, w.data, lags)
    if b is not None:
        out = out + b.data[..., None]

    def backward(g):
        gx, gw = back(g)
        gb = None if b is None else _unbroadcast(g.sum(axis=-1), b.shape)
        return gx, gw, gb

    parents = (x, w) if b is None else (x, w, b)
    return make_result(out, parents, backward)


def _shift_taps(src: np.ndarray, lags: list, out: np.ndarray) -> None:
    """``out[..., j, :, t] = src[..., t - lag_j]`` (zero before the start); tap axis is -3."""
    length = src.shape[-1]
    for j, lag in enumerate(lags):
        if lag >= length:
            out[..., j, :, :] = 0.0
            continue
        out[..., j, :, lag:] = src[..., : length - lag]
        out[..., j, :, :lag] = 0.0


def _unshift_taps(gcols: np.ndarray, lags: list, length: int) -> np.ndarray:
    gsrc = np.zeros(gcols.shape[:-3] + gcols.shape[-2:])
    for j, lag in enumerate(lags):
        if lag < length:
            gsrc[..., : length - lag] += gcols[..., j, :, lag:]
    return gsrc


def _conv_folded(x: np.ndarray, w: np.ndarray, lags: list):
    """Weights broadcast over the batch axis only (grouped stacks).

    The batch is folded into the time axis so each group is a single matmul:
    columns are laid out ``[G, C_in, k, N, L]`` which reshapes for free to
    ``[G, C_in * k, N * L]``.
    """
    n, lead, c_in, length = x.shape[0], x.shape[1:-2], x.shape[-2], x.shape[-1]
    k, c_out = len(lags), w.shape[-3]
    g_ = int(np.prod(lead, dtype=int))
    xt = np.ascontiguousarray(x.reshape(n, g_, c_in, length).transpose(1, 2, 0, 3))  # [G, Cin, N, L]
    cols = np.empty((g_, c_in, k, n, length))
    _shift_taps(xt, lags, cols)
    cols = cols.reshape(g_, c_in * k, n * length)
    wm = w.reshape(g_, c_out, c_in * k)
    out = (wm @ cols).reshape(g_, c_out, n, length).transpose(2, 0, 1, 3).reshape(n, *lead, c_out, length)

    def back(g):
        g2 = np.ascontiguousarray(g.reshape(n, g_, c_out, length).transpose(1, 2, 0, 3)).reshape(g_, c_out, n * length)
        gw = (g2 @ cols.transpose(0, 2, 1)).reshape(w.shape)
        gcols = (wm.transpose(0, 2, 1) @ g2).reshape(g_, c_in, k, n, length)
        gxt = _unshift_taps(gcols, lags, length)  # [G, Cin, N, L]
        return gxt.transpose(2, 0, 1, 3).reshape(x.shape), gw

    return out, back


def _conv_broadcast(x: np.ndarray, w: np.ndarray, lags: list):
    c_in, length, k = x.shape[-2], x.shape[-1], len(lags)
    cols = np.empty(x.shape[:-1] + (k, 1, length))
    _shift_taps(x[..., None, :], lags, cols)
    cols = cols.reshape(*x.shape[:-2], c_in * k, length)
    wm = w.reshape(*w.shape[:-2], c_in * k)
    out = wm @ cols

    def back(g):
        gw = _unbroadcast(g @ np.swapaxes(cols, -1, -2), wm.shape).reshape(w.shape)
        gcols = _unbroadcast(np.swapaxes(wm, -1, -2) @ g, cols.shape).reshape(x.shape[:-1] + (k, 1, length))
        return _unshift_taps(gcols, lags, length)[..., 0, :], gw

    return out, back


@lru_cache(maxsize=64)
def pooling_matrix(length: int, out_len: int) -> np.ndarray:
    """Averaging matrix ``[length, out_len]``; bin j is ``[floor(j L/n), ceil((j+1) L/n))``."""
    P = np.zeros((length, out_len))
    for j in range(out_len):
        lo = (j * length) // out_len
        hi = -((-(j + 1) * length) // out_len)
        P[lo:hi, j] = 1.0 / (hi - lo)
    P.setflags(write=False)
    return P


def adaptive_avg_pool1d(x: Tensor, out_len: int) -> Tensor:
    if out_len < 1:
        raise ParameterError(f"adaptive_avg_pool1d: out_len must be >= 1, got {out_len}")
    if out_len == x.shape[-1]:
        return x
    return linear_map(x, pooling_matrix(x.shape[-1], out_len), axis=-1)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; identity in eval mode or when ``p == 0``."""
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ParameterError("dropout in training mode needs an rng stream")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return make_result(x.data * mask, (x,), lambda g: (g * mask,))
