"""Differentiable discrete Fourier transforms on (re, im) tensor pairs.

Transforms are evaluated as products with precomputed DFT matrices.  At the
sequence lengths used here (L <= a few hundred) this is as fast as an FFT from
Python and makes every backward pass an exact transpose.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .tensor import DimensionError, Tensor, add, linear_map, sub


@dataclass
class ComplexTensor:
    re: Tensor
    im: Tensor

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise DimensionError(f"complex parts differ in shape: {self.re.shape} vs {self.im.shape}")

    @property
    def shape(self) -> tuple:
        return self.re.shape

    def numpy(self) -> np.ndarray:
        return self.re.data + 1j * self.im.data

    def map(self, fn: Callable[[Tensor], Tensor]) -> "ComplexTensor":
        """Apply ``fn`` to both parts independently (split activation)."""
        return ComplexTensor(fn(self.re), fn(self.im))


def _angles(rows: int, cols: int, n: int) -> np.ndarray:
    # reduce k*t modulo n before scaling so large products keep full precision
    prod = np.outer(np.arange(rows), np.arange(cols)) % n
    return 2.0 * np.pi * prod / n


def _frozen(*arrays):
    for a in arrays:
        a.setflags(write=False)
    return arrays


@lru_cache(maxsize=32)
def _rdft_matrices(n: int):
    ang = _angles(n, n // 2 + 1, n)  # [t, k]
    return _frozen(np.cos(ang), -np.sin(ang))


@lru_cache(maxsize=32)
def _irdft_matrices(n: int):
    bins = n // 2 + 1
    weight = np.full(bins, 2.0)
    weight[0] = 1.0
    if n % 2 == 0:
        weight[-1] = 1.0
    ang = _angles(bins, n, n)  # [k, t]
    return _frozen(weight[:, None] * np.cos(ang) / n, -weight[:, None] * np.sin(ang) / n)


@lru_cache(maxsize=32)
def _dft_matrices(n: int, inverse: bool):
    ang = _angles(n, n, n)
    sign = 1.0 if inverse else -1.0
    norm = 1.0 / n if inverse else 1.0
    return _frozen(np.cos(ang) * norm, sign * np.sin(ang) * norm)


def complex_layer(x: ComplexTensor, layer_r: Callable, layer_i: Callable) -> ComplexTensor:
    """Complex linear layer from two real layers:
    ``(L_r(x_r) - L_i(x_i)) + i (L_r(x_i) + L_i(x_r))``."""
    return ComplexTensor(
        sub(layer_r(x.re), layer_i(x.im)),
        add(layer_r(x.im), layer_i(x.re)),
    )


def rdft(x: Tensor, axis: int = -1) -> ComplexTensor:
    """Half-spectrum DFT, ``X_k = sum_t x_t exp(-2 pi i k t / L)`` for ``k = 0..L//2``."""
    n = x.shape[axis]
    if n < 1:
        raise DimensionError("rdft: empty axis")
    cos, msin = _rdft_matrices(n)
    return ComplexTensor(linear_map(x, cos, axis), linear_map(x, msin, axis))


def irdft(X: ComplexTensor, n: int, axis: int = -1) -> Tensor:
    """Inverse of :func:`rdft` for a length-``n`` real signal.

    The imaginary parts of the DC bin (and the Nyquist bin for even ``n``) are
    ignored, as Hermitian symmetry of a real signal forces them to zero.
    """
    bins = X.shape[axis]
    if bins != n // 2 + 1:
        raise DimensionError(f"irdft: {bins} bins cannot describe a length-{n} signal (need {n // 2 + 1})")
    a_re, a_im = _irdft_matrices(n)
    return add(linear_map(X.re, a_re, axis), linear_map(X.im, a_im, axis))


def dft(X: ComplexTensor, axis: int = -1, inverse: bool = False) -> ComplexTensor:
    """Full complex DFT along ``axis`` (inverse carries the ``1/n`` factor)."""
    n = X.shape[axis]
    cos, sin = _dft_matrices(n, inverse)
    return complex_layer(X, lambda t: linear_map(t, cos, axis), lambda t: linear_map(t, sin, axis))


def rdft2(x: Tensor, time_axis: int = -1, var_axis: int = -2) -> ComplexTensor:
    """Real DFT over time followed by a full complex DFT over the variate axis."""
    return dft(rdft(x, time_axis), var_axis)


def irdft2(X: ComplexTensor, n: int, time_axis: int = -1, var_axis: int = -2) -> Tensor:
    return irdft(dft(X, var_axis, inverse=True), n, time_axis)
