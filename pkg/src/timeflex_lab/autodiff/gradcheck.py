"""Central finite-difference checks for tape gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """Max elementwise ``|a - b| / max(|a|, |b|, floor)``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def numeric_grad(fn: Callable[[], Tensor], t: Tensor, h: float = 1e-3, indices=None) -> np.ndarray:
    """Central differences of ``sum(fn())``; only flat ``indices`` are filled when given."""
    grad = np.zeros_like(t.data)
    flat, gflat = t.data.reshape(-1), grad.reshape(-1)
    for i in range(flat.size) if indices is None else indices:
        old = flat[i]
        flat[i] = old + h
        up = float(fn().data.sum())
        flat[i] = old - h
        down = float(fn().data.sum())
        flat[i] = old
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def analytic_grads(fn: Callable[[], Tensor], inputs: Sequence[Tensor]) -> list[np.ndarray]:
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    with Tape():
        out = fn()
        loss = out if out.size == 1 else out.sum()
    backward(loss)
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]


def gradcheck(
    fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-3, max_entries: int | None = None, seed: int = 0
) -> float:
    """Worst relative error between tape and finite-difference gradients of ``sum(fn())``.

    ``fn`` must be deterministic and read ``inputs`` by reference; their data
    arrays are perturbed in place and restored.  With ``max_entries`` only a
    seeded random subset of each input's entries is differenced.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t, g in zip(inputs, analytic_grads(fn, inputs)):
        if max_entries is None or t.size <= max_entries:
            worst = max(worst, relative_error(g, numeric_grad(fn, t, h)))
        else:
            idx = np.sort(rng.choice(t.size, size=max_entries, replace=False))
            fd = numeric_grad(fn, t, h, idx)
            worst = max(worst, relative_error(g.reshape(-1)[idx], fd.reshape(-1)[idx]))
    return worst
