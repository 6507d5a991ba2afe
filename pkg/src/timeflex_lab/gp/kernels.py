"""Stationary covariance kernels used to synthesise the GP datasets."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np


class KernelKind(str, Enum):
    SE = "se"
    PERIODIC = "periodic"
    LOCALLY_PERIODIC = "locally_periodic"
    RATIONAL_QUADRATIC = "rational_quadratic"
    COMBINED = "combined"


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind = KernelKind.SE
    l: float = 0.5  # noqa: E741  length scale, in grid units (hours)
    tau: float = 24.0
    alpha: float = 1.0
    epsilon: float = 1e-10

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if not (self.l > 0 and self.tau > 0 and self.alpha > 0 and self.epsilon >= 0):
            raise ValueError(f"invalid kernel parameters: {self}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


def _se(r, spec):
    return np.exp(-(r * r) / (2.0 * spec.l**2))


def _periodic(r, spec):
    s = np.sin(np.pi * np.abs(r) / spec.tau)
    return np.exp(-2.0 * s * s / spec.l**2)


def _rq(r, spec):
    return (1.0 + (r * r) / (2.0 * spec.alpha * spec.l**2)) ** (-spec.alpha)


def kernel_of_lag(spec: KernelSpec, r) -> np.ndarray:
    """Kernel value as a function of the lag ``x_p - x_q`` (all kinds are stationary)."""
    r = np.asarray(r, dtype=np.float64)
    kind = spec.kind
    if kind is KernelKind.SE:
        return _se(r, spec)
    if kind is KernelKind.PERIODIC:
        return _periodic(r, spec)
    if kind is KernelKind.LOCALLY_PERIODIC:
        return _se(r, spec) * _periodic(r, spec)
    if kind is KernelKind.RATIONAL_QUADRATIC:
        return _rq(r, spec)
    return _se(r, spec) + _periodic(r, spec)


def kernel_eval(spec: KernelSpec, xp: float, xq: float) -> float:
    return float(kernel_of_lag(spec, float(xp) - float(xq)))


def covariance_matrix(spec: KernelSpec, xs) -> np.ndarray:
    """``K[p, q] = k(x_p, x_q) + epsilon [p == q]``."""
    xs = np.asarray(xs, dtype=np.float64)
    K = kernel_of_lag(spec, xs[:, None] - xs[None, :])
    # enforce exact symmetry; |r| and r*r already give it, this guards future kernels
    K = 0.5 * (K + K.T)
    K[np.diag_indices_from(K)] += spec.epsilon
    return K
