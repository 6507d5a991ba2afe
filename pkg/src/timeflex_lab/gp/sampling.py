"""Zero-mean GP prior draws on an hourly grid and the five-file GP-TimeSet."""
from __future__ import annotations

import json
import logging
import os
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from ..frame import SeriesFrame, write_csv
from .cholesky import NotPositiveDefiniteError, cholesky
from .kernels import KernelKind, KernelSpec, covariance_matrix

log = logging.getLogger(__name__)

KIND_ORDER = list(KernelKind)
MAX_JITTER = 1e-6


@dataclass
class GPDatasetConfig:
    kernel: KernelSpec = field(default_factory=KernelSpec)
    n_points: int = 8760
    n_features: int = 4
    start_timestamp: datetime = datetime(2023, 1, 1)
    step: timedelta = timedelta(hours=1)
    seed: int = 0

    def __post_init__(self):
        if self.n_points < 2 or self.n_features < 1:
            raise ValueError(f"need n_points >= 2 and n_features >= 1, got {self.n_points}, {self.n_features}")


def feature_rng(seed: int, kind: KernelKind, feature: int) -> np.random.Generator:
    """Independent stream per (seed, kernel, feature); generation order does not matter."""
    return np.random.default_rng([seed, KIND_ORDER.index(KernelKind(kind)), feature])


def factor_with_jitter(spec: KernelSpec, xs: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky factor of the jittered covariance, escalating jitter x10 up to 1e-6."""
    eps = spec.epsilon
    while True:
        K = covariance_matrix(KernelSpec(spec.kind, spec.l, spec.tau, spec.alpha, eps), xs)
        try:
            return cholesky(K, overwrite=True), eps
        except NotPositiveDefiniteError as err:
            nxt = max(eps * 10.0, 1e-12)
            if nxt > MAX_JITTER * (1 + 1e-9):
                raise
            warnings.warn(f"{spec.kind.value}: {err}; retrying with jitter {nxt:.0e}", RuntimeWarning)
            eps = nxt


def sample_gp(config: GPDatasetConfig) -> SeriesFrame:
    spec = config.kernel
    xs = np.arange(config.n_points, dtype=np.float64)
    L, _ = factor_with_jitter(spec, xs)
    Z = np.column_stack(
        [feature_rng(config.seed, spec.kind, f).standard_normal(config.n_points) for f in range(config.n_features)]
    )
    values = L @ Z
    del L
    start = np.datetime64(config.start_timestamp.replace(tzinfo=None), "s")
    step = np.timedelta64(int(config.step.total_seconds()), "s")
    timestamps = start + step * np.arange(config.n_points)
    return SeriesFrame(timestamps, values)


def generate_gp_timeset(
    out_dir: str | os.PathLike,
    seed: int = 0,
    kinds=None,
    n_points: int = 8760,
    n_features: int = 4,
    kernel_overrides: dict | None = None,
) -> Path:
    """Write one CSV per kernel kind plus ``manifest.json``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kinds = [KernelKind(k) for k in (kinds or KIND_ORDER)]
    overrides = kernel_overrides or {}
    entries = []
    for kind in kinds:
        spec = KernelSpec(kind, **overrides.get(kind.value, {}))
        cfg = GPDatasetConfig(kernel=spec, n_points=n_points, n_features=n_features, seed=seed)
        log.info("sampling %s (%d x %d)", kind.value, n_points, n_features)
        frame = sample_gp(cfg)
        fname = f"{kind.value}.csv"
        write_csv(frame, out / fname)
        entries.append(
            {"file": fname, **spec.to_dict(), "n_points": n_points, "n_features": n_features, "seed": seed}
        )
    manifest = {
        "format": "gp-timeset-manifest/1",
        "seed": seed,
        "created": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        "start_timestamp": GPDatasetConfig.start_timestamp.strftime("%Y-%m-%d %H:%M:%S"),
        "step_seconds": int(GPDatasetConfig.step.total_seconds()),
        "datasets": entries,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def regenerate_from_manifest(manifest_path: str | os.PathLike, out_dir: str | os.PathLike) -> Path:
    manifest = json.loads(Path(manifest_path).read_text())
    first = manifest["datasets"][0]
    overrides = {
        d["kind"]: {k: d[k] for k in ("l", "tau", "alpha", "epsilon")} for d in manifest["datasets"]
    }
    return generate_gp_timeset(
        out_dir,
        seed=manifest["seed"],
        kinds=[d["kind"] for d in manifest["datasets"]],
        n_points=first["n_points"],
        n_features=first["n_features"],
        kernel_overrides=overrides,
    )
