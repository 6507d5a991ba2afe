"""Parameter container shared by the forecasters, plus checkpoint I/O."""
from __future__ import annotations

import json
import os

import numpy as np

from ..autodiff import Tensor
from .config import ModelConfig

CHECKPOINT_FORMAT = "timeflex-lab-checkpoint/1"


class Forecaster:
    """Holds named parameter tensors; subclasses implement ``forward``.

    Parameters are created in a fixed order from a seeded generator, so the
    same (config, seed) always yields bitwise-identical initial weights.
    """

    kind = "base"

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        self.params: dict[str, Tensor] = {}
        self._init_rng = np.random.default_rng(seed)
        self.build()
        del self._init_rng

    def build(self) -> None:
        raise NotImplementedError

    def forward(self, x, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        raise NotImplementedError

    def __call__(self, x, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        return self.forward(x, training, rng)

    # -- parameter helpers
    def uniform(self, name: str, shape: tuple, fan_in: int) -> Tensor:
        bound = 1.0 / np.sqrt(fan_in)
        return self.constant(name, self._init_rng.uniform(-bound, bound, size=shape))

    def constant(self, name: str, value) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def conv_params(self, name: str, groups: int, c_out: int, c_in: int, k: int, complex_: bool = False) -> None:
        """Grouped conv weights ``[G, C_out, C_in, k]`` and zero biases ``[G, C_out]``."""
        parts = (".re", ".im") if complex_ else ("",)
        for part in parts:
            self.uniform(f"{name}{part}.w", (groups, c_out, c_in, k), c_in * k)
            self.constant(f"{name}{part}.b", np.zeros((groups, c_out)))

    @property
    def num_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) ^ set(state)
        if missing:
            raise KeyError(f"state dict mismatch: {sorted(missing)}")
        for k, v in state.items():
            if v.shape != self.params[k].shape:
                raise ValueError(f"{k}: shape {v.shape} != {self.params[k].shape}")
            self.params[k].data = np.array(v, dtype=np.float64)


def save_checkpoint(model: Forecaster, path: str | os.PathLike) -> None:
    meta = {"format": CHECKPOINT_FORMAT, "kind": model.kind, "seed": model.seed, "config": model.config.to_dict()}
    arrays = {f"param/{k}": v for k, v in model.state_dict().items()}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path: str | os.PathLike) -> Forecaster:
    from . import build_model

    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: unsupported checkpoint format {meta.get('format')!r}")
        state = {k[len("param/") :]: z[k] for k in z.files if k.startswith("param/")}
    model = build_model(meta["kind"], ModelConfig(**meta["config"]), seed=meta["seed"])
    model.load_state_dict(state)
    return model
