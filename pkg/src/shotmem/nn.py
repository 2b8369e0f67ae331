"""Parameter containers and initializers shared by the learned modules."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .autograd import Tensor


class Params(OrderedDict):
    """Ordered name -> Tensor map. Names listed in ``frozen`` are stored and
    checkpointed but never updated by the optimizer."""

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self.frozen: set[str] = set()

    def add(self, name: str, value: np.ndarray, frozen: bool = False) -> Tensor:
        if name in self:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(value, requires_grad=not frozen)
        self[name] = t
        if frozen:
            self.frozen.add(name)
        return t

    def trainable(self) -> list[tuple[str, Tensor]]:
        return [(k, v) for k, v in self.items() if k not in self.frozen]

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self) - set(arrays)
        if missing:
            raise KeyError(f"checkpoint lacks parameters: {sorted(missing)}")
        for k, t in self.items():
            a = np.asarray(arrays[k], dtype=np.float64)
            if a.shape != t.shape:
                raise ValueError(f"{k}: checkpoint shape {a.shape} != {t.shape}")
            t.data = a.copy()

    def subset(self, prefix: str) -> "Params":
        out = Params((k, v) for k, v in self.items() if k.startswith(prefix))
        out.frozen = {k for k in self.frozen if k.startswith(prefix)}
        return out

    def count(self) -> int:
        return int(sum(v.data.size for k, v in self.items() if k not in self.frozen))


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


def add_linear(p: Params, rng, name: str, fan_in: int, fan_out: int, bias: bool = True, zero: bool = False) -> None:
    p.add(f"{name}.w", np.zeros((fan_in, fan_out)) if zero else glorot(rng, fan_in, fan_out))
    if bias:
        p.add(f"{name}.b", np.zeros(fan_out))
