"""Named parameter registry with checkpoint serialization.

A ParameterStore owns every trainable tensor and persistent buffer of a
model, plus Adam moment estimates. Checkpoints round-trip bit-exactly:
loading copies values in place so existing Tensor objects stay bound.
Optimizer entries are stored under an ``opt/`` prefix and are optional on
load (absent means a fresh optimizer).
"""

from __future__ import annotations

import numpy as np

from .container import read_container, write_container
from .errors import ContainerFormatError
from .tensor import Tensor

OPT_PREFIX = "opt/"
STEP_KEY = "opt/step"


class ParameterStore:
    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.opt_m: dict[str, np.ndarray] = {}
        self.opt_v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def parameter(self, name: str, init: np.ndarray) -> Tensor:
        """Register a trainable tensor, or return the existing one by name."""
        if name in self.params:
            return self.params[name]
        if name in self.buffers:
            raise ValueError(f"name {name!r} already used by a buffer")
        t = Tensor(np.asarray(init, dtype=np.float32), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def buffer(self, name: str, init: np.ndarray) -> np.ndarray:
        """Register a non-trainable array (e.g. normalization statistics)."""
        if name in self.buffers:
            return self.buffers[name]
        if name in self.params:
            raise ValueError(f"name {name!r} already used by a parameter")
        arr = np.array(init, dtype=np.float32)
        self.buffers[name] = arr
        return arr

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def parameter_count(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def copy(self, dtype=None) -> "ParameterStore":
        """Deep copy; ``dtype`` casts parameters (used by gradient checks)."""
        out = ParameterStore()
        for name, t in self.params.items():
            data = t.data.astype(dtype) if dtype is not None else t.data.copy()
            clone = Tensor(data, requires_grad=True, name=name)
            out.params[name] = clone
        for name, arr in self.buffers.items():
            out.buffers[name] = arr.copy()
        out.opt_m = {k: v.copy() for k, v in self.opt_m.items()}
        out.opt_v = {k: v.copy() for k, v in self.opt_v.items()}
        out.step_count = self.step_count
        return out

    def state_tensors(self, include_optimizer: bool = True) -> dict[str, np.ndarray]:
        entries: dict[str, np.ndarray] = {}
        for name, t in self.params.items():
            entries[name] = t.data.astype(np.float32, copy=False)
        for name, arr in self.buffers.items():
            entries[name] = arr
        if include_optimizer and self.step_count > 0:
            for name in self.opt_m:
                entries[OPT_PREFIX + name + "/m"] = self.opt_m[name]
                entries[OPT_PREFIX + name + "/v"] = self.opt_v[name]
            entries[STEP_KEY] = np.asarray(float(self.step_count), dtype=np.float32)
        return entries

    def save(self, path, include_optimizer: bool = True) -> None:
        write_container(path, self.state_tensors(include_optimizer))

    def load(self, path) -> None:
        """Copy checkpoint values into registered tensors, in place.

        Every non-optimizer entry must match a registered name and shape;
        optimizer entries are optional.
        """
        entries = read_container(path)
        step = entries.pop(STEP_KEY, None)
        opt_entries = {k: v for k, v in entries.items() if k.startswith(OPT_PREFIX)}
        model_entries = {k: v for k, v in entries.items() if not k.startswith(OPT_PREFIX)}

        registered = set(self.params) | set(self.buffers)
        unknown = sorted(set(model_entries) - registered)
        missing = sorted(registered - set(model_entries))
        if unknown or missing:
            raise ContainerFormatError(
                f"checkpoint does not match model: unknown={unknown} missing={missing}", 0
            )
        for name, value in model_entries.items():
            target = self.params[name].data if name in self.params else self.buffers[name]
            if target.shape != value.shape:
                raise ContainerFormatError(
                    f"shape mismatch for {name!r}: checkpoint {value.shape}, model {target.shape}",
                    0,
                )
            target[...] = value

        self.opt_m.clear()
        self.opt_v.clear()
        self.step_count = 0
        if step is not None:
            self.step_count = int(round(float(step)))
            for key, value in opt_entries.items():
                body = key[len(OPT_PREFIX) :]
                name, _, kind = body.rpartition("/")
                if name not in self.params or kind not in ("m", "v"):
                    raise ContainerFormatError(f"unrecognized optimizer entry {key!r}", 0)
                if value.shape != self.params[name].data.shape:
                    raise ContainerFormatError(
                        f"optimizer state shape mismatch for {name!r}", 0
                    )
                (self.opt_m if kind == "m" else self.opt_v)[name] = value.astype(np.float32)
