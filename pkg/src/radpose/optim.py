"""Parameter store, Adam updates, and the named-array checkpoint container.

Checkpoint format RPK1 (little-endian, versioned):
    magic "RPK1" | u32 version=1 | u32 n_entries | per entry:
    u16 name_len | name utf-8 | u8 ndim | u32*ndim shape | f64 payload.
Round-trips are bit exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .autodiff import Var
from .errors import GradientError

_MAGIC = b"RPK1"
_VERSION = 1


class ParamStore:
    """Named trainable parameters with per-parameter Adam state."""

    def __init__(self):
        self._params: dict[str, Var] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, value: np.ndarray) -> Var:
        if name in self._params:
            raise ValueError(f"parameter {name!r} already registered")
        var = Var(np.array(value, dtype=np.float64), name=name)
        self._params[name] = var
        self._m[name] = np.zeros_like(var.value)
        self._v[name] = np.zeros_like(var.value)
        return var

    def __getitem__(self, name: str) -> Var:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad = None

    def as_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self._params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        """Overwrite parameter values in place; shapes must match."""
        for name, p in self._params.items():
            if name not in arrays:
                raise KeyError(f"checkpoint missing parameter {name!r}")
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != p.value.shape:
                raise ValueError(
                    f"parameter {name!r}: checkpoint shape {value.shape} "
                    f"!= model shape {p.value.shape}"
                )
            p.value = value.copy()

    def save(self, path: str | Path) -> None:
        save_arrays(path, {name: p.value for name, p in self._params.items()})

    def load(self, path: str | Path) -> None:
        self.load_arrays(load_arrays(path))


def adam_step(
    store: ParamStore,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Standard bias-corrected Adam update over all populated gradients.

    Parameters with no gradient are treated as having zero gradient. A
    non-finite gradient aborts with the offending parameter named.
    """
    store.step_count += 1
    t = store.step_count
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in store.items():
        g = p.grad
        if g is None:
            g = np.zeros_like(p.value)
        elif not np.all(np.isfinite(g)):
            raise GradientError(f"non-finite gradient in parameter {name!r} at step {t}")
        m = store._m[name]
        v = store._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.value = p.value - lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", _VERSION, len(arrays)))
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype=np.float64)  # tobytes() handles layout
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes(order="C"))


def load_arrays(path: str | Path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise ValueError(f"{path}: not an RPK1 checkpoint")
        version, count = struct.unpack("<II", f.read(8))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        for _ in range(count):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim)) if ndim else ()
            n = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            payload = f.read(8 * n)
            if len(payload) != 8 * n:
                raise ValueError(f"{path}: truncated payload for {name!r}")
            arr = np.frombuffer(payload, dtype=np.float64).copy()
            out[name] = arr.reshape(shape)
    return out
