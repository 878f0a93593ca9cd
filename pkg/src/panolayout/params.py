"""Named parameter store and the DOPW weight-file format.

DOPW layout (all integers little-endian u32):

    magic "DOPW" | version=1 | count
    per tensor: name_len | name (UTF-8) | ndim | dims... | payload

Payload is row-major little-endian float32. Values live as float64 in memory
and are narrowed to f32 on save, so save -> load -> save reproduces the file
byte for byte.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ValidationError

MAGIC = b"DOPW"
VERSION = 1


class ParamStore:
    """Ordered name -> value mapping with matching gradient accumulators."""

    def __init__(self):
        self._values: dict[str, np.ndarray] = {}
        self._grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value) -> np.ndarray:
        if name in self._values:
            raise ValidationError(f"duplicate parameter {name!r}")
        v = np.ascontiguousarray(value, dtype=np.float64)
        self._values[name] = v
        self._grads[name] = np.zeros_like(v)
        return v

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self._values[name]
        except KeyError:
            raise ValidationError(f"unknown parameter {name!r}") from None

    def set(self, name: str, value) -> None:
        v = np.ascontiguousarray(value, dtype=np.float64)
        if v.shape != self._values[name].shape:
            raise ValidationError(f"shape change for {name!r}")
        self._values[name] = v

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def accumulate(self, name: str, g) -> None:
        g = np.asarray(g, dtype=np.float64)
        if g.shape != self._values[name].shape:
            raise ValidationError(
                f"gradient shape {g.shape} != value shape "
                f"{self._values[name].shape} for {name!r}")
        self._grads[name] += g

    def zero_grads(self) -> None:
        for g in self._grads.values():
            g[...] = 0.0

    def names(self) -> list[str]:
        return list(self._values)

    def items(self):
        return self._values.items()

    def save(self, path) -> None:
        save_dopw(path, self._values)

    @classmethod
    def load(cls, path) -> "ParamStore":
        store = cls()
        for name, value in load_dopw(path).items():
            store.add(name, value)
        return store


def save_dopw(path, entries) -> None:
    """Write a name -> array mapping in insertion order."""
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<II", VERSION, len(entries))
    for name, value in entries.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(value, dtype=np.float64)
        buf += struct.pack("<I", len(raw))
        buf += raw
        buf += struct.pack("<I", arr.ndim)
        for d in arr.shape:
            buf += struct.pack("<I", d)
        buf += arr.astype("<f4").tobytes(order="C")
    Path(path).write_bytes(bytes(buf))


def load_dopw(path) -> dict[str, np.ndarray]:
    """Read a DOPW file, widening payloads back to float64."""
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != MAGIC:
        raise ValidationError(f"{path}: not a DOPW file")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ValidationError(f"{path}: unsupported DOPW version {version}")
    off = 12
    out: dict[str, np.ndarray] = {}

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(data):
            raise ValidationError(f"{path}: truncated DOPW file")
        chunk = data[off:off + n]
        off += n
        return chunk

    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim)) if ndim else ()
        n = int(np.prod(dims)) if ndim else 1
        payload = take(4 * n)
        arr = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims)
        if name in out:
            raise ValidationError(f"{path}: duplicate tensor {name!r}")
        out[name] = arr
    if off != len(data):
        raise ValidationError(f"{path}: trailing bytes after last tensor")
    return out
