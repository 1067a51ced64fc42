"""Named parameter collections and their binary file format.

File layout (little-endian): magic ``b"GPAPARAM"``, ``u32`` version, ``u32``
parameter count, then per parameter: ``u32`` name length, UTF-8 name,
``u32`` ndim, ``ndim x u64`` shape, raw ``f64`` values in C order.
"""
from __future__ import annotations

import struct
import zlib

import numpy as np

from gpa.autodiff.tensor import Tensor

MAGIC = b"GPAPARAM"
VERSION = 1


class ParamSet:
    """Ordered mapping of name to a gradient-requiring leaf Tensor."""

    def __init__(self, items=()):
        self._params = {}
        for name, value in (items.items() if hasattr(items, "items") else items):
            self[name] = value

    def __setitem__(self, name, value):
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        data = value.data if isinstance(value, Tensor) else value
        self._params[name] = Tensor(np.array(data, dtype=np.float64), requires_grad=True)

    def __getitem__(self, name) -> Tensor:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def arrays(self) -> dict:
        return {k: t.data for k, t in self._params.items()}

    def num_values(self) -> int:
        return int(np.sum([t.size for t in self._params.values()]))

    def copy(self) -> "ParamSet":
        return ParamSet({k: t.data.copy() for k, t in self._params.items()})

    def merged(self, other: "ParamSet") -> "ParamSet":
        """New set containing this set's entries followed by ``other``'s (shared tensors)."""
        out = ParamSet()
        out._params = dict(self._params)
        for k, t in other.items():
            if k in out._params:
                raise KeyError(f"duplicate parameter name {k!r}")
            out._params[k] = t
        return out

    def axpy(self, alpha: float, direction: dict) -> "ParamSet":
        """New set with values ``self + alpha * direction``."""
        return ParamSet({k: t.data + alpha * direction[k] for k, t in self._params.items()})

    def flat(self) -> np.ndarray:
        if not self._params:
            return np.zeros(0)
        return np.concatenate([t.data.ravel() for t in self._params.values()])

    def with_flat(self, vec) -> "ParamSet":
        out, pos = ParamSet(), 0
        for k, t in self._params.items():
            out[k] = np.asarray(vec[pos:pos + t.size]).reshape(t.shape)
            pos += t.size
        return out

    def allclose(self, other, atol=0.0) -> bool:
        return self.names() == other.names() and all(
            np.allclose(self[k].data, other[k].data, rtol=0.0, atol=atol) for k in self)

    def all_finite(self) -> bool:
        return all(np.isfinite(t.data).all() for t in self._params.values())

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", VERSION, len(self._params)))
            for name, t in self._params.items():
                raw = name.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
                fh.write(struct.pack("<I", t.ndim))
                fh.write(struct.pack(f"<{t.ndim}Q", *t.shape))
                fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "ParamSet":
        with open(path, "rb") as fh:
            buf = fh.read()
        if buf[:8] != MAGIC:
            raise ValueError(f"{path}: not a parameter file")
        version, count = struct.unpack_from("<II", buf, 8)
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        pos, out = 16, cls()
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            name = buf[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            shape = struct.unpack_from(f"<{ndim}Q", buf, pos)
            pos += 8 * ndim
            n = int(np.prod(shape)) if ndim else 1
            out[name] = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).reshape(shape)
            pos += 8 * n
        return out

    def __repr__(self):
        inner = ", ".join(f"{k}: {tuple(t.shape)}" for k, t in self._params.items())
        return f"ParamSet({inner})"


def glorot_uniform(shape, seed: int, name: str) -> np.ndarray:
    """Uniform in ``(-a, a)`` with ``a = sqrt(6 / (fan_in + fan_out))``."""
    fan_in, fan_out = shape[0], shape[-1]
    a = np.sqrt(6.0 / (fan_in + fan_out))
    rng = np.random.default_rng([seed & 0xFFFFFFFF, zlib.crc32(name.encode())])
    return rng.uniform(-a, a, size=shape)


def init_affine(params: ParamSet, prefix: str, fan_in: int, fan_out: int, seed: int) -> None:
    params[f"{prefix}.weight"] = glorot_uniform((fan_in, fan_out), seed, f"{prefix}.weight")
    params[f"{prefix}.bias"] = np.zeros(fan_out)
