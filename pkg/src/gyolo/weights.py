"""Named-tensor container with a bit-exact binary format (GWTC v1).

File layout, all little-endian:

    magic   4 bytes  "GWTC"
    version u32      1
    count   u32      number of entries
    entry*  { name_len u32, name bytes (UTF-8),
              dtype u8 (0=f32, 1=f16), ndim u8, dims u32*ndim,
              values raw }

Round trips are identity on bytes. Loading validates magic, version,
duplicate names and truncation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ShapeError

MAGIC = b"GWTC"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f2")}
_CODES = {np.dtype("<f4"): 0, np.dtype("<f2"): 1}


@dataclass
class WeightContainer:
    """Ordered mapping of parameter name -> tensor (f32 or f16)."""

    entries: dict[str, np.ndarray] = field(default_factory=dict)

    def add(self, name: str, values: np.ndarray) -> None:
        if name in self.entries:
            raise FormatError(f"duplicate weight name: {name}")
        arr = np.ascontiguousarray(values)
        if arr.dtype not in (np.float32, np.float16):
            arr = arr.astype(np.float32)
        self.entries[name] = arr

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __getitem__(self, name: str) -> np.ndarray:
        return self.entries[name]

    def __len__(self) -> int:
        return len(self.entries)

    def names(self) -> list[str]:
        return list(self.entries)

    def element_count(self) -> int:
        return sum(int(v.size) for v in self.entries.values())

    def learnable_count(self) -> int:
        """Elements excluding batchnorm running statistics (.mean/.var)."""
        return sum(
            int(v.size)
            for k, v in self.entries.items()
            if not k.endswith((".mean", ".var"))
        )

    def serialized_bytes(self) -> int:
        total = 12
        for name, v in self.entries.items():
            total += 4 + len(name.encode("utf-8")) + 1 + 1 + 4 * v.ndim + v.nbytes
        return total


def save(container: WeightContainer, path) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(container.entries)))
        for name, v in container.entries.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<BB", _CODES[v.dtype.newbyteorder("<")], v.ndim))
            f.write(struct.pack(f"<{v.ndim}I", *v.shape))
            f.write(np.ascontiguousarray(v, dtype=v.dtype.newbyteorder("<")).tobytes())


def load(path) -> WeightContainer:
    with open(path, "rb") as f:
        data = f.read()
    view = memoryview(data)
    if len(view) < 12:
        raise FormatError(f"truncated file: {len(view)} bytes, need at least 12")
    if bytes(view[:4]) != MAGIC:
        raise FormatError(f"bad magic {bytes(view[:4])!r}, expected {MAGIC!r}")
    version, count = struct.unpack_from("<II", view, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}, expected {VERSION}")
    pos = 12
    c = WeightContainer()
    for _ in range(count):
        if pos + 4 > len(view):
            raise FormatError("truncated file in entry header")
        (name_len,) = struct.unpack_from("<I", view, pos)
        pos += 4
        if pos + name_len + 2 > len(view):
            raise FormatError("truncated file in entry name")
        name = bytes(view[pos : pos + name_len]).decode("utf-8")
        pos += name_len
        code, ndim = struct.unpack_from("<BB", view, pos)
        pos += 2
        if code not in _DTYPES:
            raise FormatError(f"unknown dtype code {code} for {name!r}")
        if pos + 4 * ndim > len(view):
            raise FormatError(f"truncated dims for {name!r}")
        dims = struct.unpack_from(f"<{ndim}I", view, pos)
        pos += 4 * ndim
        dtype = _DTYPES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        if pos + nbytes > len(view):
            raise FormatError(f"truncated values for {name!r}")
        arr = np.frombuffer(view[pos : pos + nbytes], dtype=dtype).reshape(dims).copy()
        pos += nbytes
        if name in c.entries:
            raise FormatError(f"duplicate weight name: {name}")
        c.entries[name] = arr
    if pos != len(view):
        raise FormatError(f"{len(view) - pos} trailing bytes after last entry")
    return c


def to_half(container: WeightContainer) -> WeightContainer:
    """Convert every entry to IEEE binary16 (round-to-nearest-even)."""
    out = WeightContainer()
    for name, v in container.entries.items():
        out.entries[name] = v.astype(np.float16)
    return out


def halfprec_roundtrip(container: WeightContainer) -> WeightContainer:
    """f32 -> f16 -> f32, modelling a half-precision checkpoint reload."""
    out = WeightContainer()
    for name, v in container.entries.items():
        out.entries[name] = v.astype(np.float16).astype(np.float32)
    return out


def size_mb(params: int, bytes_per_param: int = 2) -> float:
    """Serialized size estimate in SI megabytes, as reported in the tables."""
    return params * bytes_per_param / 1e6


def init_random(graph, seed: int = 0) -> WeightContainer:
    """Deterministic container for a graph: conv weights uniform
    +-sqrt(6/fan_in) from the per-name generator, biases zero, batchnorm
    gamma=1 beta=0 mean=0 var=1."""
    from .arch import build  # late import: arch depends on this module

    model = build(graph, weights=None, seed=seed)
    return model.init_container


class ParamSource:
    """Provides named parameters to block constructors.

    The trailing name segment selects the initialization rule:
    ``.weight`` draws uniform +-sqrt(6/fan_in), ``.bias``/``.beta``/
    ``.mean`` are zeros, ``.gamma``/``.var`` are ones.
    """

    def take(self, name: str, shape: tuple[int, ...]) -> np.ndarray:
        raise NotImplementedError


class RandomSource(ParamSource):
    def __init__(self, seed: int):
        self.seed = int(seed)
        self.container = WeightContainer()

    def take(self, name, shape):
        role = name.rsplit(".", 1)[-1]
        if role == "weight":
            fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else int(shape[0])
            bound = float(np.sqrt(6.0 / fan_in))
            from .rng import param_rng

            arr = param_rng(self.seed, name).uniform(int(np.prod(shape)), -bound, bound)
            arr = arr.reshape(shape)
        elif role in ("bias", "beta", "mean"):
            arr = np.zeros(shape, dtype=np.float32)
        elif role in ("gamma", "var"):
            arr = np.ones(shape, dtype=np.float32)
        else:
            raise ShapeError(f"cannot infer init rule for parameter {name!r}")
        self.container.add(name, arr)
        return arr


class ZeroSource(ParamSource):
    """All-zero weights with identity-free batchnorm; used by tests."""

    def __init__(self):
        self.container = WeightContainer()

    def take(self, name, shape):
        arr = np.zeros(shape, dtype=np.float32)
        self.container.add(name, arr)
        return arr


class ContainerSource(ParamSource):
    def __init__(self, container: WeightContainer):
        self.container = container
        self.consumed: set[str] = set()

    def take(self, name, shape):
        if name not in self.container:
            raise ShapeError(f"weight container is missing parameter {name!r}")
        arr = self.container[name]
        if tuple(arr.shape) != tuple(shape):
            raise ShapeError(
                f"parameter {name!r} has shape {tuple(arr.shape)}, expected {tuple(shape)}"
            )
        self.consumed.add(name)
        if arr.dtype != np.float32:
            arr = arr.astype(np.float32)
        return arr

    def unconsumed(self) -> list[str]:
        return [n for n in self.container.names() if n not in self.consumed]
