"""Tensor loading (npy / safetensors / raw) and synthetic weight generators.

All loaders return float32 arrays converted exactly from the stored dtype
(float16 widens losslessly; bfloat16 decodes by a 16-bit left shift into
float32 bits).  Generators are deterministic for a given seed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib import format as npy_format

from .errors import (
    DtypeMismatchError,
    MalformedFileError,
    NumericInputError,
    TruncatedDataError,
    UnknownTensorError,
)

__all__ = [
    "TensorSource",
    "load_tensor",
    "load_npy",
    "load_safetensors",
    "load_raw",
    "save_npy",
    "synth_weights",
    "SYNTH_MODELS",
]

_RAW_DTYPES = ("f16", "bf16", "f32")
_ST_DTYPES = {"F16": "f16", "BF16": "bf16", "F32": "f32"}
_ITEMSIZE = {"f16": 2, "bf16": 2, "f32": 4}

SYNTH_MODELS = ("gaussian", "outliers", "pairs")
SYNTH_BLOCK = 32  # generators shape their structure in 32-wide blocks


@dataclass(frozen=True)
class TensorSource:
    """Where a tensor comes from.

    kind: "npy", "safetensors", "raw" or "synthetic".
    """

    kind: str
    path: str | None = None
    dtype: str | None = None
    shape: tuple[int, ...] | None = None
    name: str | None = None
    model: str | None = None
    n: int | None = None
    seed: int | None = None


def _decode_bytes(raw: bytes, dtype: str) -> np.ndarray:
    if dtype == "f16":
        return np.frombuffer(raw, dtype="<f2").astype(np.float32)
    if dtype == "bf16":
        bits = np.frombuffer(raw, dtype="<u2").astype(np.uint32) << 16
        return bits.view(np.float32).copy()
    if dtype == "f32":
        return np.frombuffer(raw, dtype="<f4").astype(np.float32)
    raise DtypeMismatchError(f"unsupported dtype {dtype!r}; expected one of {_RAW_DTYPES}")


def load_npy(path) -> np.ndarray:
    """Load a v1/v2 .npy file of float16/float32 data."""
    with open(path, "rb") as f:
        try:
            version = npy_format.read_magic(f)
            if version == (1, 0):
                shape, fortran, dtype = npy_format.read_array_header_1_0(f)
            elif version == (2, 0):
                shape, fortran, dtype = npy_format.read_array_header_2_0(f)
            else:
                raise MalformedFileError(f"unsupported npy version {version}")
        except ValueError as exc:
            raise MalformedFileError(f"bad npy header in {path}: {exc}") from None
        if dtype not in (np.dtype("<f2"), np.dtype("<f4")):
            raise DtypeMismatchError(
                f"npy dtype {dtype} not supported (expected little-endian float16/float32)")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = f.read(count * dtype.itemsize)
        if len(raw) != count * dtype.itemsize:
            raise TruncatedDataError(
                f"{path}: expected {count * dtype.itemsize} data bytes, got {len(raw)}")
    arr = np.frombuffer(raw, dtype=dtype)
    arr = arr.reshape(shape, order="F" if fortran else "C")
    return np.ascontiguousarray(arr).astype(np.float32)


def load_safetensors(path, name: str | None = None) -> np.ndarray:
    """Load one tensor from a safetensors file (F16/BF16/F32 only)."""
    with open(path, "rb") as f:
        prefix = f.read(8)
        if len(prefix) != 8:
            raise TruncatedDataError(f"{path}: missing 8-byte header length")
        (header_len,) = struct.unpack("<Q", prefix)
        header_raw = f.read(header_len)
        if len(header_raw) != header_len:
            raise TruncatedDataError(f"{path}: header shorter than declared")
        try:
            header = json.loads(header_raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedFileError(f"{path}: bad safetensors header: {exc}") from None
        if not isinstance(header, dict):
            raise MalformedFileError(f"{path}: safetensors header is not an object")
        data = f.read()

    tensors = {k: v for k, v in header.items() if k != "__metadata__"}
    if name is None:
        if len(tensors) != 1:
            raise UnknownTensorError(
                f"{path} holds {sorted(tensors)}; pass a tensor name")
        name = next(iter(tensors))
    if name not in tensors:
        raise UnknownTensorError(f"{name!r} not in {path} (has {sorted(tensors)})")
    entry = tensors[name]
    try:
        st_dtype = entry["dtype"]
        shape = tuple(int(d) for d in entry["shape"])
        start, end = (int(x) for x in entry["data_offsets"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedFileError(f"{path}: bad entry for {name!r}: {exc}") from None
    if st_dtype not in _ST_DTYPES:
        raise DtypeMismatchError(f"{name!r} has dtype {st_dtype}; supported: {sorted(_ST_DTYPES)}")
    dtype = _ST_DTYPES[st_dtype]
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    if end - start != count * _ITEMSIZE[dtype]:
        raise MalformedFileError(
            f"{name!r}: data_offsets span {end - start} bytes, "
            f"expected {count * _ITEMSIZE[dtype]}")
    if start < 0 or end > len(data):
        raise TruncatedDataError(f"{name!r}: data region [{start}, {end}) "
                                 f"outside {len(data)} data bytes")
    return _decode_bytes(data[start:end], dtype).reshape(shape)


def load_raw(path, dtype: str, shape: tuple[int, ...]) -> np.ndarray:
    """Load a headerless little-endian binary tensor."""
    if dtype not in _RAW_DTYPES:
        raise DtypeMismatchError(f"unsupported dtype {dtype!r}; expected one of {_RAW_DTYPES}")
    count = int(np.prod(shape, dtype=np.int64))
    expect = count * _ITEMSIZE[dtype]
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < expect:
        raise TruncatedDataError(f"{path}: {len(raw)} bytes, need {expect}")
    if len(raw) > expect:
        raise MalformedFileError(f"{path}: {len(raw) - expect} trailing bytes")
    return _decode_bytes(raw, dtype).reshape(shape)


def load_tensor(src: TensorSource) -> np.ndarray:
    if src.kind == "npy":
        return load_npy(src.path)
    if src.kind == "safetensors":
        return load_safetensors(src.path, src.name)
    if src.kind == "raw":
        if src.dtype is None or src.shape is None:
            raise MalformedFileError("raw sources need an explicit dtype and shape")
        return load_raw(src.path, src.dtype, src.shape)
    if src.kind == "synthetic":
        if src.model is None or src.n is None or src.seed is None:
            raise NumericInputError("synthetic sources need model, n and seed")
        return synth_weights(src.model, src.n, src.seed)
    raise MalformedFileError(f"unknown source kind {src.kind!r}")


def save_npy(path, values: np.ndarray) -> None:
    np.save(path, values)


def _inject_outliers(vals: np.ndarray, rng: np.random.Generator) -> None:
    nblk = vals.size // SYNTH_BLOCK
    blocks = vals[: nblk * SYNTH_BLOCK].reshape(nblk, SYNTH_BLOCK)
    for i in range(nblk):
        b = blocks[i]
        top = int(np.argmax(np.abs(b)))
        m = abs(float(b[top]))
        # place the outlier away from the current max so the old max stays
        # the second-largest magnitude
        j = (top + 1 + int(rng.integers(SYNTH_BLOCK - 1))) % SYNTH_BLOCK
        sign = 1.0 if rng.integers(2) else -1.0
        b[j] = sign * 1.9 * m


def _pairs(n: int, rng: np.random.Generator) -> np.ndarray:
    """Alternating 32-wide blocks: even blocks value-clustered (magnitudes
    within a few percent of one shared level), odd blocks Gaussian-scattered."""
    nblk = -(-n // SYNTH_BLOCK)
    out = np.empty(nblk * SYNTH_BLOCK, dtype=np.float64)
    for i in range(nblk):
        sl = out[i * SYNTH_BLOCK : (i + 1) * SYNTH_BLOCK]
        if i % 2 == 0:
            center = float(np.exp2(rng.uniform(-2.0, 2.0)))
            signs = np.where(rng.integers(0, 2, SYNTH_BLOCK) > 0, 1.0, -1.0)
            sl[:] = signs * center * (1.0 + 0.04 * rng.uniform(-1.0, 1.0, SYNTH_BLOCK))
        else:
            sl[:] = rng.standard_normal(SYNTH_BLOCK)
    return out[:n]


def synth_weights(model: str, n: int, seed: int) -> np.ndarray:
    """Deterministic synthetic weight tensors.

    gaussian  – iid standard normal values.
    outliers  – gaussian, then one element per 32-block replaced by
                +-1.9x the block's second-largest magnitude.
    pairs     – alternating value-clustered / value-scattered 32-blocks.
    """
    if n <= 0:
        raise NumericInputError(f"n must be positive, got {n}")
    rng = np.random.default_rng(seed)
    if model == "gaussian":
        vals = rng.standard_normal(n)
    elif model == "outliers":
        vals = rng.standard_normal(n)
        _inject_outliers(vals, rng)
    elif model == "pairs":
        vals = _pairs(n, rng)
    else:
        raise NumericInputError(f"unknown synthetic model {model!r}; "
                                f"expected one of {SYNTH_MODELS}")
    return vals.astype(np.float32)
