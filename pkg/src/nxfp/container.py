"""Bit-exact .nxt container for packed tensors, plus footprint arithmetic.

File layout (all integers little-endian):

    offset 0   magic bytes  b"NXT1"
    offset 4   u32  version (currently 1)
    offset 8   u32  header byte length H
    offset 12  UTF-8 header: "key=value\\n" lines in a fixed order
               (shape, logical_len, block_size, element_bits, microexp_bits,
                nano, adaptive, recycle, recycle_rule, recycle_value,
                nano_search)
    then       one byte per block: shared exponent + 127, 0xFF reserved for
               the all-zero block
    then       if nano=1:     packed 2-bit nano codes, LSB-first
    then       if adaptive=1: packed 1-bit format flags, LSB-first
    then       payload: element codes, element_bits each, LSB-first within
               little-endian bytes, block-major, element order preserved
    EOF        exactly at the end of the payload (no trailing bytes)

Each section is byte-aligned independently, so the serialized size tracks
``footprint_bits`` to within 8 bits per section.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _kernels
from .errors import (
    BadMagicError,
    HeaderError,
    LengthMismatchError,
    TruncatedStreamError,
    UnsupportedVersionError,
)
from .formats import RecycleRule
from .quant import ZERO_BLOCK_BYTE, BlockScale, NanoSearch, QuantConfig

__all__ = [
    "PackedTensor",
    "footprint_bits",
    "footprint_bits_per_element",
    "serialize",
    "deserialize",
    "write_file",
    "read_file",
]

MAGIC = b"NXT1"
VERSION = 1

_HEADER_KEYS = (
    "shape", "logical_len", "block_size", "element_bits", "microexp_bits",
    "nano", "adaptive", "recycle", "recycle_rule", "recycle_value",
    "nano_search",
)


@dataclass(frozen=True, eq=False)
class PackedTensor:
    """A quantized tensor: config, per-block scales and bit-packed codes."""

    shape: tuple[int, ...]
    logical_len: int
    cfg: QuantConfig
    e_bytes: np.ndarray    # uint8 (nblk,), shared exponent + 127, 0xFF = zero
    nano_codes: np.ndarray  # uint8 (nblk,), zeros when nano is disabled
    fmt_bits: np.ndarray   # uint8 (nblk,), constant when adaptive is disabled
    payload: bytes

    def __post_init__(self):
        expect = -(-self.logical_len // self.cfg.block_size)
        if self.num_blocks != expect:
            raise ValueError(f"expected {expect} blocks, got {self.num_blocks}")
        pbits = self.num_blocks * self.cfg.block_size * self.cfg.element_bits
        if len(self.payload) != (pbits + 7) // 8:
            raise ValueError("payload length disagrees with block count")

    @property
    def num_blocks(self) -> int:
        return int(self.e_bytes.shape[0])

    def block_scale(self, k: int) -> BlockScale:
        e = int(self.e_bytes[k])
        return BlockScale(
            shared_exp=None if e == ZERO_BLOCK_BYTE else e - 127,
            nano_code=int(self.nano_codes[k]),
            fmt=int(self.fmt_bits[k]),
        )

    def codes(self) -> np.ndarray:
        """All element codes as a (num_blocks, block_size) uint8 array."""
        buf = np.frombuffer(self.payload, dtype=np.uint8)
        flat = _kernels.get().unpack_codes(
            buf, self.cfg.element_bits, self.num_blocks * self.cfg.block_size)
        return flat.reshape(self.num_blocks, self.cfg.block_size)

    def block_codes(self, k: int) -> np.ndarray:
        """Codes of block ``k`` decoded straight from its payload bits."""
        bs, bits = self.cfg.block_size, self.cfg.element_bits
        start_bit = k * bs * bits
        end_bit = start_bit + bs * bits
        window = np.frombuffer(
            self.payload[start_bit // 8 : (end_bit + 7) // 8], dtype=np.uint8)
        bitbuf = np.unpackbits(window, bitorder="little")
        offset = start_bit - (start_bit // 8) * 8
        lanes = bitbuf[offset : offset + bs * bits].reshape(bs, bits)
        shifts = np.arange(bits, dtype=np.uint8)
        return (lanes << shifts).sum(axis=1).astype(np.uint8)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PackedTensor):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.logical_len == other.logical_len
            and self.cfg == other.cfg
            and np.array_equal(self.e_bytes, other.e_bytes)
            and np.array_equal(self.nano_codes, other.nano_codes)
            and np.array_equal(self.fmt_bits, other.fmt_bits)
            and self.payload == other.payload
        )


def footprint_bits_per_element(cfg: QuantConfig) -> Fraction:
    """Exact bits per element: element bits plus amortized block metadata."""
    meta = 8 + 2 * int(cfg.nano_enabled) + 1 * int(cfg.adaptive_enabled)
    return Fraction(cfg.element_bits) + Fraction(meta, cfg.block_size)


def footprint_bits(t: PackedTensor) -> int:
    """Total payload+scales bits before byte alignment."""
    cfg = t.cfg
    meta = 8 + 2 * int(cfg.nano_enabled) + 1 * int(cfg.adaptive_enabled)
    return t.num_blocks * (cfg.element_bits * cfg.block_size + meta)


def _pack_small(values: np.ndarray, nbits: int) -> bytes:
    shifts = np.arange(nbits, dtype=np.uint8)
    bits = ((values[:, None] >> shifts) & 1).astype(np.uint8)
    return np.packbits(bits.reshape(-1), bitorder="little").tobytes()


def _unpack_small(buf: bytes, nbits: int, count: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8),
                         count=count * nbits, bitorder="little")
    shifts = np.arange(nbits, dtype=np.uint8)
    return (bits.reshape(count, nbits) << shifts).sum(axis=1).astype(np.uint8)


def _header_text(t: PackedTensor) -> str:
    cfg = t.cfg
    rec_val = "none" if cfg.recycle_value is None else repr(float(cfg.recycle_value))
    fields = {
        "shape": ",".join(str(d) for d in t.shape),
        "logical_len": str(t.logical_len),
        "block_size": str(cfg.block_size),
        "element_bits": str(cfg.element_bits),
        "microexp_bits": str(cfg.microexp_bits),
        "nano": str(int(cfg.nano_enabled)),
        "adaptive": str(int(cfg.adaptive_enabled)),
        "recycle": str(int(cfg.recycle_enabled)),
        "recycle_rule": cfg.recycle_rule.value,
        "recycle_value": rec_val,
        "nano_search": cfg.nano_search.value,
    }
    return "".join(f"{k}={fields[k]}\n" for k in _HEADER_KEYS)


def serialize(t: PackedTensor) -> bytes:
    """Serialize to the .nxt byte layout (bit-exact, deterministic)."""
    header = _header_text(t).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(header)), header,
             t.e_bytes.tobytes()]
    if t.cfg.nano_enabled:
        parts.append(_pack_small(t.nano_codes, 2))
    if t.cfg.adaptive_enabled:
        parts.append(_pack_small(t.fmt_bits, 1))
    parts.append(t.payload)
    return b"".join(parts)


def _parse_header(text: str) -> dict:
    fields = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if "=" not in line:
            raise HeaderError(f"header line {lineno} is not key=value: {line!r}")
        key, _, value = line.partition("=")
        if key not in _HEADER_KEYS:
            raise HeaderError(f"unknown header key {key!r}")
        if key in fields:
            raise HeaderError(f"duplicate header key {key!r}")
        fields[key] = value
    missing = [k for k in _HEADER_KEYS if k not in fields]
    if missing:
        raise HeaderError(f"missing header keys: {missing}")
    return fields


def deserialize(data: bytes) -> PackedTensor:
    """Parse a .nxt byte stream back into a PackedTensor."""
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"not an NXT1 stream (magic {data[:4]!r})")
    if len(data) < 12:
        raise TruncatedStreamError("stream ends inside the fixed header")
    version, header_len = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported container version {version}")
    pos = 12
    if len(data) < pos + header_len:
        raise TruncatedStreamError("stream ends inside the text header")
    try:
        text = data[pos : pos + header_len].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise HeaderError(f"header is not valid UTF-8: {exc}") from None
    pos += header_len
    fields = _parse_header(text)

    try:
        shape = tuple(int(d) for d in fields["shape"].split(","))
        logical_len = int(fields["logical_len"])
        rec_val = fields["recycle_value"]
        cfg = QuantConfig(
            block_size=int(fields["block_size"]),
            element_bits=int(fields["element_bits"]),
            microexp_bits=int(fields["microexp_bits"]),
            nano_enabled=bool(int(fields["nano"])),
            adaptive_enabled=bool(int(fields["adaptive"])),
            recycle_enabled=bool(int(fields["recycle"])),
            recycle_rule=RecycleRule(fields["recycle_rule"]),
            recycle_value=None if rec_val == "none" else float(rec_val),
            nano_search=NanoSearch(fields["nano_search"]),
        )
    except (ValueError, KeyError) as exc:
        raise HeaderError(f"bad header field: {exc}") from None
    if logical_len < 1 or any(d < 1 for d in shape) or not shape:
        raise HeaderError("shape and logical_len must be positive")
    prod = 1
    for d in shape:
        prod *= d
    if prod != logical_len:
        raise HeaderError(f"shape {shape} does not match logical_len {logical_len}")

    nblk = -(-logical_len // cfg.block_size)

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if len(data) < pos + n:
            raise TruncatedStreamError(f"stream ends inside {what}")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    e_bytes = np.frombuffer(take(nblk, "shared-exponent bytes"), dtype=np.uint8)
    if cfg.nano_enabled:
        nano = _unpack_small(take((2 * nblk + 7) // 8, "nano codes"), 2, nblk)
    else:
        nano = np.zeros(nblk, dtype=np.uint8)
    if cfg.adaptive_enabled:
        fmt = _unpack_small(take((nblk + 7) // 8, "format bits"), 1, nblk)
    else:
        fmt = np.full(nblk, cfg.default_fmt_bit, dtype=np.uint8)
    payload_len = (nblk * cfg.block_size * cfg.element_bits + 7) // 8
    payload = take(payload_len, "payload")
    if pos != len(data):
        raise LengthMismatchError(f"{len(data) - pos} trailing bytes after payload")

    return PackedTensor(
        shape=shape, logical_len=logical_len, cfg=cfg,
        e_bytes=e_bytes.copy(), nano_codes=nano, fmt_bits=fmt, payload=payload,
    )


def write_file(path, t: PackedTensor) -> int:
    data = serialize(t)
    with open(path, "wb") as f:
        f.write(data)
    return len(data)


def read_file(path) -> PackedTensor:
    with open(path, "rb") as f:
        return deserialize(f.read())
