"""Binary tensor files.

MXT (MX tensor), all integers little-endian::

    magic      4s   b"MXT1"
    version    u16  1
    fmt        u8   element format id (low 7 bits); bit 7 = packed flag, must be 0
    rounding   u8   0 = rne, 1 = rhaz
    block_size u16
    axis       u8
    rank       u8
    dims       u32 * rank
    scales     u8 * n_blocks              one E8M0 code per block, block order
    elements   u8 * (n_blocks * block_size)   one code per lane, padding included

F32 (plain FP32 tensor)::

    magic      4s   b"F32T"
    version    u16  1
    rank       u8
    dims       u32 * rank
    payload    f32 * prod(dims), row-major

Readers raise a :class:`~mxemu.errors.FormatError` subclass naming the field
for every malformed input; OS-level failures surface as ``OSError``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .block import QuantConfig
from .errors import BadMagic, CorruptField, CorruptLength, UnsupportedVersion
from .formats import FORMATS_BY_ID, RoundingMode
from .tensor import MxTensor

MXT_MAGIC = b"MXT1"
F32_MAGIC = b"F32T"
VERSION = 1
PACKED_FLAG = 0x80

_ROUNDING_IDS = {RoundingMode.RNE: 0, RoundingMode.RHAZ: 1}
_ROUNDING_BY_ID = {v: k for k, v in _ROUNDING_IDS.items()}

_MXT_HEAD = struct.Struct("<4sHBBHBB")
_F32_HEAD = struct.Struct("<4sHB")


def _read_dims(buf: bytes, offset: int, rank: int) -> tuple[tuple[int, ...], int]:
    end = offset + 4 * rank
    if len(buf) < end:
        raise CorruptLength("dims", f"need {4 * rank} bytes, file has {max(0, len(buf) - offset)}")
    return struct.unpack_from(f"<{rank}I", buf, offset), end


# -- MXT --------------------------------------------------------------------------


def encode_mxt(mt: MxTensor) -> bytes:
    cfg = mt.cfg
    head = _MXT_HEAD.pack(
        MXT_MAGIC,
        VERSION,
        cfg.element_fmt.fmt_id,
        _ROUNDING_IDS[cfg.rounding],
        cfg.block_size,
        mt.axis,
        len(mt.shape),
    )
    dims = struct.pack(f"<{len(mt.shape)}I", *mt.shape)
    return b"".join(
        [head, dims, np.ascontiguousarray(mt.scales, np.uint8).tobytes(), np.ascontiguousarray(mt.elements, np.uint8).tobytes()]
    )


def decode_mxt(buf: bytes) -> MxTensor:
    if len(buf) < 4:
        raise CorruptLength("magic", "file shorter than the magic")
    if buf[:4] != MXT_MAGIC:
        raise BadMagic("magic", f"expected {MXT_MAGIC!r}, got {bytes(buf[:4])!r}")
    if len(buf) < _MXT_HEAD.size:
        raise CorruptLength("header", f"need {_MXT_HEAD.size} bytes, got {len(buf)}")
    _, version, fmt_byte, rnd, k, axis, rank = _MXT_HEAD.unpack_from(buf, 0)
    if version != VERSION:
        raise UnsupportedVersion("version", f"unsupported version {version}")
    if fmt_byte & PACKED_FLAG:
        raise CorruptField("fmt", "packed element storage is not supported in version 1")
    fmt = FORMATS_BY_ID.get(fmt_byte)
    if fmt is None:
        raise CorruptField("fmt", f"unknown element format id {fmt_byte}")
    if rnd not in _ROUNDING_BY_ID:
        raise CorruptField("rounding", f"unknown rounding id {rnd}")
    if k < 1:
        raise CorruptField("block_size", "block size must be >= 1")
    if rank < 1:
        raise CorruptField("rank", "rank must be >= 1")
    if axis >= rank:
        raise CorruptField("axis", f"axis {axis} out of range for rank {rank}")
    shape, off = _read_dims(buf, _MXT_HEAD.size, rank)
    if shape[axis] < 1:
        raise CorruptField("dims", "principal axis has length 0")

    n_rows = 1
    for i, d in enumerate(shape):
        if i != axis:
            n_rows *= d
    n_blocks = n_rows * -(-shape[axis] // k)
    expected = off + n_blocks + n_blocks * k
    if len(buf) != expected:
        raise CorruptLength("elements", f"expected {expected} bytes in file, got {len(buf)}")

    scales = np.frombuffer(buf, np.uint8, n_blocks, off).copy()
    elements = np.frombuffer(buf, np.uint8, n_blocks * k, off + n_blocks).reshape(n_blocks, k).copy()
    if elements.size and int(elements.max()) >= fmt.n_codes:
        raise CorruptField("elements", f"code exceeds {fmt.total_bits} bits for {fmt.name}")
    cfg = QuantConfig(fmt, k, _ROUNDING_BY_ID[rnd])
    return MxTensor(tuple(shape), axis, cfg, scales, elements)


def write_mxt(path, mt: MxTensor) -> None:
    Path(path).write_bytes(encode_mxt(mt))


def read_mxt(path) -> MxTensor:
    return decode_mxt(Path(path).read_bytes())


# -- F32 --------------------------------------------------------------------------


def encode_f32(arr) -> bytes:
    a = np.asarray(arr, dtype=np.float32)
    head = _F32_HEAD.pack(F32_MAGIC, VERSION, a.ndim)
    dims = struct.pack(f"<{a.ndim}I", *a.shape)
    return head + dims + np.ascontiguousarray(a, dtype="<f4").tobytes()


def decode_f32(buf: bytes) -> np.ndarray:
    if len(buf) < 4:
        raise CorruptLength("magic", "file shorter than the magic")
    if buf[:4] != F32_MAGIC:
        raise BadMagic("magic", f"expected {F32_MAGIC!r}, got {bytes(buf[:4])!r}")
    if len(buf) < _F32_HEAD.size:
        raise CorruptLength("header", f"need {_F32_HEAD.size} bytes, got {len(buf)}")
    _, version, rank = _F32_HEAD.unpack_from(buf, 0)
    if version != VERSION:
        raise UnsupportedVersion("version", f"unsupported version {version}")
    shape, off = _read_dims(buf, _F32_HEAD.size, rank)
    count = 1
    for d in shape:
        count *= d
    if len(buf) != off + 4 * count:
        raise CorruptLength("payload", f"expected {4 * count} payload bytes, got {len(buf) - off}")
    return np.frombuffer(buf, "<f4", count, off).astype(np.float32).reshape(shape)


def write_f32(path, arr) -> None:
    Path(path).write_bytes(encode_f32(arr))


def read_f32(path) -> np.ndarray:
    return decode_f32(Path(path).read_bytes())
