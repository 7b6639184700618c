"""MX blocks: one shared E8M0 scale plus k element codes.

Conversion from FP32 follows the reference recipe: the shared exponent is the
exponent of the block's largest magnitude minus the element format's emax, the
scale is two to that power, and each element is the input divided by the scale,
rounded to the element format with clamping of out-of-range normals.  FP32
subnormal inputs become zero elements.

The functions ending in ``_rows`` work on a 2-D array holding one block per
row; everything else (single blocks, tensors, GEMM operands) goes through them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, SpecialInput
from .formats import (
    SCALE_BIAS,
    SCALE_EXP_MAX,
    SCALE_EXP_MIN,
    SCALE_NAN,
    ElementFormat,
    RoundingMode,
    decode_scale,
    encode_elements,
    lookup_format,
)
from .metrics import ErrorReport, error_report

FP32_MIN_NORMAL = np.float32(np.finfo(np.float32).tiny)  # 2^-126

DEFAULT_BLOCK_SIZE = 32


@dataclass(frozen=True)
class QuantConfig:
    element_fmt: ElementFormat
    block_size: int = DEFAULT_BLOCK_SIZE
    rounding: RoundingMode = RoundingMode.RNE
    # Only policy in v1: NaN input, or Inf without an Inf encoding, makes the
    # whole block NaN through the scale.
    special_policy: str = "scale_nan"

    def __post_init__(self):
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        if self.special_policy != "scale_nan":
            raise ValueError(f"unknown special_policy {self.special_policy!r}")

    @classmethod
    def make(cls, fmt, block_size=DEFAULT_BLOCK_SIZE, rounding="rne") -> "QuantConfig":
        """Build from user-facing names, e.g. ``QuantConfig.make("mxfp4", rounding="rhaz")``."""
        if not isinstance(rounding, RoundingMode):
            rounding = RoundingMode(rounding)
        return cls(lookup_format(fmt), block_size, rounding)


@dataclass(frozen=True, eq=False)
class MxBlock:
    scale: int  # E8M0 code
    elements: np.ndarray  # uint8 codes, length k
    fmt: ElementFormat

    @property
    def k(self) -> int:
        return len(self.elements)

    @property
    def shared_exp(self) -> int | None:
        return None if self.scale == SCALE_NAN else self.scale - SCALE_BIAS

    def __eq__(self, other):
        if not isinstance(other, MxBlock):
            return NotImplemented
        return (
            self.scale == other.scale
            and self.fmt == other.fmt
            and np.array_equal(self.elements, other.elements)
        )


def _shared_exp_rows(amax: np.ndarray, fmt: ElementFormat) -> np.ndarray:
    # frexp on the float64 image of an FP32 value is exact, subnormals included:
    # amax = m * 2^e with m in [0.5, 1), so floor(log2(amax)) = e - 1.
    _, e = np.frexp(amax.astype(np.float64))
    exp = np.where(amax == 0, SCALE_EXP_MIN, e.astype(np.int64) - 1 - fmt.emax)
    return np.clip(exp, SCALE_EXP_MIN, SCALE_EXP_MAX)


def compute_shared_exp(values, fmt: ElementFormat) -> int:
    """floor(log2(max|V_i|)) - emax, clamped to the E8M0 range; -127 for all zeros."""
    v = np.asarray(values, dtype=np.float32)
    if v.size == 0:
        raise LengthMismatch("need at least one value")
    if not np.all(np.isfinite(v)):
        raise SpecialInput("NaN/Inf input has no shared exponent")
    return int(_shared_exp_rows(np.abs(v).max()[None], fmt)[0])


def quantize_rows(rows, fmt: ElementFormat, rounding: RoundingMode = RoundingMode.RNE):
    """Quantize each row of an (n, k) FP32 array as one block.

    Returns ``(scales, codes, clamped)``: uint8 scale codes (n,), uint8
    element codes (n, k), and a boolean mask of lanes that were clamped.
    """
    v = np.asarray(rows, dtype=np.float32)
    if v.ndim != 2:
        raise ValueError("expected a 2-D array of blocks")
    a = np.abs(v)
    nan = np.isnan(v)
    inf = np.isinf(v)
    bad = nan.any(axis=1)
    if not fmt.has_inf:
        bad |= inf.any(axis=1)

    finite_abs = np.where(nan | inf, np.float32(0), a)
    amax = finite_abs.max(axis=1) if v.shape[1] else np.zeros(v.shape[0], np.float32)
    shared = _shared_exp_rows(amax, fmt)
    scale_val = np.ldexp(1.0, shared.astype(np.int32))

    # v / 2^shared is exact in float64.
    scaled = v.astype(np.float64) / scale_val[:, None]
    subnormal = (a > 0) & (a < FP32_MIN_NORMAL)
    scaled[subnormal | bad[:, None]] = 0.0
    finite = np.isfinite(scaled)
    clamped = finite & ((scaled > fmt.vmax) | (scaled < fmt.vmin))

    codes = encode_elements(fmt, scaled, rounding)
    scales = (shared + SCALE_BIAS).astype(np.uint8)
    scales[bad] = SCALE_NAN
    clamped[bad] = False
    return scales, codes, clamped


def dequantize_rows(scales, codes, fmt: ElementFormat) -> np.ndarray:
    """X * P_i for every lane, computed in float64 and narrowed to FP32.

    A NaN scale makes the whole row NaN; products beyond the FP32 range
    become +-Inf.
    """
    x = decode_scale(np.asarray(scales))
    p = fmt.table[np.asarray(codes, dtype=np.intp)]
    with np.errstate(over="ignore", invalid="ignore"):
        out = (x[:, None] * p).astype(np.float32)
    out[np.isnan(x)] = np.nan
    return out


def quantize_block(values, cfg: QuantConfig) -> MxBlock:
    v = np.asarray(values, dtype=np.float32).ravel()
    if v.size != cfg.block_size:
        raise LengthMismatch(f"got {v.size} values for block size {cfg.block_size}")
    scales, codes, _ = quantize_rows(v[None, :], cfg.element_fmt, cfg.rounding)
    return MxBlock(int(scales[0]), codes[0], cfg.element_fmt)


def dequantize_block(block: MxBlock) -> np.ndarray:
    return dequantize_rows(np.array([block.scale]), block.elements[None, :], block.fmt)[0]


def quantization_error(values, cfg: QuantConfig) -> ErrorReport:
    """Error of dequantize(quantize(values)) for a 1-D vector split into blocks
    of ``cfg.block_size`` (the tail block is zero-padded; padding is excluded)."""
    v = np.asarray(values, dtype=np.float32).ravel()
    k = cfg.block_size
    nb = -(-v.size // k)
    rows = np.zeros(nb * k, np.float32)
    rows[: v.size] = v
    rows = rows.reshape(nb, k)
    scales, codes, clamped = quantize_rows(rows, cfg.element_fmt, cfg.rounding)
    deq = dequantize_rows(scales, codes, cfg.element_fmt)
    rep = error_report(v, deq.ravel()[: v.size])
    with np.errstate(invalid="ignore"):
        lane_err = np.abs(deq.astype(np.float64) - rows)
    lane_err[np.isnan(lane_err)] = 0.0
    rep.per_block_max_abs = lane_err.max(axis=1)
    rep.clamped_lane_count = int(clamped.sum())
    rep.nan_block_count = int(np.count_nonzero(scales == SCALE_NAN))
    return rep
