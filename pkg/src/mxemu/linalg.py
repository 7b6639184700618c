"""Dot products and GEMM on MX operands.

Accumulation order is fixed: inside a block, element products are summed in
FP32 in ascending lane order; the block sum is multiplied once by the product
of the two scales and narrowed to FP32; block partials are then added in
ascending block order in FP32.  Element products are exact in FP32 (at most
8 significant bits per factor), so the result equals an FP32 GEMM over the
dequantized operands carried out in the same order, provided no dequantized
value or product leaves the FP32 normal range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .block import MxBlock
from .errors import AxisMismatch, BlockSizeMismatch, ShapeMismatch
from .formats import decode_scale
from .metrics import ErrorReport, error_report
from .tensor import MxTensor


@dataclass
class GemmResult:
    out: np.ndarray
    reference: np.ndarray | None = None
    report: ErrorReport | None = None


def mx_dot(a: MxBlock, b: MxBlock) -> np.float32:
    if a.k != b.k:
        raise BlockSizeMismatch(f"block sizes {a.k} and {b.k} differ")
    pa = a.fmt.table32[a.elements.astype(np.intp)]
    pb = b.fmt.table32[b.elements.astype(np.intp)]
    acc = np.float32(0.0)
    with np.errstate(invalid="ignore", over="ignore"):
        for x, y in zip(pa, pb):
            acc = np.float32(acc + x * y)
        scale = float(decode_scale(a.scale)) * float(decode_scale(b.scale))
        return np.float32(scale * np.float64(acc))


_CHUNK_ELEMS = 1 << 22


def _block_partials(pa, xa, pb, xb, length, out):
    """Fill ``out`` (M, N) with the blockwise-accumulated product.

    pa: (M, nb, k) float32 element values, xa: (M, nb) float64 scales;
    pb/xb likewise with N in place of M.  ``length`` is the unpadded reduction
    length: padding lanes are skipped, not added as zeros, so the sign of a
    zero result matches an unpadded sum.
    """
    m, nb, k = pa.shape
    n = pb.shape[0]
    tail = length - (nb - 1) * k  # real lanes in the last block
    rows = max(1, _CHUNK_ELEMS // max(1, n * nb))
    with np.errstate(invalid="ignore", over="ignore"):
        for r0 in range(0, m, rows):
            r1 = min(m, r0 + rows)
            s = np.zeros((r1 - r0, n, nb), np.float32)
            for i in range(k):
                nbi = nb if i < tail else nb - 1
                if nbi:
                    # element products are exact in FP32
                    s[:, :, :nbi] += pa[r0:r1, None, :nbi, i] * pb[None, :, :nbi, i]
            scale = xa[r0:r1, None, :] * xb[None, :, :]
            partial = (scale * s.astype(np.float64)).astype(np.float32)
            acc = out[r0:r1]
            for blk in range(nb):
                acc += partial[:, :, blk]
    return out


def mx_gemm(a: MxTensor, b: MxTensor, reference=None) -> GemmResult:
    """``a`` is [M, K] quantized along axis 1, ``b`` is [K, N] along axis 0.

    The two operands may use different element formats but must share k.
    When ``reference`` (an FP32 [M, N] array) is given, an error report
    against it is attached.
    """
    if len(a.shape) != 2 or len(b.shape) != 2:
        raise ShapeMismatch("mx_gemm needs rank-2 operands")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"inner dimensions differ: {a.shape} x {b.shape}")
    if a.axis != 1 or b.axis != 0:
        raise AxisMismatch("operands must be quantized along the reduction axis")
    if a.cfg.block_size != b.cfg.block_size:
        raise BlockSizeMismatch(f"block sizes {a.cfg.block_size} and {b.cfg.block_size} differ")

    m, n = a.shape[0], b.shape[1]
    sa, ea = a.block_grid()  # (M, nb), (M, nb, k)
    sb, eb = b.block_grid()  # (N, nb), (N, nb, k)
    pa = a.cfg.element_fmt.table32[ea.astype(np.intp)]
    pb = b.cfg.element_fmt.table32[eb.astype(np.intp)]
    out = _block_partials(
        pa, decode_scale(sa), pb, decode_scale(sb), a.shape[1], np.zeros((m, n), np.float32)
    )

    result = GemmResult(out)
    if reference is not None:
        ref = np.asarray(reference, dtype=np.float32)
        result.reference = ref
        result.report = compare_to_fp32(out, ref)
        result.report.clamped_lane_count = a.clamped_lane_count + b.clamped_lane_count
        result.report.nan_block_count = a.nan_block_count + b.nan_block_count
    return result


def blocked_fp32_gemm(a, b, block_size: int) -> np.ndarray:
    """Plain FP32 GEMM using the same blockwise accumulation order as mx_gemm."""
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"inner dimensions differ: {a.shape} x {b.shape}")
    K = a.shape[1]
    out = np.zeros((a.shape[0], b.shape[1]), np.float32)
    with np.errstate(invalid="ignore", over="ignore"):
        for start in range(0, K, block_size):
            s = np.zeros_like(out)
            for i in range(start, min(start + block_size, K)):
                s += a[:, i, None] * b[None, i, :]
            out += s
    return out


def fp32_gemm(a, b) -> np.ndarray:
    """FP32 reference product (computed in float64 and rounded once)."""
    return (np.asarray(a, np.float64) @ np.asarray(b, np.float64)).astype(np.float32)


def compare_to_fp32(out, ref, rel_threshold: float = 0.0) -> ErrorReport:
    return error_report(ref, out, rel_threshold)
