"""MX tensors: blockwise quantization along one principal axis.

Layout: the principal axis is moved last, padded with zeros up to a multiple
of k, and cut into blocks.  Blocks are numbered in C order over
(other axes..., block index), so consecutive blocks tile the principal axis.
Scales and element codes live in two separate arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .block import MxBlock, QuantConfig, dequantize_rows, quantize_rows
from .errors import RankError
from .formats import SCALE_NAN


@dataclass(frozen=True, eq=False)
class MxTensor:
    shape: tuple[int, ...]
    axis: int
    cfg: QuantConfig
    scales: np.ndarray  # uint8, (n_blocks,)
    elements: np.ndarray  # uint8, (n_blocks, k)
    clamped_lane_count: int = field(default=0, compare=False)

    @property
    def n_blocks(self) -> int:
        return len(self.scales)

    @property
    def blocks_per_row(self) -> int:
        return -(-self.shape[self.axis] // self.cfg.block_size)

    @property
    def nan_block_count(self) -> int:
        return int(np.count_nonzero(self.scales == SCALE_NAN))

    @property
    def blocks(self) -> list[MxBlock]:
        fmt = self.cfg.element_fmt
        return [MxBlock(int(s), e, fmt) for s, e in zip(self.scales, self.elements)]

    def block_grid(self):
        """(scales, elements) reshaped to (*other_dims, blocks_per_row[, k])."""
        lead = tuple(d for i, d in enumerate(self.shape) if i != self.axis)
        nb = self.blocks_per_row
        return (
            self.scales.reshape(*lead, nb),
            self.elements.reshape(*lead, nb, self.cfg.block_size),
        )

    def __eq__(self, other):
        if not isinstance(other, MxTensor):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.axis == other.axis
            and self.cfg == other.cfg
            and np.array_equal(self.scales, other.scales)
            and np.array_equal(self.elements, other.elements)
        )


def _normalize_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise RankError(f"axis {axis} out of range for rank {ndim}")
    return axis % ndim


def quantize_tensor(t, axis: int, cfg: QuantConfig) -> MxTensor:
    arr = np.asarray(t, dtype=np.float32)
    if arr.ndim == 0:
        raise RankError("cannot quantize a rank-0 tensor")
    axis = _normalize_axis(axis, arr.ndim)
    if arr.shape[axis] < 1:
        raise ValueError("principal axis must have length >= 1")
    k = cfg.block_size
    moved = np.moveaxis(arr, axis, -1)
    length = moved.shape[-1]
    nb = -(-length // k)
    padded = np.zeros(moved.shape[:-1] + (nb * k,), np.float32)
    padded[..., :length] = moved
    rows = padded.reshape(-1, k)
    scales, codes, clamped = quantize_rows(rows, cfg.element_fmt, cfg.rounding)
    return MxTensor(tuple(arr.shape), axis, cfg, scales, codes, int(clamped.sum()))


def dequantize_tensor(mt: MxTensor) -> np.ndarray:
    k = mt.cfg.block_size
    flat = dequantize_rows(mt.scales, mt.elements, mt.cfg.element_fmt)
    moved_shape = tuple(d for i, d in enumerate(mt.shape) if i != mt.axis)
    length = mt.shape[mt.axis]
    moved = flat.reshape(*moved_shape, mt.blocks_per_row * k)[..., :length]
    return np.ascontiguousarray(np.moveaxis(moved, -1, mt.axis))


def transpose_2d(t) -> np.ndarray:
    arr = np.asarray(t, dtype=np.float32)
    if arr.ndim != 2:
        raise RankError(f"transpose_2d needs rank 2, got rank {arr.ndim}")
    return np.ascontiguousarray(arr.T)
