"""Error metrics between a reference tensor and its quantized approximation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch

REPORT_KEYS = ("mse", "sqnr_db", "max_abs_err", "max_rel_err", "clamped_lane_count", "nan_block_count")


@dataclass
class ErrorReport:
    mse: float
    sqnr_db: float  # +inf when the error is exactly zero
    max_abs_err: float
    max_rel_err: float
    clamped_lane_count: int = 0
    nan_block_count: int = 0
    rel_err_skipped: bool = False  # no lane exceeded the relative-error threshold
    per_block_max_abs: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "mse": float(self.mse),
            "sqnr_db": float(self.sqnr_db),
            "max_abs_err": float(self.max_abs_err),
            "max_rel_err": float(self.max_rel_err),
            "clamped_lane_count": int(self.clamped_lane_count),
            "nan_block_count": int(self.nan_block_count),
        }


def sqnr_db(signal_power: float, noise_power: float) -> float:
    if noise_power == 0.0:
        return math.inf
    if signal_power == 0.0:
        return -math.inf
    return 10.0 * math.log10(signal_power / noise_power)


def error_report(ref, approx, rel_threshold: float = 0.0) -> ErrorReport:
    """Compare ``approx`` against ``ref``.

    Lanes where ``ref`` is not finite or ``approx`` is NaN are left out (NaN
    blocks are counted separately by the callers that know about blocks).
    ``max_rel_err`` only looks at lanes with ``|ref| > rel_threshold``.
    """
    ref = np.asarray(ref, dtype=np.float64)
    approx = np.asarray(approx, dtype=np.float64)
    if ref.shape != approx.shape:
        raise ShapeMismatch(f"shape {approx.shape} vs reference {ref.shape}")
    keep = np.isfinite(ref) & ~np.isnan(approx)
    r, q = ref[keep], approx[keep]
    with np.errstate(over="ignore", invalid="ignore"):
        err = np.abs(q - r)
        noise = float(np.sum(err * err))
    signal = float(np.sum(r * r))
    mse = noise / r.size if r.size else 0.0
    rel_lanes = np.abs(r) > rel_threshold
    if rel_lanes.any():
        max_rel = float(np.max(err[rel_lanes] / np.abs(r[rel_lanes])))
    else:
        max_rel = 0.0
    return ErrorReport(
        mse=mse,
        sqnr_db=sqnr_db(signal, noise),
        max_abs_err=float(err.max()) if err.size else 0.0,
        max_rel_err=max_rel,
        rel_err_skipped=not rel_lanes.any(),
    )
