"""Scalar element formats and the E8M0 shared-scale format.

Every element format is small (at most 256 codes), so decoding is a table
lookup and encoding is a nearest-neighbour search over the sorted table of
positive finite magnitudes.  All intermediate arithmetic is float64, in which
every element value, every power-of-two scale in [2^-127, 2^127] and every
midpoint between adjacent element values is exact.  Ties are therefore
detected by exact comparison against midpoints.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import UnrepresentableSpecial

__all__ = [
    "RoundingMode",
    "ElementFormat",
    "E4M3",
    "E5M2",
    "E2M3",
    "E3M2",
    "E2M1",
    "INT8",
    "ELEMENT_FORMATS",
    "MX_FORMATS",
    "SCALE_BIAS",
    "SCALE_BITS",
    "SCALE_NAN",
    "decode_element",
    "encode_element",
    "decode_elements",
    "encode_elements",
    "decode_scale",
    "enumerate_format",
    "canonical_code",
]

SCALE_BITS = 8
SCALE_BIAS = 127
SCALE_NAN = 0xFF
SCALE_EXP_MIN = -127
SCALE_EXP_MAX = 127

INT8_FRACTION_BITS = 6


class RoundingMode(enum.Enum):
    RNE = "rne"  # round half to nearest even
    RHAZ = "rhaz"  # round half away from zero


@dataclass(frozen=True)
class ElementFormat:
    """Static descriptor of one element encoding.

    ``emax`` is the unbiased exponent of the largest normal value and
    ``vmax`` the largest finite magnitude.  INT8 is a two's-complement byte
    with an implicit scale of 2^-6.
    """

    name: str
    total_bits: int
    exponent_bits: int
    mantissa_bits: int
    bias: int
    emax: int
    vmax: float
    has_inf: bool
    has_nan: bool
    nan_code: int | None = None
    fmt_id: int = field(default=0, compare=False)

    @property
    def is_int(self) -> bool:
        return self.exponent_bits == 0

    @property
    def n_codes(self) -> int:
        return 1 << self.total_bits

    @property
    def sign_bit(self) -> int:
        return 1 << (self.total_bits - 1)

    @property
    def vmin(self) -> float:
        """Most negative finite value (-2.0 for INT8, -vmax otherwise)."""
        return -2.0 if self.is_int else -self.vmax

    def __repr__(self) -> str:
        return f"ElementFormat({self.name})"

    # -- tables ---------------------------------------------------------------

    @cached_property
    def table(self) -> np.ndarray:
        """float64 decoded value of every code, indexed by code."""
        return np.array([_decode_scalar(self, c) for c in range(self.n_codes)])

    @cached_property
    def table32(self) -> np.ndarray:
        return self.table.astype(np.float32)

    @cached_property
    def _magnitudes(self) -> np.ndarray:
        # For sign-magnitude float formats, codes 0..max_finite (sign bit
        # clear) decode to strictly increasing magnitudes.
        pos = self.table[: self.sign_bit]
        n = int(np.count_nonzero(np.isfinite(pos)))
        mags = pos[:n]
        assert np.all(np.diff(mags) > 0)
        return mags

    @cached_property
    def inf_code(self) -> int | None:
        if not self.has_inf:
            return None
        return int(np.flatnonzero(self.table[: self.sign_bit] == np.inf)[0])


def _decode_scalar(fmt: ElementFormat, code: int) -> float:
    if fmt.is_int:
        signed = code - 256 if code & 0x80 else code
        return signed / (1 << INT8_FRACTION_BITS)
    m = fmt.mantissa_bits
    sign = -1.0 if code & fmt.sign_bit else 1.0
    exp = (code >> m) & ((1 << fmt.exponent_bits) - 1)
    frac = code & ((1 << m) - 1)
    exp_all_ones = exp == (1 << fmt.exponent_bits) - 1
    if fmt.name == "E4M3" and exp_all_ones and frac == (1 << m) - 1:
        return math.nan
    if fmt.name == "E5M2" and exp_all_ones:
        return sign * math.inf if frac == 0 else math.nan
    if exp == 0:
        return sign * math.ldexp(frac, 1 - fmt.bias - m)
    return sign * math.ldexp((1 << m) + frac, exp - fmt.bias - m)


E4M3 = ElementFormat("E4M3", 8, 4, 3, 7, 8, 448.0, False, True, 0x7F, fmt_id=0)
E5M2 = ElementFormat("E5M2", 8, 5, 2, 15, 15, 57344.0, True, True, 0x7E, fmt_id=1)
E2M3 = ElementFormat("E2M3", 6, 2, 3, 1, 2, 7.5, False, False, fmt_id=2)
E3M2 = ElementFormat("E3M2", 6, 3, 2, 3, 4, 28.0, False, False, fmt_id=3)
E2M1 = ElementFormat("E2M1", 4, 2, 1, 1, 2, 6.0, False, False, fmt_id=4)
INT8 = ElementFormat("INT8", 8, 0, 7, 0, 0, 1.984375, False, False, fmt_id=5)

ELEMENT_FORMATS: dict[str, ElementFormat] = {
    f.name: f for f in (E4M3, E5M2, E2M3, E3M2, E2M1, INT8)
}
FORMATS_BY_ID: dict[int, ElementFormat] = {f.fmt_id: f for f in ELEMENT_FORMATS.values()}

# CLI / user-facing names of the concrete MX formats.
MX_FORMATS: dict[str, ElementFormat] = {
    "mxfp8_e4m3": E4M3,
    "mxfp8_e5m2": E5M2,
    "mxfp6_e2m3": E2M3,
    "mxfp6_e3m2": E3M2,
    "mxfp4": E2M1,
    "mxint8": INT8,
}


def lookup_format(name: str | ElementFormat) -> ElementFormat:
    if isinstance(name, ElementFormat):
        return name
    key = name.lower()
    if key in MX_FORMATS:
        return MX_FORMATS[key]
    if name.upper() in ELEMENT_FORMATS:
        return ELEMENT_FORMATS[name.upper()]
    raise KeyError(f"unknown element format {name!r}")


# -- vectorised codecs ----------------------------------------------------------


def decode_elements(fmt: ElementFormat, codes) -> np.ndarray:
    """Decode an array of codes to float64 values."""
    codes = np.asarray(codes)
    if codes.size and (codes.min() < 0 or codes.max() >= fmt.n_codes):
        raise ValueError(f"code out of range for {fmt.name}")
    return fmt.table[codes.astype(np.intp)]


def encode_elements(fmt: ElementFormat, values, rounding: RoundingMode = RoundingMode.RNE) -> np.ndarray:
    """Encode real values to the nearest representable codes (uint8 array).

    Finite values beyond the representable range clamp to the extreme value of
    the same sign.  NaN/Inf map to their encodings when the format has them and
    raise :class:`UnrepresentableSpecial` otherwise.
    """
    v = np.asarray(values, dtype=np.float64)
    nan = np.isnan(v)
    inf = np.isinf(v)
    if nan.any() and not fmt.has_nan:
        raise UnrepresentableSpecial(f"{fmt.name} has no NaN encoding")
    if inf.any() and not fmt.has_inf:
        raise UnrepresentableSpecial(f"{fmt.name} has no Inf encoding")

    finite = np.where(nan | inf, 0.0, v)
    if fmt.is_int:
        codes = _encode_int8(finite, rounding)
    else:
        codes = _encode_float(fmt, finite, rounding)
        if fmt.has_inf and inf.any():
            codes = np.where(inf, fmt.inf_code | np.where(v < 0, fmt.sign_bit, 0), codes)
    if fmt.has_nan and nan.any():
        codes = np.where(nan, fmt.nan_code, codes)
    return codes.astype(np.uint8)


def _encode_float(fmt: ElementFormat, v: np.ndarray, rounding: RoundingMode) -> np.ndarray:
    mags = fmt._magnitudes
    a = np.minimum(np.abs(v), fmt.vmax)
    hi = np.searchsorted(mags, a, side="left")
    lo = np.maximum(hi - 1, 0)
    mid = (mags[lo] + mags[hi]) / 2.0
    if rounding is RoundingMode.RNE:
        tie_pick = np.where(lo % 2 == 0, lo, hi)
    else:
        tie_pick = hi
    pick = np.where(a < mid, lo, np.where(a > mid, hi, tie_pick))
    pick = np.where(mags[hi] == a, hi, pick)
    return pick | np.where(np.signbit(v), fmt.sign_bit, 0)


def _encode_int8(v: np.ndarray, rounding: RoundingMode) -> np.ndarray:
    s = np.clip(v * (1 << INT8_FRACTION_BITS), -1024.0, 1024.0)
    if rounding is RoundingMode.RNE:
        r = np.rint(s)
    else:
        # |s - trunc(s)| is exact; floor(|s| + 0.5) is not (0.49999999999999994 + 0.5 == 1.0).
        t = np.trunc(s)
        r = t + np.where(np.abs(s - t) >= 0.5, np.sign(s), 0.0)
    r = np.clip(r, -128, 127).astype(np.int64)
    return r & 0xFF


def canonical_code(fmt: ElementFormat, code: int) -> int:
    """Map every NaN code to the single NaN code that encode emits."""
    if fmt.has_nan and math.isnan(fmt.table[code]):
        return fmt.nan_code
    return code


# -- scalar API -----------------------------------------------------------------


def decode_element(fmt: ElementFormat, code: int) -> float:
    if not 0 <= code < fmt.n_codes:
        raise ValueError(f"code {code} does not fit in {fmt.total_bits} bits")
    return float(fmt.table[code])


def encode_element(fmt: ElementFormat, value: float, rounding: RoundingMode = RoundingMode.RNE) -> int:
    return int(encode_elements(fmt, [value], rounding)[0])


def decode_scale(code):
    """E8M0 decode: 2^(code-127), NaN for code 255.  Works on scalars and arrays."""
    c = np.asarray(code, dtype=np.int64)
    out = np.where(c == SCALE_NAN, np.nan, np.ldexp(1.0, (c - SCALE_BIAS).astype(np.int32)))
    return float(out) if out.ndim == 0 else out


def enumerate_format(fmt: ElementFormat) -> list[tuple[int, float]]:
    """All codes with their values: finite ones sorted by value (ties by code),
    then +-Inf, then NaN codes."""
    entries = [(c, float(x)) for c, x in enumerate(fmt.table)]
    finite = sorted((e for e in entries if math.isfinite(e[1])), key=lambda e: (e[1], e[0]))
    infs = sorted((e for e in entries if math.isinf(e[1])), key=lambda e: e[1])
    nans = [e for e in entries if math.isnan(e[1])]
    return finite + infs + nans
