import math

import numpy as np
import pytest

from mxemu.formats import ELEMENT_FORMATS, RoundingMode

ALL_FORMATS = list(ELEMENT_FORMATS.values())

# (criterion id, description, passed) collected by test_acceptance.py
ACCEPTANCE_RESULTS = []


def brute_force_nearest(fmt, value, rounding):
    """Nearest finite representable value by scanning the whole code table.

    Clamps to the representable range; ties go to the even code (RNE) or the
    larger magnitude (RHAZ).  Returns the decoded value (float).
    """
    vals = sorted({float(x) for x in fmt.table if math.isfinite(x)})
    v = min(max(value, vals[0]), vals[-1])
    best = min(vals, key=lambda c: abs(c - v))
    d = abs(best - v)
    cands = [c for c in vals if abs(c - v) == d]
    if len(cands) == 1:
        return cands[0]
    lo, hi = sorted(cands, key=abs)
    if rounding is RoundingMode.RHAZ:
        return hi
    return lo if _mantissa_even(fmt, lo) else hi


def _mantissa_even(fmt, x):
    """Parity of the stored mantissa, computed from the value alone."""
    x = abs(x)
    if fmt.is_int:
        return int(x * 64) % 2 == 0
    m = fmt.mantissa_bits
    min_normal = 2.0 ** (1 - fmt.bias)
    if x < min_normal:
        mant = x / 2.0 ** (1 - fmt.bias - m)
    else:
        e = math.floor(math.log2(x))
        mant = x / 2.0 ** (e - m) - 2**m
    assert mant == int(mant)
    return int(mant) % 2 == 0


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid, desc, ok in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {cid}: {desc}")
