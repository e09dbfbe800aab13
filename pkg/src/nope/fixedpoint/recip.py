"""LUT-seeded single-step Newton-Raphson reciprocal.

The operand is normalized to ``w`` in [1, 2), the top five fraction bits of
``w`` pick a seed ``1/(1 + i/32)`` stored with 10 fraction bits, and one
Newton step ``r1 = r0 (2 - w r0)`` doubles the ~5 correct bits. Seeds taken
at the left edge of each interval overestimate ``1/w``, so ``r1 <= 1/w`` and
``1 - r1`` never goes negative.
"""

from __future__ import annotations

import numpy as np

from .qformat import QFormat, QValue, round_shift, saturate

__all__ = [
    "LUT_INDEX_BITS",
    "SEED_FRAC_BITS",
    "RECIP_LUT",
    "ALPHA_FORMAT",
    "reciprocal",
    "reciprocal_array",
    "reciprocal_1px",
    "reciprocal_1px_array",
]

LUT_INDEX_BITS = 5
SEED_FRAC_BITS = 10
MANT_FRAC_BITS = 16  # normalized operand precision fed to the multiplier
NR_FRAC_BITS = 20  # Newton output precision before denormalization

RECIP_LUT = np.array(
    [round((1 << (SEED_FRAC_BITS + LUT_INDEX_BITS)) / ((1 << LUT_INDEX_BITS) + i)) for i in range(1 << LUT_INDEX_BITS)],
    dtype=np.int64,
)
RECIP_LUT.setflags(write=False)

ALPHA_FORMAT = QFormat(0, 12, signed=False)


def _msb(raw: np.ndarray) -> np.ndarray:
    _, e = np.frexp(raw.astype(float))
    k = e.astype(np.int64) - 1
    # float rounding can bump the exponent for wide payloads
    k = np.where((raw >> np.maximum(k, 0)) == 0, k - 1, k)
    return np.where((raw >> (k + 1)) > 0, k + 1, k)


def _newton(raw: np.ndarray):
    """Return ``(r1, k)`` with ``1/raw ~= r1 * 2**-(NR_FRAC_BITS + k)``."""
    k = _msb(raw)
    shift = k - MANT_FRAC_BITS
    m = np.where(shift >= 0, raw >> np.maximum(shift, 0), raw << np.maximum(-shift, 0))
    idx = (m >> (MANT_FRAC_BITS - LUT_INDEX_BITS)) & ((1 << LUT_INDEX_BITS) - 1)
    r0 = RECIP_LUT[idx]
    prod_frac = MANT_FRAC_BITS + SEED_FRAC_BITS
    err = (2 << prod_frac) - m * r0
    r1 = (r0 * err) >> (SEED_FRAC_BITS + prod_frac - NR_FRAC_BITS)
    return r1, k


def reciprocal_array(raw, in_frac: int, out_fmt: QFormat):
    """``1/x`` for positive payloads ``raw`` with ``in_frac`` fraction bits.

    Returns ``(payload in out_fmt, any_saturated)``.
    """
    raw = np.asarray(raw, dtype=np.int64)
    if np.any(raw <= 0):
        raise ValueError("reciprocal needs a positive operand")
    r1, k = _newton(raw)
    # value(raw) = raw * 2**-in_frac, so 1/value = r1 * 2**(in_frac - NR_FRAC - k)
    out = np.empty_like(raw)
    s = NR_FRAC_BITS + k - in_frac - out_fmt.frac_bits
    for sv in np.unique(s):
        sel = s == sv
        out[sel] = round_shift(r1[sel], int(sv))
    return saturate(out, out_fmt)


def reciprocal(x: QValue, out_fmt: QFormat) -> QValue:
    raw, flag = reciprocal_array(np.array([x.raw]), x.fmt.frac_bits, out_fmt)
    return QValue(int(raw[0]), out_fmt, overflow=flag or x.overflow)


def reciprocal_1px_array(raw, in_frac: int, out_fmt: QFormat = ALPHA_FORMAT):
    """``(1 + 1/x)^-1 = 1 - 1/(1+x)`` for nonnegative payloads, clamped to [0, 1 - ulp]."""
    raw = np.asarray(raw, dtype=np.int64)
    if np.any(raw < 0):
        raise ValueError("reciprocal_1px needs a nonnegative operand")
    w = raw + (1 << in_frac)
    inv, _ = reciprocal_array(w, in_frac, QFormat(1, out_fmt.frac_bits, signed=False))
    one = 1 << out_fmt.frac_bits
    return np.clip(one - inv, 0, out_fmt.raw_max)


def reciprocal_1px(x: QValue, out_fmt: QFormat = ALPHA_FORMAT) -> QValue:
    """Shrinkage factor ``1 - 1/(1+x)`` in [0, 1) through the LUT/Newton unit."""
    if x.raw < 0:
        raise ValueError("reciprocal_1px needs a nonnegative operand")
    raw = reciprocal_1px_array(np.array([x.raw]), x.fmt.frac_bits, out_fmt)
    return QValue(int(raw[0]), out_fmt, overflow=x.overflow)
