"""Two's-complement Q formats, quantization and the complex MAC.

Scalar values are :class:`QValue` objects carrying their raw integer payload.
The array helpers at the bottom work directly on ``int64`` payload arrays and
are what the vectorized datapath uses; both routes share the same rounding
and saturation rules.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Literal

import numpy as np

Rounding = Literal["round-nearest-even", "truncate"]
Overflow = Literal["saturate", "wrap"]

__all__ = [
    "QFormat",
    "QValue",
    "QComplex",
    "quantize",
    "quantize_complex",
    "mac",
    "round_shift",
    "round_div",
    "saturate",
    "quantize_array",
]


@dataclass(frozen=True)
class QFormat:
    int_bits: int
    frac_bits: int
    signed: bool = True

    def __post_init__(self):
        if self.int_bits < 0 or self.frac_bits < 0:
            raise ValueError("bit counts must be nonnegative")
        if self.width > 64:
            raise ValueError(f"total width {self.width} exceeds 64 bits")
        if self.width == 0:
            raise ValueError("format has no bits")

    @property
    def width(self) -> int:
        return int(self.signed) + self.int_bits + self.frac_bits

    @property
    def raw_min(self) -> int:
        return -(1 << (self.int_bits + self.frac_bits)) if self.signed else 0

    @property
    def raw_max(self) -> int:
        return (1 << (self.int_bits + self.frac_bits)) - 1

    @property
    def ulp(self) -> float:
        return 2.0**-self.frac_bits

    @property
    def min_value(self) -> float:
        return self.raw_min * self.ulp

    @property
    def max_value(self) -> float:
        return self.raw_max * self.ulp

    def __str__(self) -> str:
        return f"Q{self.int_bits}.{self.frac_bits}{'s' if self.signed else 'u'}"

    @classmethod
    def parse(cls, text: str) -> "QFormat":
        """Inverse of ``str``: ``Q6.10s`` is signed with 6 integer and 10 fraction bits."""
        m = re.fullmatch(r"Q(\d+)\.(\d+)([su])", text.strip())
        if not m:
            raise ValueError(f"bad Q format {text!r}")
        return cls(int(m.group(1)), int(m.group(2)), m.group(3) == "s")


@dataclass(frozen=True)
class QValue:
    """A fixed-point number; ``overflow`` is sticky across arithmetic."""

    raw: int
    fmt: QFormat
    overflow: bool = False

    def __post_init__(self):
        if not (self.fmt.raw_min <= self.raw <= self.fmt.raw_max):
            raise ValueError(f"raw {self.raw} not representable in {self.fmt}")

    @property
    def value(self) -> float:
        return self.raw * self.fmt.ulp

    def __float__(self) -> float:
        return self.value

    def __lt__(self, other: "QValue") -> bool:
        return self._cmp(other) < 0

    def __le__(self, other: "QValue") -> bool:
        return self._cmp(other) <= 0

    def _cmp(self, other: "QValue") -> int:
        fa, fb = self.fmt.frac_bits, other.fmt.frac_bits
        a, b = self.raw << max(fb - fa, 0), other.raw << max(fa - fb, 0)
        return (a > b) - (a < b)


@dataclass(frozen=True)
class QComplex:
    re: QValue
    im: QValue

    def __post_init__(self):
        if self.re.fmt != self.im.fmt:
            raise ValueError("real and imaginary parts must share a format")

    @property
    def fmt(self) -> QFormat:
        return self.re.fmt

    @property
    def overflow(self) -> bool:
        return self.re.overflow or self.im.overflow

    @property
    def value(self) -> complex:
        return complex(self.re.value, self.im.value)

    @classmethod
    def zero(cls, fmt: QFormat) -> "QComplex":
        return cls(QValue(0, fmt), QValue(0, fmt))


def _wrap(raw: int, fmt: QFormat) -> int:
    mask = (1 << fmt.width) - 1
    raw &= mask
    if fmt.signed and raw >> (fmt.width - 1):
        raw -= 1 << fmt.width
    return raw


def _fit(raw: int, fmt: QFormat, overflow: Overflow) -> tuple[int, bool]:
    if fmt.raw_min <= raw <= fmt.raw_max:
        return raw, False
    if overflow == "saturate":
        return min(max(raw, fmt.raw_min), fmt.raw_max), True
    if overflow == "wrap":
        return _wrap(raw, fmt), True
    raise ValueError(f"unknown overflow mode {overflow!r}")


def _round_real(x: float, frac_bits: int, mode: Rounding) -> int:
    scaled = x * 2.0**frac_bits
    if mode == "round-nearest-even":
        return int(np.rint(scaled))
    if mode == "truncate":
        return int(np.floor(scaled))
    raise ValueError(f"unknown rounding mode {mode!r}")


def quantize(
    x: float,
    fmt: QFormat,
    mode: Rounding = "round-nearest-even",
    overflow: Overflow = "saturate",
) -> QValue:
    """Nearest representable value under ``mode``; out-of-range inputs saturate or wrap.

    ``truncate`` rounds toward minus infinity, as dropping LSBs of a
    two's-complement word does.
    """
    if np.isnan(x):
        raise ValueError("cannot quantize NaN")
    if np.isinf(x):
        raw = fmt.raw_max if x > 0 else fmt.raw_min
        return QValue(raw, fmt, overflow=True)
    raw, flag = _fit(_round_real(float(x), fmt.frac_bits, mode), fmt, overflow)
    return QValue(raw, fmt, overflow=flag)


def quantize_complex(z: complex, fmt: QFormat, mode: Rounding = "round-nearest-even", overflow: Overflow = "saturate") -> QComplex:
    return QComplex(quantize(z.real, fmt, mode, overflow), quantize(z.imag, fmt, mode, overflow))


def mac(acc: QComplex, a: QComplex, b: QComplex, conj_a: bool = False) -> QComplex:
    """``acc + a*b`` (or ``acc + conj(a)*b``).

    The complex product is formed exactly, then truncated once to the
    accumulator's fraction width and added with saturation.
    """
    fa, fb = a.fmt.frac_bits, b.fmt.frac_bits
    ai = -a.im.raw if conj_a else a.im.raw
    pr = a.re.raw * b.re.raw - ai * b.im.raw
    pi = a.re.raw * b.im.raw + ai * b.re.raw
    shift = fa + fb - acc.fmt.frac_bits
    if shift >= 0:
        pr, pi = pr >> shift, pi >> shift
    else:
        pr, pi = pr << -shift, pi << -shift
    sticky = acc.overflow or a.overflow or b.overflow
    re, fr = _fit(acc.re.raw + pr, acc.fmt, "saturate")
    im, fi = _fit(acc.im.raw + pi, acc.fmt, "saturate")
    return QComplex(QValue(re, acc.fmt, sticky or fr), QValue(im, acc.fmt, sticky or fi))


# -- array payload helpers -------------------------------------------------


def round_shift(v, s: int):
    """Divide int64 payloads by ``2**s`` with round-half-to-even (``s <= 0`` shifts left)."""
    v = np.asarray(v, dtype=np.int64)
    if s <= 0:
        return v << -s
    q = v >> s
    rem = v - (q << s)
    half = 1 << (s - 1)
    return q + ((rem > half) | ((rem == half) & ((q & 1) == 1)))


def round_div(n, d):
    """``n / d`` for positive integer ``d``, rounded half to even."""
    n = np.asarray(n, dtype=np.int64)
    d = np.asarray(d, dtype=np.int64)
    q, rem = np.divmod(n, d)
    twice = 2 * rem
    return q + ((twice > d) | ((twice == d) & ((q & 1) == 1)))


def saturate(v, fmt: QFormat):
    """Clip payloads into ``fmt``; returns ``(clipped, any_clipped)``."""
    v = np.asarray(v, dtype=np.int64)
    out = np.clip(v, fmt.raw_min, fmt.raw_max)
    return out, bool(np.any(out != v))


def quantize_array(x, fmt: QFormat, mode: Rounding = "round-nearest-even"):
    """Vectorized saturating :func:`quantize`; returns ``(raw int64 array, any_saturated)``."""
    scaled = np.asarray(x, dtype=float) * 2.0**fmt.frac_bits
    if mode == "round-nearest-even":
        r0 = np.rint(scaled)
    elif mode == "truncate":
        r0 = np.floor(scaled)
    else:
        raise ValueError(f"unknown rounding mode {mode!r}")
    r = np.clip(r0, fmt.raw_min, fmt.raw_max)
    return r.astype(np.int64), bool(np.any(r != r0))
