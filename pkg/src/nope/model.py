"""System model for the massive MU-MIMO uplink ``y = H x + n``.

Domain types, constellations with Gray labelling, Rayleigh channel draws,
noise injection and the per-user large-scale gain estimate used by NOPE.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

__all__ = [
    "SystemDims",
    "ChannelMatrix",
    "GainProfile",
    "Constellation",
    "NoiseSpec",
    "CONSTELLATIONS",
    "make_constellation",
    "make_rng",
    "generate_channel",
    "transmit",
    "estimate_gains",
    "modulate",
    "demap_hard",
    "noise_variance_for_snr",
]


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for stream ``key`` under a 64-bit ``seed``.

    Streams with distinct keys are independent, so trial ``k`` always sees the
    same draws no matter how trials are split across workers.
    """
    ss = np.random.SeedSequence(int(seed) & 0xFFFF_FFFF_FFFF_FFFF, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SystemDims:
    """Antenna counts: ``B`` base-station antennas and ``U`` single-antenna users."""

    B: int
    U: int

    def __post_init__(self):
        if int(self.B) != self.B or int(self.U) != self.U:
            raise TypeError("B and U must be integers")
        if self.B < 1 or self.U < 1:
            raise ValueError(f"B and U must be positive, got B={self.B}, U={self.U}")
        if self.U > self.B:
            raise ValueError(f"overloaded system rejected: U={self.U} > B={self.B}")

    @property
    def beta(self) -> Fraction:
        """Antenna ratio U/B, exact."""
        return Fraction(self.U, self.B)


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    entries: np.ndarray
    dims: SystemDims
    gains: np.ndarray | None = None

    def __post_init__(self):
        H = np.asarray(self.entries, dtype=complex)
        if H.shape != (self.dims.B, self.dims.U):
            raise ValueError(f"channel shape {H.shape} does not match dims ({self.dims.B}, {self.dims.U})")
        if not np.all(np.isfinite(H)):
            raise ValueError("channel entries must be finite")
        H.setflags(write=False)
        object.__setattr__(self, "entries", H)

    @classmethod
    def from_array(cls, H) -> "ChannelMatrix":
        H = np.asarray(H, dtype=complex)
        if H.ndim != 2:
            raise ValueError("channel matrix must be 2-D")
        return cls(H, SystemDims(*H.shape))

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


@dataclass(frozen=True, eq=False)
class GainProfile:
    """Estimated squared large-scale gains and their derived quantities.

    Arrays may carry leading batch axes; the user axis is always last.
    """

    d2: np.ndarray
    d2_inv: np.ndarray
    d2_mean: np.ndarray | float


@dataclass(frozen=True, eq=False)
class Constellation:
    name: str
    points: np.ndarray
    bits_per_symbol: int
    labels: np.ndarray  # labels[i] = integer bit pattern (MSB first) of points[i]
    energy: float
    bit_table: np.ndarray = field(repr=False)  # (M, bits_per_symbol) 0/1 rows

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.points.imag == 0))

    def index_of_label(self, label) -> np.ndarray:
        inv = np.empty(self.size, dtype=np.int64)
        inv[self.labels] = np.arange(self.size)
        return inv[np.asarray(label)]


def _gray(k: np.ndarray) -> np.ndarray:
    return k ^ (k >> 1)


def _pam_axis(levels: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(levels)
    return (2 * k - levels + 1).astype(float), _gray(k)


_CONSTELLATION_BITS = {"BPSK": 1, "QPSK": 2, "QAM16": 4, "QAM64": 6, "QAM256": 8}
CONSTELLATIONS = tuple(_CONSTELLATION_BITS)

_ALIASES = {
    "bpsk": "BPSK",
    "qpsk": "QPSK",
    "4qam": "QPSK",
    "qam4": "QPSK",
    "16qam": "QAM16",
    "qam16": "QAM16",
    "16-qam": "QAM16",
    "64qam": "QAM64",
    "qam64": "QAM64",
    "64-qam": "QAM64",
    "256qam": "QAM256",
    "qam256": "QAM256",
    "256-qam": "QAM256",
}


def make_constellation(name: str) -> Constellation:
    """Unit-energy Gray-labelled alphabet.

    Square QAM uses an independent reflected Gray code on each axis; the
    in-phase bits form the high half of the label. BPSK maps bit 0 to -1.
    """
    key = _ALIASES.get(str(name).lower().replace("_", ""), str(name).upper())
    if key not in _CONSTELLATION_BITS:
        raise ValueError(f"unsupported constellation {name!r}; choose from {CONSTELLATIONS}")
    m = _CONSTELLATION_BITS[key]

    if key == "BPSK":
        amp, gray = _pam_axis(2)
        points = amp.astype(complex)
        labels = gray
    else:
        half = m // 2
        amp, gray = _pam_axis(1 << half)
        ai, aq = np.meshgrid(amp, amp, indexing="ij")
        gi, gq = np.meshgrid(gray, gray, indexing="ij")
        points = (ai + 1j * aq).ravel()
        labels = ((gi << half) | gq).ravel()

    # dyadic integer lattice: the mean is exactly zero before scaling
    energy = float(np.mean(np.abs(points) ** 2))
    points = points / np.sqrt(energy)
    shifts = np.arange(m - 1, -1, -1)
    bit_table = ((labels[:, None] >> shifts) & 1).astype(np.uint8)
    points.setflags(write=False)
    return Constellation(
        name=key,
        points=points,
        bits_per_symbol=m,
        labels=labels.astype(np.int64),
        energy=float(np.mean(np.abs(points) ** 2)),
        bit_table=bit_table,
    )


@dataclass(frozen=True)
class NoiseSpec:
    """Complex noise variance per receive antenna."""

    n0: float

    def __post_init__(self):
        if not (self.n0 > 0 and np.isfinite(self.n0)):
            raise ValueError(f"n0 must be a positive finite real, got {self.n0}")


def noise_variance_for_snr(snr_db: float, dims: SystemDims, ex: float = 1.0) -> float:
    """N0 giving average receive SNR per antenna ``U*E_X/(B*N0)`` of ``snr_db``."""
    return dims.U * ex / (dims.B * 10.0 ** (snr_db / 10.0))


GainsArg = Union[str, Sequence[float], np.ndarray]


def generate_channel(dims: SystemDims, gains: GainsArg = "uniform", rng: np.random.Generator | None = None) -> ChannelMatrix:
    """Draw ``H = H~ D`` with ``H~`` i.i.d. CN(0, 1/B) and ``D = diag(gains)``."""
    if rng is None:
        rng = np.random.default_rng()
    B, U = dims.B, dims.U
    Ht = (rng.standard_normal((B, U)) + 1j * rng.standard_normal((B, U))) * np.sqrt(0.5 / B)
    if isinstance(gains, str):
        if gains != "uniform":
            raise ValueError(f"unknown gain model {gains!r}")
        return ChannelMatrix(Ht, dims)
    d = np.asarray(gains, dtype=float)
    if d.shape != (U,):
        raise ValueError(f"expected {U} gains, got shape {d.shape}")
    if np.any(d < 0):
        raise ValueError("large-scale gains must be nonnegative")
    return ChannelMatrix(Ht * d, dims, gains=d)


def transmit(H, x, noise: NoiseSpec | None, rng: np.random.Generator | None = None) -> np.ndarray:
    """Return ``H x + n``; ``noise=None`` disables the noise term."""
    H = np.asarray(H, dtype=complex)
    x = np.asarray(x, dtype=complex)
    if H.shape[-1] != x.shape[-1]:
        raise ValueError(f"dimension mismatch: H has {H.shape[-1]} columns, x has length {x.shape[-1]}")
    y = H @ x
    if noise is not None:
        if rng is None:
            rng = np.random.default_rng()
        n = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
        y = y + n * np.sqrt(noise.n0 / 2)
    return y


def estimate_gains(H) -> GainProfile:
    """Column energies ``d2[u] = sum_b |H[b,u]|^2`` plus inverse and mean.

    Raises ``ValueError`` if any column is identically zero.
    """
    H = np.asarray(H, dtype=complex)
    d2 = np.sum(H.real**2 + H.imag**2, axis=-2)
    if np.any(d2 == 0):
        raise ValueError("zero channel column: user has no usable channel")
    return GainProfile(d2=d2, d2_inv=1.0 / d2, d2_mean=np.mean(d2, axis=-1))


def modulate(bits, c: Constellation) -> np.ndarray:
    """Map a ``(..., bits_per_symbol)`` 0/1 array to constellation symbols."""
    bits = np.asarray(bits, dtype=np.int64)
    if bits.shape[-1] != c.bits_per_symbol:
        raise ValueError(f"last axis must have {c.bits_per_symbol} bits")
    weights = 1 << np.arange(c.bits_per_symbol - 1, -1, -1)
    labels = bits @ weights
    return c.points[c.index_of_label(labels)]


def demap_hard(z, c: Constellation) -> np.ndarray:
    """Nearest-point hard decisions, returned as ``(..., bits_per_symbol)`` bits.

    Ties go to the lower symbol index (``argmin`` keeps the first minimum).
    """
    z = np.asarray(z, dtype=complex)
    dist = np.abs(z[..., None] - c.points) ** 2
    idx = np.argmin(dist, axis=-1)
    return c.bit_table[idx]
