"""Bit-true fixed-point NOPE.

Every kernel here operates on ``int64`` payload arrays and broadcasts over
leading batch axes. The accumulation orders are the ones the matrix-vector
unit uses (Cannon rotation inside a block, fixed tree across blocks), so the
cycle simulator in :mod:`nope.mvu` reproduces these results bit for bit.

Word lengths live in :class:`FixedPointConfig`; the defaults are

======================  ===========  ==========================================
quantity                format       note
======================  ===========  ==========================================
H                       Q0.10s       after global scaling
y                       Q6.4s
x, r, z                 Q6.10s
MAC accumulators        Q10.14s      4 guard bits in the integer field
v_r, v_z, K, s          Q12.12s
d^2, 1/d^2, <d^2>       Q8.16s
alpha                   Q0.12u       output of the 1 - 1/(1+s) unit
Onsager coefficient     Q1.14u       (beta/2) <alpha>
rho                     Q24.8u
======================  ===========  ==========================================

Rounding is round-half-even wherever a value is stored, truncation inside
accumulations; everything saturates and a sticky flag reports it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ..amp import NopeState
from ..model import SystemDims
from .qformat import QComplex, QFormat, QValue, quantize_array, round_div, round_shift, saturate
from .recip import reciprocal_1px_array, reciprocal_array

__all__ = [
    "FixedPointConfig",
    "DEFAULT_CONFIG",
    "QComplexArray",
    "QGains",
    "FixedNopeState",
    "scale_and_quantize_inputs",
    "quantize_gains",
    "forward_matvec",
    "adjoint_block_partials",
    "reduce_blocks",
    "adjoint_matvec",
    "form_residual",
    "residual_power",
    "form_z",
    "eu_norm_step",
    "eu_scale",
    "eu_alpha_step",
    "eu_onsager",
    "eu_rho",
    "fixed_nope_init",
    "fixed_nope_iterate",
    "nope_fixed_core",
    "nope_run_fixed",
]


@dataclass(frozen=True)
class FixedPointConfig:
    h_fmt: QFormat = QFormat(0, 10)
    y_fmt: QFormat = QFormat(6, 4)
    vec_fmt: QFormat = QFormat(6, 10)
    acc_fmt: QFormat = QFormat(10, 14)
    stat_fmt: QFormat = QFormat(12, 12)
    gain_fmt: QFormat = QFormat(8, 16)
    alpha_fmt: QFormat = QFormat(0, 12, signed=False)
    onsager_fmt: QFormat = QFormat(1, 14, signed=False)
    rho_fmt: QFormat = QFormat(24, 8, signed=False)
    scale_y: bool = True


DEFAULT_CONFIG = FixedPointConfig()


class _Flag:
    """Sticky saturation flag shared by one run."""

    __slots__ = ("hit",)

    def __init__(self):
        self.hit = False

    def sat(self, v, fmt: QFormat):
        out, f = saturate(v, fmt)
        self.hit |= f
        return out


@dataclass(frozen=True, eq=False)
class QComplexArray:
    """Array of complex fixed-point values stored as two payload arrays."""

    re: np.ndarray
    im: np.ndarray
    fmt: QFormat

    @property
    def shape(self) -> tuple:
        return self.re.shape

    @property
    def value(self) -> np.ndarray:
        return (self.re + 1j * self.im) * self.fmt.ulp

    def __getitem__(self, idx):
        re, im = self.re[idx], self.im[idx]
        if np.ndim(re) == 0:
            return QComplex(QValue(int(re), self.fmt), QValue(int(im), self.fmt))
        return QComplexArray(re, im, self.fmt)

    @classmethod
    def from_values(cls, z, fmt: QFormat) -> "QComplexArray":
        z = np.asarray(z, dtype=complex)
        re, _ = quantize_array(z.real, fmt)
        im, _ = quantize_array(z.imag, fmt)
        return cls(re, im, fmt)


class QGains(NamedTuple):
    """Quantized gain profile payloads (``gain_fmt``)."""

    d2: np.ndarray
    d2_inv: np.ndarray
    d2_mean: np.ndarray


def scale_and_quantize_inputs(H, y, config: FixedPointConfig = DEFAULT_CONFIG):
    """Globally scale ``H`` into (-1, 1] per real part and quantize ``H`` and ``y``.

    Returns ``(Hq, yq, scale)`` where ``scale = 1/max(|Re H|, |Im H|)``. With
    ``config.scale_y`` the receive vector is multiplied by the same factor so
    that the scaled system still has ``x`` as its solution; otherwise ``y``
    is quantized as given and the equalizer output is multiplied by ``scale``.
    Batched inputs are scaled per problem.
    """
    H = np.asarray(H, dtype=complex)
    y = np.asarray(y, dtype=complex)
    peak = np.maximum(np.abs(H.real), np.abs(H.imag)).max(axis=(-2, -1))
    if np.any(peak == 0):
        raise ValueError("all-zero channel matrix")
    scale = 1.0 / peak
    Hs = H * np.asarray(scale)[..., None, None]
    ys = y * np.asarray(scale)[..., None] if config.scale_y else y
    return (
        QComplexArray.from_values(Hs, config.h_fmt),
        QComplexArray.from_values(ys, config.y_fmt),
        scale,
    )


def quantize_gains(Hq: QComplexArray, config: FixedPointConfig = DEFAULT_CONFIG) -> QGains:
    """Column energies of the quantized channel and their reciprocal and mean."""
    energy = np.sum(Hq.re * Hq.re + Hq.im * Hq.im, axis=-2)  # 2*h_frac fraction bits
    g = config.gain_fmt
    d2, _ = saturate(round_shift(energy, 2 * Hq.fmt.frac_bits - g.frac_bits), g)
    if np.any(d2 <= 0):
        raise ValueError("zero channel column: user has no usable channel")
    d2_inv, _ = reciprocal_array(d2, g.frac_bits, g)
    d2_mean = round_div(np.sum(d2, axis=-1), d2.shape[-1])
    return QGains(d2, d2_inv, d2_mean)


def _cmul_trunc(ar, ai, br, bi, shift: int, conj_a: bool = False):
    if conj_a:
        ai = -ai
    pr = ar * br - ai * bi
    pi = ar * bi + ai * br
    return pr >> shift, pi >> shift


def _block_rows(B: int, n: int) -> int:
    return -(-B // n)


def forward_matvec(Hq: QComplexArray, x: QComplexArray, config: FixedPointConfig = DEFAULT_CONFIG, flag: _Flag | None = None):
    """``H x`` in Cannon order: at step ``c`` row ``b`` consumes column ``(b + c) mod U``.

    Returns accumulator payloads ``(re, im)`` of shape ``(..., B)``.
    """
    flag = flag or _Flag()
    B, U = Hq.shape[-2:]
    shift = Hq.fmt.frac_bits + x.fmt.frac_bits - config.acc_fmt.frac_bits
    rows = np.arange(B)
    local = rows % U
    acc_re = np.zeros(Hq.re.shape[:-1], dtype=np.int64)
    acc_im = np.zeros_like(acc_re)
    for c in range(U):
        col = (local + c) % U
        hr, hi = Hq.re[..., rows, col], Hq.im[..., rows, col]
        xr, xi = x.re[..., col], x.im[..., col]
        pr, pi = _cmul_trunc(hr, hi, xr, xi, shift)
        acc_re = flag.sat(acc_re + pr, config.acc_fmt)
        acc_im = flag.sat(acc_im + pi, config.acc_fmt)
    return acc_re, acc_im


def adjoint_block_partials(Hq: QComplexArray, r: QComplexArray, config: FixedPointConfig = DEFAULT_CONFIG, flag: _Flag | None = None):
    """Per-block ``A_m^H r_m`` with output rotation.

    Blocks are ``U`` consecutive rows (the last one zero-padded). At step
    ``c`` output ``j`` of each block receives row ``(j - c) mod U``. Returns
    payloads of shape ``(..., M, U)``.
    """
    flag = flag or _Flag()
    B, U = Hq.shape[-2:]
    M = _block_rows(B, U)
    pad = M * U - B
    hr, hi, rr, ri = Hq.re, Hq.im, r.re, r.im
    if pad:
        zpad = [(0, 0)] * (hr.ndim - 2)
        hr = np.pad(hr, zpad + [(0, pad), (0, 0)])
        hi = np.pad(hi, zpad + [(0, pad), (0, 0)])
        rr = np.pad(rr, zpad + [(0, pad)])
        ri = np.pad(ri, zpad + [(0, pad)])
    shift = Hq.fmt.frac_bits + r.fmt.frac_bits - config.acc_fmt.frac_bits
    batch = hr.shape[:-2]
    hr = hr.reshape(batch + (M, U, U))
    hi = hi.reshape(batch + (M, U, U))
    rr = rr.reshape(batch + (M, U))
    ri = ri.reshape(batch + (M, U))
    j = np.arange(U)
    acc_re = np.zeros(batch + (M, U), dtype=np.int64)
    acc_im = np.zeros_like(acc_re)
    for c in range(U):
        i = (j - c) % U
        pr, pi = _cmul_trunc(hr[..., i, j], hi[..., i, j], rr[..., i], ri[..., i], shift, conj_a=True)
        acc_re = flag.sat(acc_re + pr, config.acc_fmt)
        acc_im = flag.sat(acc_im + pi, config.acc_fmt)
    return acc_re, acc_im


def reduce_blocks(part_re, part_im, config: FixedPointConfig = DEFAULT_CONFIG, flag: _Flag | None = None):
    """Sum block partials along axis ``-2``.

    Four blocks follow the two-cycle hardware tree: ``(b1 + b2) + (b4 + b3)``
    with the result at block 3; other block counts fold left to right.
    """
    flag = flag or _Flag()
    fmt = config.acc_fmt
    M = part_re.shape[-2]
    if M == 4:
        p2r = flag.sat(part_re[..., 1, :] + part_re[..., 0, :], fmt)
        p2i = flag.sat(part_im[..., 1, :] + part_im[..., 0, :], fmt)
        p3r = flag.sat(part_re[..., 2, :] + part_re[..., 3, :], fmt)
        p3i = flag.sat(part_im[..., 2, :] + part_im[..., 3, :], fmt)
        return flag.sat(p3r + p2r, fmt), flag.sat(p3i + p2i, fmt)
    out_re, out_im = part_re[..., 0, :], part_im[..., 0, :]
    for m in range(1, M):
        out_re = flag.sat(out_re + part_re[..., m, :], fmt)
        out_im = flag.sat(out_im + part_im[..., m, :], fmt)
    return out_re, out_im


def adjoint_matvec(Hq: QComplexArray, r: QComplexArray, config: FixedPointConfig = DEFAULT_CONFIG, flag: _Flag | None = None):
    """``H^H r`` as accumulator payloads of shape ``(..., U)``."""
    flag = flag or _Flag()
    pr, pi = adjoint_block_partials(Hq, r, config, flag)
    return reduce_blocks(pr, pi, config, flag)


def form_residual(yq: QComplexArray, hx_re, hx_im, onsager, r_prev: QComplexArray, config: FixedPointConfig = DEFAULT_CONFIG, flag: _Flag | None = None) -> QComplexArray:
    """``r = y - Hx + onsager * r_prev`` combined at accumulator precision, stored in ``vec_fmt``."""
    flag = flag or _Flag()
    af = config.acc_fmt.frac_bits
    up = af - yq.fmt.frac_bits
    oshift = config.onsager_fmt.frac_bits + r_prev.fmt.frac_bits - af
    on = np.asarray(onsager)[..., None]
    tr = (yq.re << up) - hx_re + ((on * r_prev.re) >> oshift)
    ti = (yq.im << up) - hx_im + ((on * r_prev.im) >> oshift)
    vf = config.vec_fmt
    return QComplexArray(
        flag.sat(round_shift(tr, af - vf.frac_bits), vf),
        flag.sat(round_shift(ti, af - vf.frac_bits), vf),
        vf,
    )


def residual_power(r: QComplexArray, U: int, config: FixedPointConfig = DEFAULT_CONFIG, flag: _Flag | None = None):
    """``v_r = (beta/2) ||r||^2`` with ``beta = U/B``, in ``stat_fmt``."""
    flag = flag or _Flag()
    B = r.shape[-1]
    energy = np.sum(r.re * r.re + r.im * r.im, axis=-1)
    drop = 2 * r.fmt.frac_bits - config.stat_fmt.frac_bits
    return flag.sat(round_div(energy * U, (2 * B) << drop), config.stat_fmt)


def form_z(x: QComplexArray, hr_re, hr_im, d2_inv, config: FixedPointConfig = DEFAULT_CONFIG, flag: _Flag | None = None) -> QComplexArray:
    """``z = x + d^-2 o (H^H r)``, stored in ``vec_fmt``."""
    flag = flag or _Flag()
    vf = config.vec_fmt
    s = config.acc_fmt.frac_bits + config.gain_fmt.frac_bits - vf.frac_bits
    zr = x.re + round_shift(d2_inv * hr_re, s)
    zi = x.im + round_shift(d2_inv * hr_im, s)
    return QComplexArray(flag.sat(zr, vf), flag.sat(zi, vf), vf)


def eu_norm_step(acc, d2_u, z_u, config: FixedPointConfig = DEFAULT_CONFIG, flag: _Flag | None = None):
    """One MAC of the weighted norm: ``acc + (d2_u * z_u) * z_u`` for one real part."""
    flag = flag or _Flag()
    af = config.acc_fmt.frac_bits
    vf = config.vec_fmt.frac_bits
    w = (d2_u * z_u) >> (config.gain_fmt.frac_bits + vf - af)
    return flag.sat(acc + ((w * z_u) >> vf), config.acc_fmt)


def _acc_to_stat(acc, config, flag):
    return flag.sat(round_shift(acc, config.acc_fmt.frac_bits - config.stat_fmt.frac_bits), config.stat_fmt)


def eu_scale(v_r, gains: QGains, config: FixedPointConfig = DEFAULT_CONFIG, flag: _Flag | None = None):
    """``K = 1/(v_r <d^2>)`` and ``K <d^2>``; ``solved`` marks a vanished residual."""
    flag = flag or _Flag()
    sf = config.stat_fmt
    gf = config.gain_fmt.frac_bits
    prod = flag.sat(round_shift(v_r * gains.d2_mean, gf), sf)
    solved = prod <= 0
    k, f = reciprocal_array(np.where(solved, 1, prod), sf.frac_bits, sf)
    flag.hit |= f
    k = np.where(solved, 0, k)
    kd = flag.sat(round_shift(k * gains.d2_mean, gf), sf)
    return k, kd, solved


def eu_alpha_step(k, v_r, v_z_re, v_z_im, d2_u, z_re, z_im, config: FixedPointConfig = DEFAULT_CONFIG, flag: _Flag | None = None):
    """Per-user shrinkage: returns ``(alpha_re, alpha_im, x_re, x_im)`` payloads."""
    flag = flag or _Flag()
    sf = config.stat_fmt
    gf = config.gain_fmt.frac_bits
    af = config.alpha_fmt.frac_bits
    kd2 = flag.sat(round_shift(k * d2_u, gf), sf)
    s_re = flag.sat(round_shift(kd2 * np.maximum(v_z_re - v_r, 0), sf.frac_bits), sf)
    s_im = flag.sat(round_shift(kd2 * np.maximum(v_z_im - v_r, 0), sf.frac_bits), sf)
    a_re = reciprocal_1px_array(s_re, sf.frac_bits, config.alpha_fmt)
    a_im = reciprocal_1px_array(s_im, sf.frac_bits, config.alpha_fmt)
    vf = config.vec_fmt
    x_re = flag.sat(round_shift(a_re * z_re, af), vf)
    x_im = flag.sat(round_shift(a_im * z_im, af), vf)
    return a_re, a_im, x_re, x_im


def eu_onsager(alpha_sum, B: int, config: FixedPointConfig = DEFAULT_CONFIG, flag: _Flag | None = None):
    """Onsager coefficient ``(beta/2)<alpha> = sum(alpha)/(2B)``."""
    flag = flag or _Flag()
    of = config.onsager_fmt
    up = of.frac_bits - config.alpha_fmt.frac_bits
    return flag.sat(round_div(np.asarray(alpha_sum) << up, 2 * B), of)


def eu_rho(kd, d2_u, B: int, U: int, config: FixedPointConfig = DEFAULT_CONFIG, flag: _Flag | None = None):
    """Post-equalization SNR ``(2B/beta) K <d^2> d_u^2``."""
    flag = flag or _Flag()
    rf = config.rho_fmt
    tmp = round_shift(kd * d2_u, config.stat_fmt.frac_bits + config.gain_fmt.frac_bits - rf.frac_bits)
    return flag.sat(round_div(tmp * (2 * B * B), U), rf)


@dataclass(eq=False)
class FixedNopeState:
    """Payload-level NOPE state; ``to_nope_state`` converts to real values."""

    t: int
    x: QComplexArray
    r: QComplexArray
    z: QComplexArray
    v_r: np.ndarray
    v_z_re: np.ndarray
    v_z_im: np.ndarray
    k: np.ndarray
    alpha_re: np.ndarray
    alpha_im: np.ndarray
    onsager: np.ndarray
    rho: np.ndarray
    done: np.ndarray
    overflow: bool = False
    config: FixedPointConfig = field(default=DEFAULT_CONFIG, repr=False)

    def bit_equal(self, other: "FixedNopeState") -> bool:
        pairs = [
            (self.x.re, other.x.re), (self.x.im, other.x.im),
            (self.r.re, other.r.re), (self.r.im, other.r.im),
            (self.z.re, other.z.re), (self.z.im, other.z.im),
            (self.v_r, other.v_r), (self.v_z_re, other.v_z_re), (self.v_z_im, other.v_z_im),
            (self.k, other.k), (self.alpha_re, other.alpha_re), (self.alpha_im, other.alpha_im),
            (self.onsager, other.onsager), (self.rho, other.rho), (self.done, other.done),
        ]  # fmt: skip
        return self.t == other.t and all(np.array_equal(a, b) for a, b in pairs)

    def to_nope_state(self, z_scale=1.0) -> NopeState:
        cfg = self.config
        sf = cfg.stat_fmt.ulp
        af = cfg.alpha_fmt.ulp
        zs = np.asarray(z_scale)[..., None]
        a_re = self.alpha_re * af
        a_im = self.alpha_im * af
        return NopeState(
            t=self.t,
            x=self.x.value * zs,
            r=self.r.value,
            z=self.z.value * zs,
            v_r=self.v_r * sf,
            v_z_re=self.v_z_re * sf,
            v_z_im=self.v_z_im * sf,
            k=self.k * sf,
            alpha_re=a_re,
            alpha_im=a_im,
            alpha_mean=np.mean(a_re + a_im, axis=-1),
            rho=np.where(self.done[..., None], np.inf, self.rho * cfg.rho_fmt.ulp),
            done=self.done,
        )


def fixed_nope_init(batch_shape: tuple, B: int, U: int, config: FixedPointConfig = DEFAULT_CONFIG) -> FixedNopeState:
    z = np.zeros
    vec = lambda n: QComplexArray(z(batch_shape + (n,), np.int64), z(batch_shape + (n,), np.int64), config.vec_fmt)  # noqa: E731
    s = z(batch_shape, np.int64)
    return FixedNopeState(
        t=0, x=vec(U), r=vec(B), z=vec(U), v_r=s, v_z_re=s, v_z_im=s, k=s,
        alpha_re=z(batch_shape + (U,), np.int64), alpha_im=z(batch_shape + (U,), np.int64),
        onsager=s, rho=z(batch_shape + (U,), np.int64), done=z(batch_shape, bool), config=config,
    )  # fmt: skip


def _freeze(new, old, done):
    return np.where(done, old, new)


def fixed_nope_iterate(state: FixedNopeState, Hq: QComplexArray, yq: QComplexArray, gains: QGains) -> FixedNopeState:
    """One fixed-point NOPE iteration: MVU work (Hx, residual, H^H r, z) then EU work."""
    cfg = state.config
    flag = _Flag()
    B, U = Hq.shape[-2:]

    # matrix-vector unit
    hx_re, hx_im = forward_matvec(Hq, state.x, cfg, flag)
    r = form_residual(yq, hx_re, hx_im, state.onsager, state.r, cfg, flag)
    v_r = residual_power(r, U, cfg, flag)
    hr_re, hr_im = adjoint_matvec(Hq, r, cfg, flag)
    zq = form_z(state.x, hr_re, hr_im, gains.d2_inv, cfg, flag)

    # estimation unit, phase 1: weighted norms
    acc_re = np.zeros(v_r.shape, dtype=np.int64)
    acc_im = np.zeros_like(acc_re)
    for u in range(U):
        acc_re = eu_norm_step(acc_re, gains.d2[..., u], zq.re[..., u], cfg, flag)
        acc_im = eu_norm_step(acc_im, gains.d2[..., u], zq.im[..., u], cfg, flag)
    v_z_re = _acc_to_stat(acc_re, cfg, flag)
    v_z_im = _acc_to_stat(acc_im, cfg, flag)

    # scale factor, then phase 2: per-user shrinkage
    k, kd, solved = eu_scale(v_r, gains, cfg, flag)
    vr, vzr, vzi, kk = (v[..., None] for v in (v_r, v_z_re, v_z_im, k))
    a_re, a_im, x_re, x_im = eu_alpha_step(kk, vr, vzr, vzi, gains.d2, zq.re, zq.im, cfg, flag)
    onsager = eu_onsager(np.sum(a_re + a_im, axis=-1), B, cfg, flag)
    rho = eu_rho(kd[..., None], gains.d2, B, U, cfg, flag)

    solved = solved | state.done
    sv = solved[..., None]
    old = state.done
    ov = old[..., None]
    x_new = QComplexArray(np.where(sv, state.x.re, x_re), np.where(sv, state.x.im, x_im), cfg.vec_fmt)
    return FixedNopeState(
        t=state.t + 1,
        x=x_new,
        r=QComplexArray(_freeze(r.re, state.r.re, ov), _freeze(r.im, state.r.im, ov), cfg.vec_fmt),
        z=QComplexArray(_freeze(zq.re, state.z.re, ov), _freeze(zq.im, state.z.im, ov), cfg.vec_fmt),
        v_r=_freeze(v_r, state.v_r, old),
        v_z_re=_freeze(v_z_re, state.v_z_re, old),
        v_z_im=_freeze(v_z_im, state.v_z_im, old),
        k=np.where(solved, 0, k),
        alpha_re=np.where(sv, 0, a_re),
        alpha_im=np.where(sv, 0, a_im),
        onsager=np.where(solved, 0, onsager),
        rho=_freeze(np.where(sv, 0, rho), state.rho, ov),
        done=solved,
        overflow=state.overflow or flag.hit,
        config=cfg,
    )


def nope_fixed_core(Hq: QComplexArray, yq: QComplexArray, t_max: int, config: FixedPointConfig = DEFAULT_CONFIG) -> FixedNopeState:
    """Run ``t_max`` fixed-point iterations on already quantized inputs."""
    B, U = Hq.shape[-2:]
    SystemDims(B, U)
    gains = quantize_gains(Hq, config)
    state = fixed_nope_init(Hq.shape[:-2], B, U, config)
    for _ in range(t_max):
        state = fixed_nope_iterate(state, Hq, yq, gains)
    return state


def _run_fixed(H, y, t_max: int, config: FixedPointConfig) -> tuple[FixedNopeState, np.ndarray]:
    if int(t_max) != t_max or t_max < 1:
        raise ValueError("t_max must be a positive integer")
    H = np.asarray(H, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if H.shape[-2] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: H has {H.shape[-2]} rows, y has length {y.shape[-1]}")
    Hq, yq, scale = scale_and_quantize_inputs(H, y, config)
    state = nope_fixed_core(Hq, yq, t_max, config)
    z_scale = np.ones_like(scale) if config.scale_y else scale
    return state, z_scale


def nope_run_fixed(H, y, t_max: int = 5) -> NopeState:
    """Fixed-point NOPE with the default word lengths; ``z`` is returned as real values."""
    state, z_scale = _run_fixed(H, y, t_max, DEFAULT_CONFIG)
    return state.to_nope_state(z_scale)
