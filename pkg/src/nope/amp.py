"""Message-passing equalizers.

``lmmse_amp_run`` is the parametric L-MMSE-AMP iteration that needs the signal
power. NOPE replaces that knowledge with Stein's unbiased risk estimate and
per-user gain tracking, so it only ever sees ``H`` and ``y``.

All routines broadcast over leading batch axes: ``H`` is ``(..., B, U)`` and
``y`` is ``(..., B)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .lmmse import psi_argmin
from .model import GainProfile, SystemDims, estimate_gains

__all__ = [
    "AmpState",
    "NopeState",
    "lmmse_amp_run",
    "sure_psi_hat",
    "sure_gamma_min",
    "nope_init",
    "nope_iterate",
    "nope_run",
    "unfolded_estimates",
    "RESIDUAL_FLOOR",
]

# v_r below this fraction of ||y||^2 counts as an exactly solved system
RESIDUAL_FLOOR = 1e-20


def _adjoint(H, r):
    return np.einsum("...bu,...b->...u", np.conj(H), r)


def _forward(H, x):
    return np.einsum("...bu,...u->...b", H, x)


def _norm2(v):
    return np.sum(v.real**2 + v.imag**2, axis=-1)


def _check_dims(H, y) -> SystemDims:
    if H.ndim < 2:
        raise ValueError("H must be at least 2-D")
    if H.shape[-2] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: H has {H.shape[-2]} rows, y has length {y.shape[-1]}")
    return SystemDims(H.shape[-2], H.shape[-1])


@dataclass(frozen=True, eq=False)
class AmpState:
    t: int
    x: np.ndarray
    r: np.ndarray
    z: np.ndarray
    sigma2: np.ndarray
    tau: np.ndarray


def lmmse_amp_run(H, y, ex: float, t_max: int) -> AmpState:
    """Run ``t_max`` L-MMSE-AMP iterations from ``x = 0`` and return the last state.

    Each iteration: ``sigma2 = ||r||^2/B``, ``tau = argmin psi``,
    ``z = x + H^H r``, ``x <- ex/(ex+tau) z`` and the Onsager-corrected
    residual ``r <- y - H x + beta * ex/(ex+tau) * r``.
    """
    if ex <= 0:
        raise ValueError("ex must be positive")
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    H = np.asarray(H, dtype=complex)
    y = np.asarray(y, dtype=complex)
    dims = _check_dims(H, y)
    beta = float(dims.beta)

    x = np.zeros(H.shape[:-2] + (dims.U,), dtype=complex)
    r = y - _forward(H, x)
    for t in range(1, t_max + 1):
        sigma2 = _norm2(r) / dims.B
        tau = psi_argmin(sigma2, ex)
        z = x + _adjoint(H, r)
        gain = ex / (ex + tau)
        x_next = gain[..., None] * z
        if t == t_max:
            return AmpState(t=t, x=x_next, r=r, z=z, sigma2=sigma2, tau=tau)
        r = y - _forward(H, x_next) + beta * gain[..., None] * r
        x = x_next
    raise AssertionError("unreachable")


def sure_psi_hat(sigma2, gamma, z_norm2, u_count: int):
    """SURE estimate of the shrinkage MSE as a function of ``gamma = ex/tau``.

    Unbiased, so it may come out negative on a given draw.
    """
    if np.any(np.asarray(gamma) < 0):
        raise ValueError("gamma must be nonnegative")
    return sigma2 * (gamma - 1) / (gamma + 1) + z_norm2 / (u_count * (gamma + 1) ** 2)


def sure_gamma_min(z_norm2, sigma2, u_count: int):
    """Minimizer of ``sure_psi_hat`` over ``gamma >= 0``."""
    if np.any(np.asarray(sigma2) <= 0):
        raise ValueError("sigma2 must be positive")
    return np.maximum(z_norm2 / (u_count * sigma2) - 1.0, 0.0)


@dataclass(frozen=True, eq=False)
class NopeState:
    """State after iteration ``t`` of robust NOPE.

    ``z`` is the equalizer output of that iteration and ``x`` the denoised
    estimate fed to the next one. ``done`` marks problems whose residual
    vanished; their state is frozen from then on.
    """

    t: int
    x: np.ndarray
    r: np.ndarray
    z: np.ndarray
    v_r: np.ndarray
    v_z_re: np.ndarray
    v_z_im: np.ndarray
    k: np.ndarray
    alpha_re: np.ndarray
    alpha_im: np.ndarray
    alpha_mean: np.ndarray
    rho: np.ndarray
    done: np.ndarray

    @property
    def alpha(self) -> np.ndarray:
        return self.alpha_re + self.alpha_im


def nope_init(dims: SystemDims, batch_shape: tuple = ()) -> NopeState:
    U, B = dims.U, dims.B
    zu = np.zeros(batch_shape + (U,), dtype=complex)
    zs = np.zeros(batch_shape)
    return NopeState(
        t=0,
        x=zu,
        r=np.zeros(batch_shape + (B,), dtype=complex),
        z=zu,
        v_r=zs,
        v_z_re=zs,
        v_z_im=zs,
        k=zs,
        alpha_re=np.zeros(batch_shape + (U,)),
        alpha_im=np.zeros(batch_shape + (U,)),
        alpha_mean=zs,
        rho=np.zeros(batch_shape + (U,)),
        done=np.zeros(batch_shape, dtype=bool),
    )


def _shrink_gain(kd2, excess):
    # alpha = (1 + 1/s)^-1 = s/(1+s) with negative power estimates clamped to 0
    s = np.maximum(kd2 * excess[..., None], 0.0)
    return s / (1.0 + s)


def nope_iterate(state: NopeState, H, y, gains: GainProfile, dims: SystemDims) -> NopeState:
    """Advance robust NOPE by one iteration."""
    H = np.asarray(H, dtype=complex)
    y = np.asarray(y, dtype=complex)
    beta = float(dims.beta)
    d2, d2_inv, d2_mean = gains.d2, gains.d2_inv, np.asarray(gains.d2_mean)

    r = y - _forward(H, state.x) + (0.5 * beta * state.alpha_mean)[..., None] * state.r
    v_r = 0.5 * beta * _norm2(r)
    z = state.x + d2_inv * _adjoint(H, r)
    v_z_re = np.sum(d2 * z.real**2, axis=-1)
    v_z_im = np.sum(d2 * z.imag**2, axis=-1)

    floor = RESIDUAL_FLOOR * _norm2(y)
    solved = (v_r <= floor) | state.done
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(solved, 0.0, 1.0 / np.where(solved, 1.0, v_r * d2_mean))
    kd2 = k[..., None] * d2
    alpha_re = _shrink_gain(kd2, v_z_re - v_r)
    alpha_im = _shrink_gain(kd2, v_z_im - v_r)
    x = alpha_re * z.real + 1j * alpha_im * z.imag
    alpha_mean = np.mean(alpha_re + alpha_im, axis=-1)
    rho = (2 * dims.B / beta) * (k * d2_mean)[..., None] * d2
    rho = np.where(solved[..., None], np.inf, rho)

    sv = solved[..., None]
    new = NopeState(
        t=state.t + 1,
        x=np.where(sv, state.x, x),
        r=r,
        z=z,
        v_r=v_r,
        v_z_re=v_z_re,
        v_z_im=v_z_im,
        k=k,
        alpha_re=np.where(sv, 0.0, alpha_re),
        alpha_im=np.where(sv, 0.0, alpha_im),
        alpha_mean=np.where(solved, 0.0, alpha_mean),
        rho=rho,
        done=solved,
    )
    if np.any(state.done):
        # frozen problems keep their previous outputs
        keep = state.done
        kv = keep[..., None]
        new = replace(
            new,
            r=np.where(kv, state.r, new.r),
            z=np.where(kv, state.z, new.z),
            v_r=np.where(keep, state.v_r, new.v_r),
            v_z_re=np.where(keep, state.v_z_re, new.v_z_re),
            v_z_im=np.where(keep, state.v_z_im, new.v_z_im),
            rho=np.where(kv, state.rho, new.rho),
        )
    return new


def nope_run(H, y, t_max: int = 5) -> NopeState:
    """Robust NOPE: equalize ``y`` given only ``H``.

    No signal power, noise power or constellation is involved; the returned
    state's ``z`` is the equalized output and ``rho`` the per-user
    post-equalization SNR.
    """
    if int(t_max) != t_max or t_max < 1:
        raise ValueError("t_max must be a positive integer")
    H = np.asarray(H, dtype=complex)
    y = np.asarray(y, dtype=complex)
    dims = _check_dims(H, y)
    gains = estimate_gains(H)
    state = nope_init(dims, H.shape[:-2])
    for _ in range(t_max):
        state = nope_iterate(state, H, y, gains, dims)
    return state


def unfolded_estimates(state: NopeState, gains: GainProfile, dims: SystemDims) -> dict:
    """Signal-power and noise estimates that the folded NOPE update absorbs.

    Debug aid: ``ex`` is the total signal power estimate, ``ex_re``/``ex_im``
    its per-part split and ``tau`` the input noise estimate ``||r||^2/B``.
    """
    total = np.sum(gains.d2, axis=-1)
    ex_re = (state.v_z_re - state.v_r) / total
    ex_im = (state.v_z_im - state.v_r) / total
    return {
        "ex": (state.v_z_re + state.v_z_im - 2 * state.v_r) / total,
        "ex_re": ex_re,
        "ex_im": ex_im,
        "tau": _norm2(state.r) / dims.B,
    }
