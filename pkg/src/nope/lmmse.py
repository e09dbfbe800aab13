"""Exact linear MMSE equalization, the reference every iterative method is judged against."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = ["LmmseOutput", "lmmse_equalize", "lmmse_equalize_real", "psi", "psi_argmin"]


@dataclass(frozen=True, eq=False)
class LmmseOutput:
    """Equalized estimate ``xhat = W y``.

    ``bias`` holds ``diag(W H)``, the per-user gain the estimator applies to
    its own symbol; dividing by it gives the unbiased estimate used for hard
    decisions on multi-level alphabets.
    """

    xhat: np.ndarray
    bias: np.ndarray
    mse_empirical: float | None = None

    @property
    def xhat_unbiased(self) -> np.ndarray:
        return self.xhat / self.bias


def _hermitian_solve(G, rhs):
    """Solve ``G v = rhs`` for Hermitian positive-definite ``G`` (batched)."""
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular or indefinite system; regularize with rho > 0") from exc
    if G.ndim == 2:
        w = scipy.linalg.solve_triangular(L, rhs, lower=True)
        return scipy.linalg.solve_triangular(L, w, lower=True, trans="C")
    # batched: fall back to numpy's solve on the factor pair
    w = np.linalg.solve(L, rhs)
    return np.linalg.solve(np.conj(np.swapaxes(L, -1, -2)), w)


def lmmse_equalize(H, y, rho: float, x=None) -> LmmseOutput:
    """Compute ``(H^H H + rho I)^{-1} H^H y`` by a Cholesky solve.

    ``H`` may carry leading batch axes, matched by ``y``. ``x``, if given, is
    the transmitted vector and fills ``mse_empirical``.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    H = np.asarray(H, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if H.shape[-2] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: H has {H.shape[-2]} rows, y has length {y.shape[-1]}")
    Hh = np.conj(np.swapaxes(H, -1, -2))
    U = H.shape[-1]
    G = Hh @ H + rho * np.eye(U)
    rhs = np.concatenate([(Hh @ y[..., None]), Hh @ H], axis=-1)
    sol = _hermitian_solve(G, rhs)
    xhat = sol[..., 0]
    bias = np.real(np.diagonal(sol[..., 1:], axis1=-2, axis2=-1))
    mse = None
    if x is not None:
        mse = float(np.mean(np.abs(xhat - np.asarray(x)) ** 2))
    return LmmseOutput(xhat=xhat, bias=bias, mse_empirical=mse)


def lmmse_equalize_real(H, y, rho_real: float) -> np.ndarray:
    """Real-valued L-MMSE for real alphabets; the imaginary estimate is zero.

    Returns ``(H_Re^T H_Re + H_Im^T H_Im + rho_real I)^{-1} (H_Re^T y_Re + H_Im^T y_Im)``.
    """
    if rho_real < 0:
        raise ValueError("rho_real must be nonnegative")
    H = np.asarray(H, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if H.shape[-2] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: H has {H.shape[-2]} rows, y has length {y.shape[-1]}")
    Hr, Hi = H.real, H.imag
    HrT, HiT = np.swapaxes(Hr, -1, -2), np.swapaxes(Hi, -1, -2)
    G = HrT @ Hr + HiT @ Hi + rho_real * np.eye(H.shape[-1])
    rhs = HrT @ y.real[..., None] + HiT @ y.imag[..., None]
    return _hermitian_solve(G, rhs)[..., 0]


def psi(sigma2, tau, ex):
    """MSE of the Gaussian-prior shrinkage ``ex/(ex+tau) * z`` at input noise ``sigma2``."""
    if np.any(np.asarray(ex) <= 0):
        raise ValueError("ex must be positive")
    return (tau**2 * ex + sigma2 * ex**2) / (ex + tau) ** 2


def psi_argmin(sigma2, ex):
    """Minimizer of ``psi`` over ``tau >= 0``: ``tau = sigma2``, whatever ``ex``."""
    if np.any(np.asarray(ex) <= 0):
        raise ValueError("ex must be positive")
    return sigma2 * 1.0
