"""scikit-learn style wrappers around the equalizers.

``fit(H)`` takes the ``(B, U)`` channel; ``predict(Y)`` takes received
vectors as rows, ``(n_samples, B)``, and returns ``(n_samples, U)`` symbol
estimates. Hyperparameters follow the usual ``get_params``/``set_params``
contract.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_channel, check_is_fitted, check_received
from .amp import lmmse_amp_run, nope_run
from .fixedpoint.datapath import nope_run_fixed
from .lmmse import lmmse_equalize, lmmse_equalize_real
from .model import estimate_gains

__all__ = ["NopeEqualizer", "LmmseEqualizer", "AmpEqualizer"]


class _ChannelEqualizer(BaseEstimator):
    def fit(self, H, y=None):
        self.H_ = check_channel(H)
        self.n_antennas_, self.n_users_ = self.H_.shape
        return self

    def _prepare(self, Y):
        check_is_fitted(self)
        Y, single = check_received(Y, self.n_antennas_)
        return Y, single

    def _finish(self, out, single):
        return out[0] if single else out

    def _batched_H(self, n: int):
        return np.broadcast_to(self.H_, (n,) + self.H_.shape)


class NopeEqualizer(_ChannelEqualizer):
    """Parameter-free equalizer; needs neither noise power nor signal statistics.

    Parameters
    ----------
    t_max : int
        Number of iterations.
    fixed_point : bool
        Run the bit-true fixed-point datapath instead of floating point.
    """

    def __init__(self, t_max: int = 5, fixed_point: bool = False):
        self.t_max = t_max
        self.fixed_point = fixed_point

    def fit(self, H, y=None):
        super().fit(H)
        if int(self.t_max) != self.t_max or self.t_max < 1:
            raise ValueError("t_max must be a positive integer")
        self.gains_ = estimate_gains(self.H_)
        return self

    def _run(self, Y):
        Y, single = self._prepare(Y)
        run = nope_run_fixed if self.fixed_point else nope_run
        return run(self._batched_H(len(Y)), Y, int(self.t_max)), single

    def predict(self, Y):
        state, single = self._run(Y)
        return self._finish(state.z, single)

    def predict_snr(self, Y):
        """Per-user post-equalization SNR estimates, ``(n_samples, U)``."""
        state, single = self._run(Y)
        return self._finish(state.rho, single)


class LmmseEqualizer(_ChannelEqualizer):
    """Exact linear MMSE with regularization ``rho = N0/E_X``.

    With ``real=True`` the real-valued estimator for real alphabets is used
    (pass ``rho = N0/(2 E_X)``). ``unbiased`` rescales each user by
    ``1/diag(WH)`` before returning.
    """

    def __init__(self, rho: float = 0.0, real: bool = False, unbiased: bool = False):
        self.rho = rho
        self.real = real
        self.unbiased = unbiased

    def fit(self, H, y=None):
        super().fit(H)
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        return self

    def predict(self, Y):
        Y, single = self._prepare(Y)
        Hb = self._batched_H(len(Y))
        if self.real:
            out = lmmse_equalize_real(Hb, Y, self.rho).astype(complex)
        else:
            res = lmmse_equalize(Hb, Y, self.rho)
            out = res.xhat_unbiased if self.unbiased else res.xhat
        return self._finish(out, single)


class AmpEqualizer(_ChannelEqualizer):
    """L-MMSE-AMP with known signal power ``ex``; returns the output ``z``."""

    def __init__(self, ex: float = 1.0, t_max: int = 10):
        self.ex = ex
        self.t_max = t_max

    def fit(self, H, y=None):
        super().fit(H)
        if self.ex <= 0:
            raise ValueError("ex must be positive")
        return self

    def predict(self, Y):
        Y, single = self._prepare(Y)
        state = lmmse_amp_run(self._batched_H(len(Y)), Y, self.ex, int(self.t_max))
        return self._finish(state.z, single)
