import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nope.lmmse import lmmse_equalize, lmmse_equalize_real, psi, psi_argmin
from nope.model import SystemDims, generate_channel, make_constellation, make_rng


def _cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


class TestComplex:
    def test_identity_no_regularization(self):
        y = np.array([1 + 1j, 2])
        assert np.allclose(lmmse_equalize(np.eye(2), y, 0).xhat, y)

    def test_identity_regularized(self):
        assert np.allclose(lmmse_equalize(np.eye(2), np.array([2, 4]), 1).xhat, [1, 2])

    def test_matches_dense_inverse(self, rng):
        H, y = _cn(rng, 8, 4), _cn(rng, 8)
        W = np.linalg.inv(H.conj().T @ H + 0.3 * np.eye(4)) @ H.conj().T
        out = lmmse_equalize(H, y, 0.3)
        assert np.allclose(out.xhat, W @ y, rtol=1e-10, atol=0)
        assert np.allclose(out.bias, np.real(np.diag(W @ H)), rtol=1e-10)

    def test_zero_rho_is_least_squares(self, rng):
        H, y = _cn(rng, 16, 6), _cn(rng, 16)
        ls = np.linalg.lstsq(H, y, rcond=None)[0]
        assert np.linalg.norm(lmmse_equalize(H, y, 0).xhat - ls) <= 1e-9 * np.linalg.norm(ls)

    def test_unitary_rotation_invariance(self, rng):
        H, y = _cn(rng, 12, 5), _cn(rng, 12)
        Q, _ = np.linalg.qr(_cn(rng, 12, 12))
        a = lmmse_equalize(H, y, 0.1).xhat
        b = lmmse_equalize(Q @ H, Q @ y, 0.1).xhat
        assert np.linalg.norm(a - b) <= 1e-9 * np.linalg.norm(a)

    def test_batched_equals_loop(self, rng):
        H, y = _cn(rng, 5, 8, 3), _cn(rng, 5, 8)
        batch = lmmse_equalize(H, y, 0.2).xhat
        for k in range(5):
            assert np.allclose(batch[k], lmmse_equalize(H[k], y[k], 0.2).xhat, rtol=1e-12)

    def test_singular_rejected(self):
        H = np.ones((4, 2))
        with pytest.raises(np.linalg.LinAlgError):
            lmmse_equalize(H, np.ones(4), 0)

    def test_negative_rho(self):
        with pytest.raises(ValueError):
            lmmse_equalize(np.eye(2), np.ones(2), -1)

    def test_mse_reported(self):
        assert lmmse_equalize(np.eye(2), np.array([1, 1]), 0, x=np.array([1, 0])).mse_empirical == pytest.approx(0.5)

    def test_beats_zero_forcing(self):
        # averaged over 10^4 trials at 64x16 and several noise levels
        rng = make_rng(31)
        dims = SystemDims(64, 16)
        n = 10_000
        H = (rng.standard_normal((n, 64, 16)) + 1j * rng.standard_normal((n, 64, 16))) * np.sqrt(0.5 / 64)
        x = _cn(rng, n, 16)
        w = _cn(rng, n, 64)
        for n0 in (1e-3, 0.05, 0.5):
            y = np.einsum("nbu,nu->nb", H, x) + np.sqrt(n0) * w
            mse = np.mean(np.abs(lmmse_equalize(H, y, n0).xhat - x) ** 2)
            zf = np.mean(np.abs(lmmse_equalize(H, y, 0).xhat - x) ** 2)
            assert mse <= zf
        assert dims.beta == 0.25


class TestReal:
    def test_identity(self):
        assert np.allclose(lmmse_equalize_real(np.eye(2), np.array([1, -1]), 0), [1, -1])

    def test_imaginary_channel(self):
        out = lmmse_equalize_real(1j * np.eye(2), 1j * np.array([1, -1]), 0)
        assert np.allclose(out, [1, -1])
        assert np.isrealobj(out)

    def test_stacked_real_oracle(self, rng):
        H, y = _cn(rng, 8, 4), _cn(rng, 8)
        A = np.vstack([H.real, H.imag])
        b = np.concatenate([y.real, y.imag])
        ref = np.linalg.inv(A.T @ A + 0.2 * np.eye(4)) @ A.T @ b
        assert np.allclose(lmmse_equalize_real(H, y, 0.2), ref, rtol=1e-10)

    def test_real_prior_helps_bpsk(self):
        rng = make_rng(32)
        c = make_constellation("BPSK")
        n0 = 0.05
        err_r = err_c = 0.0
        for _ in range(2000):
            H = _cn(rng, 8, 4) / np.sqrt(8)
            x = c.points[rng.integers(0, 2, 4)]
            y = H @ x + np.sqrt(n0) * _cn(rng, 8)
            err_r += np.sum((lmmse_equalize_real(H, y, n0 / 2) - x.real) ** 2)
            err_c += np.sum(np.abs(lmmse_equalize(H, y, n0).xhat - x) ** 2)
        assert err_r < err_c


class TestPsi:
    def test_values(self):
        assert psi(1, 1, 1) == pytest.approx(0.5)
        assert psi(0, 0, 3.0) == 0

    def test_argmin_closed_form(self):
        assert psi_argmin(0, 1) == 0
        assert psi_argmin(2.5, 1) == 2.5
        assert psi_argmin(0.3, 7) == 0.3

    @pytest.mark.parametrize("s,ex", [(2.5, 1.0), (0.3, 7.0), (0.01, 0.5), (4.0, 2.0)])
    def test_argmin_grid(self, s, ex):
        grid = np.linspace(0, 100, 1_000_001)
        best = grid[np.argmin(psi(s, grid, ex))]
        assert abs(best - psi_argmin(s, ex)) <= 1e-4

    @settings(max_examples=200, deadline=None)
    @given(
        st.floats(0, 100, allow_nan=False),
        st.floats(0, 100, allow_nan=False),
        st.floats(1e-3, 100, allow_nan=False),
    )
    def test_argmin_is_minimum(self, s, tau, ex):
        assert psi(s, psi_argmin(s, ex), ex) <= psi(s, tau, ex) * (1 + 1e-12) + 1e-300

    def test_ex_positive(self):
        with pytest.raises(ValueError):
            psi(1, 1, 0)
        with pytest.raises(ValueError):
            psi_argmin(1, -1)
