from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nope.model import (
    CONSTELLATIONS,
    ChannelMatrix,
    NoiseSpec,
    SystemDims,
    demap_hard,
    estimate_gains,
    generate_channel,
    make_constellation,
    make_rng,
    modulate,
    noise_variance_for_snr,
    transmit,
)


class TestSystemDims:
    def test_beta_is_exact(self):
        assert SystemDims(64, 16).beta == Fraction(1, 4)

    def test_overloaded_rejected(self):
        with pytest.raises(ValueError, match="overloaded"):
            SystemDims(4, 8)

    @pytest.mark.parametrize("b,u", [(0, 1), (4, 0), (-1, -1)])
    def test_nonpositive_rejected(self, b, u):
        with pytest.raises(ValueError):
            SystemDims(b, u)


class TestChannelMatrix:
    def test_shape_must_match(self):
        with pytest.raises(ValueError, match="shape"):
            ChannelMatrix(np.zeros((3, 2)), SystemDims(4, 2))

    def test_rejects_nonfinite(self):
        H = np.ones((4, 2), dtype=complex)
        H[1, 1] = np.nan
        with pytest.raises(ValueError, match="finite"):
            ChannelMatrix(H, SystemDims(4, 2))

    def test_entries_read_only(self):
        Hm = ChannelMatrix.from_array(np.eye(3))
        with pytest.raises(ValueError):
            Hm.entries[0, 0] = 5


class TestConstellations:
    @pytest.mark.parametrize("name", CONSTELLATIONS)
    def test_energy_mean_and_size(self, name):
        c = make_constellation(name)
        assert c.size == 2**c.bits_per_symbol
        assert abs(np.sum(c.points)) < 1e-12
        assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0, abs=1e-14)
        assert c.energy == pytest.approx(1.0, abs=1e-14)
        assert sorted(c.labels) == list(range(c.size))

    def test_bpsk(self):
        c = make_constellation("BPSK")
        assert set(c.points.real) == {-1.0, 1.0}
        assert np.all(c.points.imag == 0)
        assert c.bits_per_symbol == 1

    @pytest.mark.parametrize("name", ["QPSK", "QAM16", "QAM64", "QAM256"])
    def test_axis_neighbours_differ_in_one_bit(self, name):
        # exhaustive: every pair at minimum distance along I or Q
        c = make_constellation(name)
        step = np.min(np.diff(np.unique(c.points.real)))
        for i, j in product(range(c.size), repeat=2):
            d = c.points[j] - c.points[i]
            axis_step = (abs(abs(d.real) - step) < 1e-9 and abs(d.imag) < 1e-9) or (
                abs(abs(d.imag) - step) < 1e-9 and abs(d.real) < 1e-9
            )
            if axis_step:
                assert bin(int(c.labels[i]) ^ int(c.labels[j])).count("1") == 1

    def test_aliases(self):
        assert make_constellation("16qam").name == "QAM16"
        assert make_constellation("qam256").name == "QAM256"

    def test_unsupported(self):
        with pytest.raises(ValueError, match="unsupported"):
            make_constellation("QAM32")

    @pytest.mark.parametrize("name", CONSTELLATIONS)
    def test_modulate_demap_roundtrip(self, name):
        c = make_constellation(name)
        assert np.array_equal(demap_hard(modulate(c.bit_table, c), c), c.bit_table)


class TestChannel:
    def test_single_column_norm_concentrates(self):
        H = np.asarray(generate_channel(SystemDims(10**5, 1), rng=make_rng(1)))
        assert 0.99 <= np.sum(np.abs(H) ** 2) <= 1.01

    def test_entry_variance(self):
        dims = SystemDims(1000, 1000)
        H = np.asarray(generate_channel(dims, rng=make_rng(2)))
        assert np.var(H) == pytest.approx(1 / dims.B, rel=0.01)
        assert abs(np.mean(H)) < 5e-3 / np.sqrt(dims.B)

    def test_gains_scale_columns(self):
        dims = SystemDims(64, 16)
        d = np.linspace(0.1, 2, 16)
        Hu = np.asarray(generate_channel(dims, rng=make_rng(3)))
        Hd = np.asarray(generate_channel(dims, d, rng=make_rng(3)))
        assert np.allclose(Hd, Hu * d, rtol=0, atol=1e-15)

    def test_zero_gains(self):
        H = generate_channel(SystemDims(8, 2), [0, 0], rng=make_rng(4))
        assert not np.any(np.asarray(H))

    def test_negative_gain_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            generate_channel(SystemDims(8, 2), [1, -1], rng=make_rng(5))

    def test_gain_length_checked(self):
        with pytest.raises(ValueError):
            generate_channel(SystemDims(8, 2), [1, 1, 1], rng=make_rng(5))

    def test_same_seed_same_channel(self):
        a = np.asarray(generate_channel(SystemDims(8, 4), rng=make_rng(9, 3)))
        b = np.asarray(generate_channel(SystemDims(8, 4), rng=make_rng(9, 3)))
        c = np.asarray(generate_channel(SystemDims(8, 4), rng=make_rng(9, 4)))
        assert np.array_equal(a, b) and not np.array_equal(a, c)


class TestTransmit:
    def test_noiseless_identity(self):
        y = transmit(np.eye(2), np.array([1, 1j]), None)
        assert np.array_equal(y, [1, 1j])

    def test_zero_input(self):
        assert not np.any(transmit(np.ones((3, 2)), np.zeros(2), None))

    def test_noise_variance(self):
        B = 10
        H = np.ones((B, 2))
        x = np.zeros(2)
        rng = make_rng(6)
        n = np.stack([transmit(H, x, NoiseSpec(0.1), rng) for _ in range(10**4)])
        total = np.mean(np.sum(np.abs(n) ** 2, axis=1))
        assert 0.099 * B <= total <= 0.101 * B

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            transmit(np.ones((3, 2)), np.ones(3), None)

    def test_noise_spec_positive(self):
        with pytest.raises(ValueError):
            NoiseSpec(0.0)

    def test_snr_convention(self):
        # U E_X / (B N0) = 10 dB
        n0 = noise_variance_for_snr(10.0, SystemDims(64, 16))
        assert 16 / (64 * n0) == pytest.approx(10.0)


class TestEstimateGains:
    def test_identity(self):
        g = estimate_gains(np.eye(2))
        assert np.array_equal(g.d2, [1, 1]) and g.d2_mean == 1

    def test_column_scaling(self):
        H = np.asarray(generate_channel(SystemDims(16, 4), rng=make_rng(7)))
        H3 = H.copy()
        H3[:, 2] *= 3
        assert estimate_gains(H3).d2[2] == pytest.approx(9 * estimate_gains(H).d2[2], rel=1e-14)

    def test_matches_resummation(self, rng):
        H = np.asarray(generate_channel(SystemDims(64, 16), rng=rng))
        oracle = [sum(abs(H[b, u]) ** 2 for b in range(64)) for u in range(16)]
        g = estimate_gains(H)
        assert np.allclose(g.d2, oracle, rtol=1e-12)
        assert np.allclose(g.d2 * g.d2_inv, 1, rtol=1e-14)
        assert g.d2_mean == pytest.approx(np.mean(oracle), rel=1e-12)

    def test_concentration(self):
        d = np.linspace(0.2, 1.5, 8)
        H = generate_channel(SystemDims(4096, 8), d, rng=make_rng(8))
        assert np.all(np.abs(estimate_gains(H).d2 / d**2 - 1) < 0.1)

    def test_zero_column_rejected(self):
        H = np.ones((4, 2))
        H[:, 1] = 0
        with pytest.raises(ValueError, match="zero channel column"):
            estimate_gains(H)


class TestDemap:
    def test_bpsk_uses_real_part(self):
        c = make_constellation("BPSK")
        assert demap_hard(np.array([0.3 + 5j]), c)[0, 0] == c.bit_table[np.argmax(c.points.real)][0]

    def test_tie_goes_to_lower_index(self):
        c = make_constellation("BPSK")
        assert np.array_equal(demap_hard(np.array([0.0]), c)[0], c.bit_table[0])

    @settings(max_examples=50, deadline=None)
    @given(st.sampled_from(CONSTELLATIONS), st.integers(0, 2**32 - 1))
    def test_matches_brute_force(self, name, seed):
        c = make_constellation(name)
        z = make_rng(seed).standard_normal((20, 2)) @ np.array([1, 1j]) * 1.5
        got = demap_hard(z, c)
        for k, zk in enumerate(z):
            best = min(range(c.size), key=lambda i: (abs(zk - c.points[i]), i))
            assert np.array_equal(got[k], c.bit_table[best])
