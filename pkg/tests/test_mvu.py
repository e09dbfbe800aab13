from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nope.fixedpoint.datapath import (
    DEFAULT_CONFIG,
    QComplexArray,
    adjoint_matvec,
    fixed_nope_init,
    fixed_nope_iterate,
    forward_matvec,
    nope_fixed_core,
    quantize_gains,
    scale_and_quantize_inputs,
)
from nope.fixedpoint.qformat import QFormat
from nope.model import make_constellation, make_rng
from nope.mvu import (
    EU_STAGE,
    MVU_STAGE,
    BlockLayout,
    TraceEvent,
    eu_schedule,
    format_trace,
    layout_blocks,
    mvu_adjoint,
    mvu_forward,
    parse_trace,
    run_interleaved,
    run_solo,
)

from .conftest import random_system

CFG = DEFAULT_CONFIG
QAM16 = make_constellation("QAM16")


def _q(rng, shape, fmt, span):
    return QComplexArray(rng.integers(-span, span, shape), rng.integers(-span, span, shape), fmt)


def _problem(rng, snr_noise=0.02):
    H, _, y = random_system(rng, snr_noise=snr_noise, points=QAM16.points)
    Hq, yq, _ = scale_and_quantize_inputs(H, y)
    return Hq, yq


def _identity_stack(fmt, blocks=(0,)):
    one = 1 << fmt.frac_bits
    re = np.zeros((64, 16), dtype=np.int64)
    for m in blocks:
        re[16 * m : 16 * m + 16] = np.eye(16, dtype=np.int64) * one
    return QComplexArray(re, np.zeros_like(re), fmt)


class TestLayout:
    def test_identity_lands_in_column_zero(self):
        L = layout_blocks(_identity_stack(QFormat(1, 10)))
        assert np.all(L.stored_re[0, :, 0] == 1024)
        assert np.count_nonzero(L.stored_re) == 16

    def test_zero(self):
        L = layout_blocks(QComplexArray(np.zeros((64, 16), np.int64), np.zeros((64, 16), np.int64), CFG.h_fmt))
        assert not np.any(L.stored_re) and not np.any(L.stored_im)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_roundtrip(self, seed):
        Hq = _q(make_rng(seed), (64, 16), CFG.h_fmt, 1024)
        back = layout_blocks(Hq).unlayout()
        assert np.array_equal(back.re, Hq.re) and np.array_equal(back.im, Hq.im)

    def test_block_rows(self, rng):
        Hq = _q(rng, (64, 16), CFG.h_fmt, 1024)
        L = layout_blocks(Hq)
        # block m row r, stored column c holds H[16m + r, (c + r) % 16]
        for m, r, c in [(0, 0, 0), (1, 3, 15), (3, 15, 1), (2, 7, 9)]:
            assert L.stored_re[m, r, c] == Hq.re[16 * m + r, (c + r) % 16]

    def test_wrong_dims(self, rng):
        with pytest.raises(ValueError, match="64x16"):
            layout_blocks(_q(rng, (32, 16), CFG.h_fmt, 1024))


class TestForward:
    def test_identity(self, rng):
        fmt = QFormat(1, 10)
        x = _q(rng, (16,), CFG.vec_fmt, 4096)
        out, rep = mvu_forward(layout_blocks(_identity_stack(fmt)), x)
        shift = CFG.acc_fmt.frac_bits - CFG.vec_fmt.frac_bits
        assert np.array_equal(out.re[0], x.re << shift) and np.array_equal(out.im[0], x.im << shift)
        assert rep.cycles == 16 and rep.phase == "forward"

    def test_zero_input(self, rng):
        zero = QComplexArray(np.zeros(16, np.int64), np.zeros(16, np.int64), CFG.vec_fmt)
        out, _ = mvu_forward(layout_blocks(_q(rng, (64, 16), CFG.h_fmt, 1024)), zero)
        assert not np.any(out.re) and not np.any(out.im)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_bit_exact(self, seed):
        rng = make_rng(seed)
        Hq = _q(rng, (64, 16), CFG.h_fmt, 1024)
        x = _q(rng, (16,), CFG.vec_fmt, 4 << 10)
        out, rep = mvu_forward(layout_blocks(Hq), x)
        re, im = forward_matvec(Hq, x)
        assert np.array_equal(out.re.ravel(), re) and np.array_equal(out.im.ravel(), im)
        assert rep.cycles == 16

    def test_coverage(self, rng):
        _, rep = mvu_forward(layout_blocks(_q(rng, (64, 16), CFG.h_fmt, 1024)), _q(rng, (16,), CFG.vec_fmt, 100))
        counts = Counter(rep.accesses)
        assert len(counts) == 4 * 16 * 16 and set(counts.values()) == {1}

    def test_bad_length(self, rng):
        with pytest.raises(ValueError):
            mvu_forward(layout_blocks(_q(rng, (64, 16), CFG.h_fmt, 1024)), _q(rng, (8,), CFG.vec_fmt, 10))


class TestAdjoint:
    def test_stacked_identity(self, rng):
        r = _q(rng, (64,), CFG.vec_fmt, 4096)
        out, rep = mvu_adjoint(layout_blocks(_identity_stack(QFormat(1, 10))), r)
        shift = CFG.acc_fmt.frac_bits - CFG.vec_fmt.frac_bits
        assert np.array_equal(out.re, r.re[:16] << shift) and np.array_equal(out.im, r.im[:16] << shift)
        assert rep.cycles == 18 and rep.breakdown == {"adjoint": 16, "block-accumulate": 2}

    def test_zero(self, rng):
        zero = QComplexArray(np.zeros(64, np.int64), np.zeros(64, np.int64), CFG.vec_fmt)
        out, _ = mvu_adjoint(layout_blocks(_q(rng, (64, 16), CFG.h_fmt, 1024)), zero)
        assert not np.any(out.re)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_bit_exact(self, seed):
        rng = make_rng(seed)
        Hq = _q(rng, (64, 16), CFG.h_fmt, 1024)
        r = _q(rng, (64,), CFG.vec_fmt, 2 << 10)
        out, rep = mvu_adjoint(layout_blocks(Hq), r)
        re, im = adjoint_matvec(Hq, r)
        assert np.array_equal(out.re, re) and np.array_equal(out.im, im)

    def test_coverage(self, rng):
        _, rep = mvu_adjoint(layout_blocks(_q(rng, (64, 16), CFG.h_fmt, 1024)), _q(rng, (64,), CFG.vec_fmt, 100))
        counts = Counter(rep.accesses)
        assert len(counts) == 4 * 16 * 16 and set(counts.values()) == {1}


class TestEu:
    def _first_iteration(self, rng):
        Hq, yq = _problem(rng)
        gains = quantize_gains(Hq)
        s = fixed_nope_iterate(fixed_nope_init((), 64, 16), Hq, yq, gains)
        return s, gains

    def test_bit_exact_vs_datapath(self, rng):
        s, gains = self._first_iteration(rng)
        res, rep = eu_schedule(s.z, gains, s.v_r)
        assert np.array_equal(res.alpha_re, s.alpha_re) and np.array_equal(res.alpha_im, s.alpha_im)
        assert np.array_equal(res.x_next.re, s.x.re) and np.array_equal(res.x_next.im, s.x.im)
        assert np.array_equal(res.rho, s.rho) and res.onsager == s.onsager
        assert (res.v_z_re, res.v_z_im, res.k) == (s.v_z_re, s.v_z_im, s.k)

    def test_phase_budget(self, rng):
        s, gains = self._first_iteration(rng)
        _, rep = eu_schedule(s.z, gains, s.v_r)
        assert rep.breakdown["eu-norms"] == 16 and rep.breakdown["eu-alpha"] == 16
        assert rep.cycles == EU_STAGE == MVU_STAGE

    def test_zero_z(self, rng):
        s, gains = self._first_iteration(rng)
        zero = QComplexArray(np.zeros(16, np.int64), np.zeros(16, np.int64), CFG.vec_fmt)
        res, _ = eu_schedule(zero, gains, s.v_r)
        assert res.v_z_re == 0 and res.v_z_im == 0
        assert not np.any(res.alpha_re) and not np.any(res.alpha_im)

    def test_single_user_matches_float_formula(self, rng):
        s, gains = self._first_iteration(rng)
        z = QComplexArray(np.zeros(16, np.int64), np.zeros(16, np.int64), CFG.vec_fmt)
        z.re[5], z.im[5] = 3 << 10, -(1 << 9)
        v_r = s.v_r
        res, _ = eu_schedule(z, gains, v_r)
        g = CFG.gain_fmt.ulp
        d2, d2m = gains.d2 * g, gains.d2_mean * g
        vr = v_r * CFG.stat_fmt.ulp
        zv = z.value
        vzr = np.sum(d2 * zv.real**2)
        vzi = np.sum(d2 * zv.imag**2)
        K = 1 / (vr * d2m)
        s_re = np.maximum(K * d2 * (vzr - vr), 0)
        s_im = np.maximum(K * d2 * (vzi - vr), 0)
        assert res.v_z_re * CFG.stat_fmt.ulp == pytest.approx(vzr, rel=1e-3)
        assert np.allclose(res.alpha_re * CFG.alpha_fmt.ulp, s_re / (1 + s_re), atol=4e-3)
        assert np.allclose(res.alpha_im * CFG.alpha_fmt.ulp, s_im / (1 + s_im), atol=4e-3)
        rho = 2 * 64 / 0.25 * K * d2m * d2
        # K is held with a 2^-12 step, which dominates the error here
        assert np.allclose(res.rho * CFG.rho_fmt.ulp, rho, rtol=1e-2)


class TestInterleaving:
    def test_bit_identical_to_solo_and_core(self, rng):
        (Ha, ya), (Hb, yb) = _problem(rng), _problem(rng)
        states, trace, total = run_interleaved([(layout_blocks(Ha), ya), (layout_blocks(Hb), yb)], 5)
        assert states[0].bit_equal(nope_fixed_core(Ha, ya, 5))
        assert states[1].bit_equal(nope_fixed_core(Hb, yb, 5))
        solo, _, solo_total = run_solo(layout_blocks(Ha), ya, 5)
        assert solo.bit_equal(states[0])
        assert total == solo_total + MVU_STAGE == (2 * 5 + 1) * MVU_STAGE

    def test_identical_problems(self, rng):
        Hq, yq = _problem(rng)
        L = layout_blocks(Hq)
        states, _, _ = run_interleaved([(L, yq), (L, yq)], 3)
        assert states[0].bit_equal(states[1])

    def test_no_idle_after_fill(self, rng):
        (Ha, ya), (Hb, yb) = _problem(rng), _problem(rng)
        _, trace, total = run_interleaved([(layout_blocks(Ha), ya), (layout_blocks(Hb), yb)], 4)
        fill, drain = MVU_STAGE, total - MVU_STAGE
        steady = [e for e in trace if fill <= e.cycle < drain]
        assert steady and all(e.phase != "idle" for e in steady)
        per_cycle = Counter(e.cycle for e in trace)
        assert set(per_cycle.values()) == {2} and len(per_cycle) == total
        # the two units always work on different problems in steady state
        by_cycle = {}
        for e in steady:
            by_cycle.setdefault(e.cycle, set()).add(e.problem)
        assert all(len(p) == 2 for p in by_cycle.values())

    def test_phase_counts_in_trace(self, rng):
        Hq, yq = _problem(rng)
        _, trace, _ = run_solo(layout_blocks(Hq), yq, 2)
        counts = Counter(e.phase for e in trace if e.problem == 0)
        assert counts == {"forward": 32, "adjoint": 32, "block-accumulate": 4, "eu-norms": 32, "eu-scale": 4, "eu-alpha": 32}

    def test_requires_two_problems(self, rng):
        Hq, yq = _problem(rng)
        with pytest.raises(ValueError):
            run_interleaved([(layout_blocks(Hq), yq)], 2)

    def test_rejects_bad_receive_length(self, rng):
        Hq, yq = _problem(rng)
        with pytest.raises(ValueError):
            run_interleaved([(layout_blocks(Hq), yq), (layout_blocks(Hq), yq[:32])], 2)
        with pytest.raises(TypeError):
            run_interleaved([(Hq, yq), (Hq, yq)], 2)

    def test_solved_problem_freezes(self, rng):
        Hq, _ = _problem(rng)
        zero = QComplexArray(np.zeros(64, np.int64), np.zeros(64, np.int64), CFG.y_fmt)
        st_, _, _ = run_solo(layout_blocks(Hq), zero, 3)
        assert st_.bit_equal(nope_fixed_core(Hq, zero, 3)) and bool(st_.done)


class TestTraceFormat:
    def test_roundtrip(self, rng):
        Hq, yq = _problem(rng)
        _, trace, _ = run_solo(layout_blocks(Hq), yq, 1)
        text = format_trace(trace)
        assert parse_trace("# header\n" + text) == trace
        assert text.splitlines()[0] == "0 MVU 0 forward mac"

    def test_idle_line(self):
        assert str(TraceEvent(3, "EU", None, "idle", "-")) == "3 EU - idle -"

    def test_malformed(self):
        with pytest.raises(ValueError, match="line 1"):
            parse_trace("0 MVU 0 forward")


def test_layout_type_exported():
    assert BlockLayout.__name__ == "BlockLayout"
