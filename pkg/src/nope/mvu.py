"""Cycle-level model of the NOPE matrix-vector unit (MVU) and estimation unit (EU).

The 64x16 channel is split into four 16x16 blocks, one MAC array each. Rows
of every block are stored cyclically left-shifted by their index, so at
cycle ``c`` all sixteen MACs read stored column ``c`` and never collide:

* forward ``A x``: the input ring is rotated every cycle (pre-shift) and
  MAC ``r`` meets ``x[(r + c) mod 16]``;
* adjoint ``A^H r``: inputs stay put and the accumulator ring rotates
  (post-shift), so output ``(i + c) mod 16`` passes MAC ``i``.

Four block partials of ``H^H r`` are then summed in two cycles
(MVU-1 -> MVU-2 and MVU-4 -> MVU-3, then MVU-2 -> MVU-3).

Registers update once per simulated cycle; arithmetic reuses the payload
kernels of :mod:`nope.fixedpoint.datapath`, which is what makes the
simulated results bit-identical to the reference path.

Trace grammar, one line per unit per cycle::

    <cycle> <unit> <problem> <phase> <op>

``cycle`` is a 0-based integer, ``unit`` is ``MVU`` or ``EU``, ``problem``
is the problem index or ``-`` when idle, ``phase`` is one of
:data:`PHASES` or ``idle``, and ``op`` is ``mac``, ``rotate-acc``,
``accumulate``, ``lut``, ``newton``, ``alpha`` or ``-``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .amp import NopeState
from .fixedpoint.datapath import (
    DEFAULT_CONFIG,
    FixedNopeState,
    FixedPointConfig,
    QComplexArray,
    QGains,
    _acc_to_stat,
    _cmul_trunc,
    _Flag,
    eu_alpha_step,
    eu_norm_step,
    eu_onsager,
    eu_rho,
    eu_scale,
    fixed_nope_init,
    form_residual,
    form_z,
    quantize_gains,
    residual_power,
)

__all__ = [
    "BLOCK_DIM",
    "N_BLOCKS",
    "PHASES",
    "BlockLayout",
    "MacArrayState",
    "CycleReport",
    "TraceEvent",
    "EuResult",
    "layout_blocks",
    "mvu_forward",
    "mvu_adjoint",
    "eu_schedule",
    "run_solo",
    "run_interleaved",
    "format_trace",
    "parse_trace",
]

BLOCK_DIM = 16
N_BLOCKS = 4
PHASES = ("forward", "adjoint", "block-accumulate", "eu-norms", "eu-scale", "eu-alpha")

FORWARD_CYCLES = BLOCK_DIM
ADJOINT_CYCLES = BLOCK_DIM + 2
EU_CYCLES = {"eu-norms": BLOCK_DIM, "eu-scale": 2, "eu-alpha": BLOCK_DIM}
MVU_STAGE = FORWARD_CYCLES + ADJOINT_CYCLES
EU_STAGE = sum(EU_CYCLES.values())


@dataclass(frozen=True, eq=False)
class BlockLayout:
    """Four 16x16 blocks, row ``r`` of each stored left-rotated by ``r``.

    ``stored_re[m, r, c] = Re H[16 m + r, (c + r) mod 16]``.
    """

    stored_re: np.ndarray
    stored_im: np.ndarray
    fmt: object
    block_dim: int = BLOCK_DIM

    def unlayout(self) -> QComplexArray:
        n = self.block_dim
        r = np.arange(n)[:, None]
        c = np.arange(n)[None, :]
        src = (c - r) % n  # stored column holding original column c
        re = self.stored_re[:, r, src].reshape(-1, n)
        im = self.stored_im[:, r, src].reshape(-1, n)
        return QComplexArray(re, im, self.fmt)


def layout_blocks(Hq: QComplexArray) -> BlockLayout:
    if Hq.shape != (N_BLOCKS * BLOCK_DIM, BLOCK_DIM):
        raise ValueError(f"MVU layout needs a 64x16 channel, got {Hq.shape}")
    n = BLOCK_DIM
    r = np.arange(n)[:, None]
    c = np.arange(n)[None, :]
    col = (c + r) % n
    re = Hq.re.reshape(N_BLOCKS, n, n)[:, r, col]
    im = Hq.im.reshape(N_BLOCKS, n, n)[:, r, col]
    return BlockLayout(re, im, Hq.fmt)


@dataclass
class MacArrayState:
    """Registers of the four MAC arrays: input rings and accumulators, shape (4, 16)."""

    ring_re: np.ndarray
    ring_im: np.ndarray
    acc_re: np.ndarray
    acc_im: np.ndarray
    cycle: int = 0

    @classmethod
    def empty(cls) -> "MacArrayState":
        z = lambda: np.zeros((N_BLOCKS, BLOCK_DIM), dtype=np.int64)  # noqa: E731
        return cls(z(), z(), z(), z())


@dataclass(frozen=True)
class CycleReport:
    phase: str
    cycles: int
    interleaved_problems: int = 1
    breakdown: dict = field(default_factory=dict)
    accesses: tuple = ()

    def __post_init__(self):
        if self.cycles <= 0:
            raise ValueError("cycle count must be positive")
        if self.breakdown and sum(self.breakdown.values()) != self.cycles:
            raise ValueError("phase breakdown does not add up")


@dataclass(frozen=True)
class TraceEvent:
    cycle: int
    unit: str
    problem: int | None
    phase: str
    op: str

    def __str__(self) -> str:
        p = "-" if self.problem is None else str(self.problem)
        return f"{self.cycle} {self.unit} {p} {self.phase} {self.op}"


def format_trace(events) -> str:
    return "".join(f"{e}\n" for e in events)


def parse_trace(text: str) -> list[TraceEvent]:
    events = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"line {n}: expected 5 fields, got {len(parts)}")
        cyc, unit, prob, phase, op = parts
        events.append(TraceEvent(int(cyc), unit, None if prob == "-" else int(prob), phase, op))
    return events


class _Recorder:
    def __init__(self, unit: str, problem: int | None, start: int, sink: list | None):
        self.unit, self.problem, self.cycle, self.sink = unit, problem, start, sink

    def tick(self, phase: str, op: str):
        if self.sink is not None:
            self.sink.append(TraceEvent(self.cycle, self.unit, self.problem, phase, op))
        self.cycle += 1


def _sim_forward(layout: BlockLayout, x: QComplexArray, cfg, flag, rec: _Recorder | None, accesses: list | None):
    st = MacArrayState.empty()
    # pre-shift: MAC r of every block starts aligned with x[r]
    st.ring_re[:] = x.re
    st.ring_im[:] = x.im
    shift = layout.fmt.frac_bits + x.fmt.frac_bits - cfg.acc_fmt.frac_bits
    for c in range(BLOCK_DIM):
        hr, hi = layout.stored_re[:, :, c], layout.stored_im[:, :, c]
        pr, pi = _cmul_trunc(hr, hi, st.ring_re, st.ring_im, shift)
        st.acc_re = flag.sat(st.acc_re + pr, cfg.acc_fmt)
        st.acc_im = flag.sat(st.acc_im + pi, cfg.acc_fmt)
        st.ring_re = np.roll(st.ring_re, -1, axis=1)
        st.ring_im = np.roll(st.ring_im, -1, axis=1)
        st.cycle += 1
        if accesses is not None:
            accesses.extend((m, r, (r + c) % BLOCK_DIM) for m in range(N_BLOCKS) for r in range(BLOCK_DIM))
        if rec:
            rec.tick("forward", "mac")
    return st.acc_re.reshape(-1), st.acc_im.reshape(-1)


def _sim_adjoint(layout: BlockLayout, r: QComplexArray, cfg, flag, rec: _Recorder | None, accesses: list | None):
    st = MacArrayState.empty()
    st.ring_re[:] = r.re.reshape(N_BLOCKS, BLOCK_DIM)
    st.ring_im[:] = r.im.reshape(N_BLOCKS, BLOCK_DIM)
    shift = layout.fmt.frac_bits + r.fmt.frac_bits - cfg.acc_fmt.frac_bits
    for c in range(BLOCK_DIM):
        hr, hi = layout.stored_re[:, :, c], layout.stored_im[:, :, c]
        pr, pi = _cmul_trunc(hr, hi, st.ring_re, st.ring_im, shift, conj_a=True)
        st.acc_re = flag.sat(st.acc_re + pr, cfg.acc_fmt)
        st.acc_im = flag.sat(st.acc_im + pi, cfg.acc_fmt)
        # post-shift: accumulator slot i hands its partial to slot i-1
        st.acc_re = np.roll(st.acc_re, -1, axis=1)
        st.acc_im = np.roll(st.acc_im, -1, axis=1)
        st.cycle += 1
        if accesses is not None:
            accesses.extend((m, i, (i + c) % BLOCK_DIM) for m in range(N_BLOCKS) for i in range(BLOCK_DIM))
        if rec:
            rec.tick("adjoint", "mac")
    a_re, a_im = st.acc_re, st.acc_im
    fmt = cfg.acc_fmt
    # cycle 1: MVU-1 -> MVU-2, MVU-4 -> MVU-3
    m2r, m2i = flag.sat(a_re[1] + a_re[0], fmt), flag.sat(a_im[1] + a_im[0], fmt)
    m3r, m3i = flag.sat(a_re[2] + a_re[3], fmt), flag.sat(a_im[2] + a_im[3], fmt)
    if rec:
        rec.tick("block-accumulate", "accumulate")
    # cycle 2: MVU-2 -> MVU-3
    out_re, out_im = flag.sat(m3r + m2r, fmt), flag.sat(m3i + m2i, fmt)
    if rec:
        rec.tick("block-accumulate", "accumulate")
    return out_re, out_im


def mvu_forward(layout: BlockLayout, x: QComplexArray, config: FixedPointConfig = DEFAULT_CONFIG):
    """Simulate ``H x``; returns ``(QComplexArray (4, 16) in acc format, CycleReport)``."""
    if x.shape != (BLOCK_DIM,):
        raise ValueError("forward input must have 16 entries")
    accesses: list = []
    re, im = _sim_forward(layout, x, config, _Flag(), None, accesses)
    rep = CycleReport("forward", FORWARD_CYCLES, accesses=tuple(accesses))
    return QComplexArray(re.reshape(N_BLOCKS, BLOCK_DIM), im.reshape(N_BLOCKS, BLOCK_DIM), config.acc_fmt), rep


def mvu_adjoint(layout: BlockLayout, r: QComplexArray, config: FixedPointConfig = DEFAULT_CONFIG):
    """Simulate ``H^H r``; the result ends in MVU-3 after 16 + 2 cycles."""
    if r.shape != (N_BLOCKS * BLOCK_DIM,):
        raise ValueError("adjoint input must have 64 entries")
    accesses: list = []
    re, im = _sim_adjoint(layout, r, config, _Flag(), None, accesses)
    rep = CycleReport(
        "adjoint",
        ADJOINT_CYCLES,
        breakdown={"adjoint": BLOCK_DIM, "block-accumulate": 2},
        accesses=tuple(accesses),
    )
    return QComplexArray(re, im, config.acc_fmt), rep


@dataclass(frozen=True, eq=False)
class EuResult:
    alpha_re: np.ndarray
    alpha_im: np.ndarray
    x_next: QComplexArray
    rho: np.ndarray
    onsager: int
    v_z_re: int
    v_z_im: int
    k: int
    solved: bool


def _sim_eu(z: QComplexArray, gains: QGains, v_r, B: int, cfg, flag, rec: _Recorder | None) -> EuResult:
    U = z.shape[-1]
    acc_re = np.int64(0)
    acc_im = np.int64(0)
    for u in range(U):  # two MACs, one user per cycle
        acc_re = eu_norm_step(acc_re, gains.d2[u], z.re[u], cfg, flag)
        acc_im = eu_norm_step(acc_im, gains.d2[u], z.im[u], cfg, flag)
        if rec:
            rec.tick("eu-norms", "mac")
    v_z_re = _acc_to_stat(acc_re, cfg, flag)
    v_z_im = _acc_to_stat(acc_im, cfg, flag)

    v_r = np.asarray(v_r)
    k, kd, solved = eu_scale(v_r, gains, cfg, flag)
    if rec:
        rec.tick("eu-scale", "lut")
        rec.tick("eu-scale", "newton")

    a_re = np.zeros(U, dtype=np.int64)
    a_im = np.zeros(U, dtype=np.int64)
    x_re = np.zeros(U, dtype=np.int64)
    x_im = np.zeros(U, dtype=np.int64)
    rho = np.zeros(U, dtype=np.int64)
    alpha_sum = np.int64(0)
    for u in range(U):
        a_re[u], a_im[u], x_re[u], x_im[u] = eu_alpha_step(k, v_r, v_z_re, v_z_im, gains.d2[u], z.re[u], z.im[u], cfg, flag)
        rho[u] = eu_rho(kd, gains.d2[u], B, U, cfg, flag)
        alpha_sum += a_re[u] + a_im[u]
        if rec:
            rec.tick("eu-alpha", "alpha")
    onsager = eu_onsager(alpha_sum, B, cfg, flag)
    return EuResult(a_re, a_im, QComplexArray(x_re, x_im, cfg.vec_fmt), rho, int(onsager), int(v_z_re), int(v_z_im), int(k), bool(solved))


def eu_schedule(z: QComplexArray, gains: QGains, v_r, config: FixedPointConfig = DEFAULT_CONFIG, B: int = N_BLOCKS * BLOCK_DIM):
    """Simulate one EU pass over 16 users.

    Phase ``eu-norms`` (16 cycles) accumulates the weighted real and
    imaginary norms, ``eu-scale`` (2 cycles: LUT seed, Newton step) forms
    ``K``, and ``eu-alpha`` (16 cycles) produces one user's shrinkage,
    next estimate and SNR per cycle.
    """
    if z.shape != (BLOCK_DIM,):
        raise ValueError("EU input must have 16 entries")
    res = _sim_eu(z, gains, v_r, B, config, _Flag(), None)
    rep = CycleReport("eu", EU_STAGE, breakdown=dict(EU_CYCLES))
    return res, rep


class _Problem:
    """One NOPE instance walking through MVU and EU stages."""

    def __init__(self, idx: int, layout: BlockLayout, yq: QComplexArray, t_max: int, cfg: FixedPointConfig):
        self.idx, self.layout, self.yq, self.t_max, self.cfg = idx, layout, yq, t_max, cfg
        self.gains = quantize_gains(layout.unlayout(), cfg)
        self.state = fixed_nope_init((), N_BLOCKS * BLOCK_DIM, BLOCK_DIM, cfg)
        self.next_stage = "MVU"
        self.iteration = 1
        self.flag = _Flag()
        self._mvu_out = None

    @property
    def finished(self) -> bool:
        return self.iteration > self.t_max

    def run_mvu(self, rec: _Recorder):
        cfg, st, flag = self.cfg, self.state, self.flag
        hx_re, hx_im = _sim_forward(self.layout, st.x, cfg, flag, rec, None)
        r = form_residual(self.yq, hx_re, hx_im, st.onsager, st.r, cfg, flag)
        v_r = residual_power(r, BLOCK_DIM, cfg, flag)
        hr_re, hr_im = _sim_adjoint(self.layout, r, cfg, flag, rec, None)
        z = form_z(st.x, hr_re, hr_im, self.gains.d2_inv, cfg, flag)
        self._mvu_out = (r, v_r, z)
        self.next_stage = "EU"

    def run_eu(self, rec: _Recorder):
        cfg, st = self.cfg, self.state
        r, v_r, z = self._mvu_out
        res = _sim_eu(z, self.gains, v_r, N_BLOCKS * BLOCK_DIM, cfg, self.flag, rec)
        solved = res.solved or bool(st.done)
        keep_old = bool(st.done)
        pick = lambda new, old: old if keep_old else new  # noqa: E731
        self.state = FixedNopeState(
            t=st.t + 1,
            x=st.x if solved else res.x_next,
            r=pick(r, st.r),
            z=pick(z, st.z),
            v_r=pick(np.asarray(v_r), st.v_r),
            v_z_re=pick(np.asarray(res.v_z_re), st.v_z_re),
            v_z_im=pick(np.asarray(res.v_z_im), st.v_z_im),
            k=np.asarray(0 if solved else res.k),
            alpha_re=np.zeros(BLOCK_DIM, np.int64) if solved else res.alpha_re,
            alpha_im=np.zeros(BLOCK_DIM, np.int64) if solved else res.alpha_im,
            onsager=np.asarray(0 if solved else res.onsager),
            rho=pick(np.zeros(BLOCK_DIM, np.int64) if solved else res.rho, st.rho),
            done=np.asarray(solved),
            overflow=st.overflow or self.flag.hit,
            config=cfg,
        )
        self.flag = _Flag()
        self.iteration += 1
        self.next_stage = "MVU"


def _idle(rec: _Recorder, cycles: int):
    for _ in range(cycles):
        rec.tick("idle", "-")


def _schedule(problems: list[_Problem], trace: list) -> int:
    """Slot-synchronous two-stage pipeline; returns total cycles."""
    if MVU_STAGE != EU_STAGE:
        raise AssertionError(f"stage budgets differ: MVU {MVU_STAGE}, EU {EU_STAGE}")
    cycle = 0
    while not all(p.finished for p in problems):
        mvu_job = next((p for p in problems if not p.finished and p.next_stage == "MVU"), None)
        eu_job = next((p for p in problems if not p.finished and p.next_stage == "EU" and p is not mvu_job), None)
        mrec = _Recorder("MVU", mvu_job.idx if mvu_job else None, cycle, trace)
        erec = _Recorder("EU", eu_job.idx if eu_job else None, cycle, trace)
        # EU consumes the previous slot's MVU output, so it runs first
        if eu_job:
            eu_job.run_eu(erec)
        else:
            _idle(erec, EU_STAGE)
        if mvu_job:
            mvu_job.run_mvu(mrec)
        else:
            _idle(mrec, MVU_STAGE)
        if mrec.cycle - cycle != MVU_STAGE or erec.cycle - cycle != EU_STAGE:
            raise AssertionError("stage exceeded its cycle budget")
        cycle += MVU_STAGE
    trace.sort(key=lambda e: (e.cycle, e.unit != "MVU"))
    return cycle


def _check_problem(layout, yq):
    if not isinstance(layout, BlockLayout):
        raise TypeError("expected a BlockLayout")
    if yq.shape != (N_BLOCKS * BLOCK_DIM,):
        raise ValueError(f"receive vector must have 64 entries, got {yq.shape}")


def run_solo(layout: BlockLayout, yq: QComplexArray, t_max: int, config: FixedPointConfig = DEFAULT_CONFIG):
    """Run one problem alone; returns ``(FixedNopeState, trace, total_cycles)``."""
    _check_problem(layout, yq)
    p = _Problem(0, layout, yq, t_max, config)
    trace: list = []
    total = _schedule([p], trace)
    return p.state, trace, total


def run_interleaved(problems, t_max: int, config: FixedPointConfig = DEFAULT_CONFIG):
    """Run two independent ``(layout, yq)`` problems with coarse-grained pipeline interleaving.

    While one problem occupies the MVU the other occupies the EU. Returns
    ``([state_a, state_b], trace, total_cycles)`` with payload-level states;
    use :func:`to_nope_states` for real values.
    """
    problems = list(problems)
    if len(problems) != 2:
        raise ValueError("interleaving runs exactly two problems")
    for layout, yq in problems:
        _check_problem(layout, yq)
    ps = [_Problem(i, layout, yq, t_max, config) for i, (layout, yq) in enumerate(problems)]
    trace: list = []
    total = _schedule(ps, trace)
    return [p.state for p in ps], trace, total


def to_nope_states(states) -> list[NopeState]:
    return [s.to_nope_state() for s in states]
