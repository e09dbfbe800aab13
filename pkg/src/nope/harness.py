"""Monte Carlo BER sweeps over equalizers and SNR points.

Trial ``k`` draws its channel, bits and unit-power noise from its own
counter-based stream ``make_rng(seed, k)``. The same draws are reused for
every equalizer and every SNR point (only the noise scaling changes), so
curve differences reflect the equalizers rather than sampling luck, and
results do not depend on how trials are batched or spread over workers.

A point stops at the first trial after which every equalizer has seen at
least ``min_bit_errors`` errors, or at ``max_trials``.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .amp import lmmse_amp_run, nope_run
from .fixedpoint.datapath import nope_run_fixed
from .lmmse import lmmse_equalize, lmmse_equalize_real
from .model import (
    SystemDims,
    demap_hard,
    make_constellation,
    make_rng,
    noise_variance_for_snr,
)

__all__ = [
    "EQUALIZERS",
    "ConfigError",
    "SweepConfig",
    "BerPoint",
    "TrialBatch",
    "draw_trials",
    "equalize",
    "run_sweep",
    "write_csv",
    "read_csv",
    "emit_plot_script",
    "snr_at_ber",
    "snr_gap",
    "parse_config",
    "load_config",
]

EQUALIZERS = ("lmmse-exact", "lmmse-real", "lmmse-amp", "nope-float", "nope-fixed")
CSV_HEADER = ("equalizer", "snr_db", "trials", "bit_errors", "ber")


class ConfigError(ValueError):
    """Invalid sweep configuration."""


@dataclass(frozen=True)
class SweepConfig:
    dims: SystemDims = SystemDims(64, 16)
    constellation: str = "QAM16"
    equalizers: tuple = ("lmmse-exact", "nope-float")
    snr_db: tuple = (6.0, 8.0, 10.0, 12.0)
    t_max: int | None = None
    min_bit_errors: int = 500
    max_trials: int = 100_000
    seed: int = 0
    gain_model: object = "uniform"
    noise: bool = True
    batch_size: int = 2000
    workers: int = 1

    def __post_init__(self):
        if not isinstance(self.dims, SystemDims):
            raise ConfigError("dims must be a SystemDims")
        try:
            c = make_constellation(self.constellation)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        object.__setattr__(self, "constellation", c.name)
        object.__setattr__(self, "equalizers", tuple(self.equalizers))
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        if not self.equalizers:
            raise ConfigError("at least one equalizer is required")
        for e in self.equalizers:
            if e not in EQUALIZERS:
                raise ConfigError(f"unknown equalizer {e!r}; choose from {EQUALIZERS}")
        if len(set(self.equalizers)) != len(self.equalizers):
            raise ConfigError("duplicate equalizer")
        if "lmmse-real" in self.equalizers and not c.is_real:
            raise ConfigError("lmmse-real needs a real alphabet (BPSK)")
        if not self.snr_db:
            raise ConfigError("snr_db must not be empty")
        if not all(math.isfinite(s) for s in self.snr_db):
            raise ConfigError("snr_db values must be finite")
        if self.t_max is not None and (int(self.t_max) != self.t_max or self.t_max < 1):
            raise ConfigError("t_max must be a positive integer")
        for name in ("min_bit_errors", "max_trials", "batch_size", "workers"):
            v = getattr(self, name)
            if int(v) != v or v < (0 if name == "min_bit_errors" else 1):
                raise ConfigError(f"{name} must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        _gain_sampler(self.gain_model, self.dims.U)

    @property
    def iterations(self) -> int:
        if self.t_max is not None:
            return int(self.t_max)
        return 7 if self.constellation == "QAM256" else 5


@dataclass(frozen=True)
class BerPoint:
    equalizer: str
    snr_db: float
    trials: int
    bit_errors: int
    ber: float

    def __post_init__(self):
        if not 0.0 <= self.ber <= 1.0:
            raise ValueError("ber must lie in [0, 1]")


def _gain_sampler(model, U: int):
    """Return ``rng -> amplitude gains`` or ``None`` for uniform channels.

    ``loguniform:LO:HI`` draws each user's power gain uniformly in dB on
    ``[LO, HI]``; an explicit list fixes the amplitude gains.
    """
    if isinstance(model, str):
        if model == "uniform":
            return None
        if model.startswith("loguniform:"):
            try:
                lo, hi = (float(v) for v in model.split(":")[1:])
            except ValueError:
                raise ConfigError(f"bad gain model {model!r}; expected loguniform:LO:HI") from None
            if lo > hi:
                raise ConfigError("loguniform bounds out of order")
            return lambda rng: 10.0 ** (rng.uniform(lo, hi, U) / 20.0)
        raise ConfigError(f"unknown gain model {model!r}")
    d = np.asarray(model, dtype=float)
    if d.shape != (U,):
        raise ConfigError(f"explicit gains need {U} values, got {d.size}")
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise ConfigError("explicit gains must be positive and finite")
    return lambda rng: d


@dataclass(frozen=True, eq=False)
class TrialBatch:
    """Draws of trials ``start .. start + n - 1``; noise has unit variance."""

    start: int
    H: np.ndarray
    bits: np.ndarray
    x: np.ndarray
    w: np.ndarray


def draw_trials(cfg: SweepConfig, start: int, n: int) -> TrialBatch:
    B, U = cfg.dims.B, cfg.dims.U
    c = make_constellation(cfg.constellation)
    sampler = _gain_sampler(cfg.gain_model, U)
    m = c.bits_per_symbol
    H = np.empty((n, B, U), dtype=complex)
    bits = np.empty((n, U, m), dtype=np.uint8)
    w = np.empty((n, B), dtype=complex)
    for i in range(n):
        rng = make_rng(cfg.seed, start + i)
        d = sampler(rng) if sampler else None
        g = rng.standard_normal((2, B, U))
        Hi = (g[0] + 1j * g[1]) * math.sqrt(0.5 / B)
        H[i] = Hi * d if d is not None else Hi
        bits[i] = rng.integers(0, 2, (U, m), dtype=np.uint8)
        nv = rng.standard_normal((2, B))
        w[i] = (nv[0] + 1j * nv[1]) * math.sqrt(0.5)
    weights = 1 << np.arange(m - 1, -1, -1)
    x = c.points[c.index_of_label(bits.astype(np.int64) @ weights)]
    return TrialBatch(start, H, bits, x, w)


def equalize(name: str, H, y, n0: float, ex: float, t_max: int):
    """Symbol estimates of equalizer ``name`` for a batch.

    Only the L-MMSE family is handed ``n0``/``ex``; NOPE sees ``(H, y)``.
    """
    if name == "lmmse-exact":
        return lmmse_equalize(H, y, n0 / ex).xhat_unbiased
    if name == "lmmse-real":
        return lmmse_equalize_real(H, y, n0 / (2 * ex)).astype(complex)
    if name == "lmmse-amp":
        return lmmse_amp_run(H, y, ex, t_max).z
    if name == "nope-float":
        return nope_run(H, y, t_max).z
    if name == "nope-fixed":
        return nope_run_fixed(H, y, t_max).z
    raise ConfigError(f"unknown equalizer {name!r}")


def _batch_errors(cfg: SweepConfig, batch: TrialBatch, snr: float) -> dict:
    c = make_constellation(cfg.constellation)
    n0 = noise_variance_for_snr(snr, cfg.dims, c.energy)
    y = np.einsum("nbu,nu->nb", batch.H, batch.x)
    if cfg.noise:
        y = y + math.sqrt(n0) * batch.w
    out = {}
    for name in cfg.equalizers:
        z = equalize(name, batch.H, y, n0, c.energy, cfg.iterations)
        out[name] = np.sum(demap_hard(z, c) != batch.bits, axis=(1, 2))
    return out


def _run_point(cfg: SweepConfig, snr: float, pool) -> list[BerPoint]:
    c = make_constellation(cfg.constellation)
    bits_per_trial = cfg.dims.U * c.bits_per_symbol
    errs = {e: [] for e in cfg.equalizers}
    done_trials = 0
    while done_trials < cfg.max_trials:
        wave = []
        start = done_trials
        for _ in range(cfg.workers):
            if start >= cfg.max_trials:
                break
            n = min(cfg.batch_size, cfg.max_trials - start)
            wave.append((start, n))
            start += n

        def work(job):
            return _batch_errors(cfg, draw_trials(cfg, *job), snr)

        results = list(pool.map(work, wave)) if pool else [work(j) for j in wave]
        for r in results:
            for e in cfg.equalizers:
                errs[e].append(r[e])
        done_trials = start
        cum = {e: np.cumsum(np.concatenate(errs[e])) for e in cfg.equalizers}
        reached = np.all([cum[e] >= cfg.min_bit_errors for e in cfg.equalizers], axis=0)
        hit = np.flatnonzero(reached)
        if hit.size:
            done_trials = int(hit[0]) + 1
            break
    counts = {e: int(np.concatenate(errs[e])[:done_trials].sum()) for e in cfg.equalizers}
    return [
        BerPoint(e, snr, done_trials, counts[e], counts[e] / (done_trials * bits_per_trial))
        for e in cfg.equalizers
    ]


def run_sweep(cfg: SweepConfig, progress=None) -> list[BerPoint]:
    """Simulate every (equalizer, SNR) pair; ``progress(point)`` is called per point."""
    points = []
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for snr in cfg.snr_db:
            pts = _run_point(cfg, snr, pool)
            if progress:
                for p in pts:
                    progress(p)
            points.extend(pts)
    finally:
        if pool:
            pool.shutdown()
    return _sorted(points)


def _sorted(points):
    return sorted(points, key=lambda p: (p.equalizer, p.snr_db))


def write_csv(points, path) -> None:
    """Write points to a path or an open text stream."""
    if hasattr(path, "write"):
        _write_rows(points, path)
        return
    with open(path, "w", newline="") as f:
        _write_rows(points, f)


def _write_rows(points, f):
    wr = csv.writer(f, lineterminator="\n")
    wr.writerow(CSV_HEADER)
    for p in _sorted(points):
        wr.writerow([p.equalizer, f"{p.snr_db:.8g}", p.trials, p.bit_errors, f"{p.ber:.8g}"])


def read_csv(path) -> list[BerPoint]:
    with open(path, newline="") as f:
        rd = csv.reader(f)
        header = next(rd, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header!r}")
        return [BerPoint(r[0], float(r[1]), int(r[2]), int(r[3]), float(r[4])) for r in rd if r]


_PLOT_TEMPLATE = '''\
"""BER versus SNR, one series per equalizer."""

import csv
import sys

import matplotlib.pyplot as plt

CSV_PATH = {csv_path!r}
SERIES = {series!r}

rows = list(csv.DictReader(open(CSV_PATH, newline="")))
fig, ax = plt.subplots()
for name in SERIES:
    pts = sorted((float(r["snr_db"]), float(r["ber"])) for r in rows if r["equalizer"] == name)
    pts = [(s, b) for s, b in pts if b > 0]
    if pts:
        ax.semilogy([s for s, _ in pts], [b for _, b in pts], marker="o", label=name)
ax.set_xlabel("average SNR per receive antenna [dB]")
ax.set_ylabel("uncoded BER")
ax.grid(True, which="both", alpha=0.3)
if SERIES:
    ax.legend()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else {png!r}, dpi=150)
'''


def emit_plot_script(csv_path, script_path=None) -> Path:
    """Write a matplotlib script that plots ``csv_path``; returns the script path."""
    csv_path = Path(csv_path)
    points = read_csv(csv_path)
    series = sorted({p.equalizer for p in points})
    script_path = Path(script_path) if script_path else csv_path.with_suffix(".plot.py")
    script_path.write_text(
        _PLOT_TEMPLATE.format(csv_path=str(csv_path), series=series, png=str(csv_path.with_suffix(".png")))
    )
    return script_path


def snr_at_ber(points, equalizer: str, target: float) -> float:
    """SNR where the BER curve first drops to ``target``, interpolating log10(BER) linearly.

    Returns ``nan`` when the curve does not bracket ``target``.
    """
    pts = sorted((p.snr_db, p.ber) for p in points if p.equalizer == equalizer)
    for (s0, b0), (s1, b1) in zip(pts, pts[1:]):
        if b0 >= target >= b1 and b1 > 0 and b0 > 0:
            if b0 == b1:
                return s0
            f = (math.log10(b0) - math.log10(target)) / (math.log10(b0) - math.log10(b1))
            return s0 + f * (s1 - s0)
    return float("nan")


def snr_gap(points, equalizer: str, reference: str, target: float) -> float:
    """Extra SNR ``equalizer`` needs over ``reference`` to reach BER ``target``."""
    return snr_at_ber(points, equalizer, target) - snr_at_ber(points, reference, target)


# -- flat key = value configuration -------------------------------------------

_LIST_KEYS = {"equalizers", "snr_db"}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key == "dims":
            b, u = raw.lower().replace(" ", "").split("x")
            return SystemDims(int(b), int(u))
        if key in _LIST_KEYS:
            items = [v for v in raw.replace(",", " ").split() if v]
            return tuple(float(v) for v in items) if key == "snr_db" else tuple(items)
        if key == "gain_model":
            if raw == "uniform" or raw.startswith("loguniform:"):
                return raw
            return tuple(float(v) for v in raw.replace(",", " ").split())
        if key == "constellation":
            return raw
        if key == "t_max":
            return None if raw.lower() in ("", "auto", "none") else int(raw)
        if key == "noise":
            low = raw.lower()
            if low not in ("true", "false", "on", "off", "1", "0", "yes", "no"):
                raise ValueError(f"expected a boolean, got {raw!r}")
            return low in ("true", "on", "1", "yes")
        if key == "seed":
            return int(raw, 0)
        return int(raw)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"{key}: {e}") from None


def parse_config(text: str, overrides: dict | None = None) -> SweepConfig:
    """Parse ``key = value`` lines (``#`` starts a comment) into a :class:`SweepConfig`.

    Keys are the field names of :class:`SweepConfig`; list values are
    comma or whitespace separated and ``dims`` is written ``64x16``.
    ``overrides`` maps keys to raw strings and wins over the file.
    """
    known = {f.name for f in fields(SweepConfig)}
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw)
    for key, raw in (overrides or {}).items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _parse_value(key, raw)
    try:
        return SweepConfig(**values)
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from None


def load_config(path, overrides: dict | None = None) -> SweepConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    return parse_config(text, overrides)

