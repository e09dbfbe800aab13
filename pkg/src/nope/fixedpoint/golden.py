"""Golden-vector text files for cross-checking a hardware implementation.

Grammar (one record per line)::

    file    := { line "\\n" }
    line    := record | comment | blank
    record  := tag SP raw_hex SP fmt
    comment := "#" any-text
    tag     := [A-Za-z_][A-Za-z0-9_.,\\[\\]-]*
    raw_hex := hex digit string, exactly ceil(width / 4) lowercase digits
    fmt     := "Q" int_bits "." frac_bits ("s" | "u")

``raw_hex`` is the payload in ``width``-bit two's complement (plain binary
for unsigned formats), so ``-1`` in ``Q6.10s`` (17 bits) is ``1fc00``.
Complex values are written as two records ``<tag>.re`` and ``<tag>.im``;
array elements append their index, ``x[3]`` or ``H.re[0,5]``. Fields are separated by single spaces.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .qformat import QFormat, QValue

__all__ = [
    "encode_raw",
    "decode_raw",
    "format_record",
    "parse_record",
    "write_golden",
    "read_golden",
    "records_for_complex",
    "records_for_array",
    "nope_golden_records",
]

_TAG = re.compile(r"[A-Za-z_][A-Za-z0-9_.,\[\]-]*")
_HEX = re.compile(r"[0-9a-f]+")


def _digits(fmt: QFormat) -> int:
    return -(-fmt.width // 4)


def encode_raw(raw: int, fmt: QFormat) -> str:
    if not fmt.raw_min <= raw <= fmt.raw_max:
        raise ValueError(f"raw {raw} not representable in {fmt}")
    return format(raw & ((1 << fmt.width) - 1), f"0{_digits(fmt)}x")


def decode_raw(text: str, fmt: QFormat) -> int:
    if not _HEX.fullmatch(text) or len(text) != _digits(fmt):
        raise ValueError(f"bad payload {text!r} for {fmt}")
    v = int(text, 16)
    if v >> fmt.width:
        raise ValueError(f"payload {text!r} wider than {fmt.width} bits")
    if fmt.signed and v >> (fmt.width - 1):
        v -= 1 << fmt.width
    return v


def format_record(tag: str, value: QValue) -> str:
    if not _TAG.fullmatch(tag):
        raise ValueError(f"bad tag {tag!r}")
    return f"{tag} {encode_raw(value.raw, value.fmt)} {value.fmt}"


def parse_record(line: str) -> tuple[str, QValue]:
    parts = line.split(" ")
    if len(parts) != 3:
        raise ValueError(f"expected 'tag raw_hex fmt', got {line!r}")
    tag, hx, fs = parts
    if not _TAG.fullmatch(tag):
        raise ValueError(f"bad tag {tag!r}")
    fmt = QFormat.parse(fs)
    return tag, QValue(decode_raw(hx, fmt), fmt)


def write_golden(records, path) -> None:
    """Write ``(tag, QValue)`` pairs; ``path`` may be a filename or ``Path``."""
    lines = [format_record(t, v) for t, v in records]
    Path(path).write_text("".join(f"{ln}\n" for ln in lines))


def read_golden(path) -> list[tuple[str, QValue]]:
    out = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            out.append(parse_record(line))
        except ValueError as e:
            raise ValueError(f"line {n}: {e}") from None
    return out


def records_for_array(tag: str, raw, fmt: QFormat):
    raw = np.asarray(raw)
    if raw.ndim == 0:
        return [(tag, QValue(int(raw), fmt))]
    return [(f"{tag}[{','.join(map(str, idx))}]", QValue(int(raw[idx]), fmt)) for idx in np.ndindex(raw.shape)]


def records_for_complex(tag: str, arr) -> list:
    """Records for a :class:`~nope.fixedpoint.datapath.QComplexArray`."""
    return records_for_array(f"{tag}.re", arr.re, arr.fmt) + records_for_array(f"{tag}.im", arr.im, arr.fmt)


def nope_golden_records(Hq, yq, t_max: int, config=None) -> list:
    """Inputs, gains and every iteration's state of a single fixed-point NOPE run."""
    from .datapath import DEFAULT_CONFIG, fixed_nope_init, fixed_nope_iterate, quantize_gains

    cfg = config or DEFAULT_CONFIG
    if Hq.re.ndim != 2:
        raise ValueError("golden vectors are written for one problem at a time")
    B, U = Hq.shape
    gains = quantize_gains(Hq, cfg)
    recs = records_for_complex("H", Hq) + records_for_complex("y", yq)
    recs += records_for_array("d2", gains.d2, cfg.gain_fmt)
    recs += records_for_array("d2_inv", gains.d2_inv, cfg.gain_fmt)
    recs += records_for_array("d2_mean", gains.d2_mean, cfg.gain_fmt)
    state = fixed_nope_init((), B, U, cfg)
    for t in range(1, t_max + 1):
        state = fixed_nope_iterate(state, Hq, yq, gains)
        p = f"t{t}."
        recs += records_for_complex(p + "r", state.r)
        recs += records_for_array(p + "v_r", state.v_r, cfg.stat_fmt)
        recs += records_for_complex(p + "z", state.z)
        recs += records_for_array(p + "v_z_re", state.v_z_re, cfg.stat_fmt)
        recs += records_for_array(p + "v_z_im", state.v_z_im, cfg.stat_fmt)
        recs += records_for_array(p + "k", state.k, cfg.stat_fmt)
        recs += records_for_array(p + "alpha_re", state.alpha_re, cfg.alpha_fmt)
        recs += records_for_array(p + "alpha_im", state.alpha_im, cfg.alpha_fmt)
        recs += records_for_array(p + "onsager", state.onsager, cfg.onsager_fmt)
        recs += records_for_array(p + "rho", state.rho, cfg.rho_fmt)
        recs += records_for_complex(p + "x", state.x)
    return recs
