"""Bit-true fixed-point arithmetic and the fixed-point NOPE datapath."""

from .datapath import (
    DEFAULT_CONFIG,
    FixedNopeState,
    FixedPointConfig,
    QComplexArray,
    QGains,
    nope_fixed_core,
    nope_run_fixed,
    quantize_gains,
    scale_and_quantize_inputs,
)
from .golden import nope_golden_records, read_golden, write_golden
from .qformat import QComplex, QFormat, QValue, mac, quantize, quantize_complex
from .recip import RECIP_LUT, reciprocal, reciprocal_1px

__all__ = [
    "DEFAULT_CONFIG",
    "FixedNopeState",
    "FixedPointConfig",
    "QComplexArray",
    "QGains",
    "QComplex",
    "QFormat",
    "QValue",
    "RECIP_LUT",
    "mac",
    "nope_fixed_core",
    "nope_golden_records",
    "nope_run_fixed",
    "quantize",
    "quantize_complex",
    "quantize_gains",
    "read_golden",
    "reciprocal",
    "reciprocal_1px",
    "scale_and_quantize_inputs",
    "write_golden",
]
