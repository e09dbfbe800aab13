"""Nonparametric equalization for massive MU-MIMO uplink.

NOPE equalizes ``y = H x + n`` from ``H`` and ``y`` alone. The package also
carries the exact L-MMSE and L-MMSE-AMP references, a bit-true fixed-point
datapath, a cycle-level model of its matrix-vector architecture and a BER
sweep harness.
"""

from .amp import AmpState, NopeState, lmmse_amp_run, nope_iterate, nope_run, sure_gamma_min, sure_psi_hat
from .estimators import AmpEqualizer, LmmseEqualizer, NopeEqualizer
from .fixedpoint.datapath import nope_run_fixed
from .lmmse import LmmseOutput, lmmse_equalize, lmmse_equalize_real, psi, psi_argmin
from .model import (
    ChannelMatrix,
    Constellation,
    GainProfile,
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

nope_fixed = nope_run_fixed

__all__ = [
    "AmpEqualizer",
    "AmpState",
    "ChannelMatrix",
    "Constellation",
    "GainProfile",
    "LmmseEqualizer",
    "LmmseOutput",
    "NoiseSpec",
    "NopeEqualizer",
    "NopeState",
    "SystemDims",
    "demap_hard",
    "estimate_gains",
    "generate_channel",
    "lmmse_amp_run",
    "lmmse_equalize",
    "lmmse_equalize_real",
    "make_constellation",
    "make_rng",
    "modulate",
    "noise_variance_for_snr",
    "nope_fixed",
    "nope_iterate",
    "nope_run",
    "nope_run_fixed",
    "psi",
    "psi_argmin",
    "sure_gamma_min",
    "sure_psi_hat",
    "transmit",
]
