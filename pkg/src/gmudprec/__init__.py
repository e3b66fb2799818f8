"""Multi-user SISO precoding over frequency-selective channels with the
generalized multi-unitary decomposition (GMUD)."""

from .numkit import InvalidArgumentError, NumericalDegeneracyError, SvdResult, svd, condition_number
from .gmud import GmudParams, GmudFactors, InvalidParameterError, gmud_2x2, gmud_general, beam, rotation_coeffs, r_elements
from .channel import ChannelEnsembleSpec, ChannelKind, MultipathChannel, toeplitz, draw_siso_multipath, draw_mimo_flat, condition_stats
from .precoder import OptimizerConfig, Objective, PrecoderSolution, BeamSearch, inv_sinr_sum, optimize, svd_baseline, normalize_and_transmit
from .link import Constellation, LinkResult, Modulation, modulate, demodulate, transmit_block, mmse_estimate, simulate_blocks, measure
from .simcli import SimConfig, BerPoint, ConfigError, parse_config, run_sweep, write_csv

__version__ = "0.1.0"

__all__ = [
    name
    for name in dir()
    if not name.startswith("_") and name not in {"numkit", "gmud", "channel", "precoder", "link", "simcli"}
]
