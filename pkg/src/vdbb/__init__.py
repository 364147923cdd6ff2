"""Density-bound-block sparse tensor arrays: codec, simulator, cost model and sweeps."""

from .codec import DbbFormat, DbbMatrix, check_dbb, compression_ratio, decode_matrix, encode_matrix, prune_to_dbb
from .cost import CostCoefficients, CostReport, calibrate, estimate_cost, load_coefficients
from .errors import *  # noqa: F401,F403
from .sim import Mode, SimResult, StaConfig, parse_config, simulate_gemm
from .tensor import conv_ref, gemm_ref, im2col_lower

__all__ = [
    "DbbFormat", "DbbMatrix", "check_dbb", "compression_ratio", "decode_matrix", "encode_matrix",
    "prune_to_dbb", "CostCoefficients", "CostReport", "calibrate", "estimate_cost",
    "load_coefficients", "Mode", "SimResult", "StaConfig", "parse_config", "simulate_gemm",
    "conv_ref", "gemm_ref", "im2col_lower",
]
