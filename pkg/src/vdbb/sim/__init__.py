from .config import Mode, StaConfig, parse_config
from .core import SimResult, physical_throughput, simulate_gemm, steady_state_throughput, utilization
from .counters import EventCounters

__all__ = [
    "EventCounters",
    "Mode",
    "SimResult",
    "StaConfig",
    "parse_config",
    "physical_throughput",
    "simulate_gemm",
    "steady_state_throughput",
    "utilization",
]
