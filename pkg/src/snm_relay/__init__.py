"""Multi-hop decode-and-forward relaying with OFDM subcarrier-number modulation."""

from .analysis import (
    OutageQuery,
    asymptotic_average_outage,
    asymptotic_conditional_outage,
    average_outage,
    conditional_outage,
    per_hop_subcarrier_outage,
    s_sigma,
)
from .channel import AllocationMode, TopologyConfig
from .modem import Codebook, ModulationParams, decode_bits, encode, ml_detect
from .montecarlo import Mode, OutageEstimate, SimulationPlan, run

__all__ = [
    "AllocationMode",
    "Codebook",
    "Mode",
    "ModulationParams",
    "OutageEstimate",
    "OutageQuery",
    "SimulationPlan",
    "TopologyConfig",
    "asymptotic_average_outage",
    "asymptotic_conditional_outage",
    "average_outage",
    "conditional_outage",
    "decode_bits",
    "encode",
    "ml_detect",
    "per_hop_subcarrier_outage",
    "run",
    "s_sigma",
]
