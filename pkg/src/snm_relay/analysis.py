"""Closed-form and high-SNR asymptotic outage probabilities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import TopologyConfig
from .modem import ModulationParams


@dataclass(frozen=True)
class OutageQuery:
    topology: TopologyConfig
    params: ModulationParams


def _threshold_exponents(query: OutageQuery) -> np.ndarray:
    # xi * S_i^alpha * N0 / P for each hop; inf when no power reaches the receiver
    top = query.topology
    P = top.effective_power
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        x = top.xi * np.asarray(top.distances) ** top.alpha / P
    if top.xi == 0:
        x = np.zeros(top.L)
    return x


def per_hop_subcarrier_outage(query: OutageQuery, hop: int, T: int) -> float:
    """P{SNR_i(n) < xi} = 1 - exp(-T xi S_i^alpha N0 / P) for one active subcarrier."""
    return float(-math.expm1(-T * _threshold_exponents(query)[hop]))


def conditional_outage(query: OutageQuery, T: int) -> float:
    """1 - prod_i (1 - Phi_i)^T, the outage given T active subcarriers.

    With exponential gains each factor is exp(-T x_i), so the product
    collapses to 1 - exp(-T^2 sum_i x_i), evaluated via expm1.
    """
    x = _threshold_exponents(query)
    return float(-math.expm1(-T * T * float(np.sum(x))))


def average_outage(query: OutageQuery) -> float:
    """Uniform average of the conditional outage over T = 1..N."""
    N = query.params.N
    return math.fsum(conditional_outage(query, T) for T in range(1, N + 1)) / N


def s_sigma(topology: TopologyConfig) -> float:
    """Average end-to-end channel power gain 1 / sum_i S_i^alpha."""
    return 1.0 / math.fsum(s**topology.alpha for s in topology.distances)


def asymptotic_conditional_outage(query: OutageQuery, T: int) -> float:
    """High-SNR form T^2 N0 xi / (P S_sigma); not clamped to [0, 1]."""
    top = query.topology
    if top.xi == 0:
        return 0.0
    if top.effective_power == 0:
        return math.inf
    return T * T * top.xi / (top.effective_power * s_sigma(top))


def asymptotic_average_outage(query: OutageQuery) -> float:
    """N0 xi (N+1)(2N+1) / (6 P S_sigma); not clamped to [0, 1]."""
    top = query.topology
    if top.xi == 0:
        return 0.0
    if top.effective_power == 0:
        return math.inf
    N = query.params.N
    return top.xi * (N + 1) * (2 * N + 1) / (6 * top.effective_power * s_sigma(top))


def in_asymptotic_regime(value: float) -> bool:
    """False when an asymptotic value exceeds 1 and so cannot be read as a probability."""
    return value <= 1.0
