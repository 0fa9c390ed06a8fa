"""Multi-hop Rayleigh channel with distance path loss and AWGN.

Powers are expressed relative to a reference noise power of 1, so
``pt_over_n0`` doubles as the node transmit power. Hops and subcarriers are
indexed from 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .modem import ModulationParams, TransmitBlock


class AllocationMode(str, enum.Enum):
    EQUAL_PER_NODE = "equal_per_node"
    TOTAL_UNIFORM = "total_uniform"


@dataclass(frozen=True)
class TopologyConfig:
    """Per-hop distances plus the link budget shared by every hop.

    Under ``TOTAL_UNIFORM`` the ratio ``pt_over_n0`` is the network total and
    each of the L transmitters gets ``pt_over_n0 / L``.
    """

    distances: tuple[float, ...]
    alpha: float
    pt_over_n0: float
    xi: float
    allocation_mode: AllocationMode = AllocationMode.EQUAL_PER_NODE

    def __post_init__(self):
        d = tuple(float(s) for s in np.atleast_1d(self.distances))
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "allocation_mode", AllocationMode(self.allocation_mode))
        if len(d) < 1:
            raise ValueError("at least one hop is required")
        if any(not s > 0 for s in d):
            raise ValueError("hop distances must be positive")
        if not self.alpha >= 0:
            raise ValueError("alpha must be non-negative")
        if not self.pt_over_n0 >= 0:
            raise ValueError("pt_over_n0 must be non-negative")
        if not self.xi >= 0:
            raise ValueError("xi must be non-negative")

    @property
    def L(self) -> int:
        return len(self.distances)

    @property
    def effective_power(self) -> float:
        if self.allocation_mode is AllocationMode.TOTAL_UNIFORM:
            return self.pt_over_n0 / self.L
        return self.pt_over_n0

    @property
    def path_gains(self) -> np.ndarray:
        """S_i^-alpha for every hop."""
        return np.asarray(self.distances) ** (-self.alpha)


@dataclass(frozen=True)
class NoiseModel:
    n0: float = 1.0

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        sigma = np.sqrt(self.n0 / 2)
        return sigma * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    coefficients: np.ndarray  # (L, N) complex h_i(n)
    gains: np.ndarray  # (L, N) small-scale power gains G_i(n)


def exponential_gains(rng: np.random.Generator, size) -> np.ndarray:
    """Unit-mean exponential draws by inverse CDF, G = -log(1 - U)."""
    return -np.log1p(-rng.random(size))


def rayleigh_coefficients(gains: np.ndarray, path_gains: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """h = sqrt(G * S^-alpha) * exp(j*theta); ``path_gains`` broadcasts over the hop axis."""
    return np.sqrt(gains * path_gains[:, None]) * np.exp(1j * phases)


def sample_channel(topology: TopologyConfig, params: ModulationParams,
                   rng: np.random.Generator) -> ChannelRealization:
    shape = (topology.L, params.N)
    gains = exponential_gains(rng, shape)
    phases = 2 * np.pi * rng.random(shape)
    return ChannelRealization(rayleigh_coefficients(gains, topology.path_gains, phases), gains)


def subcarrier_snr(realization: ChannelRealization, topology: TopologyConfig,
                   hop: int, n: int, T: int, active: bool = True) -> float:
    """Received SNR P G_i(n) S_i^-alpha / (T N0) on one subcarrier, 0 if inactive."""
    if not active:
        return 0.0
    g = realization.gains[hop, n]
    return float(topology.effective_power * g * topology.path_gains[hop] / T)


def snr_matrix(gains: np.ndarray, topology: TopologyConfig, T) -> np.ndarray:
    """Vectorised SNR for gains shaped (..., L, N) and active counts broadcastable to (...).

    Inactive subcarriers (index >= T) are reported as 0.
    """
    gains = np.asarray(gains, dtype=float)
    T = np.asarray(T)
    N = gains.shape[-1]
    snr = topology.effective_power * gains * topology.path_gains[:, None] / T[..., None, None]
    active = np.arange(N) < T[..., None, None]
    return np.where(active, snr, 0.0)


def propagate(block: TransmitBlock, realization: ChannelRealization, topology: TopologyConfig,
              hop: int, rng: np.random.Generator, noise: NoiseModel = NoiseModel()) -> np.ndarray:
    """y(n) = sqrt(P/T) h_i(n) x(n) + w(n), with fresh noise on every call."""
    amp = np.sqrt(topology.effective_power / block.active_count)
    h = realization.coefficients[hop]
    y = amp * h * np.asarray(block.symbols)
    if noise.n0 > 0:
        y = y + noise.sample(rng, h.shape)
    return y
