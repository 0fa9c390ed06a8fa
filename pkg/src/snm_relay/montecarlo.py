"""Seeded Monte Carlo outage estimation.

Two fidelities are supported:

* ``THRESHOLD``: a trial fails iff some active subcarrier on some hop has
  SNR below the threshold, with the activation pattern assumed to be
  detected correctly at every relay.
* ``EXACT``: the full transceiver chain. Each hop transmits the block the
  previous node decided on, the receiver runs exhaustive ML detection, and
  a trial also fails when any relay decides on a wrong pattern.

Trials are split into fixed-size chunks. Chunk ``c`` draws from a
SeedSequence keyed by ``(seed, c)`` and each chunk spawns separate streams
for active counts, fading gains, payloads and phase/noise, so both modes see
the same counts and gains for a given seed. Chunk results are merged by
summation, which keeps estimates independent of the worker count.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from statistics import NormalDist

import numpy as np

from .analysis import OutageQuery
from .channel import NoiseModel, exponential_gains, rayleigh_coefficients, snr_matrix
from .modem import Codebook, ModulationParams, ml_detect_batch

CHUNK_TRIALS = 50_000


class Mode(str, enum.Enum):
    THRESHOLD = "threshold"
    EXACT = "exact"


@dataclass(frozen=True)
class SimulationPlan:
    query: OutageQuery
    trials: int
    seed: int = 0
    mode: Mode = Mode.THRESHOLD
    confidence_level: float = 0.95
    # stop once (ci_high - ci_low) / probability drops below this; None disables
    target_relative_width: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not 0 < self.confidence_level < 1:
            raise ValueError("confidence_level must lie in (0, 1)")


@dataclass(frozen=True)
class OutageEstimate:
    probability: float
    trials: int
    failures: int
    std_error: float
    ci_low: float
    ci_high: float
    # exact mode only: trials whose destination decision differs from the sent block
    block_errors: int | None = None

    @property
    def block_error_rate(self) -> float | None:
        if self.block_errors is None:
            return None
        return self.block_errors / self.trials


def confidence_interval(failures: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Normal-approximation (Wald) interval, truncated to [0, 1].

    Degenerates to a zero-width interval when no failures (or only failures)
    were seen; unreliable below roughly 10 failures.
    """
    if trials < 1 or not 0 <= failures <= trials:
        raise ValueError("need 0 <= failures <= trials and trials >= 1")
    p = failures / trials
    z = NormalDist().inv_cdf((1 + level) / 2)
    half = z * math.sqrt(p * (1 - p) / trials)
    return max(0.0, p - half), min(1.0, p + half)


def make_estimate(failures: int, trials: int, level: float = 0.95,
                  block_errors: int | None = None) -> OutageEstimate:
    p = failures / trials
    lo, hi = confidence_interval(failures, trials, level)
    return OutageEstimate(p, trials, failures, math.sqrt(p * (1 - p) / trials), lo, hi, block_errors)


@lru_cache(maxsize=8)
def _codebook(params: ModulationParams) -> Codebook:
    return Codebook(params)


def _chunk_streams(seed: int, chunk: int) -> list[np.random.Generator]:
    ss = np.random.SeedSequence(seed, spawn_key=(chunk,))
    return [np.random.default_rng(s) for s in ss.spawn(4)]


@dataclass(frozen=True, eq=False)
class TrialRecord:
    """Per-trial outcome flags for one chunk.

    ``threshold_fail`` is the threshold-mode criterion on the sent pattern.
    In exact mode, ``snr_fail`` is evaluated on each hop's transmitted
    pattern, ``misdetect`` marks a wrong decision at any relay, and
    ``misdetection_first`` marks failures whose earliest event was a relay
    misdetection rather than an SNR shortfall.
    """

    sent: np.ndarray
    threshold_fail: np.ndarray
    snr_fail: np.ndarray | None = None
    misdetect: np.ndarray | None = None
    misdetection_first: np.ndarray | None = None
    destination: np.ndarray | None = None

    @property
    def failed(self) -> np.ndarray:
        if self.misdetect is None:
            return self.threshold_fail
        return self.snr_fail | self.misdetect


def simulate_chunk(query: OutageQuery, mode: Mode, trials: int, seed: int, chunk: int) -> TrialRecord:
    top, params = query.topology, query.params
    N, M, L = params.N, params.M, top.L
    count_rng, gain_rng, payload_rng, aux_rng = _chunk_streams(seed, chunk)

    T = count_rng.integers(1, N + 1, size=trials)
    G = exponential_gains(gain_rng, (trials, L, N))
    active = np.arange(N) < T[:, None, None]
    snr = snr_matrix(G, top, T)
    threshold_fail = np.any(active & (snr < top.xi), axis=(1, 2))
    # equiprobable bits: uniform count, then uniform payload given the count
    offset = M * (M ** (T - 1) - 1) // (M - 1)
    sent = offset + payload_rng.integers(0, M**T)
    if Mode(mode) is Mode.THRESHOLD:
        return TrialRecord(sent, threshold_fail)

    phases = 2 * np.pi * aux_rng.random((trials, L, N))
    noise = NoiseModel().sample(aux_rng, (trials, L, N))
    return relay_chain(query, sent, G, phases, noise, threshold_fail)


def relay_chain(query: OutageQuery, sent: np.ndarray, G: np.ndarray, phases: np.ndarray,
                noise: np.ndarray, threshold_fail: np.ndarray | None = None) -> TrialRecord:
    """Decode-and-forward the blocks ``sent`` over L hops with ML detection at every receiver.

    ``G``, ``phases`` and ``noise`` are shaped (trials, L, N); hop i carries
    the block decided at hop i-1 and its SNR events use that block's count.
    """
    top, params = query.topology, query.params
    N, L = params.N, top.L
    cb = _codebook(params)
    P = top.effective_power
    H = rayleigh_coefficients(G, top.path_gains, phases)
    trials = sent.shape[0]

    current = sent
    snr_fail = np.zeros(trials, dtype=bool)
    misdetect = np.zeros(trials, dtype=bool)
    mis_first = np.zeros(trials, dtype=bool)
    for i in range(L):
        Tc = cb.active_counts[current]
        hop_active = np.arange(N) < Tc[:, None]
        hop_snr = P * G[:, i, :] * top.path_gains[i] / Tc[:, None]
        snr_fail |= np.any(hop_active & (hop_snr < top.xi), axis=1)
        y = np.sqrt(P / Tc)[:, None] * H[:, i, :] * cb.symbols[current] + noise[:, i, :]
        decided = ml_detect_batch(y, H[:, i, :], cb, P)
        if i < L - 1:
            wrong = decided != sent
            mis_first |= wrong & ~snr_fail & ~misdetect
            misdetect |= wrong
        current = decided
    if threshold_fail is None:
        threshold_fail = np.zeros(trials, dtype=bool)
    return TrialRecord(sent, threshold_fail, snr_fail, misdetect, mis_first, current)


def _chunk_counts(args) -> tuple[int, int, int]:
    query, mode, n, seed, chunk = args
    rec = simulate_chunk(query, mode, n, seed, chunk)
    block_errors = 0 if rec.destination is None else int(np.sum(rec.destination != rec.sent))
    return n, int(np.sum(rec.failed)), block_errors


def _chunk_sizes(trials: int) -> list[int]:
    full, rest = divmod(trials, CHUNK_TRIALS)
    return [CHUNK_TRIALS] * full + ([rest] if rest else [])


def run(plan: SimulationPlan, workers: int = 1) -> OutageEstimate:
    """Execute ``plan``; the result depends only on the plan, never on ``workers``."""
    tasks = [(plan.query, plan.mode, n, plan.seed, c) for c, n in enumerate(_chunk_sizes(plan.trials))]
    trials = failures = block_errors = 0

    def accumulate(results):
        nonlocal trials, failures, block_errors
        for n, f, b in results:
            trials += n
            failures += f
            block_errors += b
            if plan.target_relative_width is not None and failures > 0:
                lo, hi = confidence_interval(failures, trials, plan.confidence_level)
                if (hi - lo) / (failures / trials) < plan.target_relative_width:
                    return

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            accumulate(pool.map(_chunk_counts, tasks))
            pool.shutdown(cancel_futures=True)
    else:
        accumulate(map(_chunk_counts, tasks))

    exact = plan.mode is Mode.EXACT
    return make_estimate(failures, trials, plan.confidence_level, block_errors if exact else None)


def run_threshold_mode(plan: SimulationPlan, workers: int = 1) -> OutageEstimate:
    if plan.mode is not Mode.THRESHOLD:
        raise ValueError("plan.mode must be THRESHOLD")
    return run(plan, workers)


def run_exact_mode(plan: SimulationPlan, workers: int = 1) -> OutageEstimate:
    if plan.mode is not Mode.EXACT:
        raise ValueError("plan.mode must be EXACT")
    return run(plan, workers)
