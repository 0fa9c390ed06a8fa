"""OFDM-SNM block mapping, codebook enumeration and ML block detection.

A block activates the ``T`` lowest-indexed subcarriers of a group of ``N``;
the count ``T`` is carried by ``log2(N)`` heading bits and each active
subcarrier carries one Gray-coded M-PSK symbol.

Pattern indices ``k`` order the codebook by active count first and payload
value second: ``k = sum(M**z for z in 1..T-1) + payload``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class ModemError(ValueError):
    pass


class LengthMismatchError(ModemError):
    pass


class InvalidBlockError(ModemError):
    pass


def _is_power_of_two(v: int) -> bool:
    return v >= 1 and (v & (v - 1)) == 0


@dataclass(frozen=True)
class ModulationParams:
    N: int
    M: int

    def __post_init__(self):
        if not isinstance(self.N, (int, np.integer)) or isinstance(self.N, bool):
            raise ModemError(f"N must be an integer, got {self.N!r}")
        if not isinstance(self.M, (int, np.integer)) or isinstance(self.M, bool):
            raise ModemError(f"M must be an integer, got {self.M!r}")
        if not _is_power_of_two(int(self.N)):
            raise ModemError("N must be a power of two")
        if int(self.M) < 2 or not _is_power_of_two(int(self.M)):
            raise ModemError("M must be a power of two and at least 2")

    @property
    def heading_bits(self) -> int:
        return int(self.N).bit_length() - 1

    @property
    def bits_per_symbol(self) -> int:
        return int(self.M).bit_length() - 1

    def block_bits(self, T: int) -> int:
        """Total bit count p(k) of a block with ``T`` active subcarriers."""
        return self.heading_bits + T * self.bits_per_symbol


_INT64_MAX = np.iinfo(np.int64).max


def codebook_size(params: ModulationParams) -> int:
    """Number of legitimate blocks, M(M^N - 1)/(M - 1), in exact integer arithmetic.

    Raises OverflowError when the count does not fit a signed 64-bit index,
    since pattern indices are stored as int64 downstream.
    """
    N, M = int(params.N), int(params.M)
    size = M * (M**N - 1) // (M - 1)
    if size > _INT64_MAX:
        raise OverflowError(f"codebook size for N={N}, M={M} exceeds the int64 index range")
    return size


def average_rate(params: ModulationParams) -> float:
    """Mean bits per channel use over equiprobable active counts."""
    return params.heading_bits + (params.N + 1) / 2 * params.bits_per_symbol


def _inverse_gray(g: int) -> int:
    v = 0
    while g:
        v ^= g
        g >>= 1
    return v


def psk_constellation(M: int) -> np.ndarray:
    """Unit-energy M-PSK points indexed by their Gray label.

    ``constellation[label]`` is exp(j*2*pi*m/M) where m is the phase index
    whose Gray code equals ``label``. Components below 1e-15 are zeroed so
    that the BPSK/QPSK points are exact.
    """
    labels = np.arange(M)
    phase_index = np.array([_inverse_gray(int(g)) for g in labels])
    angle = 2 * np.pi * phase_index / M
    re, im = np.cos(angle), np.sin(angle)
    re[np.abs(re) < 1e-15] = 0.0
    im[np.abs(im) < 1e-15] = 0.0
    return re + 1j * im


def _pattern_offset(T: int, M: int) -> int:
    # blocks with fewer than T active subcarriers
    return M * (M ** (T - 1) - 1) // (M - 1)


def _bits_to_int(bits: Sequence[int]) -> int:
    v = 0
    for b in bits:
        v = (v << 1) | int(b)
    return v


def _int_to_bits(v: int, width: int) -> np.ndarray:
    return np.array([(v >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


def as_bits(bits: str | Iterable[int]) -> np.ndarray:
    """Normalise a bit stream given as a '0'/'1' string or an integer sequence."""
    if isinstance(bits, str):
        if set(bits) - {"0", "1"}:
            raise ModemError(f"bit string may contain only 0 and 1: {bits!r}")
        return np.array([int(c) for c in bits], dtype=np.uint8)
    arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits)
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ModemError("bit sequence may contain only 0 and 1")
    return arr.astype(np.uint8).reshape(-1)


@dataclass(frozen=True, eq=False)
class TransmitBlock:
    index: int
    active_count: int
    activation: np.ndarray
    symbols: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, TransmitBlock):
            return NotImplemented
        return (
            self.index == other.index
            and self.active_count == other.active_count
            and np.array_equal(self.activation, other.activation)
            and np.array_equal(self.symbols, other.symbols)
        )

    __hash__ = None


def block_from_index(k: int, params: ModulationParams) -> TransmitBlock:
    N, M = params.N, params.M
    if not 0 <= k < codebook_size(params):
        raise InvalidBlockError(f"pattern index {k} outside codebook of size {codebook_size(params)}")
    T = 1
    while k >= _pattern_offset(T + 1, M):
        T += 1
    payload = k - _pattern_offset(T, M)
    const = psk_constellation(M)
    q = params.bits_per_symbol
    symbols = np.zeros(N, dtype=complex)
    for n in range(T):
        label = (payload >> (q * (T - 1 - n))) & (M - 1)
        symbols[n] = const[label]
    activation = np.zeros(N, dtype=np.uint8)
    activation[:T] = 1
    return TransmitBlock(k, T, activation, symbols)


def encode(bits: str | Iterable[int], params: ModulationParams) -> TransmitBlock:
    """Map one variable-length bit stream onto an OFDM-SNM block.

    The first ``log2(N)`` bits, read big-endian as v, give T = v + 1; the
    remaining ``T*log2(M)`` bits select the symbols on subcarriers 0..T-1.
    """
    b = as_bits(bits)
    p1 = params.heading_bits
    if b.size < p1:
        raise LengthMismatchError(f"need at least {p1} heading bits, got {b.size}")
    T = _bits_to_int(b[:p1]) + 1
    expected = params.block_bits(T)
    if b.size != expected:
        raise LengthMismatchError(
            f"heading implies T={T}, so the stream must hold p(k)={expected} bits, got {b.size}"
        )
    payload = _bits_to_int(b[p1:])
    return block_from_index(_pattern_offset(T, params.M) + payload, params)


def decode_bits(block: TransmitBlock, params: ModulationParams) -> np.ndarray:
    """Recover the bit stream carried by a codebook block."""
    N, M = params.N, params.M
    x = np.asarray(block.symbols)
    T = block.active_count
    if x.shape != (N,) or not 1 <= T <= N:
        raise InvalidBlockError("block shape or active count does not match the modulation params")
    if np.any(x[T:] != 0) or np.any(np.asarray(block.activation) != (np.arange(N) < T)):
        raise InvalidBlockError("block does not activate exactly the leading T subcarriers")
    const = psk_constellation(M)
    payload = 0
    for n in range(T):
        hit = np.flatnonzero(np.abs(const - x[n]) < 1e-9)
        if hit.size != 1:
            raise InvalidBlockError(f"subcarrier {n} carries a non-constellation symbol {x[n]!r}")
        payload = (payload << params.bits_per_symbol) | int(hit[0])
    k = _pattern_offset(T, M) + payload
    if block.index != k:
        raise InvalidBlockError(f"block index {block.index} does not match its content (k={k})")
    head = _int_to_bits(T - 1, params.heading_bits)
    body = _int_to_bits(payload, T * params.bits_per_symbol)
    return np.concatenate([head, body])


class Codebook:
    """All legitimate blocks, materialised as an (Xi, N) symbol matrix."""

    def __init__(self, params: ModulationParams):
        self.params = params
        size = codebook_size(params)
        N, M = params.N, params.M
        const = psk_constellation(M)
        q = params.bits_per_symbol
        counts = np.empty(size, dtype=np.int64)
        X = np.zeros((size, N), dtype=complex)
        for T in range(1, N + 1):
            lo, hi = _pattern_offset(T, M), _pattern_offset(T + 1, M)
            payload = np.arange(hi - lo, dtype=np.int64)
            counts[lo:hi] = T
            for n in range(T):
                labels = (payload >> (q * (T - 1 - n))) & (M - 1)
                X[lo:hi, n] = const[labels]
        X.setflags(write=False)
        counts.setflags(write=False)
        self.symbols = X
        self.active_counts = counts

    def __len__(self):
        return self.symbols.shape[0]

    def __getitem__(self, k: int) -> TransmitBlock:
        k = int(k)
        if not 0 <= k < len(self):
            raise IndexError(k)
        T = int(self.active_counts[k])
        activation = np.zeros(self.params.N, dtype=np.uint8)
        activation[:T] = 1
        return TransmitBlock(k, T, activation, self.symbols[k].copy())

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    @property
    def blocks(self) -> list[TransmitBlock]:
        return list(self)

    @property
    def size(self) -> int:
        return len(self)


def ml_metric(received, channel, codebook: Codebook, power: float) -> np.ndarray:
    """Squared Frobenius distance ||y - sqrt(P/T_k) H x_k||^2 for every candidate k."""
    y = np.asarray(received, dtype=complex)
    h = np.asarray(channel, dtype=complex)
    scale = np.sqrt(power / codebook.active_counts)
    diff = y[None, :] - scale[:, None] * h[None, :] * codebook.symbols
    return np.sum(np.abs(diff) ** 2, axis=1)


def ml_detect(received, channel, codebook: Codebook, power: float) -> tuple[TransmitBlock, int]:
    """Exhaustive ML block detection; ties go to the lowest pattern index.

    ``power`` is the per-node transmit power in units of the noise power, so
    that the candidate amplitude on each active subcarrier is sqrt(power/T).
    """
    k = int(np.argmin(ml_metric(received, channel, codebook, power)))
    return codebook[k], k


def ml_detect_batch(received: np.ndarray, channel: np.ndarray, codebook: Codebook,
                    power: float, batch: int = 2048) -> np.ndarray:
    """Vectorised ML detection over rows of ``received``/``channel``.

    Uses the expansion ||y||^2 - 2a Re<y, h*x> + a^2 sum_{n<T}|h_n|^2 with
    unit-modulus symbols, dropping the candidate-independent ||y||^2 term.
    """
    Y = np.atleast_2d(np.asarray(received, dtype=complex))
    H = np.atleast_2d(np.asarray(channel, dtype=complex))
    T = codebook.active_counts
    amp = np.sqrt(power / T)
    XT = codebook.symbols.T
    out = np.empty(Y.shape[0], dtype=np.int64)
    for s in range(0, Y.shape[0], batch):
        y, h = Y[s:s + batch], H[s:s + batch]
        corr = (np.conj(y) * h) @ XT
        energy = np.cumsum(np.abs(h) ** 2, axis=1)[:, T - 1]
        metric = amp**2 * energy - 2 * amp * corr.real
        out[s:s + batch] = np.argmin(metric, axis=1)
    return out
