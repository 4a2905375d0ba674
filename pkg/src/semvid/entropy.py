"""Discretised-Laplacian code tables and a byte-wise rANS coder.

The code-word space is a 64 x 103 grid: 64 Laplacian scales (log-spaced over
[0.05, 20] symbol units) by the 103 integer symbols -51..51.  Each row is
quantised to 16-bit frequencies.  The coder keeps a 32-bit state in
``[2**23, 2**31)`` and renormalises one byte at a time.

Stream layout produced by :func:`rans_encode`: the 4-byte little-endian final
encoder state followed by the renormalisation bytes in the order the decoder
consumes them (the reverse of the order the encoder emitted them).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .bits import BitReader, BitWriter, ue_length
from .errors import DecodeError

PRECISION = 16
TOTAL = 1 << PRECISION
MAX_SYMBOL = 51
ALPHABET = 2 * MAX_SYMBOL + 1
NUM_BINS = 64
SCALE_MIN, SCALE_MAX = 0.05, 20.0
RANS_L = 1 << 23
STATE_BYTES = 4

SCALES = SCALE_MIN * (SCALE_MAX / SCALE_MIN) ** (np.arange(NUM_BINS) / (NUM_BINS - 1))


def scale_to_bin(scale) -> np.ndarray:
    """Nearest bin on the log grid; scales outside [0.05, 20] clamp to the ends."""
    s = np.maximum(np.asarray(scale, dtype=np.float64), 1e-300)
    pos = (NUM_BINS - 1) * np.log(s / SCALE_MIN) / math.log(SCALE_MAX / SCALE_MIN)
    return np.clip(np.rint(pos), 0, NUM_BINS - 1).astype(np.int64)


def laplace_cdf(x, b):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x < 0, 0.5 * np.exp(np.minimum(x, 0) / b), 1.0 - 0.5 * np.exp(-np.maximum(x, 0) / b))


@dataclass(frozen=True)
class ProbabilityTable:
    scale_bin: int
    freq: tuple
    cum: tuple  # len ALPHABET + 1, cum[0] = 0, cum[-1] = TOTAL
    _lookup: list = field(default_factory=list, repr=False, compare=False)

    @property
    def symbol_count(self) -> int:
        return ALPHABET

    def prob(self, symbol: int) -> float:
        return self.freq[symbol + MAX_SYMBOL] / TOTAL

    def bits(self, symbol: int) -> float:
        return PRECISION - math.log2(self.freq[symbol + MAX_SYMBOL])

    def entropy(self) -> float:
        p = np.asarray(self.freq) / TOTAL
        return float(-(p * np.log2(p)).sum())

    @property
    def lookup(self) -> bytes:
        """Slot -> symbol index map used by the decoder."""
        if not self._lookup:
            self._lookup.append(bytes(np.repeat(np.arange(ALPHABET, dtype=np.uint8), self.freq)))
        return self._lookup[0]


@lru_cache(maxsize=None)
def build_table(scale_bin: int) -> ProbabilityTable:
    """Quantised Laplacian row for one scale bin.

    Each symbol gets the Laplacian mass of ``[s - 0.5, s + 0.5]``, renormalised
    over -51..51, rounded to 1/65536 with a floor of 1; the zero symbol takes
    up whatever rounding leaves over.
    """
    if not 0 <= scale_bin < NUM_BINS:
        raise ValueError(f"scale bin {scale_bin} outside [0, {NUM_BINS - 1}]")
    b = SCALES[scale_bin]
    s = np.arange(-MAX_SYMBOL, MAX_SYMBOL + 1, dtype=np.float64)
    mass = laplace_cdf(s + 0.5, b) - laplace_cdf(s - 0.5, b)
    p = mass / mass.sum()
    freq = np.maximum(1, np.rint(p * TOTAL)).astype(np.int64)
    freq[MAX_SYMBOL] += TOTAL - freq.sum()
    if freq[MAX_SYMBOL] < 1:
        raise AssertionError("zero symbol lost all probability mass")
    cum = np.concatenate([[0], np.cumsum(freq)])
    return ProbabilityTable(scale_bin, tuple(int(v) for v in freq), tuple(int(v) for v in cum))


def code_word_space() -> np.ndarray:
    """The full 64 x 103 probability grid."""
    return np.array([build_table(j).freq for j in range(NUM_BINS)], dtype=np.float64) / TOTAL


@dataclass(frozen=True)
class CodeWords:
    data: bytes
    bit_length: int
    symbol_count: int


def rans_encode(symbols, bins) -> CodeWords:
    """Encode integer *symbols* in [-51, 51], each under the table of its bin."""
    symbols = [int(v) for v in symbols]
    bins = [int(v) for v in bins]
    if len(symbols) != len(bins):
        raise ValueError("symbols and bins differ in length")
    tables = [build_table(j) for j in range(NUM_BINS)]
    out = bytearray()
    x = RANS_L
    # Reverse order so that decoding runs forward.
    for s, j in zip(reversed(symbols), reversed(bins)):
        if not -MAX_SYMBOL <= s <= MAX_SYMBOL:
            raise ValueError(f"symbol {s} outside the alphabet; escape it first")
        t = tables[j]
        idx = s + MAX_SYMBOL
        f = t.freq[idx]
        x_max = ((RANS_L >> PRECISION) << 8) * f
        while x >= x_max:
            out.append(x & 0xFF)
            x >>= 8
        x = ((x // f) << PRECISION) + (x % f) + t.cum[idx]
    out.reverse()
    data = x.to_bytes(STATE_BYTES, "little") + bytes(out)
    return CodeWords(data, 8 * len(out) + x.bit_length(), len(symbols))


class RansDecoder:
    """Forward decoder over a buffer; symbols may be pulled in several batches."""

    def __init__(self, data: bytes, offset: int = 0):
        if len(data) < offset + STATE_BYTES:
            raise DecodeError("rANS stream shorter than its state")
        self._data = data
        self._x = int.from_bytes(data[offset:offset + STATE_BYTES], "little")
        self._pos = offset + STATE_BYTES
        self._tables = [build_table(j) for j in range(NUM_BINS)]

    def decode(self, bins) -> list[int]:
        data, tables = self._data, self._tables
        x, pos, n = self._x, self._pos, len(data)
        mask = TOTAL - 1
        out = []
        for j in bins:
            t = tables[j]
            slot = x & mask
            idx = t.lookup[slot]
            x = t.freq[idx] * (x >> PRECISION) + slot - t.cum[idx]
            while x < RANS_L:
                if pos >= n:
                    raise DecodeError("rANS stream truncated")
                x = (x << 8) | data[pos]
                pos += 1
            out.append(idx - MAX_SYMBOL)
        self._x, self._pos = x, pos
        return out

    @property
    def position(self) -> int:
        """Offset of the first byte after the consumed rANS data."""
        return self._pos

    @property
    def exhausted_cleanly(self) -> bool:
        """True when the state is back at its initial value (all symbols popped)."""
        return self._x == RANS_L


def rans_decode(cw, bins, n: int) -> list[int]:
    data = cw.data if isinstance(cw, CodeWords) else cw
    bins = list(bins)
    if len(bins) != n:
        raise ValueError("need exactly one bin per symbol")
    return RansDecoder(data).decode(bins)


def escape_split(symbols) -> tuple[np.ndarray, list[int]]:
    """Clamp to +-51; return the clamped symbols and the overflow of every clamped one.

    Every symbol that lands on +-51 carries an overflow entry (possibly 0) so
    the decoder knows when to read the side channel.
    """
    s = np.asarray(symbols, dtype=np.int64)
    clamped = np.clip(s, -MAX_SYMBOL, MAX_SYMBOL)
    hit = np.abs(clamped) == MAX_SYMBOL
    overflow = (np.abs(s[hit]) - MAX_SYMBOL).tolist()
    return clamped, overflow


def escape_bits(overflow) -> int:
    return sum(ue_length(int(v)) for v in overflow)


def write_escapes(overflow) -> bytes:
    w = BitWriter()
    for v in overflow:
        w.write_ue(int(v))
    return w.getvalue()


def read_escapes(clamped, data: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Undo :func:`escape_split`; returns the full symbols and the end offset."""
    s = np.asarray(clamped, dtype=np.int64).copy()
    r = BitReader(data, offset)
    for i in np.flatnonzero(np.abs(s) == MAX_SYMBOL):
        s[i] += int(np.sign(s[i])) * r.read_ue()
    return s, r.byte_position


def table_bits(symbols, bins) -> float:
    """Ideal code length in bits of in-alphabet *symbols* under their tables."""
    symbols = np.asarray(symbols, dtype=np.int64).ravel()
    bins = np.asarray(bins, dtype=np.int64).ravel()
    if symbols.size != bins.size:
        raise ValueError("symbols and bins differ in length")
    if symbols.size == 0:
        return 0.0
    if np.abs(symbols).max() > MAX_SYMBOL:
        raise ValueError("symbol outside the alphabet; escape it first")
    freq = _freq_matrix()[bins, symbols + MAX_SYMBOL]
    return float(np.sum(PRECISION - np.log2(freq)))


@lru_cache(maxsize=1)
def _freq_matrix() -> np.ndarray:
    return np.array([build_table(j).freq for j in range(NUM_BINS)], dtype=np.float64)
