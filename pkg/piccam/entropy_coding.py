"""
Integer range coder with 16-bit probability precision, and the discretized
Laplacian symbol models the codec codes its residuals with.

Layout: bytes are emitted most significant first; `RangeEncoder.finish` flushes
exactly 8 bytes (the 32-bit low register followed by 4 zero bytes). The coder
path is integer-only, so streams are identical across platforms.
"""

import math
from bisect import bisect_right
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Sequence, Tuple

import numpy as np

from piccam.errors import (
    BadParameter,
    CorruptStream,
    SymbolOutOfAlphabet,
    TruncatedStream,
)

PROB_BITS = 16
PROB_TOTAL = 1 << PROB_BITS
RANGE_BITS = 32
RANGE_MASK = (1 << RANGE_BITS) - 1
RANGE_BOTTOM = 1 << 24
SHIFT = RANGE_BITS - 8
FLUSH_BYTES = 8


@dataclass(frozen=True)
class SymbolModel:
    """
    cdf[i] is the cumulative count of symbols < i; cdf[0] == 0 and
    cdf[-1] == 2^16. Every symbol holds at least one count.
    """

    cdf: Tuple[int, ...]

    def __post_init__(self):
        cdf = tuple(int(c) for c in self.cdf)
        object.__setattr__(self, "cdf", cdf)
        if len(cdf) < 2 or cdf[0] != 0 or cdf[-1] != PROB_TOTAL:
            raise BadParameter(f"A CDF must run from 0 to {PROB_TOTAL}")
        if any(b <= a for a, b in zip(cdf, cdf[1:])):
            raise BadParameter("CDF must be strictly increasing")

    @classmethod
    def from_counts(cls, counts: Sequence[int]) -> "SymbolModel":
        return cls(tuple(np.concatenate([[0], np.cumsum(counts)]).tolist()))

    @property
    def alphabet_size(self) -> int:
        return len(self.cdf) - 1

    @property
    def counts(self) -> np.ndarray:
        return np.diff(np.array(self.cdf, dtype=np.int64))

    def ideal_bits(self, symbol: int) -> float:
        return -math.log2((self.cdf[symbol + 1] - self.cdf[symbol]) / PROB_TOTAL)


class RangeEncoder:
    """
    `low` holds 32 bits plus a carry bit (a 64-bit accumulator in fixed-width
    terms); a carry is propagated back through already emitted bytes.
    """

    def __init__(self):
        self.low = 0
        self.range = RANGE_MASK
        self.buffer = bytearray()
        self.num_symbols = 0

    def _propagate_carry(self) -> None:
        i = len(self.buffer) - 1
        while self.buffer[i] == 0xFF:
            self.buffer[i] = 0
            i -= 1
        self.buffer[i] += 1

    def encode_symbol(self, model: SymbolModel, symbol: int) -> None:
        cdf = model.cdf
        if not 0 <= symbol < len(cdf) - 1:
            raise SymbolOutOfAlphabet(
                f"Symbol {symbol} outside alphabet of size {len(cdf) - 1}"
            )
        r = self.range >> PROB_BITS
        start = cdf[symbol]
        self.low += r * start
        if symbol < len(cdf) - 2:
            self.range = r * (cdf[symbol + 1] - start)
        else:
            # Last symbol absorbs the truncation remainder
            self.range -= r * start
        if self.low > RANGE_MASK:
            self._propagate_carry()
            self.low &= RANGE_MASK
        while self.range < RANGE_BOTTOM:
            self.buffer.append(self.low >> SHIFT)
            self.low = (self.low << 8) & RANGE_MASK
            self.range <<= 8
        self.num_symbols += 1

    def finish(self) -> bytes:
        self.buffer += (self.low << RANGE_BITS).to_bytes(FLUSH_BYTES, "big")
        return bytes(self.buffer)


class RangeDecoder:
    def __init__(self, data: bytes):
        self.data = bytes(data)
        if len(self.data) < FLUSH_BYTES:
            raise TruncatedStream(
                f"A range-coded stream has at least {FLUSH_BYTES} bytes, got {len(self.data)}"
            )
        self.position = 4
        self.code = int.from_bytes(self.data[:4], "big")
        self.range = RANGE_MASK

    def _next_byte(self) -> int:
        if self.position >= len(self.data):
            raise TruncatedStream("Range decoder ran past the end of the stream")
        value = self.data[self.position]
        self.position += 1
        return value

    def decode_symbol(self, model: SymbolModel) -> int:
        cdf = model.cdf
        r = self.range >> PROB_BITS
        target = min(self.code // r, PROB_TOTAL - 1)
        symbol = bisect_right(cdf, target) - 1
        if symbol >= len(cdf) - 1:
            raise CorruptStream("Decoded value lies outside the model's CDF")
        start = cdf[symbol]
        self.code -= r * start
        if symbol < len(cdf) - 2:
            self.range = r * (cdf[symbol + 1] - start)
        else:
            self.range -= r * start
        if self.code < 0 or self.code >= self.range:
            raise CorruptStream("Range decoder state left its interval")
        while self.range < RANGE_BOTTOM:
            self.code = (self.code << 8) | self._next_byte()
            self.range <<= 8
        return symbol

    def finish(self) -> None:
        """
        The encoder flushes `low` exactly, so a faithful stream leaves a zero code
        and precisely the 4 zero padding bytes unread.
        """
        tail = self.data[self.position :]
        if self.code != 0 or tail != bytes(FLUSH_BYTES - 4):
            raise CorruptStream("Range-coded stream does not end where it should")


###################
## Laplace model ##
###################
def laplace_cdf(x: np.ndarray, scale_b: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.where(
        x < 0,
        0.5 * np.exp(np.minimum(x, 0) / scale_b),
        1 - 0.5 * np.exp(-np.maximum(x, 0) / scale_b),
    )


def laplace_masses(scale_b: float, step: float, k_max: int) -> np.ndarray:
    """
    Exact probability of each symbol value 0..k_max (one side; the model is
    symmetric). The extreme symbol absorbs the tail.
    """
    k = np.arange(k_max + 1, dtype=np.float64)
    upper = laplace_cdf((k + 0.5) * step, scale_b)
    lower = laplace_cdf((k - 0.5) * step, scale_b)
    masses = upper - lower
    masses[-1] = 1 - laplace_cdf((k_max - 0.5) * step, scale_b)
    return masses


def quantize_masses(masses: np.ndarray) -> np.ndarray:
    """
    Largest-remainder rounding to counts summing to exactly 2^16, with a floor of
    one count per symbol. Ties go to the earlier symbol.
    """
    raw = np.asarray(masses, dtype=np.float64) * PROB_TOTAL
    counts = np.maximum(np.floor(raw).astype(np.int64), 1)
    deficit = PROB_TOTAL - int(counts.sum())
    if deficit > 0:
        remainders = raw - np.floor(raw)
        order = np.argsort(-remainders, kind="stable")
        counts[order[:deficit]] += 1
    while deficit < 0:
        order = np.argsort(-counts, kind="stable")
        for i in order:
            if deficit == 0 or counts[i] <= 1:
                break
            counts[i] -= 1
            deficit += 1
    return counts


class LaplaceModel(SymbolModel):
    """
    Symbol model over values -k_max..k_max. Value 0 is ordered last, the rest
    ascend; the most probable value then absorbs the range truncation remainder.
    """

    def __init__(self, cdf, k_max: int):
        object.__setattr__(self, "k_max", k_max)
        super().__init__(cdf)

    def index_of(self, value: int) -> int:
        if value == 0:
            return 2 * self.k_max
        if value < 0:
            return value + self.k_max
        return value + self.k_max - 1

    def value_of(self, index: int) -> int:
        if index == 2 * self.k_max:
            return 0
        if index < self.k_max:
            return index - self.k_max
        return index - self.k_max + 1

    def count_of(self, value: int) -> int:
        i = self.index_of(value)
        return self.cdf[i + 1] - self.cdf[i]

    @cached_property
    def value_counts(self) -> np.ndarray:
        """Counts indexed by value + k_max."""
        return np.array([self.count_of(v) for v in range(-self.k_max, self.k_max + 1)])

    def __repr__(self):
        return f"LaplaceModel(k_max={self.k_max})"


@lru_cache(maxsize=4096)
def laplace_model(scale_b: float, step: float, k_max: int) -> LaplaceModel:
    """
    Discretized Laplacian with scale `scale_b`, quantization step `step`: value k
    gets F((k+1/2)step) - F((k-1/2)step), the two extreme values take the tails.
    """
    if not (scale_b > 0 and step > 0 and math.isfinite(scale_b) and math.isfinite(step)):
        raise BadParameter(f"Laplace scale and step must be > 0, got {scale_b}, {step}")
    if k_max < 1:
        raise BadParameter(f"k_max must be >= 1, got {k_max}")
    side = laplace_masses(scale_b, step, k_max)
    # values -k_max..-1, 1..k_max, then 0
    ordered = np.concatenate([side[:0:-1], side[1:], side[:1]])
    counts = quantize_masses(ordered)
    cdf = np.concatenate([[0], np.cumsum(counts)])
    return LaplaceModel(tuple(int(c) for c in cdf), k_max)
