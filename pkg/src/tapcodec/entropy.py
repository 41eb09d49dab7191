"""Adaptive Golomb-Rice residual coding and MSB-first bit I/O.

Every bit count used by mode decision and training comes from this module,
so :func:`cost_residual_block` must agree exactly with what
:func:`encode_residual_block` writes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

MAX_K = 15
RENORM_AT = 64
ESCAPE_ONES = 24
ESCAPE_BITS = 9
MAX_SYMBOL = 510


class MalformedStream(ValueError):
    """The bitstream ended early or decoded to an impossible value."""


class BitSink:
    """MSB-first bit writer."""

    def __init__(self):
        self._buf = bytearray()
        self._acc = 0
        self._nacc = 0
        self.bit_count = 0

    def write(self, value: int, nbits: int) -> None:
        if nbits <= 0:
            return
        self._acc = (self._acc << nbits) | (value & ((1 << nbits) - 1))
        self._nacc += nbits
        self.bit_count += nbits
        while self._nacc >= 8:
            self._nacc -= 8
            self._buf.append((self._acc >> self._nacc) & 0xFF)
        self._acc &= (1 << self._nacc) - 1

    def write_bit(self, bit: int) -> None:
        self.write(bit & 1, 1)

    def write_codes(self, codes: np.ndarray, lens: np.ndarray) -> None:
        """Append many ``(value, length)`` codewords (each at most 56 bits)."""
        out, nbytes, acc, nacc = _pack(codes, lens, self._acc, self._nacc)
        self._acc, self._nacc = int(acc), int(nacc)
        self._buf += out[:nbytes].tobytes()
        self.bit_count += int(lens.sum())

    def getvalue(self) -> bytes:
        """Contents zero-padded to a byte boundary."""
        out = bytes(self._buf)
        if self._nacc:
            out += bytes([(self._acc << (8 - self._nacc)) & 0xFF])
        return out


class BitSource:
    """MSB-first bit reader over ``data``; raises :class:`MalformedStream` at EOF."""

    def __init__(self, data: bytes, pos: int = 0):
        self.data = np.frombuffer(bytes(data), dtype=np.uint8)
        self.pos = pos
        self.limit = len(self.data) * 8

    def read(self, nbits: int) -> int:
        if self.pos + nbits > self.limit:
            raise MalformedStream("bitstream exhausted")
        value = 0
        for _ in range(nbits):
            byte = int(self.data[self.pos >> 3])
            value = (value << 1) | ((byte >> (7 - (self.pos & 7))) & 1)
            self.pos += 1
        return value

    def read_bit(self) -> int:
        return self.read(1)

    @property
    def remaining(self) -> int:
        return self.limit - self.pos


def map_residual(r: int) -> int:
    return 2 * r if r >= 0 else -2 * r - 1


def unmap_residual(m: int) -> int:
    return m >> 1 if m % 2 == 0 else -((m + 1) >> 1)


def rice_parameter(n: int, a: int) -> int:
    k = 0
    while (n << k) < a and k < MAX_K:
        k += 1
    return k


@dataclass
class RiceContext:
    """Running count ``n`` and magnitude sum ``a`` of one residual class."""

    n: int = 1
    a: int = 0

    @property
    def k(self) -> int:
        return rice_parameter(self.n, self.a)

    def update(self, m: int) -> None:
        self.a += m
        self.n += 1
        if self.n >= RENORM_AT:
            self.n >>= 1
            self.a >>= 1

    def copy(self) -> RiceContext:
        return RiceContext(self.n, self.a)


def rice_codeword(k: int, m: int) -> tuple[int, int]:
    """``(value, length)`` of the codeword for symbol ``m`` under parameter ``k``."""
    q = m >> k
    if q >= ESCAPE_ONES:
        return (((1 << ESCAPE_ONES) - 1) << ESCAPE_BITS) | m, ESCAPE_ONES + ESCAPE_BITS
    return (((1 << q) - 1) << (k + 1)) | (m & ((1 << k) - 1)), q + 1 + k


def rice_encode(sink: BitSink, ctx: RiceContext, m: int) -> int:
    if not 0 <= m <= MAX_SYMBOL:
        raise ValueError(f"symbol out of range: {m}")
    value, length = rice_codeword(ctx.k, m)
    sink.write(value, length)
    ctx.update(m)
    return length


def rice_decode(source: BitSource, ctx: RiceContext) -> int:
    k = ctx.k
    q = 0
    while q < ESCAPE_ONES and source.read_bit():
        q += 1
    if q == ESCAPE_ONES:
        m = source.read(ESCAPE_BITS)
    else:
        m = (q << k) | source.read(k)
    if m > MAX_SYMBOL:
        raise MalformedStream(f"decoded symbol {m} out of range")
    ctx.update(m)
    return m


def cost_residual_block(ctx: RiceContext, residuals) -> int:
    """Exact bits for coding ``residuals`` (flattened) from ``ctx``; ``ctx`` is untouched."""
    res = np.ascontiguousarray(residuals, dtype=np.int32).ravel()
    bits, _, _ = _rice_cost(res, ctx.n, ctx.a)
    return int(bits)


def encode_residual_block(sink: BitSink, ctx: RiceContext, residuals) -> int:
    res = np.ascontiguousarray(residuals, dtype=np.int32).ravel()
    codes = np.empty(res.size, dtype=np.int64)
    lens = np.empty(res.size, dtype=np.int64)
    ctx.n, ctx.a = _rice_codes(res, ctx.n, ctx.a, codes, lens)
    sink.write_codes(codes, lens)
    return int(lens.sum())


def decode_residual_block(source: BitSource, ctx: RiceContext, count: int) -> np.ndarray:
    out = np.empty(count, dtype=np.int32)
    pos, n, a, status = _rice_decode_block(source.data, source.pos, source.limit,
                                           count, ctx.n, ctx.a, out)
    if status == 1:
        raise MalformedStream("bitstream exhausted inside a residual block")
    if status == 2:
        raise MalformedStream("residual symbol out of range")
    source.pos = pos
    ctx.n, ctx.a = n, a
    return out


# ---------------------------------------------------------------------------
# numba kernels


@njit(cache=True)
def _k_of(n, a):
    k = 0
    while (n << k) < a and k < MAX_K:
        k += 1
    return k


@njit(cache=True)
def _update(n, a, m):
    a += m
    n += 1
    if n >= RENORM_AT:
        n >>= 1
        a >>= 1
    return n, a


@njit(cache=True)
def _rice_cost(res, n, a):
    bits = 0
    for i in range(res.shape[0]):
        r = res[i]
        m = 2 * r if r >= 0 else -2 * r - 1
        k = _k_of(n, a)
        q = m >> k
        if q >= ESCAPE_ONES:
            bits += ESCAPE_ONES + ESCAPE_BITS
        else:
            bits += q + 1 + k
        n, a = _update(n, a, m)
    return bits, n, a


@njit(cache=True)
def _rice_codes(res, n, a, codes, lens):
    for i in range(res.shape[0]):
        r = res[i]
        m = 2 * r if r >= 0 else -2 * r - 1
        k = _k_of(n, a)
        q = m >> k
        if q >= ESCAPE_ONES:
            codes[i] = (((1 << ESCAPE_ONES) - 1) << ESCAPE_BITS) | m
            lens[i] = ESCAPE_ONES + ESCAPE_BITS
        else:
            codes[i] = (((1 << q) - 1) << (k + 1)) | (m & ((1 << k) - 1))
            lens[i] = q + 1 + k
        n, a = _update(n, a, m)
    return n, a


@njit(cache=True)
def _pack(codes, lens, acc, nacc):
    out = np.empty(int(lens.sum()) // 8 + 1, dtype=np.uint8)
    nbytes = 0
    for i in range(codes.shape[0]):
        acc = (acc << lens[i]) | codes[i]
        nacc += lens[i]
        while nacc >= 8:
            nacc -= 8
            out[nbytes] = (acc >> nacc) & 0xFF
            nbytes += 1
        acc &= (1 << nacc) - 1
    return out, nbytes, acc, nacc


@njit(cache=True)
def _read_bits(data, pos, nbits):
    v = 0
    for _ in range(nbits):
        v = (v << 1) | ((data[pos >> 3] >> (7 - (pos & 7))) & 1)
        pos += 1
    return v, pos


@njit(cache=True)
def _rice_decode_block(data, pos, limit, count, n, a, out):
    """Returns ``(pos, n, a, status)``; status 0 ok, 1 exhausted, 2 bad symbol."""
    for i in range(count):
        k = _k_of(n, a)
        q = 0
        while q < ESCAPE_ONES:
            if pos >= limit:
                return pos, n, a, 1
            bit = (data[pos >> 3] >> (7 - (pos & 7))) & 1
            pos += 1
            if bit == 0:
                break
            q += 1
        if q == ESCAPE_ONES:
            if pos + ESCAPE_BITS > limit:
                return pos, n, a, 1
            m, pos = _read_bits(data, pos, ESCAPE_BITS)
        else:
            if pos + k > limit:
                return pos, n, a, 1
            r, pos = _read_bits(data, pos, k)
            m = (q << k) | r
        if m > MAX_SYMBOL:
            return pos, n, a, 2
        out[i] = m >> 1 if m % 2 == 0 else -((m + 1) >> 1)
        n, a = _update(n, a, m)
    return pos, n, a, 0
