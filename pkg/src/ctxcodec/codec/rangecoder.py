"""32-bit range coder over 16-bit cumulative frequency tables.

Carry handling follows the LZMA scheme (a cached byte plus a run of pending
0xFF bytes).  The leading byte that scheme always emits as zero is dropped,
and the decoder consumes exactly the bytes the encoder wrote, so reading past
the end means the payload was truncated.
"""

from __future__ import annotations

import numpy as np

PRECISION = 16
TOTAL = 1 << PRECISION
_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF


class RangeCoderError(ValueError):
    pass


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK32
        self.cache = 0
        self.cache_size = 1
        self.out = bytearray()
        self._first = True

    def _emit(self, byte: int) -> None:
        if self._first:
            self._first = False
            return
        self.out.append(byte)

    def _shift_low(self) -> None:
        if self.low < 0xFF000000 or self.low > _MASK32:
            carry = self.low >> 32
            temp = self.cache
            while True:
                self._emit((temp + carry) & 0xFF)
                temp = 0xFF
                self.cache_size -= 1
                if self.cache_size == 0:
                    break
            self.cache = (self.low >> 24) & 0xFF
        self.cache_size += 1
        self.low = (self.low & 0x00FFFFFF) << 8

    def encode(self, start: int, freq: int) -> None:
        r = self.range >> PRECISION
        self.low += start * r
        self.range = r * freq
        while self.range < _TOP:
            self.range = (self.range << 8) & _MASK32
            self._shift_low()

    def finish(self) -> bytes:
        for _ in range(5):
            self._shift_low()
        return bytes(self.out)


class RangeDecoder:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.range = _MASK32
        self.code = 0
        for _ in range(4):
            self.code = (self.code << 8) | self._next()

    def _next(self) -> int:
        if self.pos >= len(self.data):
            raise RangeCoderError("truncated payload")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def decode(self, cdf: np.ndarray) -> int:
        r = self.range >> PRECISION
        value = self.code // r
        if value >= TOTAL:
            raise RangeCoderError("corrupt payload")
        s = int(np.searchsorted(cdf, value, side="right")) - 1
        start = int(cdf[s])
        freq = int(cdf[s + 1]) - start
        self.code -= start * r
        self.range = r * freq
        while self.range < _TOP:
            self.code = ((self.code << 8) | self._next()) & _MASK32
            self.range = (self.range << 8) & _MASK32
        return s


def _check_cdf(cdf: np.ndarray) -> None:
    if cdf[0] != 0 or cdf[-1] != TOTAL or np.any(np.diff(cdf) <= 0):
        raise RangeCoderError("CDF must start at 0, end at 2^16 and give every symbol a nonzero frequency")


def range_encode(symbols, cdfs) -> bytes:
    """Encode symbol indices; ``cdfs[i]`` is the table for ``symbols[i]``.

    ``cdfs`` is either one table (shared) or a 2-D array with one row per
    symbol.  Each table has ``n_symbols + 1`` increasing entries from 0 to
    2**16.
    """
    symbols = np.asarray(symbols, dtype=np.int64).reshape(-1)
    tables = np.asarray(cdfs, dtype=np.int64)
    if symbols.size == 0:
        return b""
    shared = tables.ndim == 1
    if shared:
        _check_cdf(tables)
    elif tables.shape[0] != symbols.size:
        raise RangeCoderError(f"{symbols.size} symbols but {tables.shape[0]} tables")
    if not shared:
        if np.any(tables[:, 0] != 0) or np.any(tables[:, -1] != TOTAL) or np.any(np.diff(tables, axis=1) <= 0):
            raise RangeCoderError("every CDF must run from 0 to 2^16 with nonzero frequencies")
    support = tables.shape[-1] - 1
    bad = np.flatnonzero((symbols < 0) | (symbols >= support))
    if bad.size:
        i = int(bad[0])
        raise RangeCoderError(f"symbol {symbols[i]} at position {i} outside support [0, {support})")
    enc = RangeEncoder()
    for i, s in enumerate(symbols.tolist()):
        cdf = tables if shared else tables[i]
        start = int(cdf[s])
        enc.encode(start, int(cdf[s + 1]) - start)
    return enc.finish()


def range_decode(data: bytes, cdfs, count: int | None = None) -> np.ndarray:
    tables = np.asarray(cdfs, dtype=np.int64)
    shared = tables.ndim == 1
    n = tables.shape[0] if not shared else count
    if n is None:
        raise RangeCoderError("symbol count required with a shared table")
    if n == 0:
        if data:
            raise RangeCoderError("payload for an empty symbol list must be empty")
        return np.zeros(0, dtype=np.int64)
    dec = RangeDecoder(data)
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = dec.decode(tables if shared else tables[i])
    if dec.pos != len(data):
        raise RangeCoderError(f"{len(data) - dec.pos} unread bytes after the last symbol")
    return out
