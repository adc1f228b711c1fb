"""The ``.dcmv`` container: a fixed header followed by length-prefixed frame units.

All integers are little-endian.  Header (29 bytes)::

    magic "DCMV" | version u16 | width u16 | height u16 | frame_count u16 |
    intra_period i16 | lambda_index u8 | C_ctx u16 | C_feat u16 | C_y u16

Frame unit::

    type u8 (0 = I, 1 = P)
    I: raw_len u32 | raw bytes
    P: motion_len u32 | context_len u32 | motion bytes | context bytes
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterator

MAGIC = b"DCMV"
VERSION = 1
I_FRAME = 0
P_FRAME = 1

_HEADER = struct.Struct("<4sHHHHhBHHH")
HEADER_SIZE = _HEADER.size
_U32 = struct.Struct("<I")


class BitstreamError(ValueError):
    """Malformed or inconsistent stream; ``offset`` is where parsing stopped."""

    def __init__(self, message: str, offset: int | None = None, frame: int | None = None):
        where = []
        if frame is not None:
            where.append(f"frame {frame}")
        if offset is not None:
            where.append(f"byte {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.offset = offset
        self.frame = frame


@dataclass(frozen=True)
class StreamHeader:
    width: int
    height: int
    frame_count: int
    intra_period: int
    lambda_index: int
    ctx_channels: int
    feat_channels: int
    latent_channels: int
    version: int = VERSION

    def __post_init__(self):
        if not (self.intra_period == -1 or 1 <= self.intra_period <= 1024):
            raise BitstreamError(f"intra_period {self.intra_period} not in {{-1}} or [1, 1024]")
        for name in ("width", "height", "frame_count", "ctx_channels", "feat_channels", "latent_channels"):
            if not 0 <= getattr(self, name) <= 0xFFFF:
                raise BitstreamError(f"{name} does not fit in u16")
        if not 0 <= self.lambda_index <= 0xFF:
            raise BitstreamError("lambda_index does not fit in u8")

    @property
    def padded_size(self) -> tuple[int, int]:
        """(height, width) rounded up to multiples of 16."""
        return -(-self.height // 16) * 16, -(-self.width // 16) * 16

    def pack(self) -> bytes:
        return _HEADER.pack(MAGIC, self.version, self.width, self.height, self.frame_count, self.intra_period,
                            self.lambda_index, self.ctx_channels, self.feat_channels, self.latent_channels)


@dataclass(frozen=True)
class FrameUnit:
    frame_type: int
    payload: bytes = b""
    motion: bytes = b""
    context: bytes = b""

    @classmethod
    def intra(cls, raw: bytes) -> "FrameUnit":
        return cls(I_FRAME, payload=bytes(raw))

    @classmethod
    def inter(cls, motion: bytes, context: bytes) -> "FrameUnit":
        return cls(P_FRAME, motion=bytes(motion), context=bytes(context))

    @property
    def nbytes(self) -> int:
        """Payload bytes only (what the rate accounting counts)."""
        return len(self.payload) + len(self.motion) + len(self.context)

    def pack(self) -> bytes:
        if self.frame_type == I_FRAME:
            return bytes([I_FRAME]) + _U32.pack(len(self.payload)) + self.payload
        if self.frame_type == P_FRAME:
            return (bytes([P_FRAME]) + _U32.pack(len(self.motion)) + _U32.pack(len(self.context))
                    + self.motion + self.context)
        raise BitstreamError(f"unknown frame type {self.frame_type}")


def frame_types(frame_count: int, intra_period: int) -> list[int]:
    """Frame type per index: I at 0 and every ``intra_period`` frames after."""
    if intra_period == -1:
        return [I_FRAME if t == 0 else P_FRAME for t in range(frame_count)]
    return [I_FRAME if t % intra_period == 0 else P_FRAME for t in range(frame_count)]


def write_stream(header: StreamHeader, units: list[FrameUnit]) -> bytes:
    if len(units) != header.frame_count:
        raise BitstreamError(f"header says {header.frame_count} frames, got {len(units)} units")
    expected = frame_types(header.frame_count, header.intra_period)
    for t, (unit, kind) in enumerate(zip(units, expected)):
        if unit.frame_type != kind:
            raise BitstreamError(f"expected frame type {kind}, got {unit.frame_type}", frame=t)
    return header.pack() + b"".join(u.pack() for u in units)


def read_header(data: bytes) -> StreamHeader:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BitstreamError("bad magic", offset=0)
    if len(data) < HEADER_SIZE:
        raise BitstreamError("truncated header", offset=len(data))
    _, version, w, h, n, period, lam, c_ctx, c_feat, c_y = _HEADER.unpack_from(data)
    if version != VERSION:
        raise BitstreamError(f"unsupported version {version}", offset=4)
    return StreamHeader(w, h, n, period, lam, c_ctx, c_feat, c_y, version)


class _Cursor:
    def __init__(self, data: bytes, pos: int):
        self.data = data
        self.pos = pos

    def take(self, n: int, frame: int, what: str) -> bytes:
        end = self.pos + n
        if end > len(self.data):
            raise BitstreamError(f"truncated {what}: need {n} bytes, {len(self.data) - self.pos} left",
                                 offset=self.pos, frame=frame)
        chunk = self.data[self.pos:end]
        self.pos = end
        return bytes(chunk)

    def u32(self, frame: int, what: str) -> int:
        return _U32.unpack(self.take(4, frame, what))[0]


def iter_units(data: bytes) -> Iterator[tuple[StreamHeader, int, FrameUnit]]:
    """Parse lazily, one unit at a time, without looking ahead."""
    header = read_header(data)
    expected = frame_types(header.frame_count, header.intra_period)
    cur = _Cursor(data, HEADER_SIZE)
    for t in range(header.frame_count):
        kind = cur.take(1, t, "frame type")[0]
        if kind != expected[t]:
            raise BitstreamError(f"expected frame type {expected[t]}, found {kind}", offset=cur.pos - 1, frame=t)
        if kind == I_FRAME:
            n = cur.u32(t, "I length")
            unit = FrameUnit.intra(cur.take(n, t, "I payload"))
        else:
            n_mv = cur.u32(t, "motion length")
            n_ctx = cur.u32(t, "context length")
            unit = FrameUnit.inter(cur.take(n_mv, t, "motion payload"), cur.take(n_ctx, t, "context payload"))
        yield header, t, unit
    if cur.pos != len(data):
        raise BitstreamError(f"{len(data) - cur.pos} trailing bytes after the last frame", offset=cur.pos)


def read_stream(data: bytes) -> tuple[StreamHeader, list[FrameUnit]]:
    header = read_header(data)
    units = [unit for _, _, unit in iter_units(data)]
    return header, units
