from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxcodec.bitstream import (
    HEADER_SIZE,
    I_FRAME,
    P_FRAME,
    BitstreamError,
    FrameUnit,
    StreamHeader,
    frame_types,
    iter_units,
    read_stream,
    write_stream,
)

GOLDEN = Path(__file__).parent / "data" / "golden.dcmv"


def golden_bytes():
    """The reference stream spelled out field by field."""
    out = b"DCMV"
    out += (1).to_bytes(2, "little")  # version
    out += (40).to_bytes(2, "little") + (24).to_bytes(2, "little")  # width, height
    out += (3).to_bytes(2, "little")  # frame count
    out += (-1).to_bytes(2, "little", signed=True)  # intra period
    out += bytes([2])  # lambda index
    out += (8).to_bytes(2, "little") + (6).to_bytes(2, "little") + (4).to_bytes(2, "little")
    out += bytes([0]) + (3).to_bytes(4, "little") + b"\x01\x02\x03"
    out += bytes([1]) + (2).to_bytes(4, "little") + (1).to_bytes(4, "little") + b"\xaa\xbb" + b"\xcc"
    out += bytes([1]) + (0).to_bytes(4, "little") + (0).to_bytes(4, "little")
    return out


def golden_stream():
    header = StreamHeader(40, 24, 3, -1, 2, 8, 6, 4)
    units = [FrameUnit.intra(b"\x01\x02\x03"), FrameUnit.inter(b"\xaa\xbb", b"\xcc"), FrameUnit.inter(b"", b"")]
    return header, units


def test_header_size():
    assert HEADER_SIZE == 4 + 2 * 5 + 1 + 2 * 3


def test_golden_layout():
    header, units = golden_stream()
    assert write_stream(header, units) == golden_bytes() == GOLDEN.read_bytes()


def test_golden_read():
    header, units = read_stream(GOLDEN.read_bytes())
    assert (header, units) == golden_stream()
    assert header.padded_size == (32, 48)


def test_zero_frame_stream():
    header = StreamHeader(16, 16, 0, -1, 0, 8, 8, 8)
    data = write_stream(header, [])
    assert len(data) == HEADER_SIZE
    assert read_stream(data) == (header, [])


def test_intra_period_32_over_96_frames():
    types = frame_types(96, 32)
    assert [t for t, k in enumerate(types) if k == I_FRAME] == [0, 32, 64]
    header = StreamHeader(16, 16, 96, 32, 1, 8, 8, 8)
    units = [FrameUnit.intra(b"x") if k == I_FRAME else FrameUnit.inter(b"m", b"c") for k in types]
    _, back = read_stream(write_stream(header, units))
    assert [t for t, u in enumerate(back) if u.frame_type == I_FRAME] == [0, 32, 64]


def test_reader_rejects_misplaced_intra():
    data = bytearray(write_stream(*golden_stream()))
    data[HEADER_SIZE + 1 + 4 + 3] = I_FRAME  # second unit claims to be intra
    with pytest.raises(BitstreamError, match="frame 1"):
        read_stream(bytes(data))


def test_writer_rejects_misplaced_intra():
    header, units = golden_stream()
    with pytest.raises(BitstreamError):
        write_stream(header, [units[1], units[0], units[2]])


def test_bad_magic():
    data = b"XCMV" + golden_bytes()[4:]
    with pytest.raises(BitstreamError, match="bad magic"):
        read_stream(data)


def test_bad_version():
    data = bytearray(golden_bytes())
    data[4] = 9
    with pytest.raises(BitstreamError, match="version"):
        read_stream(bytes(data))


@pytest.mark.parametrize("cut", [5, HEADER_SIZE + 2, HEADER_SIZE + 7, len(golden_bytes()) - 1])
def test_truncation(cut):
    with pytest.raises(BitstreamError, match="truncated"):
        read_stream(golden_bytes()[:cut])


def test_length_mismatch_trailing_bytes():
    with pytest.raises(BitstreamError, match="trailing"):
        read_stream(golden_bytes() + b"\x00")


def test_unit_count_mismatch():
    header, units = golden_stream()
    with pytest.raises(BitstreamError):
        write_stream(header, units[:2])


@pytest.mark.parametrize("period", [0, -2, 1025])
def test_intra_period_range(period):
    with pytest.raises(BitstreamError):
        StreamHeader(16, 16, 1, period, 0, 8, 8, 8)


def test_streaming_reads_without_lookahead():
    data = golden_bytes()
    it = iter_units(data[:-19])  # the third unit and part of the second are missing
    _, t, unit = next(it)
    assert t == 0 and unit.payload == b"\x01\x02\x03"
    with pytest.raises(BitstreamError):
        next(it)


@pytest.mark.parametrize("seed", range(100))
def test_random_payload_round_trip(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(0, 40))
    period = int(rng.choice([-1, 1, 4, 32]))
    header = StreamHeader(int(rng.integers(1, 2000)), int(rng.integers(1, 2000)), n, period,
                          int(rng.integers(0, 4)), 8, 8, 8)

    def blob():
        return rng.integers(0, 256, int(rng.integers(0, 64)), dtype=np.uint8).tobytes()

    units = [FrameUnit.intra(blob()) if k == I_FRAME else FrameUnit.inter(blob(), blob())
             for k in frame_types(n, period)]
    data = write_stream(header, units)
    assert read_stream(data) == (header, units)
    assert write_stream(*read_stream(data)) == data


@settings(max_examples=100, deadline=None)
@given(st.binary(max_size=80))
def test_garbage_never_crashes_uncontrolled(blob):
    try:
        read_stream(b"DCMV" + blob)
    except BitstreamError:
        pass


def test_frame_types_all_intra():
    assert frame_types(5, 1) == [I_FRAME] * 5
    assert frame_types(3, -1) == [I_FRAME, P_FRAME, P_FRAME]
