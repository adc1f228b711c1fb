import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxcodec.ingest import (
    IngestError,
    SequenceSource,
    crop_frame,
    ingest,
    pad_frame,
    parse_y4m_header,
    read_png_dir,
    to_uint8,
    write_png,
    yuv420_to_rgb,
)
from oracles import yuv_to_rgb_pixel


def y4m_bytes(w, h, frames, header_extra=b" F30:1 C420"):
    out = b"YUV4MPEG2 W%d H%d" % (w, h) + header_extra + b"\n"
    for f in frames:
        out += b"FRAME\n" + f
    return out


def yuv_frame(w, h, y=128, u=128, v=128):
    cw, ch = (w + 1) // 2, (h + 1) // 2
    return bytes([y]) * (w * h) + bytes([u]) * (cw * ch) + bytes([v]) * (cw * ch)


def test_y4m_two_frames(tmp_path):
    p = tmp_path / "a.y4m"
    p.write_bytes(y4m_bytes(64, 64, [yuv_frame(64, 64), yuv_frame(64, 64, 20, 90, 200)]))
    video = ingest(SequenceSource(p))
    assert len(video) == 2
    assert video.frames[0].shape == (3, 64, 64)
    assert (video.width, video.height) == (64, 64)


def test_grey_pixel_conversion():
    rgb = yuv420_to_rgb(np.full((2, 2), 128, np.uint8), np.full((1, 1), 128, np.uint8),
                        np.full((1, 1), 128, np.uint8))
    assert np.allclose(rgb[:, 0, 0], 0.502, atol=5e-4)
    assert np.allclose(rgb[:, 0, 0], yuv_to_rgb_pixel(128, 128, 128), atol=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255))
def test_conversion_matches_matrix_oracle(y, u, v):
    rgb = yuv420_to_rgb(np.full((2, 2), y, np.uint8), np.full((1, 1), u, np.uint8), np.full((1, 1), v, np.uint8))
    assert np.allclose(rgb[:, 1, 1], yuv_to_rgb_pixel(y, u, v), atol=1e-6)


def test_nearest_chroma_upsampling():
    y = np.full((4, 4), 128, np.uint8)
    u = np.array([[128, 200], [50, 128]], np.uint8)
    rgb = yuv420_to_rgb(y, u, np.full((2, 2), 128, np.uint8))
    blue = rgb[2]
    assert np.all(blue[:2, 2:] == blue[0, 3]) and np.all(blue[2:, :2] == blue[3, 0])
    assert blue[0, 3] > blue[0, 0] > blue[3, 0]


def test_raw_yuv_frame_count(tmp_path):
    w, h, n = 32, 16, 3
    p = tmp_path / "clip.yuv"
    p.write_bytes(b"".join(yuv_frame(w, h, y=10 * i) for i in range(n)))
    video = ingest(SequenceSource(p, "raw_yuv420", width=w, height=h))
    assert len(video) == n
    assert len(p.read_bytes()) == int(n * w * h * 1.5)


def test_raw_yuv_size_mismatch(tmp_path):
    p = tmp_path / "clip.yuv"
    p.write_bytes(yuv_frame(32, 16) + b"\x00")
    with pytest.raises(IngestError, match="multiple"):
        ingest(SequenceSource(p, "raw_yuv420", width=32, height=16))


def test_raw_yuv_needs_dimensions(tmp_path):
    p = tmp_path / "clip.yuv"
    p.write_bytes(yuv_frame(32, 16))
    with pytest.raises(IngestError):
        ingest(SequenceSource(p, "raw_yuv420"))


@pytest.mark.parametrize("line", [b"YUV4MPEG W64 H64", b"YUV4MPEG2 H64 F30:1", b"YUV4MPEG2 W64 H64 C444"])
def test_malformed_y4m_header(line):
    with pytest.raises(IngestError):
        parse_y4m_header(line)


def test_truncated_y4m(tmp_path):
    p = tmp_path / "a.y4m"
    p.write_bytes(y4m_bytes(16, 16, [yuv_frame(16, 16)])[:-5])
    with pytest.raises(IngestError, match="truncated"):
        ingest(SequenceSource(p))


def test_missing_pngs(tmp_path):
    with pytest.raises(IngestError, match="no PNG"):
        ingest(SequenceSource(tmp_path))


def test_png_round_trip_lossless(tmp_path):
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, (3, 20, 30), dtype=np.uint8)
    src = tmp_path / "in"
    src.mkdir()
    write_png(src / "000.png", pixels.astype(np.float32) / 255)
    video = ingest(SequenceSource(src))
    assert video.frames[0].shape == (3, 32, 32)
    assert np.array_equal(to_uint8(video.cropped(0)), pixels)
    out = tmp_path / "out"
    out.mkdir()
    write_png(out / "000.png", video.cropped(0))
    frames, w, h = read_png_dir(out)
    assert np.array_equal(to_uint8(frames[0]), pixels) and (w, h) == (30, 20)


def test_png_size_mismatch(tmp_path):
    write_png(tmp_path / "0.png", np.zeros((3, 8, 8)))
    write_png(tmp_path / "1.png", np.zeros((3, 8, 9)))
    with pytest.raises(IngestError, match="expected"):
        ingest(SequenceSource(tmp_path))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2**31))
def test_pad_then_crop_is_identity(h, w, seed):
    frame = np.random.default_rng(seed).random((3, h, w)).astype(np.float32)
    padded = pad_frame(frame)
    assert padded.shape[1] % 16 == 0 and padded.shape[2] % 16 == 0
    assert np.array_equal(crop_frame(padded, h, w), frame)
    # replicated edges
    assert np.all(padded[:, h:, :w] == frame[:, -1:, :])
    assert np.all(padded[:, :h, w:] == frame[:, :, -1:])


def test_frame_range(tmp_path):
    p = tmp_path / "a.y4m"
    p.write_bytes(y4m_bytes(16, 16, [yuv_frame(16, 16, y=i * 40) for i in range(5)]))
    video = ingest(SequenceSource(p, frame_count=2, start=1))
    assert len(video) == 2
    assert video.frames[0].mean() == pytest.approx(40 / 255, abs=1e-6)
    with pytest.raises(IngestError):
        ingest(SequenceSource(p, frame_count=10))
