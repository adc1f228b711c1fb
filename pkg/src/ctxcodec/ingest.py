"""Reading test sequences (Y4M, raw YUV 4:2:0, PNG directories) into padded RGB frames."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

BLOCK = 16


class IngestError(ValueError):
    pass


@dataclass
class SequenceSource:
    path: Path
    format: str = "auto"  # y4m | raw_yuv420 | png_directory | auto
    width: int | None = None
    height: int | None = None
    frame_count: int | None = None
    start: int = 0

    def __post_init__(self):
        self.path = Path(self.path)
        if self.format == "auto":
            if self.path.is_dir():
                self.format = "png_directory"
            elif self.path.suffix.lower() == ".y4m":
                self.format = "y4m"
            elif self.path.suffix.lower() == ".yuv":
                self.format = "raw_yuv420"
            else:
                raise IngestError(f"cannot infer format of {self.path}")
        if self.format not in ("y4m", "raw_yuv420", "png_directory"):
            raise IngestError(f"unknown source format {self.format!r}")


@dataclass
class Video:
    """Frames as float32 3xHxW arrays in [0, 1], padded to multiples of 16."""

    frames: list[np.ndarray]
    width: int
    height: int
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def original_size(self) -> tuple[int, int]:
        return self.height, self.width

    def cropped(self, t: int) -> np.ndarray:
        return crop_frame(self.frames[t], self.height, self.width)


def pad_frame(frame: np.ndarray, block: int = BLOCK) -> np.ndarray:
    """Replicate the last row/column until both sides are multiples of ``block``."""
    h, w = frame.shape[-2:]
    ph, pw = -h % block, -w % block
    if ph == 0 and pw == 0:
        return frame
    pad = [(0, 0)] * (frame.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(frame, pad, mode="edge")


def crop_frame(frame: np.ndarray, height: int, width: int) -> np.ndarray:
    return frame[..., :height, :width]


def to_uint8(frame: np.ndarray) -> np.ndarray:
    """[0, 1] float -> 8-bit, rounding halves up (inputs are nonnegative)."""
    return np.floor(np.clip(frame, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def from_uint8(pixels: np.ndarray) -> np.ndarray:
    return pixels.astype(np.float32) / np.float32(255.0)


def yuv420_to_rgb(y: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """BT.601 full-range conversion; chroma is upsampled by pixel replication."""
    h, w = y.shape
    u = np.repeat(np.repeat(u, 2, axis=0), 2, axis=1)[:h, :w].astype(np.float64) - 128.0
    v = np.repeat(np.repeat(v, 2, axis=0), 2, axis=1)[:h, :w].astype(np.float64) - 128.0
    yf = y.astype(np.float64)
    r = yf + 1.402 * v
    g = yf - 0.344136 * u - 0.714136 * v
    b = yf + 1.772 * u
    rgb = np.stack([r, g, b]) / 255.0
    return np.clip(rgb, 0.0, 1.0).astype(np.float32)


def _split_yuv420(buf: bytes, width: int, height: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    cw, ch = (width + 1) // 2, (height + 1) // 2
    ysize, csize = width * height, cw * ch
    arr = np.frombuffer(buf, dtype=np.uint8)
    y = arr[:ysize].reshape(height, width)
    u = arr[ysize:ysize + csize].reshape(ch, cw)
    v = arr[ysize + csize:ysize + 2 * csize].reshape(ch, cw)
    return y, u, v


def yuv420_frame_size(width: int, height: int) -> int:
    return width * height + 2 * ((width + 1) // 2) * ((height + 1) // 2)


_Y4M_TAG = re.compile(rb"([A-Z])(\S*)")


def parse_y4m_header(line: bytes) -> dict:
    if not line.startswith(b"YUV4MPEG2"):
        raise IngestError("malformed Y4M header: missing YUV4MPEG2 signature")
    params = {}
    for token in line[len(b"YUV4MPEG2"):].split():
        m = _Y4M_TAG.fullmatch(token)
        if not m:
            raise IngestError(f"malformed Y4M header token {token!r}")
        params[m.group(1).decode()] = m.group(2).decode()
    try:
        width, height = int(params["W"]), int(params["H"])
    except (KeyError, ValueError):
        raise IngestError("malformed Y4M header: W and H are required") from None
    colorspace = params.get("C", "420")
    if not colorspace.startswith("420"):
        raise IngestError(f"unsupported Y4M colorspace C{colorspace}; only 4:2:0 8-bit is read")
    return {"width": width, "height": height, **params}


def read_y4m(path, start: int = 0, count: int | None = None) -> tuple[list[np.ndarray], int, int]:
    data = Path(path).read_bytes()
    end = data.find(b"\n")
    if end < 0:
        raise IngestError("malformed Y4M header: no newline")
    header = parse_y4m_header(data[:end])
    w, h = header["width"], header["height"]
    fsize = yuv420_frame_size(w, h)
    pos, frames, index = end + 1, [], 0
    while pos < len(data):
        nl = data.find(b"\n", pos)
        if nl < 0 or not data.startswith(b"FRAME", pos):
            raise IngestError(f"malformed Y4M frame marker at byte {pos}")
        pos = nl + 1
        if pos + fsize > len(data):
            raise IngestError(f"Y4M frame {index} truncated")
        if index >= start and (count is None or len(frames) < count):
            frames.append(yuv420_to_rgb(*_split_yuv420(data[pos:pos + fsize], w, h)))
        pos += fsize
        index += 1
    return frames, w, h


def read_raw_yuv420(path, width: int, height: int, start: int = 0, count: int | None = None
                    ) -> list[np.ndarray]:
    data = Path(path).read_bytes()
    fsize = yuv420_frame_size(width, height)
    if len(data) % fsize:
        raise IngestError(f"raw YUV size {len(data)} is not a multiple of the {width}x{height} frame size {fsize}")
    n = len(data) // fsize
    stop = n if count is None else min(n, start + count)
    return [yuv420_to_rgb(*_split_yuv420(data[i * fsize:(i + 1) * fsize], width, height))
            for i in range(start, stop)]


def read_png_dir(path, start: int = 0, count: int | None = None) -> tuple[list[np.ndarray], int, int]:
    files = sorted(Path(path).glob("*.png"))
    if not files:
        raise IngestError(f"no PNG files in {path}")
    files = files[start:] if count is None else files[start:start + count]
    frames = []
    for f in files:
        with Image.open(f) as img:
            rgb = np.asarray(img.convert("RGB"))
        frames.append(from_uint8(rgb.transpose(2, 0, 1)))
    h, w = frames[0].shape[1:]
    for f, frame in zip(files, frames):
        if frame.shape[1:] != (h, w):
            raise IngestError(f"{f.name} is {frame.shape[2]}x{frame.shape[1]}, expected {w}x{h}")
    return frames, w, h


def write_png(path, frame: np.ndarray) -> None:
    Image.fromarray(to_uint8(frame).transpose(1, 2, 0)).save(path)


def ingest(source: SequenceSource) -> Video:
    """Load frames as RGB in [0, 1], padded to multiples of 16."""
    if source.format == "png_directory":
        frames, w, h = read_png_dir(source.path, source.start, source.frame_count)
    elif source.format == "y4m":
        frames, w, h = read_y4m(source.path, source.start, source.frame_count)
    else:
        if not source.width or not source.height:
            raise IngestError("raw YUV input needs explicit width and height")
        w, h = source.width, source.height
        frames = read_raw_yuv420(source.path, w, h, source.start, source.frame_count)
    if source.frame_count is not None and len(frames) < source.frame_count:
        raise IngestError(f"source has {len(frames)} frames from index {source.start}, "
                          f"{source.frame_count} requested")
    if not frames:
        raise IngestError(f"no frames read from {source.path}")
    return Video([pad_frame(f) for f in frames], w, h, name=source.path.stem)
