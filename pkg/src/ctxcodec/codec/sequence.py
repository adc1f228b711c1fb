"""Whole-sequence coding: I-frame placement, the prediction chain and the container."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ..bitstream import I_FRAME, FrameUnit, StreamHeader, frame_types, iter_units, read_header, write_stream
from ..ingest import Video, crop_frame, from_uint8, pad_frame, to_uint8
from ..numerics import Tensor, no_grad
from .model import FrameStats, PFramePayload, SideHashes, VideoCodec, tensor_digest


class DecodeError(RuntimeError):
    def __init__(self, frame: int, cause: Exception):
        super().__init__(f"frame {frame}: {cause}")
        self.frame = frame
        self.cause = cause


def intra_payload(frame: np.ndarray, height: int, width: int) -> bytes:
    """Raw 8-bit RGB (row-major, interleaved) of the unpadded frame."""
    return to_uint8(crop_frame(frame, height, width)).transpose(1, 2, 0).tobytes()


def intra_reconstruction(payload: bytes, height: int, width: int) -> np.ndarray:
    expected = height * width * 3
    if len(payload) != expected:
        raise ValueError(f"I-frame payload is {len(payload)} bytes, expected {expected}")
    rgb = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).transpose(2, 0, 1)
    return pad_frame(from_uint8(rgb))


@dataclass
class FrameRecord:
    index: int
    frame_type: int
    nbytes: int
    reconstruction: np.ndarray  # cropped to the original size
    stats: FrameStats | None = None
    hashes: SideHashes = field(default_factory=SideHashes)


@dataclass
class EncodeResult:
    data: bytes
    header: StreamHeader
    frames: list[FrameRecord]


def _batch(frame: np.ndarray) -> Tensor:
    return Tensor(frame[None].astype(np.float32))


def encode_sequence(model: VideoCodec, video: Video, intra_period: int = -1, lambda_index: int = 1,
                    frames: int | None = None) -> EncodeResult:
    n = len(video) if frames is None else frames
    if n > len(video):
        raise ValueError(f"{n} frames requested, source has {len(video)}")
    c = model.config
    header = StreamHeader(video.width, video.height, n, intra_period, lambda_index,
                          c.ctx_channels, c.feat_channels, c.latent_channels)
    h, w = video.height, video.width
    units, records, state = [], [], None
    for t, kind in enumerate(frame_types(n, intra_period)):
        if kind == I_FRAME:
            raw = intra_payload(video.frames[t], h, w)
            recon = intra_reconstruction(raw, h, w)
            with no_grad():
                state = model.refresh_state(_batch(recon), t)
            units.append(FrameUnit.intra(raw))
            records.append(FrameRecord(t, kind, len(raw), crop_frame(recon, h, w),
                                       hashes=SideHashes(reconstruction=tensor_digest(state.ref_frame))))
        else:
            out = model.encode_p_frame(_batch(video.frames[t]), state, (h, w))
            state = out.state
            units.append(FrameUnit.inter(out.payload.motion, out.payload.context))
            records.append(FrameRecord(t, kind, out.payload.nbytes, crop_frame(state.ref_frame.data[0], h, w),
                                       out.stats, out.hashes))
    return EncodeResult(write_stream(header, units), header, records)


def iter_decode(model: VideoCodec, data: bytes) -> Iterator[tuple[StreamHeader, FrameRecord]]:
    """Decode frame by frame; failures are wrapped with the frame index."""
    state = None
    t = 0
    try:
        for header, t, unit in iter_units(data):
            c = model.config
            if (header.ctx_channels, header.feat_channels, header.latent_channels) != (
                    c.ctx_channels, c.feat_channels, c.latent_channels):
                raise ValueError("stream channel configuration does not match the model")
            h, w = header.height, header.width
            if unit.frame_type == I_FRAME:
                recon = intra_reconstruction(unit.payload, h, w)
                with no_grad():
                    state = model.refresh_state(_batch(recon), t)
                record = FrameRecord(t, I_FRAME, unit.nbytes, crop_frame(recon, h, w),
                                     hashes=SideHashes(reconstruction=tensor_digest(state.ref_frame)))
            else:
                x_hat, state, hashes = model.decode_p_frame(PFramePayload(unit.motion, unit.context), state)
                record = FrameRecord(t, unit.frame_type, unit.nbytes, crop_frame(x_hat.data[0], h, w),
                                     hashes=hashes)
            yield header, record
    except DecodeError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the frame index attached
        raise DecodeError(t, exc) from exc


def decode_sequence(model: VideoCodec, data: bytes) -> tuple[StreamHeader | None, list[FrameRecord]]:
    header, records = None, []
    for header, record in iter_decode(model, data):
        records.append(record)
    if header is None:
        header = read_header(data)
    return header, records
