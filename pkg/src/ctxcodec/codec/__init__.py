from .entropy import (
    LATENT_MAX,
    PROB_MIN,
    SCALE_MIN,
    cdf_tables,
    decode_latent,
    encode_latent,
    entropy_bits,
    likelihood,
    quantize,
)
from .model import (
    FrameStats,
    PFramePayload,
    VideoCodec,
    contextual_decode,
    contextual_encode,
    encode_motion,
    generate_frame,
)
from .rangecoder import RangeCoderError, range_decode, range_encode
from .sequence import DecodeError, decode_sequence, encode_sequence, iter_decode

__all__ = [
    "DecodeError",
    "FrameStats",
    "LATENT_MAX",
    "PFramePayload",
    "PROB_MIN",
    "RangeCoderError",
    "SCALE_MIN",
    "VideoCodec",
    "cdf_tables",
    "contextual_decode",
    "contextual_encode",
    "decode_latent",
    "decode_sequence",
    "encode_latent",
    "encode_motion",
    "encode_sequence",
    "entropy_bits",
    "generate_frame",
    "iter_decode",
    "likelihood",
    "quantize",
    "range_decode",
    "range_encode",
]
