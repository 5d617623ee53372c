"""Wire layer between the vision server and the language server."""
from .bf16 import bf16_decode, bf16_decode_array, bf16_encode, bf16_encode_array, bf16_round_trip
from .frame import (
    FRAME_MAGIC,
    FRAME_VERSION,
    HEADER_SIZE,
    FIXED_FIELDS_SIZE,
    FeatureFrame,
    decode_frame,
    encode_frame,
)
from .stream import (
    FeatureReceiver,
    FeatureSender,
    feature_stream_recv,
    feature_stream_send,
    pack_message,
    read_message,
    recv_exact,
)

__all__ = [
    "bf16_encode",
    "bf16_decode",
    "bf16_encode_array",
    "bf16_decode_array",
    "bf16_round_trip",
    "FRAME_MAGIC",
    "FRAME_VERSION",
    "HEADER_SIZE",
    "FIXED_FIELDS_SIZE",
    "FeatureFrame",
    "encode_frame",
    "decode_frame",
    "FeatureSender",
    "FeatureReceiver",
    "read_message",
    "pack_message",
    "feature_stream_send",
    "feature_stream_recv",
    "recv_exact",
]
