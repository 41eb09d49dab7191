"""Lossless intra coding with block, SAP and adaptive 3-tap prediction."""

from .core import Plane, WeightSet, WeightTable, load_pgm, store_pgm
from .codec import EncoderConfig, Method, decode_frame, encode_frame

__all__ = [
    "EncoderConfig", "Method", "Plane", "WeightSet", "WeightTable",
    "decode_frame", "encode_frame", "load_pgm", "store_pgm",
]
