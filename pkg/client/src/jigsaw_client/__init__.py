"""Thin client for the jigsaw environment wire protocol."""

__version__ = "0.1.0"

from .client import (
    ClientEpisodeHandle,
    JigsawClient,
    ProtocolVersionMismatch,
    ServerError,
    StepResult,
    close,
    connect,
    new_episode,
    step,
)
from .images import png_bytes_to_pixels, pixels_to_png_bytes

__all__ = [
    "ClientEpisodeHandle",
    "JigsawClient",
    "ProtocolVersionMismatch",
    "ServerError",
    "StepResult",
    "close",
    "connect",
    "new_episode",
    "step",
    "png_bytes_to_pixels",
    "pixels_to_png_bytes",
]
