"""Attention-dump capture tools for MM-DiT samplers.

Writes ATND v1 files either from a live model run (`capture_run`) or
from a deterministic synthetic sampler (`stub_capture`) when no model
stack is available.
"""
from .atnd import (
    DTYPE_F32,
    LAYOUT_CROSS,
    LAYOUT_JOINT,
    MAGIC,
    VERSION,
    DumpWriteError,
    DumpWriter,
)
from .hooks import (
    DUAL_STREAM_BLOCKS,
    SINGLE_STREAM_BLOCKS,
    TOTAL_BLOCKS,
    CaptureResult,
    HookConfig,
    ModelUnavailableError,
    capture_run,
)
from .stub import PAD_TOKEN, attention_plane, stub_capture

__all__ = [
    "MAGIC",
    "VERSION",
    "DTYPE_F32",
    "LAYOUT_JOINT",
    "LAYOUT_CROSS",
    "DumpWriter",
    "DumpWriteError",
    "DUAL_STREAM_BLOCKS",
    "SINGLE_STREAM_BLOCKS",
    "TOTAL_BLOCKS",
    "HookConfig",
    "CaptureResult",
    "ModelUnavailableError",
    "capture_run",
    "PAD_TOKEN",
    "attention_plane",
    "stub_capture",
]

__version__ = "0.1.0"
