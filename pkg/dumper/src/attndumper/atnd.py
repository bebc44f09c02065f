"""Streaming writer for ATND v1 attention dump files.

Byte layout, all integers little-endian:

    magic      4 bytes   b"ATND"
    version    u32       1
    layout     u32       0 = joint, 1 = cross-only
    T          u32       sampling step count
    L          u32       captured layer count
    N          u32       text-token count
    h, w       u32 x2    latent spatial dims
    f          u32       head count (1 when heads are pre-averaged)
    dtype      u32       0 = float32 little-endian
    text_first u32       1 if text tokens precede image tokens
    tokens     N times   u32 byte length + UTF-8 bytes
    valid_mask N bytes   1 = real token, 0 = padding/special
    records    T*L chunks of raw float32, (t-major, l-minor) order

Joint records are (hw+N, hw+N, f) row-major softmax outputs; cross-only
records are (N, hw, f). Records stream to disk one at a time so a long
capture never holds more than one step in memory.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"ATND"
VERSION = 1
LAYOUT_JOINT = 0
LAYOUT_CROSS = 1
DTYPE_F32 = 0

_HEADER = struct.Struct("<4sIIIIIIIIII")
_U32 = struct.Struct("<I")


class DumpWriteError(Exception):
    """Inconsistent shapes, bad values, or out-of-order records."""


def record_shape(layout: int, n: int, hw: int, f: int) -> tuple[int, int, int]:
    if layout == LAYOUT_JOINT:
        side = hw + n
        return (side, side, f)
    return (n, hw, f)


class DumpWriter:
    """Writes one ATND file; records must arrive in (t, l) order."""

    def __init__(
        self,
        path,
        *,
        layout: int,
        steps: int,
        layers: int,
        tokens,
        valid_mask=None,
        height: int,
        width: int,
        heads: int,
        text_first: bool = True,
    ):
        if layout not in (LAYOUT_JOINT, LAYOUT_CROSS):
            raise DumpWriteError(f"unknown layout {layout}")
        tokens = [str(t) for t in tokens]
        if valid_mask is None:
            valid_mask = [True] * len(tokens)
        valid_mask = [bool(v) for v in valid_mask]
        if len(valid_mask) != len(tokens):
            raise DumpWriteError("valid_mask length differs from token count")
        if not tokens:
            raise DumpWriteError("token table is empty")
        if not any(valid_mask):
            raise DumpWriteError("token table has no valid token")
        for name, value in (("steps", steps), ("layers", layers),
                            ("height", height), ("width", width),
                            ("heads", heads)):
            if value < 1:
                raise DumpWriteError(f"{name} must be >= 1")

        self.path = Path(path)
        self.layout = layout
        self.steps = steps
        self.layers = layers
        self.tokens = tokens
        self.valid_mask = valid_mask
        self.height = height
        self.width = width
        self.heads = heads
        self.text_first = text_first
        self.shape = record_shape(layout, len(tokens), height * width, heads)
        self._next = 0
        self._fh = open(self.path, "wb")
        try:
            self._write_preamble()
        except Exception:
            self._fh.close()
            raise

    def _write_preamble(self) -> None:
        self._fh.write(
            _HEADER.pack(
                MAGIC,
                VERSION,
                self.layout,
                self.steps,
                self.layers,
                len(self.tokens),
                self.height,
                self.width,
                self.heads,
                DTYPE_F32,
                1 if self.text_first else 0,
            )
        )
        for token in self.tokens:
            raw = token.encode("utf-8")
            self._fh.write(_U32.pack(len(raw)) + raw)
        self._fh.write(bytes(1 if v else 0 for v in self.valid_mask))

    @property
    def expected_records(self) -> int:
        return self.steps * self.layers

    def add(self, t: int, l: int, values: np.ndarray) -> None:
        want_t, want_l = divmod(self._next, self.layers)
        if (t, l) != (want_t, want_l):
            raise DumpWriteError(
                f"record (t={t}, l={l}) out of order; expected "
                f"(t={want_t}, l={want_l})"
            )
        if self._next >= self.expected_records:
            raise DumpWriteError("all records already written")
        values = np.ascontiguousarray(values, dtype=np.float32)
        if values.shape != self.shape:
            raise DumpWriteError(
                f"record (t={t}, l={l}) has shape {values.shape}, "
                f"expected {self.shape}"
            )
        if not np.isfinite(values).all():
            raise DumpWriteError(f"record (t={t}, l={l}) has non-finite values")
        if (values < 0).any():
            raise DumpWriteError(f"record (t={t}, l={l}) has negative values")
        self._fh.write(values.tobytes())
        self._next += 1

    def close(self) -> int:
        """Flush and close; returns bytes written. Errors if incomplete."""
        try:
            if self._next != self.expected_records:
                raise DumpWriteError(
                    f"wrote {self._next} of {self.expected_records} records"
                )
        finally:
            self._fh.close()
        return self.path.stat().st_size

    def __enter__(self) -> "DumpWriter":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is None:
            self.close()
        else:
            self._fh.close()
