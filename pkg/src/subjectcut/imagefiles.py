"""Readers and writers for the on-disk image formats.

Float maps travel as 16-bit big-endian PGM (full [0, 1] range mapped to
0..65535), label and mask images as 8-bit PGM, and composited output as
8-bit RGBA PNG through Pillow. PGM headers are written in a single fixed
layout so identical arrays produce identical bytes.
"""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

_PGM_HEADER = re.compile(rb"^P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s")


def _parse_pgm(raw: bytes) -> tuple[int, int, int, bytes]:
    match = _PGM_HEADER.match(raw)
    if match is None:
        raise ValueError("not a binary PGM (P5) file")
    width, height, maxval = (int(g) for g in match.groups())
    return width, height, maxval, raw[match.end() :]


def write_pgm8(path, data: np.ndarray) -> None:
    """uint8 (h, w) array to binary PGM."""
    data = np.asarray(data)
    if data.ndim != 2 or data.dtype != np.uint8:
        raise ValueError(f"expected uint8 (h, w), got {data.dtype} {data.shape}")
    h, w = data.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + data.tobytes())


def read_pgm8(path) -> np.ndarray:
    width, height, maxval, body = _parse_pgm(Path(path).read_bytes())
    if maxval != 255:
        raise ValueError(f"expected 8-bit PGM, maxval is {maxval}")
    expected = width * height
    if len(body) < expected:
        raise ValueError("PGM pixel data truncated")
    return np.frombuffer(body[:expected], dtype=np.uint8).reshape(height, width).copy()


def write_pgm16(path, data: np.ndarray) -> None:
    """Float (h, w) array in [0, 1] to 16-bit big-endian PGM."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError(f"expected a 2-d map, got shape {data.shape}")
    if not np.isfinite(data).all() or data.min() < 0.0 or data.max() > 1.0:
        raise ValueError("map values must be finite and in [0, 1]")
    h, w = data.shape
    scaled = np.round(data * 65535.0).astype(">u2")
    Path(path).write_bytes(b"P5\n%d %d\n65535\n" % (w, h) + scaled.tobytes())


def read_pgm16(path) -> np.ndarray:
    """16-bit PGM back to float64 in [0, 1]."""
    width, height, maxval, body = _parse_pgm(Path(path).read_bytes())
    if maxval != 65535:
        raise ValueError(f"expected 16-bit PGM, maxval is {maxval}")
    expected = width * height * 2
    if len(body) < expected:
        raise ValueError("PGM pixel data truncated")
    raw = np.frombuffer(body[:expected], dtype=">u2").reshape(height, width)
    return raw.astype(np.float64) / 65535.0


def write_png_rgba(path, rgba: np.ndarray) -> None:
    if rgba.ndim != 3 or rgba.shape[2] != 4 or rgba.dtype != np.uint8:
        raise ValueError(f"expected uint8 (h, w, 4), got {rgba.dtype} {rgba.shape}")
    Image.fromarray(rgba, mode="RGBA").save(Path(path), format="PNG")


def read_png_rgba(path) -> np.ndarray:
    with Image.open(Path(path)) as img:
        return np.asarray(img.convert("RGBA"))


def read_png_rgb(path) -> np.ndarray:
    with Image.open(Path(path)) as img:
        return np.asarray(img.convert("RGB"))


def write_png_rgb(path, rgb: np.ndarray) -> None:
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError(f"expected uint8 (h, w, 3), got {rgb.dtype} {rgb.shape}")
    Image.fromarray(rgb, mode="RGB").save(Path(path), format="PNG")
