"""Binary-alpha composition of a subject mask onto an RGB image.

Alpha is strictly 0 or 255 and RGB is zeroed wherever alpha is 0, so the
output file carries no color data outside the subject. All arithmetic is
integer selection; round-tripping through flatten is bit-exact.
"""
from __future__ import annotations

import numpy as np


def compose(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """RGB uint8 (h, w, 3) + boolean mask -> RGBA uint8 with alpha in {0, 255}."""
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError(f"expected uint8 (h, w, 3) image, got {image.dtype} {image.shape}")
    if mask.shape != image.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match image {image.shape[:2]}")
    mask = mask.astype(bool)
    rgba = np.zeros(image.shape[:2] + (4,), dtype=np.uint8)
    rgba[..., :3] = np.where(mask[..., None], image, np.uint8(0))
    rgba[..., 3] = np.where(mask, np.uint8(255), np.uint8(0))
    return rgba


def checkerboard(
    height: int,
    width: int,
    cell: int = 8,
    light: int = 200,
    dark: int = 120,
) -> np.ndarray:
    """Grey checker pattern, the usual transparency backdrop."""
    if cell < 1:
        raise ValueError("cell must be >= 1")
    rows = (np.arange(height) // cell)[:, None]
    cols = (np.arange(width) // cell)[None, :]
    board = np.where((rows + cols) % 2 == 0, np.uint8(light), np.uint8(dark))
    return np.repeat(board[..., None], 3, axis=2)


def flatten(rgba: np.ndarray, background=(255, 255, 255)) -> np.ndarray:
    """Composite RGBA over a background; returns RGB uint8.

    background may be an RGB triple, a full (h, w, 3) uint8 image, or the
    string "checkerboard". The integer blend reduces to exact per-pixel
    selection whenever alpha is binary.
    """
    if rgba.ndim != 3 or rgba.shape[2] != 4 or rgba.dtype != np.uint8:
        raise ValueError(f"expected uint8 (h, w, 4) image, got {rgba.dtype} {rgba.shape}")
    h, w = rgba.shape[:2]
    if isinstance(background, str):
        if background != "checkerboard":
            raise ValueError(f"unknown background {background!r}")
        bg = checkerboard(h, w)
    else:
        bg = np.asarray(background, dtype=np.uint8)
        if bg.shape == (3,):
            bg = np.broadcast_to(bg, (h, w, 3))
        elif bg.shape != (h, w, 3):
            raise ValueError(f"background shape {bg.shape} does not fit image ({h}, {w}, 3)")
    alpha = rgba[..., 3].astype(np.uint16)
    src = rgba[..., :3].astype(np.uint16)
    out = (src * alpha[..., None] + bg.astype(np.uint16) * (255 - alpha[..., None]) + 127) // 255
    return out.astype(np.uint8)
