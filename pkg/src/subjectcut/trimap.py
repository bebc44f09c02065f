"""Latent-resolution keyword maps to image-resolution 4-value trimaps."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidValuesError


class Label(enum.IntEnum):
    SURE_BG = 0
    PROB_BG = 1
    PROB_FG = 2
    SURE_FG = 3


# 8-bit codes used when a trimap is written out as a PGM.
PGM_CODES = {
    Label.SURE_FG: 255,
    Label.PROB_FG: 170,
    Label.PROB_BG: 85,
    Label.SURE_BG: 0,
}


@dataclass(frozen=True)
class ThresholdConfig:
    sure_fg: float = 0.8
    prob_fg: float = 0.2
    prob_bg: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.prob_bg < self.prob_fg < self.sure_fg <= 1.0:
            raise ValueError(
                "thresholds must satisfy 0 <= prob_bg < prob_fg < sure_fg <= 1"
            )


@dataclass
class Trimap:
    labels: np.ndarray  # (H, W) uint8 of Label values

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def mask(self, label: Label) -> np.ndarray:
        return self.labels == int(label)

    def counts(self) -> dict:
        return {lab.name: int((self.labels == int(lab)).sum()) for lab in Label}

    def to_pgm_codes(self) -> np.ndarray:
        out = np.empty_like(self.labels)
        for lab, code in PGM_CODES.items():
            out[self.labels == int(lab)] = code
        return out

    @classmethod
    def from_pgm_codes(cls, codes: np.ndarray) -> "Trimap":
        labels = np.full(codes.shape, 255, dtype=np.uint8)
        for lab, code in PGM_CODES.items():
            labels[codes == code] = int(lab)
        if (labels == 255).any():
            bad = sorted(set(np.unique(codes)) - set(PGM_CODES.values()))
            raise InvalidValuesError(f"unknown trimap codes {bad}")
        return cls(labels)


def upsample(data: np.ndarray, target_w: int, target_h: int) -> np.ndarray:
    """Bilinear resize with align-corners sampling, clamped to [0, 1]."""
    if target_w < 1 or target_h < 1:
        raise ValueError("target dims must be >= 1")
    src = np.asarray(data, dtype=np.float64)
    h, w = src.shape
    if target_h < h or target_w < w:
        raise ValueError(
            f"target {target_w}x{target_h} smaller than source {w}x{h}"
        )

    def coords(n_out, n_in):
        if n_out == 1:
            return np.zeros(1)
        return np.linspace(0.0, n_in - 1.0, n_out)

    ys = coords(target_h, h)
    xs = coords(target_w, w)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]

    top = (1.0 - wx) * src[np.ix_(y0, x0)] + wx * src[np.ix_(y0, x1)]
    bottom = (1.0 - wx) * src[np.ix_(y1, x0)] + wx * src[np.ix_(y1, x1)]
    out = (1.0 - wy) * top + wy * bottom
    return np.clip(out, 0.0, 1.0)


def build_trimap(image: np.ndarray, cfg: ThresholdConfig = ThresholdConfig()) -> Trimap:
    """Threshold a [0, 1] map into the 4 bands; lower bounds inclusive."""
    values = np.asarray(image, dtype=np.float64)
    if values.size == 0:
        raise ValueError("empty map")
    if not np.isfinite(values).all() or values.min() < 0 or values.max() > 1:
        raise InvalidValuesError("trimap input values must lie in [0, 1]")
    labels = np.full(values.shape, int(Label.SURE_BG), dtype=np.uint8)
    labels[values >= cfg.prob_bg] = int(Label.PROB_BG)
    labels[values >= cfg.prob_fg] = int(Label.PROB_FG)
    labels[values >= cfg.sure_fg] = int(Label.SURE_FG)
    return Trimap(labels)
