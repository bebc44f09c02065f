"""Deterministic attention-dump generator that needs no model weights.

Every (step, block) record is a genuine multi-head softmax over random
query/key features, seeded per record, so downstream consumers see the
same numeric texture a real capture produces: row-stochastic joint
matrices, head axes, padding tokens. The attention for a given
(seed, step, block) is identical whether the file stores the full joint
matrix or only the cross block, so both layouts describe the same run.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .atnd import LAYOUT_CROSS, LAYOUT_JOINT, DumpWriter

HEAD_DIM = 16
PAD_TOKEN = "<pad>"


def attention_plane(seed: int, t: int, l: int, side: int, heads: int) -> np.ndarray:
    """Softmax(Q K^T / sqrt(d)) per head; (side, side, heads) float64.

    Seeded by (seed, t, l) only, so the plane does not depend on which
    layout or head reduction the caller writes.
    """
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([seed, t, l]))
    )
    q = rng.standard_normal((heads, side, HEAD_DIM))
    k = rng.standard_normal((heads, side, HEAD_DIM))
    # einsum keeps the accumulation order fixed regardless of BLAS setup
    logits = np.einsum("hqd,hkd->hqk", q, k) / np.sqrt(HEAD_DIM)
    logits -= logits.max(axis=2, keepdims=True)
    weights = np.exp(logits)
    weights /= weights.sum(axis=2, keepdims=True)
    return np.ascontiguousarray(weights.transpose(1, 2, 0))


def cross_block(joint: np.ndarray, n: int, hw: int, text_first: bool) -> np.ndarray:
    """Token-major (N, hw, f) image-query/text-key block of a joint plane."""
    if text_first:
        block = joint[n:, :n, :]
    else:
        block = joint[:hw, hw:, :]
    return np.ascontiguousarray(block.transpose(1, 0, 2))


def stub_capture(
    path,
    *,
    tokens,
    steps: int = 2,
    blocks: int = 2,
    height: int = 8,
    width: int = 8,
    heads: int = 2,
    seed: int = 0,
    cross_only: bool = True,
    text_first: bool = True,
    head_mean: bool = False,
    pad: int = 0,
    image_path=None,
) -> Path:
    """Write a synthetic ATND capture to `path`; returns the dump path.

    `pad` appends that many padding tokens (marked invalid) after the
    real ones; they still take part in the attention. `head_mean`
    averages the head axis down to f=1 before writing. `image_path`,
    when given, also writes a deterministic RGB preview at 8x the
    latent resolution.
    """
    tokens = [str(t) for t in tokens]
    if not tokens:
        raise ValueError("need at least one token")
    if pad < 0:
        raise ValueError("pad must be >= 0")
    for name, value in (("steps", steps), ("blocks", blocks),
                        ("height", height), ("width", width),
                        ("heads", heads)):
        if value < 1:
            raise ValueError(f"{name} must be >= 1")

    all_tokens = tokens + [PAD_TOKEN] * pad
    valid = [True] * len(tokens) + [False] * pad
    n = len(all_tokens)
    hw = height * width
    side = hw + n
    f_out = 1 if head_mean else heads

    path = Path(path)
    writer = DumpWriter(
        path,
        layout=LAYOUT_CROSS if cross_only else LAYOUT_JOINT,
        steps=steps,
        layers=blocks,
        tokens=all_tokens,
        valid_mask=valid,
        height=height,
        width=width,
        heads=f_out,
        text_first=text_first,
    )
    with writer:
        for t in range(steps):
            for l in range(blocks):
                joint = attention_plane(seed, t, l, side, heads)
                record = (
                    cross_block(joint, n, hw, text_first) if cross_only
                    else joint
                )
                if head_mean:
                    record = record.mean(axis=2, keepdims=True)
                writer.add(t, l, record.astype(np.float32))

    if image_path is not None:
        write_preview_image(image_path, height=height, width=width, seed=seed)
    return path


def write_preview_image(path, *, height: int, width: int, seed: int,
                        scale: int = 8) -> Path:
    """Deterministic RGB stand-in for the decoded sample."""
    from PIL import Image

    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([seed, 0x1A7E7]))
    )
    coarse = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    pixels = np.repeat(np.repeat(coarse, scale, axis=0), scale, axis=1)
    path = Path(path)
    Image.fromarray(pixels, mode="RGB").save(path, format="PNG")
    return path
