"""Attention capture for MM-DiT text-to-image samplers.

The transformer runs 19 dual-stream blocks (separate text/image states
joined for attention) followed by 38 single-stream blocks (one fused
sequence), text tokens first in both cases. We wrap the attention
processors of the selected blocks to recompute the softmax weights from
the same projected, normalized, rotary-embedded queries and keys the
model uses, stash them per block, and flush one ATND record per
(step, block) after every scheduler step. The sampling trajectory is
untouched: outputs still come from the stock processor.

Joint attention at full resolution is enormous (sequence ~4.6k, ~24
heads), so the default emission keeps only the image-query/text-key
block with heads averaged; that is all the downstream mask pipeline
reads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .atnd import LAYOUT_CROSS, LAYOUT_JOINT, DumpWriter

DUAL_STREAM_BLOCKS = 19
SINGLE_STREAM_BLOCKS = 38
TOTAL_BLOCKS = DUAL_STREAM_BLOCKS + SINGLE_STREAM_BLOCKS
DEFAULT_MODEL = "black-forest-labs/FLUX.1-dev"
DEFAULT_STEPS = 30
DEFAULT_MAX_TOKENS = 512

HEAD_MODES = ("mean", "store-all")
LAYOUTS = ("cross", "joint")


class ModelUnavailableError(Exception):
    """The model stack could not be imported or loaded."""


@dataclass
class HookConfig:
    """What to sample and which attention tensors to keep.

    `blocks` lists transformer block indices in [0, 57): 0..18 are the
    dual-stream blocks, 19..56 the single-stream ones. None captures
    all of them. `head_mode` "mean" averages heads to f=1, "store-all"
    keeps every head. `layout` "cross" stores only the
    image-query/text-key block, "joint" the full attention matrix.
    """

    prompt: str
    out: Path
    model: str = DEFAULT_MODEL
    steps: int = DEFAULT_STEPS
    blocks: Optional[Sequence[int]] = None
    head_mode: str = "mean"
    layout: str = "cross"
    seed: int = 0
    max_tokens: int = DEFAULT_MAX_TOKENS
    image_out: Optional[Path] = None

    def resolved_blocks(self) -> list[int]:
        if self.blocks is None:
            return list(range(TOTAL_BLOCKS))
        return sorted(set(int(b) for b in self.blocks))

    def resolved_image_out(self) -> Path:
        if self.image_out is not None:
            return Path(self.image_out)
        return Path(self.out).with_suffix(".png")

    def validate(self) -> None:
        if not str(self.prompt).strip():
            raise ValueError("prompt must be nonempty")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        blocks = self.resolved_blocks()
        if not blocks:
            raise ValueError("at least one block must be captured")
        for b in blocks:
            if not 0 <= b < TOTAL_BLOCKS:
                raise ValueError(
                    f"block index {b} outside [0, {TOTAL_BLOCKS})"
                )
        if self.head_mode not in HEAD_MODES:
            raise ValueError(
                f"head_mode must be one of {HEAD_MODES}, got {self.head_mode!r}"
            )
        if self.layout not in LAYOUTS:
            raise ValueError(
                f"layout must be one of {LAYOUTS}, got {self.layout!r}"
            )
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass
class CaptureResult:
    dump_path: Path
    image_path: Path
    steps: int
    blocks: list[int]
    tokens: int


def _import_model_stack():
    try:
        import torch  # noqa: F401
    except ImportError as exc:
        raise ModelUnavailableError(
            f"torch is required for model capture: {exc}"
        ) from exc
    try:
        import diffusers
        from diffusers import FluxPipeline
        from diffusers.models.embeddings import apply_rotary_emb
    except ImportError as exc:
        raise ModelUnavailableError(
            f"diffusers is required for model capture: {exc}"
        ) from exc
    import torch

    return torch, diffusers, FluxPipeline, apply_rotary_emb


class _CaptureProcessor:
    """Wraps one attention processor; records softmax(Q K^T / sqrt(d)).

    Queries and keys are rebuilt with the module's own projections,
    norms, and rotary embedding, so the recorded weights match what
    scaled-dot-product attention uses internally. The wrapped processor
    still produces the block output.
    """

    def __init__(self, inner, sink: dict, block_index: int, torch, rope):
        self._inner = inner
        self._sink = sink
        self._block = block_index
        self._torch = torch
        self._rope = rope

    def __call__(
        self,
        attn,
        hidden_states,
        encoder_hidden_states=None,
        attention_mask=None,
        image_rotary_emb=None,
        **kwargs,
    ):
        torch = self._torch
        with torch.no_grad():
            batch = hidden_states.shape[0]
            query = attn.to_q(hidden_states)
            key = attn.to_k(hidden_states)
            head_dim = key.shape[-1] // attn.heads
            query = query.view(batch, -1, attn.heads, head_dim).transpose(1, 2)
            key = key.view(batch, -1, attn.heads, head_dim).transpose(1, 2)
            if attn.norm_q is not None:
                query = attn.norm_q(query)
            if attn.norm_k is not None:
                key = attn.norm_k(key)
            if encoder_hidden_states is not None:
                # dual-stream block: text projections go in front
                eq = attn.add_q_proj(encoder_hidden_states)
                ek = attn.add_k_proj(encoder_hidden_states)
                eq = eq.view(batch, -1, attn.heads, head_dim).transpose(1, 2)
                ek = ek.view(batch, -1, attn.heads, head_dim).transpose(1, 2)
                if attn.norm_added_q is not None:
                    eq = attn.norm_added_q(eq)
                if attn.norm_added_k is not None:
                    ek = attn.norm_added_k(ek)
                query = torch.cat([eq, query], dim=2)
                key = torch.cat([ek, key], dim=2)
            if image_rotary_emb is not None:
                query = self._rope(query, image_rotary_emb)
                key = self._rope(key, image_rotary_emb)
            logits = query.float() @ key.float().transpose(-1, -2)
            probs = torch.softmax(logits / math.sqrt(head_dim), dim=-1)
            self._sink[self._block] = probs[0]  # (heads, S, S), on device
        return self._inner(
            attn,
            hidden_states,
            encoder_hidden_states=encoder_hidden_states,
            attention_mask=attention_mask,
            image_rotary_emb=image_rotary_emb,
            **kwargs,
        )


def _attention_module(transformer, block_index: int):
    if block_index < DUAL_STREAM_BLOCKS:
        return transformer.transformer_blocks[block_index].attn
    return transformer.single_transformer_blocks[
        block_index - DUAL_STREAM_BLOCKS
    ].attn


def _record_from_probs(probs, n: int, hw: int, head_mean: bool,
                       cross_only: bool) -> np.ndarray:
    """(heads, S, S) device tensor -> ATND record array."""
    if cross_only:
        probs = probs[:, n:, :n]  # image queries x text keys
    plane = probs.to("cpu").numpy().transpose(1, 2, 0)
    if cross_only:
        plane = plane.transpose(1, 0, 2)  # token-major (N, hw, f)
    if head_mean:
        plane = plane.mean(axis=2, keepdims=True)
    return np.ascontiguousarray(plane, dtype=np.float32)


def capture_run(cfg: HookConfig) -> CaptureResult:
    """Sample one image while streaming attention records to disk.

    Needs the model stack installed and the weights reachable; raises
    ModelUnavailableError otherwise. Records flush after every
    scheduler step so peak memory stays at one step's worth of maps.
    """
    cfg.validate()
    torch, _, FluxPipeline, apply_rotary_emb = _import_model_stack()

    try:
        pipe = FluxPipeline.from_pretrained(
            cfg.model, torch_dtype=torch.bfloat16
        )
    except Exception as exc:
        raise ModelUnavailableError(
            f"could not load model {cfg.model!r}: {exc}"
        ) from exc
    device = "cuda" if torch.cuda.is_available() else "cpu"
    pipe = pipe.to(device)

    tokenizer = pipe.tokenizer_2
    encoded = tokenizer(
        cfg.prompt,
        padding="max_length",
        max_length=cfg.max_tokens,
        truncation=True,
        return_tensors="np",
    )
    ids = encoded["input_ids"][0]
    tokens = tokenizer.convert_ids_to_tokens(list(ids))
    valid = [bool(v) for v in (ids != tokenizer.pad_token_id)]
    n = len(tokens)

    blocks = cfg.resolved_blocks()
    sink: dict[int, object] = {}
    installed = []
    for b in blocks:
        attn = _attention_module(pipe.transformer, b)
        inner = attn.processor
        attn.processor = _CaptureProcessor(
            inner, sink, b, torch, apply_rotary_emb
        )
        installed.append((attn, inner))

    head_mean = cfg.head_mode == "mean"
    cross_only = cfg.layout == "cross"
    sample_h = pipe.default_sample_size * pipe.vae_scale_factor
    latent_side = sample_h // (pipe.vae_scale_factor * 2)  # 2x2 patches
    hw = latent_side * latent_side

    writer = DumpWriter(
        cfg.out,
        layout=LAYOUT_CROSS if cross_only else LAYOUT_JOINT,
        steps=cfg.steps,
        layers=len(blocks),
        tokens=tokens,
        valid_mask=valid,
        height=latent_side,
        width=latent_side,
        heads=1 if head_mean else pipe.transformer.config.num_attention_heads,
        text_first=True,
    )

    def flush(pipeline, step, timestep, callback_kwargs):
        for l, b in enumerate(blocks):
            probs = sink.pop(b)
            writer.add(
                step, l,
                _record_from_probs(probs, n, hw, head_mean, cross_only),
            )
        return callback_kwargs

    try:
        result = pipe(
            cfg.prompt,
            num_inference_steps=cfg.steps,
            generator=torch.Generator("cpu").manual_seed(cfg.seed),
            max_sequence_length=cfg.max_tokens,
            callback_on_step_end=flush,
        )
        writer.close()
    finally:
        for attn, inner in installed:
            attn.processor = inner

    image_path = cfg.resolved_image_out()
    result.images[0].save(image_path)
    return CaptureResult(
        dump_path=Path(cfg.out),
        image_path=image_path,
        steps=cfg.steps,
        blocks=blocks,
        tokens=n,
    )
