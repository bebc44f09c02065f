"""Cross-attention extraction and entropy-weighted fusion.

Each (step, layer) attention record contributes one token-major map. Maps
are scored by the Shannon entropy of their per-token value histograms and
merged with inverse-entropy weights, so concentrated (informative) maps
dominate diffuse ones.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dumpio import AttentionRecord, DumpHeader, Layout, TokenTable
from .errors import RecordOrderError, ShapeMismatchError, UnmatchedKeywordError

# Leading/trailing subword markers common across BPE/SentencePiece vocabularies.
_STRIP_PREFIXES = ("Ġ", "▁", "##")
_STRIP_SUFFIXES = ("</w>",)


@dataclass
class CrossAttentionMap:
    t: int
    l: int
    data: np.ndarray  # (N, hw), head-mean applied, nonnegative


@dataclass(frozen=True)
class EntropyScore:
    t: int
    l: int
    H: float  # bits
    bins: int


@dataclass(frozen=True)
class WeightConfig:
    epsilon: float = 1e-6
    bins: int = 256

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.bins < 2:
            raise ValueError("bins must be >= 2")


@dataclass
class FusedMap:
    data: np.ndarray  # (N, hw)
    provenance: tuple  # ((t, l, weight), ...) covering every map once
    scores: tuple = ()  # matching EntropyScore per provenance entry


@dataclass
class KeywordMap:
    keyword: str
    token_indices: tuple
    data: np.ndarray  # (hw,), min-max normalized; all-zero when degenerate


def extract_cross(record: AttentionRecord, header: DumpHeader) -> CrossAttentionMap:
    """Pull the image-query/text-key block and reduce heads by mean.

    Joint records are sliced according to header.text_first and transposed
    to token-major (N, hw); cross-only records just get the head mean.
    """
    values = np.asarray(record.values)
    if values.shape != header.record_shape:
        raise ShapeMismatchError(
            f"record shape {values.shape} does not match header "
            f"{header.record_shape}"
        )
    if header.layout is Layout.CROSS_ONLY:
        data = values.mean(axis=2, dtype=np.float64)
    else:
        n, hw = header.N, header.hw
        if header.text_first:
            block = values[n:, :n, :]  # image queries x text keys
        else:
            block = values[:hw, hw:, :]
        data = block.mean(axis=2, dtype=np.float64).T  # token-major
    return CrossAttentionMap(t=record.t, l=record.l, data=data)


def _normalize_row(row: np.ndarray) -> np.ndarray:
    lo = row.min()
    hi = row.max()
    if hi > lo:
        return (row - lo) / (hi - lo)
    return np.zeros_like(row)


def entropy_of_map(
    cmap: CrossAttentionMap,
    cfg: WeightConfig,
    valid_mask: Sequence[bool],
) -> EntropyScore:
    """Histogram entropy in bits, averaged over valid token rows.

    Each row is min-max normalized so the cfg.bins equal bins over [0, 1]
    are well defined; padding tokens are excluded from the average.
    """
    data = cmap.data
    if data.size == 0:
        raise ValueError("empty attention map")
    valid = [i for i, v in enumerate(valid_mask) if v]
    if not valid:
        raise ValueError("all tokens masked out")
    total = 0.0
    for n in valid:
        norm = _normalize_row(data[n])
        counts, _ = np.histogram(norm, bins=cfg.bins, range=(0.0, 1.0))
        p = counts[counts > 0] / norm.size
        total += float(-(p * np.log2(p)).sum())
    return EntropyScore(t=cmap.t, l=cmap.l, H=total / len(valid), bins=cfg.bins)


def weight_of(score: EntropyScore, cfg: WeightConfig) -> float:
    return 1.0 / (score.H + cfg.epsilon)


def fuse(
    maps: Iterable[CrossAttentionMap],
    cfg: WeightConfig,
    valid_mask: Sequence[bool],
    entropy_mask: Sequence[bool] | None = None,
) -> FusedMap:
    """Inverse-entropy weighted mean over all (t, l) maps.

    entropy_mask optionally restricts the entropy average to a token
    subset (e.g. keyword tokens only) while fusion still covers all rows.
    Summation runs in fixed (l, t) order, so the result is bit-stable
    under any input ordering.
    """
    by_key: dict[tuple[int, int], CrossAttentionMap] = {}
    for m in maps:
        key = (m.t, m.l)
        if key in by_key:
            raise RecordOrderError(f"duplicate map for (t={m.t}, l={m.l})")
        by_key[key] = m
    if not by_key:
        raise RecordOrderError("no maps to fuse")
    T = max(t for t, _ in by_key) + 1
    L = max(l for _, l in by_key) + 1
    missing = [
        (t, l) for t in range(T) for l in range(L) if (t, l) not in by_key
    ]
    if missing:
        raise RecordOrderError(f"missing maps for (t, l) in {missing[:8]}")

    shape = next(iter(by_key.values())).data.shape
    for m in by_key.values():
        if m.data.shape != shape:
            raise ShapeMismatchError(
                f"map (t={m.t}, l={m.l}) shape {m.data.shape} != {shape}"
            )

    if entropy_mask is None:
        entropy_mask = valid_mask
    acc = np.zeros(shape, dtype=np.float64)
    provenance = []
    scores = []
    for l in range(L):
        for t in range(T):
            m = by_key[(t, l)]
            score = entropy_of_map(m, cfg, entropy_mask)
            w = weight_of(score, cfg)
            acc += w * m.data
            provenance.append((t, l, w))
            scores.append(score)
    return FusedMap(
        data=acc / (T * L),
        provenance=tuple(provenance),
        scores=tuple(scores),
    )


def _normalize_token(token: str) -> str:
    out = token.strip()
    for prefix in _STRIP_PREFIXES:
        if out.startswith(prefix):
            out = out[len(prefix):]
    for suffix in _STRIP_SUFFIXES:
        if out.endswith(suffix):
            out = out[: -len(suffix)]
    return out.casefold()


def match_keyword_tokens(tokens: TokenTable, keyword: str) -> tuple[int, ...]:
    """Indices of valid tokens spelling the keyword.

    Exact case-folded match per token, plus contiguous subword runs whose
    concatenation equals the keyword. All occurrences contribute.
    """
    target = keyword.strip().casefold()
    norm = [_normalize_token(tok) for tok in tokens.tokens]
    hits: set[int] = set()
    n = len(norm)
    for start in range(n):
        if not tokens.valid_mask[start]:
            continue
        acc = ""
        for end in range(start, n):
            if not tokens.valid_mask[end]:
                break
            acc += norm[end]
            if len(acc) > len(target):
                break
            if acc == target:
                hits.update(range(start, end + 1))
                break
    return tuple(sorted(hits))


def keyword_maps(
    fused: FusedMap,
    tokens: TokenTable,
    keywords: Sequence[str],
) -> tuple[list[KeywordMap], KeywordMap]:
    """Per-keyword normalized maps plus their pixelwise-max union map."""
    if not keywords:
        raise ValueError("no keywords given")
    maps = []
    for keyword in keywords:
        indices = match_keyword_tokens(tokens, keyword)
        if not indices:
            raise UnmatchedKeywordError(
                keyword,
                [tokens.tokens[i] for i in tokens.valid_indices()],
            )
        raw = fused.data[list(indices)].mean(axis=0)
        maps.append(
            KeywordMap(
                keyword=keyword,
                token_indices=indices,
                data=_normalize_row(raw),
            )
        )
    stacked = np.stack([m.data for m in maps])
    union = KeywordMap(
        keyword="+".join(keywords),
        token_indices=tuple(sorted({i for m in maps for i in m.token_indices})),
        data=_normalize_row(stacked.max(axis=0)),
    )
    return maps, union
