"""Reader/writer for the ATND attention-dump interchange format.

An ATND v1 file carries every attention record of one sampling run so the
mask pipeline never needs the generative model in-process. Byte layout,
all integers little-endian:

    magic      4 bytes   b"ATND"
    version    u32       1
    layout     u32       0 = joint, 1 = cross-only
    T          u32       sampling step count
    L          u32       captured layer count
    N          u32       text-token count
    h, w       u32 x2    latent spatial dims
    f          u32       head count
    dtype      u32       0 = float32 little-endian (only value in v1)
    text_first u32       1 if text tokens precede image tokens in the
                         joint sequence, else 0
    tokens     N times   u32 byte length + UTF-8 bytes
    valid_mask N bytes   1 = real token, 0 = padding/special
    records    T*L chunks of raw float32, (t-major, l-minor) order

A joint record stores (hw+N) x (hw+N) x f values row-major; a cross-only
record stores N x hw x f (token-major, pixels as columns, head-last).
Values must be finite and non-negative; joint rows are softmax output and
must sum to 1 within 1e-3.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    DumpFormatError,
    DumpTruncatedError,
    InvalidValuesError,
    RecordOrderError,
    ShapeMismatchError,
)

MAGIC = b"ATND"
VERSION = 1
DTYPE_F32 = 0
ROW_SUM_TOL = 1e-3

_HEADER_STRUCT = struct.Struct("<4sIIIIIIIIII")


class Layout(enum.Enum):
    JOINT = 0
    CROSS_ONLY = 1


@dataclass(frozen=True)
class DumpHeader:
    layout: Layout
    T: int
    L: int
    N: int
    h: int
    w: int
    f: int
    text_first: bool = True
    version: int = VERSION

    @property
    def hw(self) -> int:
        return self.h * self.w

    @property
    def record_shape(self) -> tuple[int, int, int]:
        if self.layout is Layout.JOINT:
            side = self.hw + self.N
            return (side, side, self.f)
        return (self.N, self.hw, self.f)

    @property
    def values_per_record(self) -> int:
        a, b, c = self.record_shape
        return a * b * c

    def validate(self) -> None:
        for name in ("T", "L", "N", "h", "w", "f"):
            if getattr(self, name) < 1:
                raise DumpFormatError(f"header field {name} must be >= 1")
        if self.version != VERSION:
            raise DumpFormatError(f"unsupported dump version {self.version}")


@dataclass(frozen=True)
class TokenTable:
    tokens: tuple[str, ...]
    valid_mask: tuple[bool, ...]

    def __post_init__(self):
        if len(self.tokens) != len(self.valid_mask):
            raise DumpFormatError("tokens and valid_mask lengths differ")
        if len(self.tokens) == 0:
            raise DumpFormatError("token table is empty")
        if not any(self.valid_mask):
            raise DumpFormatError("token table has no valid token")

    @classmethod
    def of(cls, tokens: Sequence[str], valid_mask: Sequence[bool] | None = None):
        if valid_mask is None:
            valid_mask = [True] * len(tokens)
        return cls(tuple(tokens), tuple(bool(v) for v in valid_mask))

    def valid_indices(self) -> list[int]:
        return [i for i, v in enumerate(self.valid_mask) if v]


@dataclass
class AttentionRecord:
    t: int
    l: int
    values: np.ndarray  # shape per DumpHeader.record_shape, float32


def _check_record(record: AttentionRecord, header: DumpHeader) -> np.ndarray:
    values = np.asarray(record.values, dtype=np.float32)
    if values.shape != header.record_shape:
        raise ShapeMismatchError(
            f"record (t={record.t}, l={record.l}) has shape {values.shape}, "
            f"header demands {header.record_shape}"
        )
    if not np.isfinite(values).all():
        raise InvalidValuesError(
            f"record (t={record.t}, l={record.l}) contains non-finite values"
        )
    if (values < 0).any():
        raise InvalidValuesError(
            f"record (t={record.t}, l={record.l}) contains negative values"
        )
    return values


def write_dump(
    header: DumpHeader,
    tokens: TokenTable,
    records: Iterable[AttentionRecord],
    destination: BinaryIO,
) -> int:
    """Serialize one dump; returns the number of bytes written.

    Records must arrive in (t-major, l-minor) order covering every (t, l)
    exactly once; anything else raises RecordOrderError.
    """
    header.validate()
    if len(tokens.tokens) != header.N:
        raise DumpFormatError(
            f"token table has {len(tokens.tokens)} entries, header N={header.N}"
        )

    written = 0

    def put(data: bytes) -> None:
        nonlocal written
        destination.write(data)
        written += len(data)

    put(
        _HEADER_STRUCT.pack(
            MAGIC,
            header.version,
            header.layout.value,
            header.T,
            header.L,
            header.N,
            header.h,
            header.w,
            header.f,
            DTYPE_F32,
            1 if header.text_first else 0,
        )
    )
    for token in tokens.tokens:
        raw = token.encode("utf-8")
        put(struct.pack("<I", len(raw)))
        put(raw)
    put(bytes(1 if v else 0 for v in tokens.valid_mask))

    expected = ((t, l) for t in range(header.T) for l in range(header.L))
    count = 0
    for record, want in zip(records, expected):
        if (record.t, record.l) != want:
            raise RecordOrderError(
                f"expected record {want}, got (t={record.t}, l={record.l})"
            )
        values = _check_record(record, header)
        put(values.astype("<f4", copy=False).tobytes())
        count += 1
    if count != header.T * header.L:
        raise RecordOrderError(
            f"dump needs {header.T * header.L} records, got {count}"
        )
    return written


def _read_exact(source: BinaryIO, n: int, what: str) -> bytes:
    data = source.read(n)
    if len(data) != n:
        raise DumpFormatError(f"dump truncated while reading {what}")
    return data


def read_dump(
    source: BinaryIO,
) -> tuple[DumpHeader, TokenTable, Iterator[AttentionRecord]]:
    """Parse header and token table eagerly, stream records lazily.

    The returned iterator holds at most one record in memory; each record
    is validated (finiteness, sign, joint row sums) as it is yielded.
    """
    raw = _read_exact(source, _HEADER_STRUCT.size, "header")
    (magic, version, layout, T, L, N, h, w, f, dtype, text_first) = (
        _HEADER_STRUCT.unpack(raw)
    )
    if magic != MAGIC:
        raise DumpFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise DumpFormatError(f"unsupported dump version {version}")
    if dtype != DTYPE_F32:
        raise DumpFormatError(f"unsupported dtype code {dtype}")
    try:
        layout = Layout(layout)
    except ValueError:
        raise DumpFormatError(f"unknown layout code {layout}") from None
    header = DumpHeader(
        layout=layout, T=T, L=L, N=N, h=h, w=w, f=f,
        text_first=bool(text_first), version=version,
    )
    header.validate()

    token_list = []
    for i in range(N):
        (length,) = struct.unpack("<I", _read_exact(source, 4, f"token {i} length"))
        token_list.append(_read_exact(source, length, f"token {i}").decode("utf-8"))
    mask = _read_exact(source, N, "valid mask")
    tokens = TokenTable(tuple(token_list), tuple(b != 0 for b in mask))

    def records() -> Iterator[AttentionRecord]:
        nbytes = header.values_per_record * 4
        for t in range(header.T):
            for l in range(header.L):
                chunk = source.read(nbytes)
                if len(chunk) != nbytes:
                    raise DumpTruncatedError(t, l)
                values = (
                    np.frombuffer(chunk, dtype="<f4")
                    .reshape(header.record_shape)
                    .copy()
                )
                record = AttentionRecord(t=t, l=l, values=values)
                _check_record(record, header)
                if header.layout is Layout.JOINT:
                    sums = values.sum(axis=1, dtype=np.float64)
                    worst = np.abs(sums - 1.0).max()
                    if worst > ROW_SUM_TOL:
                        raise InvalidValuesError(
                            f"record (t={t}, l={l}) violates the softmax "
                            f"invariant: row sum off by {worst:.4g}"
                        )
                yield record

    return header, tokens, records()


def read_dump_file(path) -> tuple[DumpHeader, TokenTable, list[AttentionRecord]]:
    """Eager convenience reader; materializes every record."""
    with open(path, "rb") as fh:
        header, tokens, records = read_dump(fh)
        return header, tokens, list(records)


def write_dump_file(path, header, tokens, records) -> int:
    with open(path, "wb") as fh:
        return write_dump(header, tokens, records, fh)


# --------------------------------------------------------------------------
# Synthetic fixtures
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PatternSpec:
    """Per-record cross-attention structure for synthetic dumps.

    kind "uniform": every token row is exactly 1/hw.
    kind "noise":   rows are jittered around uniform and renormalized.
    kind "delta":   token `token` concentrates `mass` of its row on
                    `pixel`; remaining tokens get deltas on neighboring
                    pixels so the whole record stays low-entropy.
    kind "blend":   alpha * delta + (1 - alpha) * noise, per row.
    """

    kind: str = "uniform"
    noise: float = 0.5
    pixel: int = 0
    token: int = 0
    alpha: float = 1.0
    mass: float = 0.95


@dataclass
class SyntheticSpec:
    T: int
    L: int
    N: int
    h: int
    w: int
    f: int = 1
    layout: Layout = Layout.JOINT
    text_first: bool = True
    seed: int = 0
    tokens: Sequence[str] | None = None
    valid_mask: Sequence[bool] | None = None
    default_pattern: PatternSpec = PatternSpec()
    overrides: dict[tuple[int, int], PatternSpec] = field(default_factory=dict)

    def header(self) -> DumpHeader:
        return DumpHeader(
            layout=self.layout, T=self.T, L=self.L, N=self.N,
            h=self.h, w=self.w, f=self.f, text_first=self.text_first,
        )

    def token_table(self) -> TokenTable:
        tokens = self.tokens
        if tokens is None:
            tokens = [f"tok{i}" for i in range(self.N)]
        if len(tokens) != self.N:
            raise ValueError(f"got {len(tokens)} tokens for N={self.N}")
        return TokenTable.of(tokens, self.valid_mask)

    def pattern_for(self, t: int, l: int) -> PatternSpec:
        return self.overrides.get((t, l), self.default_pattern)


def _noise_rows(rng: np.random.Generator, n: int, hw: int, amplitude: float):
    rows = 1.0 + amplitude * rng.uniform(-1.0, 1.0, size=(n, hw))
    rows = np.clip(rows, 1e-4, None)
    return rows / rows.sum(axis=1, keepdims=True)


def _delta_rows(pattern: PatternSpec, n: int, hw: int) -> np.ndarray:
    if not 0 <= pattern.pixel < hw:
        raise ValueError(f"delta pixel {pattern.pixel} outside hw={hw}")
    if not 0 <= pattern.token < n:
        raise ValueError(f"delta token {pattern.token} outside N={n}")
    rows = np.empty((n, hw))
    if hw == 1:
        rows.fill(1.0)
        return rows
    rest = (1.0 - pattern.mass) / (hw - 1)
    rows.fill(rest)
    for tok in range(n):
        spot = (pattern.pixel + tok - pattern.token) % hw
        rows[tok, spot] = pattern.mass
    return rows


def _cross_rows(pattern: PatternSpec, rng, n: int, hw: int) -> np.ndarray:
    """Token-major (N, hw) cross block; every row sums to 1."""
    if pattern.kind == "uniform":
        return np.full((n, hw), 1.0 / hw)
    if pattern.kind == "noise":
        return _noise_rows(rng, n, hw, pattern.noise)
    if pattern.kind == "delta":
        return _delta_rows(pattern, n, hw)
    if pattern.kind == "blend":
        delta = _delta_rows(pattern, n, hw)
        noise = _noise_rows(rng, n, hw, pattern.noise)
        return pattern.alpha * delta + (1.0 - pattern.alpha) * noise
    raise ValueError(f"unknown pattern kind {pattern.kind!r}")


def _embed_joint(cross: np.ndarray, hw: int, n: int, text_first: bool):
    """Place a normalized cross block inside a row-stochastic joint matrix."""
    col_mass = cross.sum(axis=0)
    if col_mass.max() > 1.0 + 1e-12:
        raise ValueError(
            "synthetic spec inconsistent: token mass per pixel exceeds 1 "
            f"(max {col_mass.max():.4g}); reduce N or spread the pattern"
        )
    side = hw + n
    joint = np.empty((side, side))
    filler = np.clip(1.0 - col_mass, 0.0, None) / hw
    if text_first:
        joint[:n, :] = 1.0 / side
        joint[n:, :n] = cross.T
        joint[n:, n:] = filler[:, None]
    else:
        joint[hw:, :] = 1.0 / side
        joint[:hw, hw:] = cross.T
        joint[:hw, :hw] = filler[:, None]
    return joint


def generate_synthetic_dump(
    spec: SyntheticSpec,
) -> tuple[DumpHeader, TokenTable, Iterator[AttentionRecord]]:
    """Deterministic desk-scale dump source; records are generated lazily."""
    header = spec.header()
    header.validate()
    tokens = spec.token_table()
    hw = header.hw

    def records() -> Iterator[AttentionRecord]:
        for t in range(spec.T):
            for l in range(spec.L):
                rng = np.random.Generator(
                    np.random.PCG64(np.random.SeedSequence([spec.seed, t, l]))
                )
                cross = _cross_rows(spec.pattern_for(t, l), rng, spec.N, hw)
                if spec.layout is Layout.JOINT:
                    plane = _embed_joint(cross, hw, spec.N, spec.text_first)
                else:
                    plane = cross
                values = np.repeat(
                    plane[:, :, None].astype(np.float32), spec.f, axis=2
                )
                yield AttentionRecord(t=t, l=l, values=values)

    return header, tokens, records()


def write_synthetic(spec: SyntheticSpec, path) -> int:
    header, tokens, records = generate_synthetic_dump(spec)
    return write_dump_file(path, header, tokens, records)
