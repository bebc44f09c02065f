"""Command line entry point for attention capture.

`attndump capture` runs the real sampler and needs the model stack;
`attndump stub` writes a shape-faithful synthetic dump for desk work.
Exit codes: 0 success, 1 configuration or input error, 2 capture
failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .atnd import DumpWriteError
from .hooks import (
    DEFAULT_MODEL,
    DEFAULT_STEPS,
    TOTAL_BLOCKS,
    HookConfig,
    ModelUnavailableError,
    capture_run,
)
from .stub import stub_capture

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_CAPTURE = 2


class UsageError(Exception):
    """Bad flags or unusable option combinations."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _parse_blocks(text: str) -> list[int] | None:
    if text == "all":
        return None
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            value = int(part)
        except ValueError:
            raise UsageError(
                f"--blocks must be integers or 'all', got {part!r}"
            )
        if not 0 <= value < TOTAL_BLOCKS:
            raise UsageError(
                f"block index {value} outside [0, {TOTAL_BLOCKS})"
            )
        out.append(value)
    if not out:
        raise UsageError("empty --blocks selection")
    return out


def build_parser() -> _Parser:
    parser = _Parser(
        prog="attndump",
        description="Capture sampler attention maps as ATND dump files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    cap = sub.add_parser("capture", parents=[], help="run the real sampler")
    cap.add_argument("--prompt", required=True, help="text prompt to sample")
    cap.add_argument("--out", required=True, type=Path,
                     help="ATND output path")
    cap.add_argument("--model", default=DEFAULT_MODEL,
                     help="model identifier or local checkpoint path")
    cap.add_argument("--steps", type=int, default=DEFAULT_STEPS,
                     help="denoising steps (default %(default)s)")
    cap.add_argument("--blocks", default="all",
                     help="comma-separated block indices or 'all'")
    cap.add_argument("--heads", choices=("mean", "store-all"),
                     default="mean", help="head handling")
    cap.add_argument("--layout", choices=("cross", "joint"),
                     default="cross", help="record layout")
    cap.add_argument("--seed", type=int, default=0)
    cap.add_argument("--max-tokens", type=int, default=512,
                     help="text sequence length incl. padding")
    cap.add_argument("--image-out", type=Path, default=None,
                     help="RGB output path (default: dump path with .png)")

    stub = sub.add_parser(
        "stub", help="write a synthetic dump without model weights"
    )
    stub.add_argument("--out", required=True, type=Path)
    stub.add_argument("--tokens", required=True,
                      help="comma-separated token strings")
    stub.add_argument("--steps", type=int, default=2)
    stub.add_argument("--blocks", type=int, default=2,
                      help="number of captured layers to synthesize")
    stub.add_argument("--height", type=int, default=8)
    stub.add_argument("--width", type=int, default=8)
    stub.add_argument("--heads", type=int, default=2)
    stub.add_argument("--seed", type=int, default=0)
    stub.add_argument("--layout", choices=("cross", "joint"),
                      default="cross")
    stub.add_argument("--head-mean", action="store_true",
                      help="average heads down to f=1")
    stub.add_argument("--pad", type=int, default=0,
                      help="padding tokens to append (marked invalid)")
    stub.add_argument("--image-out", type=Path, default=None,
                      help="also write a deterministic RGB preview")
    return parser


def cmd_capture(args) -> int:
    cfg = HookConfig(
        prompt=args.prompt,
        out=args.out,
        model=args.model,
        steps=args.steps,
        blocks=_parse_blocks(args.blocks),
        head_mode=args.heads,
        layout=args.layout,
        seed=args.seed,
        max_tokens=args.max_tokens,
        image_out=args.image_out,
    )
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc))
    result = capture_run(cfg)
    print(f"wrote {result.dump_path} and {result.image_path}")
    return EXIT_OK


def cmd_stub(args) -> int:
    tokens = [part.strip() for part in args.tokens.split(",") if part.strip()]
    if not tokens:
        raise UsageError("--tokens must name at least one token")
    try:
        stub_capture(
            args.out,
            tokens=tokens,
            steps=args.steps,
            blocks=args.blocks,
            height=args.height,
            width=args.width,
            heads=args.heads,
            seed=args.seed,
            cross_only=args.layout == "cross",
            head_mean=args.head_mean,
            pad=args.pad,
            image_path=args.image_out,
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    print(f"wrote {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "capture":
            return cmd_capture(args)
        return cmd_stub(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModelUnavailableError, DumpWriteError, OSError) as exc:
        print(f"error[capture]: {exc}", file=sys.stderr)
        return EXIT_CAPTURE


if __name__ == "__main__":
    raise SystemExit(main())
