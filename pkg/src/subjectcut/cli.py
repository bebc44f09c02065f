"""Command line entry point.

Subcommands cover the full pipeline plus every stage on its own, so each
piece can be driven and inspected through the documented file formats:
attention dumps in, 16-bit PGM maps, 8-bit PGM trimaps and masks, RGBA
PNG out. Exit codes: 0 success, 1 configuration or input error, 2 stage
failure, 3 success in degraded mode (empty subject).
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import grabcut, report as report_mod
from .agents import (
    DEFAULT_STOPLIST,
    SessionCaps,
    TemplateSet,
    run_session,
)
from .backends import ChatBackend, OpenAIChatBackend, SamplingConfig, ScriptedBackend
from .compositor import compose, flatten
from .dumpio import (
    Layout,
    PatternSpec,
    SyntheticSpec,
    read_dump_file,
    write_synthetic,
)
from .errors import SubjectCutError
from .fusion import WeightConfig, extract_cross, fuse, keyword_maps
from .grabcut import GrabCutConfig
from .imagefiles import (
    read_pgm8,
    read_pgm16,
    read_png_rgb,
    write_pgm8,
    write_pgm16,
    write_png_rgb,
    write_png_rgba,
)
from .trimap import Label, ThresholdConfig, Trimap, build_trimap, upsample

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_STAGE = 2
EXIT_DEGRADED = 3


class UsageError(Exception):
    """Bad flags, unreadable config, or missing inputs."""


class StageError(Exception):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"error[{stage}]: {cause}")
        self.stage = stage
        self.cause = cause


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _run_stage(timings: dict, stage: str, fn):
    start = time.perf_counter()
    try:
        result = fn()
    except (SubjectCutError, ValueError, OSError) as exc:
        raise StageError(stage, exc) from exc
    timings[stage] = time.perf_counter() - start
    return result


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {p}")
    return p


def _parse_csv_list(text: str) -> list[str]:
    items = [part.strip() for part in text.split(",")]
    return [part for part in items if part]


def _parse_index_list(text: str, upper: int, what: str) -> list[int]:
    if text == "all":
        return list(range(upper))
    out = []
    for part in _parse_csv_list(text):
        try:
            value = int(part)
        except ValueError:
            raise UsageError(f"{what} must be integers or 'all', got {part!r}")
        if not 0 <= value < upper:
            raise UsageError(f"{what} index {value} outside [0, {upper})")
        out.append(value)
    if not out:
        raise UsageError(f"empty {what} selection")
    return out


def _load_dump(path):
    header, tokens, records = read_dump_file(path)
    maps = [extract_cross(rec, header) for rec in records]
    return header, tokens, maps


def _header_info(path, header) -> dict:
    return {
        "path": str(path),
        "layout": header.layout.name,
        "T": header.T,
        "L": header.L,
        "N": header.N,
        "h": header.h,
        "w": header.w,
        "f": header.f,
        "text_first": header.text_first,
    }


def _normalize_for_png(data: np.ndarray) -> np.ndarray:
    lo = float(data.min())
    hi = float(data.max())
    if hi <= lo:
        return np.zeros(data.shape, dtype=np.uint8)
    return np.round((data - lo) / (hi - lo) * 255.0).astype(np.uint8)


# ---------------------------------------------------------------- backends


def _build_backend(cfg: dict) -> ChatBackend:
    if cfg.get("mock"):
        return ScriptedBackend.from_json(_require_file(cfg["mock"], "mock script"))
    base_url = cfg.get("base_url")
    model = cfg.get("model")
    if not base_url or not model:
        raise UsageError("agent needs either --mock or both --base-url and --model")
    return OpenAIChatBackend(
        base_url=base_url,
        model=model,
        api_key_env=cfg.get("api_key_env", "SUBJECTCUT_API_KEY"),
        sampling=SamplingConfig(),
    )


def _session_caps(cfg: dict) -> SessionCaps:
    return SessionCaps(
        max_opt=int(cfg.get("max_opt", 3)),
        max_revisions=int(cfg.get("max_revisions", 2)),
    )


# ---------------------------------------------------------------- pipeline

_PIPELINE_DEFAULTS = {
    "dump": None,
    "image": None,
    "out_dir": None,
    "keywords": None,
    "agent": False,
    "bins": 256,
    "epsilon": 1e-6,
    "hi": 0.8,
    "lo": 0.2,
    "floor": 0.1,
    "gamma": 50.0,
    "components": 5,
    "iterations": 5,
    "seed": 0,
    "mock": None,
    "base_url": None,
    "model": None,
    "api_key_env": "SUBJECTCUT_API_KEY",
    "max_opt": 3,
    "max_revisions": 2,
    "stoplist": list(DEFAULT_STOPLIST),
    "draft": None,
    "templates": None,
}


def _merge_pipeline_config(args) -> dict:
    cfg = dict(_PIPELINE_DEFAULTS)
    if args.config is not None:
        path = _require_file(args.config, "config file")
        try:
            file_cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}")
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = sorted(set(file_cfg) - set(cfg))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(file_cfg)
    for key in _PIPELINE_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if isinstance(cfg["keywords"], str):
        cfg["keywords"] = _parse_csv_list(cfg["keywords"])
    if isinstance(cfg["stoplist"], str):
        cfg["stoplist"] = _parse_csv_list(cfg["stoplist"])
    return cfg


def cmd_pipeline(args) -> int:
    cfg = _merge_pipeline_config(args)
    for key in ("dump", "image", "out_dir"):
        if not cfg[key]:
            raise UsageError(f"--{key.replace('_', '-')} is required")
    if not cfg["keywords"]:
        raise UsageError("--keywords is required (comma separated)")
    dump_path = _require_file(cfg["dump"], "attention dump")
    image_path = _require_file(cfg["image"], "input image")
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    timings: dict[str, float] = {}
    warnings: list[str] = []
    degraded = False

    header, tokens, maps = _run_stage(timings, "load", lambda: _load_dump(dump_path))
    image_u8 = _run_stage(timings, "load-image", lambda: read_png_rgb(image_path))

    session_dict = None
    keywords = list(cfg["keywords"])
    if cfg["agent"]:
        def run_agent():
            backend = _build_backend(cfg)
            templates = TemplateSet(cfg["templates"]) if cfg["templates"] else TemplateSet()
            session = run_session(
                keywords,
                backend,
                caps=_session_caps(cfg),
                templates=templates,
                stoplist=tuple(cfg["stoplist"]),
                draft=cfg["draft"],
            )
            return session

        session = _run_stage(timings, "agent", run_agent)
        session_dict = session.to_dict()
        (out_dir / "session.json").write_text(session.to_json(indent=2) + "\n")
        keywords = session.filtered
        warnings.extend(session.warnings)

    weight_cfg = WeightConfig(epsilon=float(cfg["epsilon"]), bins=int(cfg["bins"]))
    fused = _run_stage(
        timings, "fuse", lambda: fuse(maps, weight_cfg, tokens.valid_mask)
    )
    per_kw, union = _run_stage(
        timings, "keywords", lambda: keyword_maps(fused, tokens, keywords)
    )
    union_latent = union.data.reshape(header.h, header.w)
    target_h, target_w = image_u8.shape[:2]
    union_full = _run_stage(
        timings, "upsample", lambda: upsample(union_latent, target_w, target_h)
    )
    thresholds = ThresholdConfig(
        sure_fg=float(cfg["hi"]), prob_fg=float(cfg["lo"]), prob_bg=float(cfg["floor"])
    )
    tm = _run_stage(timings, "trimap", lambda: build_trimap(union_full, thresholds))

    gc_cfg = GrabCutConfig(
        components=int(cfg["components"]),
        gamma=float(cfg["gamma"]),
        iterations=int(cfg["iterations"]),
        seed=int(cfg["seed"]),
    )
    fg_candidates = (tm.labels == Label.SURE_FG) | (tm.labels == Label.PROB_FG)
    if not fg_candidates.any():
        warnings.append("subject map yields no foreground candidates; mask is empty")
        mask = np.zeros(image_u8.shape[:2], dtype=bool)
        degraded = True
    else:
        image_float = image_u8.astype(np.float64) / 255.0
        result = _run_stage(
            timings, "segment", lambda: grabcut.segment(image_float, tm, gc_cfg)
        )
        mask = result.mask
        if not mask.any():
            warnings.append("segmentation kept no pixels; mask is empty")
            degraded = True

    rgba = _run_stage(timings, "compose", lambda: compose(image_u8, mask))

    def write_outputs():
        write_pgm16(out_dir / "subject_map.pgm", union_full)
        write_pgm8(out_dir / "trimap.pgm", tm.to_pgm_codes())
        write_pgm8(out_dir / "mask.pgm", np.where(mask, 255, 0).astype(np.uint8))
        write_png_rgba(out_dir / "subject.png", rgba)
        report_mod.write_weights_csv(out_dir / "weights.csv", fused, weight_cfg)
        figures = report_mod.render_figures(
            out_dir / "figures", fused, union_full, tm, rgba, weight_cfg
        )
        report = report_mod.build_report(
            header_info=_header_info(dump_path, header),
            tokens=list(tokens.tokens),
            valid_mask=[bool(v) for v in tokens.valid_mask],
            fused=fused,
            weight_cfg=weight_cfg,
            keyword_tokens={m.keyword: list(m.token_indices) for m in per_kw},
            trimap=tm,
            mask=mask,
            timings=timings,
            config_echo={k: v for k, v in cfg.items() if k != "api_key_env"},
            warnings=warnings,
            session=session_dict,
        )
        report_mod.write_report(out_dir / "report.json", report)

    _run_stage(timings, "write", write_outputs)
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"wrote {out_dir}/subject.png ({int(mask.sum())} subject pixels)")
    return EXIT_DEGRADED if degraded else EXIT_OK


# ---------------------------------------------------------------- stages


def cmd_fuse(args) -> int:
    dump_path = _require_file(args.dump, "attention dump")
    keywords = _parse_csv_list(args.keywords)
    if not keywords:
        raise UsageError("--keywords must name at least one keyword")
    timings: dict[str, float] = {}
    header, tokens, maps = _run_stage(timings, "load", lambda: _load_dump(dump_path))
    weight_cfg = WeightConfig(epsilon=args.epsilon, bins=args.bins)
    fused = _run_stage(timings, "fuse", lambda: fuse(maps, weight_cfg, tokens.valid_mask))
    per_kw, union = _run_stage(
        timings, "keywords", lambda: keyword_maps(fused, tokens, keywords)
    )
    _run_stage(
        timings,
        "write",
        lambda: write_pgm16(args.out, union.data.reshape(header.h, header.w)),
    )
    if args.weights_csv:
        report_mod.write_weights_csv(args.weights_csv, fused, weight_cfg)
    print(f"wrote {args.out} from {len(per_kw)} keyword(s)")
    return EXIT_OK


def cmd_trimap(args) -> int:
    map_path = _require_file(args.map, "subject map")
    timings: dict[str, float] = {}
    data = _run_stage(timings, "load", lambda: read_pgm16(map_path))
    if (args.width is None) != (args.height is None):
        raise UsageError("--width and --height must be given together")
    if args.width is not None:
        data = _run_stage(
            timings, "upsample", lambda: upsample(data, args.width, args.height)
        )
    thresholds = ThresholdConfig(sure_fg=args.hi, prob_fg=args.lo, prob_bg=args.floor)
    tm = _run_stage(timings, "trimap", lambda: build_trimap(data, thresholds))
    _run_stage(timings, "write", lambda: write_pgm8(args.out, tm.to_pgm_codes()))
    print(f"wrote {args.out} {tm.counts()}")
    return EXIT_OK


def cmd_segment(args) -> int:
    image_path = _require_file(args.image, "input image")
    trimap_path = _require_file(args.trimap, "trimap")
    timings: dict[str, float] = {}
    image_u8 = _run_stage(timings, "load", lambda: read_png_rgb(image_path))
    tm = _run_stage(
        timings, "load-trimap", lambda: Trimap.from_pgm_codes(read_pgm8(trimap_path))
    )
    cfg = GrabCutConfig(
        components=args.components,
        gamma=args.gamma,
        iterations=args.iterations,
        seed=args.seed,
    )
    degraded = False
    fg_candidates = (tm.labels == Label.SURE_FG) | (tm.labels == Label.PROB_FG)
    if not fg_candidates.any():
        print("warning: trimap has no foreground candidates; mask is empty", file=sys.stderr)
        mask = np.zeros(image_u8.shape[:2], dtype=bool)
        degraded = True
    else:
        image_float = image_u8.astype(np.float64) / 255.0
        result = _run_stage(
            timings, "segment", lambda: grabcut.segment(image_float, tm, cfg)
        )
        mask = result.mask
        if not mask.any():
            print("warning: segmentation kept no pixels", file=sys.stderr)
            degraded = True
    _run_stage(
        timings,
        "write",
        lambda: write_pgm8(args.out, np.where(mask, 255, 0).astype(np.uint8)),
    )
    print(f"wrote {args.out} ({int(mask.sum())} subject pixels)")
    return EXIT_DEGRADED if degraded else EXIT_OK


def cmd_compose(args) -> int:
    image_path = _require_file(args.image, "input image")
    mask_path = _require_file(args.mask, "mask")
    timings: dict[str, float] = {}
    image_u8 = _run_stage(timings, "load", lambda: read_png_rgb(image_path))
    mask_codes = _run_stage(timings, "load-mask", lambda: read_pgm8(mask_path))
    bad = sorted(set(np.unique(mask_codes)) - {0, 255})
    if bad:
        raise UsageError(f"mask must be binary 0/255, found values {bad}")
    rgba = _run_stage(
        timings, "compose", lambda: compose(image_u8, mask_codes == 255)
    )
    _run_stage(timings, "write", lambda: write_png_rgba(args.out, rgba))
    if args.preview:
        preview = flatten(rgba, background="checkerboard")
        write_png_rgb(args.preview, preview)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_agent(args) -> int:
    keywords = _parse_csv_list(args.keywords)
    if not keywords:
        raise UsageError("--keywords must name at least one keyword")
    cfg = {
        "mock": args.mock,
        "base_url": args.base_url,
        "model": args.model,
        "api_key_env": args.api_key_env,
        "max_opt": args.max_opt,
        "max_revisions": args.max_revisions,
    }
    backend = _build_backend(cfg)
    templates = TemplateSet(args.templates) if args.templates else TemplateSet()
    stoplist = tuple(_parse_csv_list(args.stoplist)) if args.stoplist else DEFAULT_STOPLIST
    timings: dict[str, float] = {}
    session = _run_stage(
        timings,
        "agent",
        lambda: run_session(
            keywords,
            backend,
            caps=_session_caps(cfg),
            templates=templates,
            stoplist=stoplist,
            draft=args.draft,
        ),
    )
    summary = {
        "prompt": session.optimized,
        "subjects": session.filtered,
        "opt_rounds": session.opt_rounds,
        "revision_rounds": session.revision_rounds,
        "flags": session.flags,
    }
    print(json.dumps(summary, indent=2))
    if args.out:
        Path(args.out).write_text(session.to_json(indent=2) + "\n")
    return EXIT_OK


def cmd_viz(args) -> int:
    dump_path = _require_file(args.dump, "attention dump")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}
    header, tokens, maps = _run_stage(timings, "load", lambda: _load_dump(dump_path))
    token_ids = _parse_index_list(args.tokens, header.N, "token")
    for n in token_ids:
        if not tokens.valid_mask[n]:
            raise UsageError(f"token {n} ({tokens.tokens[n]!r}) is padding")
    steps = _parse_index_list(args.steps, header.T, "step")
    layers = _parse_index_list(args.layers, header.L, "layer")
    weight_cfg = WeightConfig(epsilon=args.epsilon, bins=args.bins)
    fused = _run_stage(timings, "fuse", lambda: fuse(maps, weight_cfg, tokens.valid_mask))
    by_tl = {(m.t, m.l): m for m in maps}
    count = 0
    from PIL import Image

    for n in token_ids:
        for t in steps:
            for l in layers:
                gray = _normalize_for_png(by_tl[(t, l)].data[n].reshape(header.h, header.w))
                Image.fromarray(gray, mode="L").save(
                    out_dir / f"token{n:03d}_t{t:03d}_l{l:03d}.png"
                )
                count += 1
        gray = _normalize_for_png(fused.data[n].reshape(header.h, header.w))
        Image.fromarray(gray, mode="L").save(out_dir / f"token{n:03d}_fused.png")
        count += 1
    print(f"wrote {count} heatmaps to {out_dir}")
    return EXIT_OK


def cmd_gen_fixture(args) -> int:
    hw = args.height * args.width
    if not 0 <= args.delta_pixel < hw:
        raise UsageError(f"--delta-pixel outside [0, {hw})")
    if not 0 <= args.delta_token < args.n:
        raise UsageError(f"--delta-token outside [0, {args.n})")
    tokens = _parse_csv_list(args.tokens) if args.tokens else None
    if tokens is not None and len(tokens) != args.n:
        raise UsageError(f"--tokens lists {len(tokens)} names but --n is {args.n}")
    pattern = PatternSpec(
        kind=args.pattern,
        noise=args.noise,
        pixel=args.delta_pixel,
        token=args.delta_token,
        alpha=args.alpha,
        mass=args.mass,
    )
    spec = SyntheticSpec(
        T=args.t,
        L=args.l,
        N=args.n,
        h=args.height,
        w=args.width,
        f=args.f,
        layout=Layout.CROSS_ONLY if args.cross_only else Layout.JOINT,
        text_first=not args.image_first,
        seed=args.seed,
        tokens=tokens,
        default_pattern=pattern,
    )
    try:
        nbytes = write_synthetic(spec, args.out)
    except ValueError as exc:
        # infeasible dimension combination is a flag problem, not a stage crash
        raise UsageError(str(exc)) from exc
    except SubjectCutError as exc:
        raise StageError("gen-fixture", exc) from exc
    print(f"wrote {args.out} ({nbytes} bytes)")
    if args.image_out:
        scene = _render_scene(spec, pattern, args.image_scale)
        write_png_rgb(args.image_out, scene)
        print(f"wrote {args.image_out} ({scene.shape[1]}x{scene.shape[0]})")
    return EXIT_OK


def _render_scene(spec: SyntheticSpec, pattern: PatternSpec, scale: int) -> np.ndarray:
    """RGB scene matching a synthetic dump: a subject blob on a flat field.

    The blob sits at the delta pixel's position under corner-aligned
    upsampling, so masks derived from the dump land on it.
    """
    h_img, w_img = spec.h * scale, spec.w * scale
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 7]))
    bg = np.array([0.10, 0.30, 0.80])
    fg = np.array([0.85, 0.20, 0.15])
    image = np.broadcast_to(bg, (h_img, w_img, 3)).copy()
    if pattern.kind in ("delta", "blend"):
        row, col = divmod(pattern.pixel, spec.w)
        cy = row * (h_img - 1) / (spec.h - 1) if spec.h > 1 else (h_img - 1) / 2.0
        cx = col * (w_img - 1) / (spec.w - 1) if spec.w > 1 else (w_img - 1) / 2.0
        yy, xx = np.mgrid[0:h_img, 0:w_img]
        blob = (yy - cy) ** 2 + (xx - cx) ** 2 <= (1.6 * scale) ** 2
        image[blob] = fg
    image = image + rng.normal(0.0, 0.02, image.shape)
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="subjectcut",
        description="Subject masks and discrete-alpha cutouts from attention dumps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", help="dump + image -> RGBA cutout with report")
    p.add_argument("--config", help="JSON config; explicit flags override it")
    p.add_argument("--dump")
    p.add_argument("--image")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--keywords", help="comma separated subject keywords")
    p.add_argument("--agent", action="store_true", default=None,
                   help="run the prompt agents; their nouns replace --keywords for matching")
    p.add_argument("--bins", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--hi", type=float, help="sure-foreground threshold")
    p.add_argument("--lo", type=float, help="probable-foreground threshold")
    p.add_argument("--floor", type=float, help="probable-background threshold")
    p.add_argument("--gamma", type=float)
    p.add_argument("--components", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--mock", help="scripted backend responses (JSON array file)")
    p.add_argument("--base-url", dest="base_url")
    p.add_argument("--model")
    p.add_argument("--api-key-env", dest="api_key_env")
    p.add_argument("--max-opt", dest="max_opt", type=int)
    p.add_argument("--max-revisions", dest="max_revisions", type=int)
    p.add_argument("--stoplist", help="comma separated extra abstract words")
    p.add_argument("--draft", help="skip the expander and refine this prompt")
    p.add_argument("--templates", help="directory overriding the role templates")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("fuse", help="dump -> fused subject map (16-bit PGM)")
    p.add_argument("--dump", required=True)
    p.add_argument("--keywords", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bins", type=int, default=256)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--weights-csv", dest="weights_csv")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("trimap", help="subject map -> 4-level trimap (8-bit PGM)")
    p.add_argument("--map", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--hi", type=float, default=0.8)
    p.add_argument("--lo", type=float, default=0.2)
    p.add_argument("--floor", type=float, default=0.1)
    p.add_argument("--width", type=int, help="upsample target width")
    p.add_argument("--height", type=int, help="upsample target height")
    p.set_defaults(func=cmd_trimap)

    p = sub.add_parser("segment", help="image + trimap -> binary mask (8-bit PGM)")
    p.add_argument("--image", required=True)
    p.add_argument("--trimap", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--gamma", type=float, default=50.0)
    p.add_argument("--components", type=int, default=5)
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("compose", help="image + mask -> RGBA PNG with binary alpha")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--preview", help="also write a checkerboard preview PNG")
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("agent", help="keywords -> optimized prompt + subject nouns")
    p.add_argument("--keywords", required=True)
    p.add_argument("--mock", help="scripted backend responses (JSON array file)")
    p.add_argument("--base-url", dest="base_url")
    p.add_argument("--model")
    p.add_argument("--api-key-env", dest="api_key_env", default="SUBJECTCUT_API_KEY")
    p.add_argument("--max-opt", dest="max_opt", type=int, default=3)
    p.add_argument("--max-revisions", dest="max_revisions", type=int, default=2)
    p.add_argument("--stoplist")
    p.add_argument("--draft")
    p.add_argument("--templates")
    p.add_argument("--out", help="write the full session transcript JSON here")
    p.set_defaults(func=cmd_agent)

    p = sub.add_parser("viz", help="per-(token, step, layer) heatmap PNGs")
    p.add_argument("--dump", required=True)
    p.add_argument("--tokens", required=True, help="comma separated indices or 'all'")
    p.add_argument("--steps", default="all")
    p.add_argument("--layers", default="all")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--bins", type=int, default=256)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("gen-fixture", help="write a synthetic attention dump")
    p.add_argument("--pattern", choices=["uniform", "noise", "delta", "blend"],
                   default="uniform")
    p.add_argument("--out", required=True)
    p.add_argument("--t", type=int, default=4)
    p.add_argument("--l", type=int, default=2)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--height", type=int, default=16)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--f", type=int, default=2)
    p.add_argument("--cross-only", action="store_true",
                   help="write token-by-pixel records instead of joint attention")
    p.add_argument("--image-first", action="store_true",
                   help="joint layout with image tokens before text tokens")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--delta-pixel", dest="delta_pixel", type=int, default=0)
    p.add_argument("--delta-token", dest="delta_token", type=int, default=0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--mass", type=float, default=0.95)
    p.add_argument("--tokens", help="comma separated token strings (defaults tok0..)")
    p.add_argument("--image-out", dest="image_out",
                   help="also render a matching RGB scene PNG")
    p.add_argument("--image-scale", dest="image_scale", type=int, default=8)
    p.set_defaults(func=cmd_gen_fixture)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_STAGE
    except SubjectCutError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
