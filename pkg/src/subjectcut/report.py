"""Run report: machine-readable JSON + CSV plus rendered figures.

The JSON carries everything needed to re-derive the fusion weights
offline (per-record entropies, the epsilon and bin count, token table)
next to stage timings and mask statistics. The CSV holds the per-record
rows alone for spreadsheet use, and the figures give a quick visual
audit of weights, fused map, trimap and final cutout.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .compositor import flatten
from .fusion import FusedMap, WeightConfig
from .trimap import Trimap


def weights_table(fused: FusedMap, cfg: WeightConfig) -> list[dict]:
    rows = []
    for score in fused.scores:
        rows.append(
            {
                "t": score.t,
                "l": score.l,
                "entropy_bits": score.H,
                "weight": 1.0 / (score.H + cfg.epsilon),
            }
        )
    return rows


def write_weights_csv(path, fused: FusedMap, cfg: WeightConfig) -> None:
    rows = weights_table(fused, cfg)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["t", "l", "entropy_bits", "weight"])
        writer.writeheader()
        writer.writerows(rows)


def _heat_figure(path, grid: np.ndarray, title: str, xlabel: str, ylabel: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    im = ax.imshow(grid, aspect="auto", cmap="viridis")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _map_figure(path, data: np.ndarray, title: str) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(data, cmap="gray", vmin=0.0, vmax=max(float(data.max()), 1e-12))
    ax.set_title(title)
    ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_figures(
    directory: Path,
    fused: FusedMap,
    union_map: np.ndarray,
    trimap: Trimap,
    rgba: np.ndarray,
    weight_cfg: WeightConfig = WeightConfig(),
) -> list[str]:
    """Render the audit figures; returns the written file names."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    steps = sorted({s.t for s in fused.scores})
    layers = sorted({s.l for s in fused.scores})
    h_grid = np.zeros((len(steps), len(layers)))
    w_grid = np.zeros_like(h_grid)
    t_pos = {t: i for i, t in enumerate(steps)}
    l_pos = {l: i for i, l in enumerate(layers)}
    for s in fused.scores:
        h_grid[t_pos[s.t], l_pos[s.l]] = s.H
        w_grid[t_pos[s.t], l_pos[s.l]] = 1.0 / (s.H + weight_cfg.epsilon)

    written = []
    _heat_figure(directory / "entropy_grid.png", h_grid, "entropy (bits) per step x layer", "layer", "step")
    written.append("entropy_grid.png")
    _heat_figure(directory / "weight_grid.png", w_grid, "fusion weight per step x layer", "layer", "step")
    written.append("weight_grid.png")
    _map_figure(directory / "subject_map.png", union_map, "fused subject map")
    written.append("subject_map.png")

    codes = trimap.to_pgm_codes().astype(np.float64) / 255.0
    _map_figure(directory / "trimap.png", codes, "trimap (white=sure subject)")
    written.append("trimap.png")

    preview = flatten(rgba, background="checkerboard")
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(preview)
    ax.set_title("cutout preview")
    ax.axis("off")
    fig.tight_layout()
    fig.savefig(directory / "cutout.png", dpi=120)
    plt.close(fig)
    written.append("cutout.png")
    return written


def build_report(
    *,
    header_info: dict,
    tokens: list[str],
    valid_mask: list[bool],
    fused: FusedMap,
    weight_cfg: WeightConfig,
    keyword_tokens: dict[str, list[int]],
    trimap: Trimap,
    mask: np.ndarray,
    timings: dict[str, float],
    config_echo: dict,
    warnings: list[str],
    session: dict | None = None,
) -> dict:
    return {
        "dump": header_info,
        "tokens": tokens,
        "valid_mask": valid_mask,
        "fusion": {
            "bins": weight_cfg.bins,
            "epsilon": weight_cfg.epsilon,
            "records": weights_table(fused, weight_cfg),
        },
        "keywords": {k: v for k, v in keyword_tokens.items()},
        "trimap_counts": trimap.counts(),
        "mask": {
            "subject_pixels": int(mask.sum()),
            "total_pixels": int(mask.size),
            "subject_fraction": float(mask.sum() / mask.size) if mask.size else 0.0,
        },
        "timings_seconds": {k: round(v, 6) for k, v in timings.items()},
        "config": config_echo,
        "warnings": warnings,
        "agent_session": session,
    }


def write_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=False) + "\n")
