import numpy as np
import pytest

from subjectcut import maxflow
from subjectcut.dumpio import Layout, PatternSpec, SyntheticSpec, generate_synthetic_dump
from subjectcut.fusion import extract_cross
from subjectcut.trimap import ThresholdConfig, build_trimap


@pytest.fixture(scope="session", autouse=True)
def _jit_warmup():
    # compile the flow kernel once so timed tests measure the algorithm
    maxflow.warmup()


def make_maps(spec: SyntheticSpec):
    """Synthetic dump -> list of per-(t, l) cross-attention maps."""
    header, tokens, records = generate_synthetic_dump(spec)
    return header, tokens, [extract_cross(r, header) for r in records]


def two_cluster_scene(seed: int, h: int = 64, w: int = 64, noise: float = 0.08):
    """Square subject on a contrasting field, plus its ground-truth mask."""
    rng = np.random.default_rng(seed)
    side = int(rng.integers(20, 33))
    top = int(rng.integers(6, h - side - 6))
    left = int(rng.integers(6, w - side - 6))
    truth = np.zeros((h, w), dtype=bool)
    truth[top : top + side, left : left + side] = True
    fg = np.array([0.85, 0.20, 0.15])
    bg = np.array([0.10, 0.30, 0.80])
    image = np.where(truth[..., None], fg, bg) + rng.normal(0.0, noise, (h, w, 3))
    return np.clip(image, 0.0, 1.0), truth


def loose_trimap(truth: np.ndarray, band: int = 6):
    """Trimap with a wide uncertain band straddling the true boundary."""
    h, w = truth.shape
    inner = truth.copy()
    for _ in range(band):
        inner = _erode(inner)
    outer = truth.copy()
    for _ in range(band):
        outer = _dilate(outer)
    soft = np.zeros((h, w))
    soft[outer] = 0.5
    soft[truth & ~inner & outer] = 0.5
    soft[inner] = 0.9
    soft[~outer] = 0.05
    ring = _dilate(_dilate(outer)) & ~outer
    soft[ring] = 0.15
    return build_trimap(soft, ThresholdConfig())


def _dilate(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    return out


def _erode(mask: np.ndarray) -> np.ndarray:
    return ~_dilate(~mask)


def delta_stack_spec(seed: int, noise_records: int = 7, hw_side: int = 16):
    """T x 1 stack: noisy records everywhere except one low-entropy delta."""
    T = noise_records + 1
    return SyntheticSpec(
        T=T,
        L=1,
        N=3,
        h=hw_side,
        w=hw_side,
        f=1,
        layout=Layout.CROSS_ONLY,
        seed=seed,
        default_pattern=PatternSpec(kind="noise", noise=0.5),
        overrides={(T - 1, 0): PatternSpec(kind="delta", pixel=100, token=0)},
    )
