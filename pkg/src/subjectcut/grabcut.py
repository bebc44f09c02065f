"""Trimap-seeded binary segmentation by iterated graph cuts.

Two RGB Gaussian mixtures (subject / background) are fitted to the sides
of the trimap, pixels get unary costs from the mixtures and pairwise
costs from local contrast, and an exact min cut relabels the uncertain
band. Component assignment, mixture refit and cut each lower the same
energy, so the loop settles instead of oscillating.

All numerics are plain elementwise numpy on 3-vectors; nothing here
dispatches to threaded BLAS, which keeps results byte-identical across
thread-count settings.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRegionError
from .maxflow import FlowNetwork
from .trimap import Label, Trimap

LOG_2PI = float(np.log(2.0 * np.pi))

# unordered 8-neighborhood: right, down, down-right, down-left
_NEIGHBOR_OFFSETS = ((0, 1, 1.0), (1, 0, 1.0), (1, 1, np.sqrt(2.0)), (1, -1, np.sqrt(2.0)))


@dataclass(frozen=True)
class GrabCutConfig:
    components: int = 5
    gamma: float = 50.0
    iterations: int = 5
    cov_reg: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.components < 1:
            raise ValueError("components must be >= 1")
        if self.gamma < 0 or not np.isfinite(self.gamma):
            raise ValueError("gamma must be finite and >= 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.cov_reg <= 0:
            raise ValueError("cov_reg must be > 0")


def _inv3(mat: np.ndarray) -> tuple[np.ndarray, float]:
    """Cofactor inverse and determinant of a 3x3 matrix."""
    a, b, c = mat[0]
    d, e, f = mat[1]
    g, h, i = mat[2]
    ca = e * i - f * h
    cb = f * g - d * i
    cc = d * h - e * g
    det = a * ca + b * cb + c * cc
    inv = np.array(
        [
            [ca, c * h - b * i, b * f - c * e],
            [cb, a * i - c * g, c * d - a * f],
            [cc, b * g - a * h, a * e - b * d],
        ]
    )
    return inv / det, float(det)


@dataclass
class GaussianMixture:
    """Full-covariance RGB mixture with cached per-component inverses."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    inv_covs: np.ndarray = field(init=False)
    log_consts: np.ndarray = field(init=False)

    def __post_init__(self):
        k = self.weights.shape[0]
        self.inv_covs = np.empty((k, 3, 3))
        self.log_consts = np.empty(k)
        for j in range(k):
            inv, det = _inv3(self.covs[j])
            if det <= 0:
                raise DegenerateRegionError(
                    f"mixture component {j} has a non positive definite covariance"
                )
            self.inv_covs[j] = inv
            # -log(w) + 0.5 log((2 pi)^3 det)
            self.log_consts[j] = -np.log(self.weights[j]) + 0.5 * (
                3.0 * LOG_2PI + np.log(det)
            )

    @property
    def components(self) -> int:
        return int(self.weights.shape[0])

    def component_scores(self, colors: np.ndarray) -> np.ndarray:
        """Negative log of w_k * N(c; mu_k, Sigma_k) for every component.

        colors: (n, 3) float64. Returns (n, K). Mahalanobis terms are
        expanded elementwise to stay off threaded matmul kernels.
        """
        n = colors.shape[0]
        out = np.empty((n, self.components))
        for j in range(self.components):
            d0 = colors[:, 0] - self.means[j, 0]
            d1 = colors[:, 1] - self.means[j, 1]
            d2 = colors[:, 2] - self.means[j, 2]
            m = self.inv_covs[j]
            maha = (
                m[0, 0] * d0 * d0
                + m[1, 1] * d1 * d1
                + m[2, 2] * d2 * d2
                + 2.0 * (m[0, 1] * d0 * d1 + m[0, 2] * d0 * d2 + m[1, 2] * d1 * d2)
            )
            out[:, j] = self.log_consts[j] + 0.5 * maha
        return out

    def neg_log_density(self, colors: np.ndarray) -> np.ndarray:
        """min over components of the per-component score; (n,) float64."""
        return self.component_scores(colors).min(axis=1)


def _kmeans_labels(colors: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Careful-seeding k-means labels; ties resolve to the lowest index."""
    n = colors.shape[0]
    centers = np.empty((k, 3))
    centers[0] = colors[int(rng.integers(n))]
    d2 = ((colors - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        if total > 0.0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        centers[j] = colors[idx]
        np.minimum(d2, ((colors - centers[j]) ** 2).sum(axis=1), out=d2)
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(10):
        dists = ((colors[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = dists.argmin(axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = colors[members].mean(axis=0)
    return labels


def fit_mixture(colors: np.ndarray, labels: np.ndarray, cov_reg: float) -> GaussianMixture:
    """Maximum-likelihood mixture from hard assignments.

    Empty components are dropped; weights are the surviving member
    fractions and therefore still sum to one. Covariances get cov_reg
    added on the diagonal so single-color components stay invertible.
    """
    if colors.shape[0] == 0:
        raise DegenerateRegionError("cannot fit a mixture to zero pixels")
    weights, means, covs = [], [], []
    total = colors.shape[0]
    for j in range(int(labels.max()) + 1):
        members = colors[labels == j]
        if members.shape[0] == 0:
            continue
        mu = members.mean(axis=0)
        c0 = members[:, 0] - mu[0]
        c1 = members[:, 1] - mu[1]
        c2 = members[:, 2] - mu[2]
        # expanded instead of a matmul: keeps the reduction off threaded BLAS
        v00 = float((c0 * c0).mean())
        v11 = float((c1 * c1).mean())
        v22 = float((c2 * c2).mean())
        v01 = float((c0 * c1).mean())
        v02 = float((c0 * c2).mean())
        v12 = float((c1 * c2).mean())
        cov = np.array(
            [
                [v00 + cov_reg, v01, v02],
                [v01, v11 + cov_reg, v12],
                [v02, v12, v22 + cov_reg],
            ]
        )
        weights.append(members.shape[0] / total)
        means.append(mu)
        covs.append(cov)
    return GaussianMixture(
        weights=np.asarray(weights),
        means=np.asarray(means),
        covs=np.asarray(covs),
    )


def init_mixture(
    colors: np.ndarray, k: int, cov_reg: float, rng: np.random.Generator
) -> GaussianMixture:
    if colors.shape[0] < k:
        raise DegenerateRegionError(
            f"{colors.shape[0]} pixels cannot seed a {k}-component mixture"
        )
    return fit_mixture(colors, _kmeans_labels(colors, k, rng), cov_reg)


def init_gmms(
    image: np.ndarray,
    trimap: Trimap,
    k: int = 5,
    cov_reg: float = 1e-5,
    seed: int = 0,
) -> tuple[GaussianMixture, GaussianMixture]:
    """Seeded initial mixtures for (candidate subject, candidate background)."""
    colors = image.reshape(-1, 3).astype(np.float64)
    labels = trimap.labels.reshape(-1)
    fg_side = (labels == Label.SURE_FG) | (labels == Label.PROB_FG)
    rng = np.random.default_rng(np.random.PCG64(np.random.SeedSequence([seed])))
    fg = init_mixture(colors[fg_side], k, cov_reg, rng)
    bg = init_mixture(colors[~fg_side], k, cov_reg, rng)
    return fg, bg


def assign_components(
    image: np.ndarray, region: np.ndarray, gmm: GaussianMixture
) -> np.ndarray:
    """Most-likely component per region pixel; ties go to the lowest index."""
    colors = image.reshape(-1, 3).astype(np.float64)[region.reshape(-1)]
    return gmm.component_scores(colors).argmin(axis=1)


def learn_gmms(
    image: np.ndarray,
    mask: np.ndarray,
    fg_assignments: np.ndarray,
    bg_assignments: np.ndarray,
    cov_reg: float = 1e-5,
) -> tuple[GaussianMixture, GaussianMixture]:
    """Refit both mixtures from hard component assignments."""
    colors = image.reshape(-1, 3).astype(np.float64)
    flat = mask.reshape(-1)
    fg = fit_mixture(colors[flat], fg_assignments, cov_reg)
    bg = fit_mixture(colors[~flat], bg_assignments, cov_reg)
    return fg, bg


def estimate_beta(image: np.ndarray) -> float:
    """Contrast scale 1 / (2 <||c_p - c_q||^2>) over 8-neighbor pairs.

    A constant image would divide by zero; that degenerates to beta = 0,
    turning every pairwise weight into the pure distance prior.
    """
    total = 0.0
    count = 0
    for dr, dc, _dist in _NEIGHBOR_OFFSETS:
        a, b = _neighbor_views(image, dr, dc)
        total += float(((a - b) ** 2).sum())
        count += a.shape[0] * a.shape[1]
    if count == 0 or total <= 0.0:
        return 0.0
    return 1.0 / (2.0 * total / count)


def _neighbor_views(image: np.ndarray, dr: int, dc: int):
    h, w = image.shape[:2]
    if dc >= 0:
        return image[: h - dr, : w - dc], image[dr:, dc:]
    return image[: h - dr, -dc:], image[dr:, : w + dc]


@dataclass
class PixelGraph:
    """Flattened cut problem: per-pixel terminal caps plus neighbor arcs."""

    height: int
    width: int
    source_caps: np.ndarray
    sink_caps: np.ndarray
    edge_us: np.ndarray
    edge_vs: np.ndarray
    edge_caps: np.ndarray

    def min_cut(self) -> tuple[float, np.ndarray]:
        """Solve; returns (cut value, boolean subject mask of shape (h, w))."""
        hw = self.height * self.width
        net = FlowNetwork(hw + 2)
        s, t = hw, hw + 1
        pixels = np.arange(hw, dtype=np.int64)
        net.add_edges(np.full(hw, s, dtype=np.int64), pixels, self.source_caps)
        net.add_edges(pixels, np.full(hw, t, dtype=np.int64), self.sink_caps)
        net.add_edges(self.edge_us, self.edge_vs, self.edge_caps, self.edge_caps)
        flow, side = net.max_flow(s, t)
        return flow, side[:hw].reshape(self.height, self.width)


def smoothness_arcs(
    image: np.ndarray, gamma: float, beta: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Neighbor arc list (us, vs, caps) with contrast-sensitive weights."""
    h, w = image.shape[:2]
    index = np.arange(h * w, dtype=np.int64).reshape(h, w)
    all_us, all_vs, all_caps = [], [], []
    for dr, dc, dist in _NEIGHBOR_OFFSETS:
        a, b = _neighbor_views(image, dr, dc)
        if a.size == 0:
            continue
        diff2 = ((a - b) ** 2).sum(axis=2)
        caps = (gamma / dist) * np.exp(-beta * diff2)
        ia, ib = _neighbor_views(index, dr, dc)
        all_us.append(ia.ravel())
        all_vs.append(ib.ravel())
        all_caps.append(caps.ravel())
    if not all_us:
        empty = np.empty(0)
        return empty.astype(np.int64), empty.astype(np.int64), empty
    return np.concatenate(all_us), np.concatenate(all_vs), np.concatenate(all_caps)


def build_graph(
    image: np.ndarray,
    trimap: Trimap,
    fg_mixture: GaussianMixture,
    bg_mixture: GaussianMixture,
    config: GrabCutConfig,
    beta: float | None = None,
    arcs: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> PixelGraph:
    """Assemble the cut problem for one iteration.

    Terminal capacities follow the usual convention: the source link
    carries the background cost (severed when the pixel falls on the
    background side) and the sink link the subject cost. Sure pixels get
    one hard link whose capacity exceeds any reachable neighbor total,
    so the cut can never flip them.
    """
    h, w = image.shape[:2]
    colors = image.reshape(-1, 3).astype(np.float64)
    labels = trimap.labels.reshape(-1)
    if beta is None:
        beta = estimate_beta(image)
    if arcs is None:
        arcs = smoothness_arcs(image, config.gamma, beta)
    hard = 9.0 * config.gamma * 8.0
    source_caps = bg_mixture.neg_log_density(colors)
    sink_caps = fg_mixture.neg_log_density(colors)
    sure_fg = labels == Label.SURE_FG
    sure_bg = labels == Label.SURE_BG
    source_caps[sure_fg] = hard
    sink_caps[sure_fg] = 0.0
    source_caps[sure_bg] = 0.0
    sink_caps[sure_bg] = hard
    # unary costs can be slightly negative once a covariance collapses
    # to the regularization floor; shift both links identically so the
    # cut is unchanged but capacities stay legal
    floor = min(float(source_caps.min()), float(sink_caps.min()))
    if floor < 0.0:
        source_caps -= floor
        sink_caps -= floor
    return PixelGraph(
        height=h,
        width=w,
        source_caps=source_caps,
        sink_caps=sink_caps,
        edge_us=arcs[0],
        edge_vs=arcs[1],
        edge_caps=arcs[2],
    )


@dataclass
class SegmentResult:
    mask: np.ndarray
    iterations: int
    converged: bool
    energies: list[float]
    flows: list[float]


def _check_inputs(image: np.ndarray, trimap: Trimap) -> None:
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an (h, w, 3) image, got shape {image.shape}")
    if trimap.labels.shape != image.shape[:2]:
        raise ValueError(
            f"trimap shape {trimap.labels.shape} does not match image {image.shape[:2]}"
        )
    if not np.isfinite(image).all():
        raise ValueError("image contains non-finite values")
    if image.min() < 0.0 or image.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")


def segmentation_energy(
    image: np.ndarray,
    mask: np.ndarray,
    fg_mixture: GaussianMixture,
    bg_mixture: GaussianMixture,
    gamma: float,
    beta: float | None = None,
) -> float:
    """Unary-plus-pairwise objective of a labeling, lower is better."""
    colors = image.reshape(-1, 3).astype(np.float64)
    flat = mask.reshape(-1)
    data = 0.0
    if flat.any():
        data += float(fg_mixture.neg_log_density(colors[flat]).sum())
    if (~flat).any():
        data += float(bg_mixture.neg_log_density(colors[~flat]).sum())
    if beta is None:
        beta = estimate_beta(image)
    us, vs, caps = smoothness_arcs(image, gamma, beta)
    cut = flat[us] != flat[vs]
    return data + float(caps[cut].sum())


def segment(
    image: np.ndarray, trimap: Trimap, config: GrabCutConfig = GrabCutConfig()
) -> SegmentResult:
    """Iterated cut segmentation seeded by a trimap.

    Stops after config.iterations rounds or as soon as a cut reproduces
    the previous mask. Raises DegenerateRegionError when either side of
    the trimap has no pixels to model.
    """
    _check_inputs(image, trimap)
    labels = trimap.labels.reshape(-1)
    colors = image.reshape(-1, 3).astype(np.float64)
    fg_side = (labels == Label.SURE_FG) | (labels == Label.PROB_FG)
    unknown = (labels == Label.PROB_FG) | (labels == Label.PROB_BG)
    if not unknown.any():
        # nothing to decide: the sure regions are the answer, no cuts run
        mask = (labels == Label.SURE_FG).reshape(image.shape[:2])
        return SegmentResult(mask=mask, iterations=0, converged=True, energies=[], flows=[])
    if not fg_side.any():
        raise DegenerateRegionError("trimap marks no subject pixels")
    if fg_side.all():
        raise DegenerateRegionError("trimap marks no background pixels")

    rng = np.random.default_rng(np.random.PCG64(np.random.SeedSequence([config.seed])))
    fg_mix = init_mixture(colors[fg_side], config.components, config.cov_reg, rng)
    bg_mix = init_mixture(colors[~fg_side], config.components, config.cov_reg, rng)

    beta = estimate_beta(image)
    arcs = smoothness_arcs(image, config.gamma, beta)
    mask_flat = fg_side.copy()
    energies: list[float] = []
    flows: list[float] = []
    converged = False
    done = 0
    for _ in range(config.iterations):
        fg_comp = fg_mix.component_scores(colors[mask_flat]).argmin(axis=1)
        bg_comp = bg_mix.component_scores(colors[~mask_flat]).argmin(axis=1)
        fg_mix = fit_mixture(colors[mask_flat], fg_comp, config.cov_reg)
        bg_mix = fit_mixture(colors[~mask_flat], bg_comp, config.cov_reg)
        graph = build_graph(image, trimap, fg_mix, bg_mix, config, beta=beta, arcs=arcs)
        flow, mask = graph.min_cut()
        flows.append(flow)
        energies.append(
            segmentation_energy(image, mask, fg_mix, bg_mix, config.gamma, beta=beta)
        )
        done += 1
        new_flat = mask.reshape(-1)
        if np.array_equal(new_flat, mask_flat):
            converged = True
            mask_flat = new_flat
            break
        mask_flat = new_flat
        # with no sure seeds a cut may claim everything for one side;
        # nothing is left to model, so the cut stands as the answer
        if mask_flat.all() or not mask_flat.any():
            break
    return SegmentResult(
        mask=mask_flat.reshape(image.shape[:2]),
        iterations=done,
        converged=converged,
        energies=energies,
        flows=flows,
    )
