"""Mixture fitting, graph construction, and the iterated-cut segment loop."""
import numpy as np
import pytest

from conftest import loose_trimap, two_cluster_scene
from subjectcut.errors import DegenerateRegionError
from subjectcut.grabcut import (
    GaussianMixture,
    GrabCutConfig,
    PixelGraph,
    assign_components,
    build_graph,
    estimate_beta,
    fit_mixture,
    init_gmms,
    init_mixture,
    learn_gmms,
    segment,
    segmentation_energy,
    smoothness_arcs,
)
from subjectcut.trimap import Label, ThresholdConfig, Trimap, build_trimap

LOG_2PI = float(np.log(2.0 * np.pi))


def score_oracle(colors, weights, means, covs):
    """(n, K) of -log(w_k N(c; mu_k, Sigma_k)) via numpy.linalg."""
    out = np.empty((colors.shape[0], weights.shape[0]))
    for j in range(weights.shape[0]):
        inv = np.linalg.inv(covs[j])
        _, logdet = np.linalg.slogdet(covs[j])
        diff = colors - means[j]
        maha = np.einsum("ni,ij,nj->n", diff, inv, diff)
        out[:, j] = -np.log(weights[j]) + 0.5 * (3.0 * LOG_2PI + logdet + maha)
    return out


def random_mixture(rng, k=3):
    weights = rng.uniform(0.2, 1.0, size=k)
    weights /= weights.sum()
    means = rng.uniform(0.1, 0.9, size=(k, 3))
    covs = np.empty((k, 3, 3))
    for j in range(k):
        a = rng.normal(size=(3, 3)) * 0.1
        covs[j] = a @ a.T + np.eye(3) * 0.02
    return GaussianMixture(weights=weights, means=means, covs=covs)


class TestMixtureScoring:
    def test_scores_match_linalg_oracle(self):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([61])))
        gmm = random_mixture(rng)
        colors = rng.uniform(size=(200, 3))
        got = gmm.component_scores(colors)
        want = score_oracle(colors, gmm.weights, gmm.means, gmm.covs)
        assert np.allclose(got, want, rtol=1e-9, atol=1e-9)
        assert np.allclose(gmm.neg_log_density(colors), want.min(axis=1))

    def test_non_positive_definite_covariance_rejected(self):
        covs = np.stack([np.diag([1.0, 1.0, -1.0])])
        with pytest.raises(DegenerateRegionError):
            GaussianMixture(
                weights=np.array([1.0]),
                means=np.zeros((1, 3)),
                covs=covs,
            )

    def test_assignment_is_argmin_with_low_index_ties(self):
        # two identical components: every pixel must pick component 0
        cov = np.eye(3) * 0.05
        gmm = GaussianMixture(
            weights=np.array([0.5, 0.5]),
            means=np.stack([np.full(3, 0.4), np.full(3, 0.4)]),
            covs=np.stack([cov, cov]),
        )
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([62])))
        image = rng.uniform(size=(8, 8, 3))
        region = np.ones((8, 8), dtype=bool)
        comps = assign_components(image, region, gmm)
        assert comps.shape == (64,)
        assert (comps == 0).all()

    def test_assignment_tracks_nearest_component(self):
        cov = np.eye(3) * 0.01
        gmm = GaussianMixture(
            weights=np.array([0.5, 0.5]),
            means=np.stack([np.full(3, 0.2), np.full(3, 0.8)]),
            covs=np.stack([cov, cov]),
        )
        image = np.stack(
            [np.full((1, 3), 0.15), np.full((1, 3), 0.85)]
        ).reshape(2, 1, 3)
        comps = assign_components(image, np.ones((2, 1), dtype=bool), gmm)
        assert comps.tolist() == [0, 1]


class TestMixtureFitting:
    def test_exact_means_weights_and_floor_covariance(self):
        colors = np.array(
            [[0.25, 0.5, 0.75]] * 3 + [[0.1, 0.2, 0.3]] * 1, dtype=np.float64
        )
        labels = np.array([0, 0, 0, 1])
        gmm = fit_mixture(colors, labels, cov_reg=1e-5)
        assert gmm.components == 2
        assert np.array_equal(gmm.means[0], [0.25, 0.5, 0.75])
        assert np.array_equal(gmm.means[1], [0.1, 0.2, 0.3])
        assert gmm.weights.tolist() == [0.75, 0.25]
        # constant clusters keep only the regularization on the diagonal
        assert np.allclose(gmm.covs, np.eye(3) * 1e-5)

    def test_covariance_is_population_second_moment_plus_reg(self):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([63])))
        colors = rng.uniform(size=(500, 3))
        labels = np.zeros(500, dtype=np.int64)
        gmm = fit_mixture(colors, labels, cov_reg=1e-5)
        want = np.cov(colors.T, ddof=0) + np.eye(3) * 1e-5
        assert np.allclose(gmm.covs[0], want, atol=1e-12)

    def test_empty_components_dropped(self):
        colors = np.tile([[0.3, 0.3, 0.3]], (4, 1))
        labels = np.array([0, 0, 3, 3])  # components 1, 2 unused
        gmm = fit_mixture(colors, labels, cov_reg=1e-5)
        assert gmm.components == 2
        assert gmm.weights.tolist() == [0.5, 0.5]

    def test_separated_clusters_recovered(self):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([64])))
        a = rng.normal([0.2, 0.2, 0.2], 0.02, size=(400, 3))
        b = rng.normal([0.8, 0.8, 0.8], 0.02, size=(400, 3))
        colors = np.clip(np.concatenate([a, b]), 0.0, 1.0)
        gmm = init_mixture(colors, k=2, cov_reg=1e-5, rng=rng)
        means = gmm.means[np.argsort(gmm.means[:, 0])]
        assert np.allclose(means[0], [0.2, 0.2, 0.2], atol=0.02)
        assert np.allclose(means[1], [0.8, 0.8, 0.8], atol=0.02)

    def test_identical_pixels_collapse_to_one_component(self):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([65])))
        colors = np.tile([[0.4, 0.5, 0.6]], (50, 1))
        gmm = init_mixture(colors, k=5, cov_reg=1e-5, rng=rng)
        assert gmm.components == 1
        assert np.allclose(gmm.covs[0], np.eye(3) * 1e-5)

    def test_too_few_pixels_for_components(self):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([66])))
        colors = np.ones((3, 3))
        with pytest.raises(DegenerateRegionError):
            init_mixture(colors, k=5, cov_reg=1e-5, rng=rng)

    def test_refit_is_a_fixed_point_on_separated_data(self):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([67])))
        h = w = 8
        image = np.empty((h, w, 3))
        image[: h // 2] = [0.2, 0.2, 0.2]
        image[h // 2 :] = [0.8, 0.8, 0.8]
        image += rng.normal(0, 0.01, image.shape)
        image = np.clip(image, 0, 1)
        mask = np.zeros((h, w), dtype=bool)
        mask[: h // 2] = True

        codes = np.where(mask, 255, 0).astype(np.uint8)
        trimap = Trimap.from_pgm_codes(codes)
        fg0, bg0 = init_gmms(image, trimap, k=2, seed=0)
        fa = assign_components(image, mask, fg0)
        ba = assign_components(image, ~mask, bg0)
        fg1, bg1 = learn_gmms(image, mask, fa, ba)
        fa2 = assign_components(image, mask, fg1)
        ba2 = assign_components(image, ~mask, bg1)
        fg2, bg2 = learn_gmms(image, mask, fa2, ba2)
        for m1, m2 in ((fg1, fg2), (bg1, bg2)):
            assert np.allclose(m1.means, m2.means, atol=1e-9)
            assert np.allclose(m1.covs, m2.covs, atol=1e-9)
            assert np.allclose(m1.weights, m2.weights, atol=1e-9)

    def test_learn_rejects_empty_side(self):
        image = np.full((4, 4, 3), 0.5)
        mask = np.ones((4, 4), dtype=bool)
        comps = np.zeros(16, dtype=np.int64)
        with pytest.raises(DegenerateRegionError):
            learn_gmms(image, mask, comps, np.empty(0, dtype=np.int64))

    def test_init_gmms_deterministic_per_seed(self):
        image, truth = two_cluster_scene(3)
        trimap = loose_trimap(truth)
        a_fg, a_bg = init_gmms(image, trimap, seed=9)
        b_fg, b_bg = init_gmms(image, trimap, seed=9)
        assert np.array_equal(a_fg.means, b_fg.means)
        assert np.array_equal(a_bg.covs, b_bg.covs)


class TestContrastTerms:
    def test_constant_image_gives_zero_beta(self):
        assert estimate_beta(np.full((6, 6, 3), 0.4)) == 0.0

    def test_beta_matches_pairwise_mean_oracle(self):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([68])))
        image = rng.uniform(size=(7, 9, 3))
        h, w = image.shape[:2]
        sq = []
        for r in range(h):
            for c in range(w):
                for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < h and 0 <= cc < w:
                        sq.append(((image[r, c] - image[rr, cc]) ** 2).sum())
        want = 1.0 / (2.0 * np.mean(sq))
        assert estimate_beta(image) == pytest.approx(want, rel=1e-12)

    def test_arc_count_and_weight_formula(self):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([69])))
        image = rng.uniform(size=(5, 6, 3))
        h, w = image.shape[:2]
        beta = estimate_beta(image)
        us, vs, caps = smoothness_arcs(image, gamma=50.0, beta=beta)
        expected_arcs = h * (w - 1) + (h - 1) * w + 2 * (h - 1) * (w - 1)
        assert us.shape == vs.shape == caps.shape == (expected_arcs,)
        flat = image.reshape(-1, 3)
        for i in range(0, expected_arcs, 7):
            u, v = int(us[i]), int(vs[i])
            ur, uc = divmod(u, w)
            vr, vc = divmod(v, w)
            dist = np.hypot(ur - vr, uc - vc)
            diff2 = ((flat[u] - flat[v]) ** 2).sum()
            assert caps[i] == pytest.approx(
                50.0 / dist * np.exp(-beta * diff2), rel=1e-12
            )

    def test_flat_image_arcs_reduce_to_distance_prior(self):
        image = np.full((4, 4, 3), 0.7)
        us, vs, caps = smoothness_arcs(image, gamma=10.0, beta=0.0)
        assert set(np.round(np.unique(caps), 9)) == {
            10.0, round(10.0 / np.sqrt(2.0), 9)
        }


class TestGraphAssembly:
    def _mixtures(self, seed=70):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed])))
        return random_mixture(rng, 2), random_mixture(rng, 2)

    def test_seed_pixels_get_hard_one_sided_links(self):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([71])))
        image = rng.uniform(size=(4, 4, 3))
        labels = np.full((4, 4), int(Label.PROB_FG), dtype=np.uint8)
        labels[0, 0] = int(Label.SURE_FG)
        labels[3, 3] = int(Label.SURE_BG)
        fg, bg = self._mixtures()
        cfg = GrabCutConfig(gamma=50.0)
        graph = build_graph(image, Trimap(labels), fg, bg, cfg)
        hard = 9.0 * 50.0 * 8.0
        # any shared nonnegativity shift cancels in the pairwise difference
        assert graph.source_caps[0] - graph.sink_caps[0] == hard
        assert graph.sink_caps[15] - graph.source_caps[15] == hard
        shift = graph.sink_caps[0]
        assert shift >= 0.0
        assert graph.source_caps[15] == shift
        assert graph.source_caps.min() >= 0.0 and graph.sink_caps.min() >= 0.0

    def test_uncertain_pixels_carry_mixture_costs(self):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([72])))
        image = rng.uniform(size=(3, 3, 3))
        labels = np.full((3, 3), int(Label.PROB_BG), dtype=np.uint8)
        fg, bg = self._mixtures()
        cfg = GrabCutConfig()
        graph = build_graph(image, Trimap(labels), fg, bg, cfg)
        colors = image.reshape(-1, 3)
        # a shared shift may have been applied; the difference is invariant
        want_diff = bg.neg_log_density(colors) - fg.neg_log_density(colors)
        got_diff = graph.source_caps - graph.sink_caps
        assert np.allclose(got_diff, want_diff, atol=1e-12)

    def test_capacities_stay_legal_with_collapsed_covariance(self):
        # a floor-covariance component yields densities > 1, i.e. negative
        # costs; the graph must still only contain nonnegative capacities
        cov = np.stack([np.eye(3) * 1e-5])
        sharp = GaussianMixture(
            weights=np.array([1.0]), means=np.full((1, 3), 0.5), covs=cov
        )
        broad = GaussianMixture(
            weights=np.array([1.0]), means=np.full((1, 3), 0.5),
            covs=np.stack([np.eye(3) * 0.1]),
        )
        image = np.full((3, 3, 3), 0.5)
        labels = np.full((3, 3), int(Label.PROB_FG), dtype=np.uint8)
        graph = build_graph(image, Trimap(labels), sharp, broad, GrabCutConfig())
        assert sharp.neg_log_density(image.reshape(-1, 3)).min() < 0.0
        assert graph.source_caps.min() >= 0.0
        assert graph.sink_caps.min() >= 0.0
        flow, mask = graph.min_cut()
        assert mask.all()  # sharp subject model wins everywhere

    def test_pixel_graph_cut_on_handmade_problem(self):
        # 1x2 image: left pixel wants subject, right wants background,
        # weak coupling between them
        graph = PixelGraph(
            height=1,
            width=2,
            source_caps=np.array([5.0, 0.5]),
            sink_caps=np.array([0.5, 5.0]),
            edge_us=np.array([0], dtype=np.int64),
            edge_vs=np.array([1], dtype=np.int64),
            edge_caps=np.array([0.25]),
        )
        flow, mask = graph.min_cut()
        assert mask.tolist() == [[True, False]]
        assert flow == pytest.approx(0.5 + 0.5 + 0.25)


class TestEnergy:
    def test_matches_looped_oracle(self):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([73])))
        image = rng.uniform(size=(6, 6, 3))
        mask = rng.uniform(size=(6, 6)) > 0.5
        fg = random_mixture(rng, 2)
        bg = random_mixture(rng, 2)
        gamma = 50.0
        beta = estimate_beta(image)
        h, w = image.shape[:2]
        colors = image.reshape(-1, 3)
        flat = mask.reshape(-1)
        want = 0.0
        for i in range(h * w):
            gmm = fg if flat[i] else bg
            scores = score_oracle(
                colors[i : i + 1], gmm.weights, gmm.means, gmm.covs
            )
            want += scores.min()
        for r in range(h):
            for c in range(w):
                for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
                    rr, cc = r + dr, c + dc
                    if not (0 <= rr < h and 0 <= cc < w):
                        continue
                    if mask[r, c] == mask[rr, cc]:
                        continue
                    diff2 = ((image[r, c] - image[rr, cc]) ** 2).sum()
                    dist = np.hypot(dr, dc)
                    want += gamma / dist * np.exp(-beta * diff2)
        got = segmentation_energy(image, mask, fg, bg, gamma, beta=beta)
        assert got == pytest.approx(float(want), rel=1e-9)

    def test_refit_does_not_raise_energy_of_a_frozen_mask(self):
        image, truth = two_cluster_scene(11)
        mask = truth
        codes = np.where(mask, 255, 0).astype(np.uint8)
        trimap = Trimap.from_pgm_codes(codes)
        fg0, bg0 = init_gmms(image, trimap, k=5, seed=0)
        beta = estimate_beta(image)
        before = segmentation_energy(image, mask, fg0, bg0, 50.0, beta=beta)
        fa = assign_components(image, mask, fg0)
        ba = assign_components(image, ~mask, bg0)
        fg1, bg1 = learn_gmms(image, mask, fa, ba)
        after = segmentation_energy(image, mask, fg1, bg1, 50.0, beta=beta)
        assert after <= before + 1e-6 * abs(before)


class TestSegment:
    def test_recovers_subject_with_wide_uncertain_band(self):
        for seed in range(5):
            image, truth = two_cluster_scene(seed)
            trimap = loose_trimap(truth)
            result = segment(image, trimap)
            inter = (result.mask & truth).sum()
            union = (result.mask | truth).sum()
            assert inter / union >= 0.99, f"seed {seed}: IoU {inter / union:.4f}"

    def test_energy_never_increases_across_iterations(self):
        for seed in (1, 5, 9):
            image, truth = two_cluster_scene(seed)
            result = segment(image, loose_trimap(truth))
            for prev, cur in zip(result.energies, result.energies[1:]):
                assert cur <= prev + 1e-6 * abs(prev)

    def test_seed_pixels_never_flip(self):
        image, truth = two_cluster_scene(2)
        trimap = loose_trimap(truth)
        result = segment(image, trimap)
        assert result.mask[trimap.mask(Label.SURE_FG)].all()
        assert not result.mask[trimap.mask(Label.SURE_BG)].any()

    def test_repeat_runs_are_byte_identical(self):
        image, truth = two_cluster_scene(4)
        trimap = loose_trimap(truth)
        a = segment(image, trimap)
        b = segment(image, trimap)
        assert a.mask.tobytes() == b.mask.tobytes()
        assert a.energies == b.energies
        assert a.flows == b.flows

    def test_fully_decided_trimap_skips_the_loop(self):
        image, truth = two_cluster_scene(6)
        codes = np.where(truth, 255, 0).astype(np.uint8)
        result = segment(image, Trimap.from_pgm_codes(codes))
        assert np.array_equal(result.mask, truth)
        assert result.iterations == 0
        assert result.converged
        assert result.flows == []

    def test_missing_sides_rejected(self):
        image = np.full((8, 8, 3), 0.5)
        all_bg = Trimap(np.full((8, 8), int(Label.PROB_BG), dtype=np.uint8))
        with pytest.raises(DegenerateRegionError):
            segment(image, all_bg)
        all_fg = Trimap(np.full((8, 8), int(Label.PROB_FG), dtype=np.uint8))
        with pytest.raises(DegenerateRegionError):
            segment(image, all_fg)

    def test_input_validation(self):
        trimap = Trimap(np.zeros((4, 4), dtype=np.uint8))
        with pytest.raises(ValueError):
            segment(np.zeros((4, 4)), trimap)  # not RGB
        with pytest.raises(ValueError):
            segment(np.zeros((5, 4, 3)), trimap)  # shape mismatch
        bad = np.full((4, 4, 3), 1.5)
        with pytest.raises(ValueError):
            segment(bad, trimap)
        nan = np.full((4, 4, 3), np.nan)
        with pytest.raises(ValueError):
            segment(nan, trimap)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            GrabCutConfig(components=0)
        with pytest.raises(ValueError):
            GrabCutConfig(gamma=-1.0)
        with pytest.raises(ValueError):
            GrabCutConfig(iterations=0)
        with pytest.raises(ValueError):
            GrabCutConfig(cov_reg=0.0)

    def test_threshold_banded_scene_end_to_end(self):
        # build the trimap through the threshold path instead of by hand
        image, truth = two_cluster_scene(8, noise=0.05)
        soft = np.where(truth, 0.95, 0.02).astype(np.float64)
        soft[truth] -= np.linspace(0, 0.3, truth.sum())  # graded interior
        trimap = build_trimap(np.clip(soft, 0, 1), ThresholdConfig())
        result = segment(image, trimap)
        inter = (result.mask & truth).sum()
        union = (result.mask | truth).sum()
        assert inter / union >= 0.99
