"""Kernel-denoiser contracts against dense materialization oracles."""

import numpy as np
import pytest

from kernelreg.denoiser import KernelConfig, KernelDenoiser, build_denoiser
from kernelreg.errors import ConfigurationError, ShapeMismatch, SizeCapExceeded
from kernelreg.image import Image


def _rand_image(shape, seed):
    return Image(np.random.default_rng(seed).uniform(0.0, 1.0, size=shape))


def _build(shape=(12, 12), seed=0, **kw):
    cfg = KernelConfig(**{"patch_radius": 1, "search_radius": 2, **kw})
    return build_denoiser(_rand_image(shape, seed), cfg)


class TestKernelConfig:
    def test_defaults_resolve(self):
        cfg = KernelConfig()
        assert cfg.effective_patch_radius == 3
        assert cfg.effective_spatial_bandwidth == 5.0
        assert KernelConfig(variant="bilateral").effective_patch_radius == 0

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            KernelConfig(variant="nlm-cauchy")
        with pytest.raises(ConfigurationError):
            KernelConfig(search_radius=0)
        with pytest.raises(ConfigurationError):
            KernelConfig(intensity_bandwidth=0.0)
        with pytest.raises(ConfigurationError):
            KernelConfig(variant="yaroslavsky", patch_radius=2)
        with pytest.raises(ConfigurationError):
            KernelConfig(spatial_profile="cone")

    def test_dict_round_trip(self):
        cfg = KernelConfig(variant="nlm-laplacian", patch_radius=2, search_radius=4,
                           intensity_bandwidth=0.2)
        again = KernelConfig.from_dict(cfg.to_dict())
        assert again == KernelConfig(variant="nlm-laplacian", patch_radius=2,
                                     search_radius=4, intensity_bandwidth=0.2,
                                     spatial_bandwidth=2.0)


class TestBuild:
    def test_one_pixel_image_is_identity(self):
        d = _build(shape=(1, 1))
        W, dd = d.materialize()
        np.testing.assert_array_equal(W, [[1.0]])
        out = d.apply(Image.constant(0.37, (1, 1)))
        assert out.pixels[0, 0] == 0.37

    @pytest.mark.parametrize("variant", ["nlm-gaussian", "nlm-laplacian", "bilateral", "yaroslavsky"])
    def test_constant_guide_box_profile_is_box_average(self, variant):
        # constant features make every within-window weight equal, so W
        # reduces to a normalized box average over the search window
        pr = 1 if variant.startswith("nlm") else 0
        cfg = KernelConfig(variant=variant, patch_radius=pr, search_radius=2,
                           spatial_profile="box")
        guide = Image.constant(0.5, (8, 8))
        den = build_denoiser(guide, cfg)
        W, _ = den.materialize()
        for row in W:
            nz = row[row > 0]
            np.testing.assert_allclose(nz, nz[0], rtol=1e-14)
        np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
        out = den.apply(guide)
        np.testing.assert_allclose(out.pixels, 0.5, atol=1e-12)

    def test_kernel_symmetric(self):
        den = _build(shape=(12, 12), seed=3)
        K = den.materialize_kernel()
        assert np.max(np.abs(K - K.T)) <= 1e-12 * max(1.0, np.max(np.abs(K)))

    def test_row_sums_match_dense_and_positive(self):
        den = _build(seed=4)
        K = den.materialize_kernel()
        np.testing.assert_allclose(K.sum(axis=1), den.row_sums.reshape(-1), rtol=1e-12)
        assert np.all(den.row_sums > 0)


class TestApply:
    def test_row_stochastic_ones_fixed_point(self):
        for variant in ("nlm-gaussian", "bilateral"):
            den = _build(seed=5, variant=variant,
                         patch_radius=1 if variant.startswith("nlm") else 0)
            e = Image.constant(1.0, den.shape)
            out = den.apply(e)
            assert np.max(np.abs(out.pixels - 1.0)) <= 1e-10

    def test_matches_dense_product(self):
        den = _build(shape=(12, 12), seed=6)
        W, _ = den.materialize()
        rng = np.random.default_rng(7)
        for _ in range(5):
            x = rng.standard_normal(den.n)
            np.testing.assert_allclose(den.apply_vec(x), W @ x, atol=1e-12)

    def test_convex_combination_bound(self):
        den = _build(shape=(10, 10), seed=8)
        rng = np.random.default_rng(9)
        for _ in range(10):
            x = rng.uniform(-1.0, 2.0, size=den.n)
            out = den.apply_vec(x)
            assert out.min() >= x.min() - 1e-12
            assert out.max() <= x.max() + 1e-12

    def test_shape_mismatch(self):
        den = _build()
        with pytest.raises(ShapeMismatch):
            den.apply(Image.constant(0.0, (3, 3)))


class TestAdjoint:
    def test_inner_product_identity(self):
        den = _build(shape=(10, 10), seed=10)
        rng = np.random.default_rng(11)
        for _ in range(100):
            a = rng.standard_normal(den.n)
            b = rng.standard_normal(den.n)
            lhs = np.dot(den.apply_vec(a), b)
            rhs = np.dot(a, den.adjoint_vec(b))
            assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs), 1e-30)

    def test_dense_transpose_matches_adjoint_operator(self):
        den = _build(shape=(8, 8), seed=12)
        W, _ = den.materialize()
        WT = np.empty_like(W)
        e = np.zeros(den.n)
        for j in range(den.n):
            e[j] = 1.0
            WT[:, j] = den.adjoint_vec(e)
            e[j] = 0.0
        np.testing.assert_allclose(WT, W.T, atol=1e-12)

    def test_symmetric_where_row_sums_constant(self):
        # constant guide + box profile: D is constant away from the border,
        # so W is symmetric there and apply == adjoint-apply on the interior
        cfg = KernelConfig(patch_radius=1, search_radius=2, spatial_profile="box")
        den = build_denoiser(Image.constant(0.3, (12, 12)), cfg)
        x = _rand_image((12, 12), seed=13)
        fwd = den.apply(x).pixels
        adj = den.apply_adjoint(x).pixels
        margin = 4  # 2 * search_radius
        np.testing.assert_allclose(
            fwd[margin:-margin, margin:-margin],
            adj[margin:-margin, margin:-margin],
            atol=1e-12,
        )


class TestSpectrum:
    def test_similar_symmetric_form_real_spectrum_in_unit_interval(self):
        # eigenvalues of S = D^{-1/2} K D^{-1/2} are real and, for the
        # default hat profile, within [-1e-8, 1 + 1e-8]
        for seed in range(4):
            den = _build(shape=(12, 12), seed=seed)
            K = den.materialize_kernel()
            d = den.row_sums.reshape(-1)
            S = K / np.sqrt(np.outer(d, d))
            ev = np.linalg.eigvalsh(0.5 * (S + S.T))
            assert ev.min() >= -1e-8
            assert ev.max() <= 1.0 + 1e-8

    def test_hat_profile_nonsingular(self):
        for seed in range(5):
            den = _build(shape=(8, 8), seed=100 + seed, spatial_profile="hat")
            W, _ = den.materialize()
            smin = np.linalg.svd(W, compute_uv=False).min()
            assert smin > 1e-10

    @pytest.mark.parametrize("variant", ["nlm-gaussian", "nlm-laplacian", "bilateral", "yaroslavsky"])
    def test_all_variants_hat_spectrum(self, variant):
        pr = 1 if variant.startswith("nlm") else 0
        den = _build(shape=(8, 8), seed=14, variant=variant, patch_radius=pr)
        K = den.materialize_kernel()
        d = den.row_sums.reshape(-1)
        S = K / np.sqrt(np.outer(d, d))
        ev = np.linalg.eigvalsh(0.5 * (S + S.T))
        assert ev.min() >= -1e-8 and ev.max() <= 1.0 + 1e-8


class TestMaterialize:
    def test_two_by_two_constant_guide(self):
        cfg = KernelConfig(patch_radius=0, search_radius=1, spatial_profile="box")
        den = build_denoiser(Image.constant(0.7, (2, 2)), cfg)
        W, d = den.materialize()
        np.testing.assert_allclose(W, 0.25, atol=1e-14)
        np.testing.assert_allclose(d, 4.0, atol=1e-14)

    def test_cap_enforced(self):
        den = _build(shape=(12, 12))
        with pytest.raises(SizeCapExceeded):
            den.materialize(cap=100)

    def test_search_window_larger_than_image(self):
        den = _build(shape=(5, 5), search_radius=9, patch_radius=1)
        W, _ = den.materialize()
        np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
