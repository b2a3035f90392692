"""Dense spectral oracle: regularizer, scaled prox, appendix properties."""

import math

import numpy as np
import pytest

from kernelreg.denoiser import KernelConfig, build_denoiser
from kernelreg.errors import PropertyViolation, SizeCapExceeded
from kernelreg.image import Image
from kernelreg.oracle import spectral_decompose, verify_appendix


def _rand_image(shape, seed):
    return Image(np.random.default_rng(seed).uniform(0.0, 1.0, size=shape))


def _nlm_form(shape=(8, 8), seed=0, **kw):
    cfg = KernelConfig(**{"patch_radius": 1, "search_radius": 2, **kw})
    den = build_denoiser(_rand_image(shape, seed), cfg)
    W, d = den.materialize()
    return spectral_decompose(W, d), W, d


def _rank_deficient_form(n_side=4):
    # box average over the whole image with a constant guide: K = ee^T
    cfg = KernelConfig(patch_radius=0, search_radius=16, spatial_profile="box")
    den = build_denoiser(Image.constant(0.5, (n_side, n_side)), cfg)
    W, d = den.materialize()
    return spectral_decompose(W, d), W, d


class TestSpectralDecompose:
    def test_identity(self):
        n = 6
        form = spectral_decompose(np.eye(n), np.ones(n))
        np.testing.assert_allclose(form.lam, 1.0, atol=1e-12)
        assert form.rank == n
        np.testing.assert_allclose(form.W_dagger, np.eye(n), atol=1e-10)

    def test_rank_one_projector(self):
        form, W, d = _rank_deficient_form(4)
        n = 16
        np.testing.assert_allclose(W, 1.0 / n, atol=1e-14)
        assert form.rank == 1
        np.testing.assert_allclose(form.lam[0], 1.0, atol=1e-10)
        np.testing.assert_allclose(form.lam[1:], 0.0, atol=1e-10)

    def test_generalized_inverse_identity(self):
        for seed in range(3):
            form, W, _ = _nlm_form(seed=seed)
            err = np.max(np.abs(W @ form.W_dagger @ W - W))
            assert err <= 1e-8

    def test_eigen_basis_orthonormal(self):
        form, _, _ = _nlm_form(seed=4)
        n = form.n
        assert np.max(np.abs(form.Q.T @ form.Q - np.eye(n))) <= 1e-10

    def test_eigenvalues_sorted_descending_in_unit_interval(self):
        form, _, _ = _nlm_form(seed=5)
        assert np.all(np.diff(form.lam) <= 1e-15)
        assert form.lam.min() >= 0.0 and form.lam.max() <= 1.0
        assert form.preclip_min >= -1e-8

    def test_indefinite_kernel_rejected(self):
        # truncated box window is not PSD; the clip guard must fire
        cfg = KernelConfig(patch_radius=0, search_radius=2, spatial_profile="box")
        den = build_denoiser(Image.constant(0.5, (12, 12)), cfg)
        W, d = den.materialize()
        with pytest.raises(PropertyViolation):
            spectral_decompose(W, d)

    def test_dense_cap(self):
        n = 4097
        with pytest.raises(SizeCapExceeded):
            spectral_decompose(np.eye(n), np.ones(n))


class TestPhi:
    def test_ones_vector_is_zero(self):
        form, _, _ = _nlm_form(seed=6)
        e = np.ones(form.n)
        assert abs(form.phi(e)) <= 1e-10

    def test_off_range_is_infinite(self):
        form, W, _ = _rank_deficient_form(4)
        rng = np.random.default_rng(7)
        x = rng.standard_normal(16)
        assert form.phi(x) == math.inf
        # but the range component is finite
        assert math.isfinite(form.phi(form.project_to_range(x)))

    def test_nonnegative_on_range(self):
        form, W, _ = _nlm_form(seed=8)
        rng = np.random.default_rng(9)
        for _ in range(200):
            x = W @ rng.standard_normal(form.n)
            assert form.phi(x) >= -1e-10

    def test_midpoint_convexity(self):
        form, W, _ = _nlm_form(seed=10)
        rng = np.random.default_rng(11)
        for _ in range(100):
            a = W @ rng.standard_normal(form.n)
            b = W @ rng.standard_normal(form.n)
            mid = form.phi(0.5 * (a + b))
            assert mid <= 0.5 * (form.phi(a) + form.phi(b)) + 1e-10

    def test_two_formulas_agree(self):
        form, W, _ = _nlm_form(seed=12)
        rng = np.random.default_rng(13)
        for _ in range(50):
            x = W @ rng.standard_normal(form.n)
            a = form.phi(x)
            b = form.phi_eigen_form(x)
            assert a == pytest.approx(b, rel=1e-8, abs=1e-10)


class TestScaledProx:
    @pytest.mark.parametrize("variant,pr", [
        ("nlm-gaussian", 1), ("nlm-laplacian", 1), ("bilateral", 0), ("yaroslavsky", 0),
    ])
    def test_prox_equals_denoiser(self, variant, pr):
        cfg = KernelConfig(variant=variant, patch_radius=pr, search_radius=2)
        den = build_denoiser(_rand_image((8, 8), seed=14), cfg)
        W, d = den.materialize()
        form = spectral_decompose(W, d)
        rng = np.random.default_rng(15)
        for _ in range(50):
            x = rng.standard_normal(64)
            assert np.max(np.abs(form.scaled_prox(x) - W @ x)) <= 1e-8

    def test_identity_prox(self):
        n = 5
        form = spectral_decompose(np.eye(n), np.full(n, 2.0))
        x = np.random.default_rng(16).standard_normal(n)
        np.testing.assert_allclose(form.scaled_prox(x), x, atol=1e-12)

    def test_ones_fixed_point(self):
        form, _, _ = _nlm_form(seed=17)
        e = np.ones(form.n)
        np.testing.assert_allclose(form.scaled_prox(e), e, atol=1e-9)

    def test_minimality_against_perturbations(self):
        form, W, _ = _nlm_form(seed=18)
        rng = np.random.default_rng(19)
        x = rng.standard_normal(form.n)
        z_star = form.scaled_prox(x)
        base = form.prox_objective(x, z_star)
        for _ in range(20):
            z_other = z_star + 0.1 * (W @ rng.standard_normal(form.n))
            assert form.prox_objective(x, z_other) >= base - 1e-10


class TestVerifyAppendix:
    def test_default_run_passes(self):
        report = verify_appendix(trials=50, n=8, seed=0)
        assert report.passed
        for check in report.checks:
            assert check.max_violation <= 1e-8

    def test_zero_trials_vacuous(self):
        report = verify_appendix(trials=0, n=8, seed=0)
        assert report.passed
        assert all(c.trials == 0 for c in report.checks)

    def test_render_format(self):
        report = verify_appendix(trials=10, n=6, seed=1)
        text = report.render_text()
        assert "property=psd_sum_null_and_range" in text
        assert "overall=pass" in text

    def test_cap(self):
        with pytest.raises(SizeCapExceeded):
            verify_appendix(trials=1, n=100)

    def test_trivial_psd_cases(self):
        # A = B = 0: every vector is in the null space, inclusions trivial
        from kernelreg.oracle import _null_range_bases

        null, rng_basis = _null_range_bases(np.zeros((4, 4)))
        assert null.shape[1] == 4 and rng_basis.shape[1] == 0
        # A = diag(1,0), B = diag(0,1): N(A+B) = {0}, R(A+B) = R^2
        null, rng_basis = _null_range_bases(np.diag([1.0, 0.0]) + np.diag([0.0, 1.0]))
        assert null.shape[1] == 0 and rng_basis.shape[1] == 2
