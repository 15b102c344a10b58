"""Spectral models: transforms, diffusion oracles, semigroup, initial data."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from spde_taylor.models import (
    BadParameterError,
    GridWorkspace,
    ModelError,
    OutOfRangeError,
    SpectralState,
    apply_diffusion,
    apply_semigroup,
    convolution_variances,
    diffusion_matrix,
    heat_additive_model,
    heat_multiplicative_model,
    initial_condition,
    smoothed_diffusion_hs_norm,
)

SQRT2 = np.sqrt(2.0)


def unit_state(modes: int, mode: int) -> SpectralState:
    coeffs = np.zeros(modes)
    coeffs[mode - 1] = 1.0
    return SpectralState(coeffs)


@pytest.fixture(scope="module")
def mult():
    return heat_multiplicative_model(modes=64, noise_modes=64)


@pytest.fixture(scope="module")
def additive():
    return heat_additive_model(modes=8, noise_modes=8)


class TestSpectralState:
    def test_norm_is_euclidean(self):
        state = SpectralState(np.array([3.0, 4.0]))
        assert state.norm() == 5.0

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            SpectralState(np.array([1.0, np.nan]))

    def test_immutable(self):
        state = SpectralState(np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            state.coeffs[0] = 7.0


class TestModelParameters:
    def test_eigenvalues(self, mult):
        assert mult.eigenvalues[0] == pytest.approx(np.pi**2)
        assert mult.eigenvalues[1] == pytest.approx(4 * np.pi**2)

    def test_exponents(self, mult):
        assert mult.gamma == pytest.approx(0.25 - 0.005)
        assert mult.delta == 0.25

    def test_bad_r(self):
        with pytest.raises(BadParameterError):
            heat_multiplicative_model(modes=8, noise_modes=8, r=0.3)
        with pytest.raises(BadParameterError):
            heat_multiplicative_model(modes=8, noise_modes=8, r=0.0)


class TestSemigroup:
    def test_identity_at_zero(self, mult):
        state = initial_condition("smooth_poly", 64)
        assert apply_semigroup(state, 0.0, mult) == state

    def test_mode_one_halves_at_log2_over_pi2(self, mult):
        state = unit_state(64, 1)
        t = np.log(2.0) / np.pi**2
        out = apply_semigroup(state, t, mult)
        assert out.coeffs[0] == pytest.approx(0.5, rel=1e-14)

    def test_contraction_and_decay(self, mult):
        rng = np.random.default_rng(3)
        state = SpectralState(rng.standard_normal(64))
        assert apply_semigroup(state, 0.7, mult).norm() <= state.norm()
        assert apply_semigroup(state, 80.0, mult).norm() < 1e-8

    def test_composition(self, mult):
        rng = np.random.default_rng(4)
        state = SpectralState(rng.standard_normal(64))
        for s, t in [(0.3, 0.4), (1e-4, 2e-3), (0.015625, 0.25)]:
            once = apply_semigroup(state, s + t, mult)
            twice = apply_semigroup(apply_semigroup(state, s, mult), t, mult)
            np.testing.assert_allclose(
                twice.coeffs, once.coeffs, rtol=1e-13, atol=1e-300
            )

    def test_negative_time_rejected(self, mult):
        with pytest.raises(ValueError):
            apply_semigroup(unit_state(64, 1), -0.1, mult)


class TestMultiplicativeDiffusion:
    def test_e1_times_e1_matches_analytic_series(self, mult):
        # B(e1)(e1) = 2 sin^2(pi x); its sine coefficients are
        # -8*sqrt2 / (pi i (i^2 - 4)) on odd modes and zero on even modes.
        got = apply_diffusion(mult, 0, unit_state(64, 1), [], 1).coeffs
        i = np.arange(1, 65, dtype=float)
        exact = np.zeros(64)
        odd = np.arange(1, 65) % 2 == 1
        exact[odd] = -8.0 * SQRT2 / (np.pi * i[odd] * (i[odd] ** 2 - 4.0))
        np.testing.assert_allclose(got, exact, atol=1e-6)

    def test_operator_norm_bounded_by_state_norm(self, mult):
        # |B(v)w|_{L1} <= |v| |w| via Cauchy-Schwarz; on the grid the
        # quadrature L1 norm of the product must obey the same bound.
        ws = mult.workspace()
        rng = np.random.default_rng(11)
        for _ in range(10):
            v = rng.standard_normal(64)
            w = rng.standard_normal(64)
            product = ws.to_grid(v) * ws.to_grid(w)
            l1 = np.abs(product).sum() / (ws.grid_points + 1)
            assert l1 <= np.linalg.norm(v) * np.linalg.norm(w) + 1e-9

    def test_bilinear_symmetry(self, mult):
        # <B(v) e_k, e_m> = <B(v) e_m, e_k> since both equal int v e_k e_m.
        rng = np.random.default_rng(12)
        v = SpectralState(rng.standard_normal(64))
        mat = diffusion_matrix(mult, v)
        np.testing.assert_allclose(mat[:64, :64], mat[:64, :64].T, atol=1e-12)

    def test_first_derivative_ignores_base(self, mult):
        rng = np.random.default_rng(13)
        base_a = SpectralState(rng.standard_normal(64))
        base_b = SpectralState(rng.standard_normal(64))
        g = SpectralState(rng.standard_normal(64))
        out_a = apply_diffusion(mult, 1, base_a, [g], 3)
        out_b = apply_diffusion(mult, 1, base_b, [g], 3)
        np.testing.assert_array_equal(out_a.coeffs, out_b.coeffs)

    def test_second_derivative_is_zero(self, mult):
        g = unit_state(64, 2)
        out = apply_diffusion(mult, 2, unit_state(64, 1), [g, g], 1)
        assert out.norm() == 0.0

    def test_noise_mode_out_of_range(self, mult):
        with pytest.raises(OutOfRangeError):
            apply_diffusion(mult, 0, unit_state(64, 1), [], 65)

    def test_undersized_grid_rejected_for_products(self, mult):
        cramped = GridWorkspace(grid_points=64)
        with pytest.raises(ValueError, match="grid points"):
            apply_diffusion(mult, 0, unit_state(64, 1), [], 1, cramped)

    def test_negative_order_rejected(self, mult):
        with pytest.raises(ValueError):
            apply_diffusion(mult, -1, unit_state(64, 1), [], 1)


class TestAdditiveDiffusion:
    def test_column_is_weighted_unit(self, additive):
        out = apply_diffusion(additive, 0, unit_state(8, 1), [], 3)
        expected = np.zeros(8)
        expected[2] = 1.0 / 3.0
        np.testing.assert_array_equal(out.coeffs, expected)

    def test_derivative_vanishes(self, additive):
        g = unit_state(8, 1)
        assert apply_diffusion(additive, 1, g, [g], 1).norm() == 0.0

    def test_base_independence(self, additive):
        a = apply_diffusion(additive, 0, unit_state(8, 1), [], 2)
        b = apply_diffusion(additive, 0, unit_state(8, 5), [], 2)
        np.testing.assert_array_equal(a.coeffs, b.coeffs)

    def test_convolution_variance_formula(self, additive):
        # Ito isometry for the diagonal operator, cross-checked by quadrature
        # of the integrand b_i^2 e^{-2 lambda_i (h - s)} over [0, h].
        h = 0.125
        got = convolution_variances(additive, h)
        lam = additive.eigenvalues
        for i in range(8):
            b = 1.0 / (i + 1)
            integral, _ = quad(
                lambda s, i=i: np.exp(-2.0 * lam[i] * (h - s)), 0.0, h
            )
            assert got[i] == pytest.approx(b * b * integral, rel=1e-9)

    def test_variances_need_diagonal_model(self, mult):
        with pytest.raises(ModelError):
            convolution_variances(mult, 0.1)


class TestInitialConditions:
    def test_first_mode(self):
        state = initial_condition("first_mode", 16)
        np.testing.assert_array_equal(state.coeffs, np.eye(16)[0])

    def test_smooth_poly_against_quadrature(self):
        state = initial_condition("smooth_poly", 12)
        for i in range(1, 13):
            oracle, _ = quad(
                lambda x, i=i: x * (1 - x) * SQRT2 * np.sin(i * np.pi * x), 0, 1
            )
            assert state.coeffs[i - 1] == pytest.approx(oracle, abs=1e-12)

    def test_smooth_poly_closed_form(self):
        state = initial_condition("smooth_poly", 9)
        assert state.coeffs[0] == pytest.approx(4 * SQRT2 / np.pi**3)
        assert state.coeffs[1] == 0.0
        assert state.coeffs[8] == pytest.approx(4 * SQRT2 / (np.pi**3 * 9**3))

    @pytest.mark.parametrize("kind", ["first_mode", "smooth_poly"])
    def test_fractional_norm_finite(self, kind, mult):
        # |(-A)^gamma u0| at the truncation stays modest for gamma < 3/4,
        # and doubling the truncation barely moves it (tail convergence).
        for gamma in (0.245, 0.5, 0.74):
            small = initial_condition(kind, 32)
            large = initial_condition(kind, 64)
            lam_small = mult.eigenvalues[:32]
            lam_large = mult.eigenvalues
            norm_small = np.sqrt(np.sum(lam_small ** (2 * gamma) * small.coeffs**2))
            norm_large = np.sqrt(np.sum(lam_large ** (2 * gamma) * large.coeffs**2))
            assert np.isfinite(norm_large)
            assert norm_large - norm_small <= 0.02 * max(norm_small, 1e-12) + 1e-9

    def test_unknown_kind(self):
        with pytest.raises(BadParameterError):
            initial_condition("bump", 8)


class TestGridWorkspace:
    def test_round_trip(self):
        ws = GridWorkspace(grid_points=64)
        rng = np.random.default_rng(5)
        coeffs = rng.standard_normal(16)
        back = ws.to_coeffs(ws.to_grid(coeffs), 16)
        np.testing.assert_allclose(back, coeffs, atol=1e-12)

    def test_single_mode_values(self):
        ws = GridWorkspace(grid_points=8)
        values = ws.to_grid(np.array([1.0]))
        np.testing.assert_allclose(
            values, SQRT2 * np.sin(np.pi * ws.nodes), atol=1e-12
        )

    def test_too_many_modes(self):
        ws = GridWorkspace(grid_points=4)
        with pytest.raises(ValueError):
            ws.to_grid(np.ones(5))

    @given(
        st.integers(min_value=1, max_value=48),
        st.integers(min_value=0, max_value=2**32 - 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_parseval(self, modes, seed):
        rng = np.random.default_rng(seed)
        coeffs = rng.standard_normal(modes)
        ws = GridWorkspace(grid_points=4 * modes)
        grid_norm = ws.quadrature_l2_norm(ws.to_grid(coeffs))
        assert abs(grid_norm - np.linalg.norm(coeffs)) < 1e-10


def test_multiplication_on_grid_values(mult):
    # B(e1)(e1) evaluated pointwise is 2 sin^2(pi x) at the grid nodes.
    ws = mult.workspace()
    e1 = np.eye(64)[0]
    product = ws.to_grid(e1) * ws.to_grid(e1)
    np.testing.assert_allclose(
        product, 2.0 * np.sin(np.pi * ws.nodes) ** 2, atol=1e-12
    )


def test_state_csv_round_trip():
    state = initial_condition("smooth_poly", 6)
    from spde_taylor.models import state_from_csv, state_to_csv

    text = state_to_csv(state)
    assert text.startswith("mode,coefficient\n1,")
    assert state_from_csv(text) == state
    with pytest.raises(ValueError):
        state_from_csv("nope\n1,2\n")


def test_smoothing_hs_norm_decreases(mult):
    rng = np.random.default_rng(21)
    v = SpectralState(rng.standard_normal(64))
    ws = mult.workspace()
    hs = [smoothed_diffusion_hs_norm(mult, v, 2.0**-k, ws) for k in (6, 8, 10)]
    assert hs[0] < hs[1] < hs[2]
