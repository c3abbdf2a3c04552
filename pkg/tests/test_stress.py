"""
应力通量、振荡应力与主残差测试
"""

import numpy as np
import pytest

from src.heat import sample_times
from src.iteration import NoiseTerms, OscillationTerms
from src.jets import JetParams
from src.stress import (
    COMPONENTS,
    StressComponentError,
    StressResult,
    _checked,
    component_summary,
    master_residual,
    max_residual,
    noise_flux,
    oscillation_closure,
    oscillation_inner,
    oscillation_stress,
    oscillation_target,
    quadratic_flux,
    v1_flux,
)
from src.torus_field import (
    SymTensorField,
    TimeSeriesField,
    VectorField,
    div,
    helmholtz_project,
    norm,
    random_band_limited,
    remove_mean,
    sym_outer,
    traceless,
)


def _zero_noise(times, grid) -> NoiseTerms:
    return NoiseTerms(
        z_low=TimeSeriesField.zeros(times, VectorField, grid),
        z_high=TimeSeriesField.zeros(times, VectorField, grid),
        wick=TimeSeriesField.zeros(times, SymTensorField, grid),
    )


class TestFluxes:
    def test_noise_flux_without_high_part_is_symmetric_product(self, random_vector, grid16):
        v, z = random_vector(3), random_vector(3)
        out = noise_flux(v, z, VectorField.zeros(grid16))
        expected = sym_outer(v, z) * 2.0
        np.testing.assert_allclose(out.coeffs, expected.coeffs, atol=1e-13)

    def test_noise_flux_vanishes_for_zero_noise(self, random_vector, grid16):
        zero = VectorField.zeros(grid16)
        out = noise_flux(random_vector(3), zero, zero)
        assert np.max(np.abs(out.coeffs)) == 0.0

    def test_quadratic_flux_contains_square(self, random_vector, grid16):
        v = random_vector(3)
        zero = VectorField.zeros(grid16)
        np.testing.assert_allclose(quadratic_flux(v, zero, zero).coeffs, sym_outer(v, v).coeffs, atol=1e-13)

    def test_v1_flux_is_wick_when_local_noise_vanishes(self, random_vector, grid16, rng):
        wick = random_band_limited(grid16, SymTensorField, rng, 3)
        out = v1_flux(random_vector(3), VectorField.zeros(grid16), wick)
        assert out is wick

    def test_v1_flux_paraproduct_part_is_finite(self, random_vector, grid16):
        out = v1_flux(random_vector(5), random_vector(5), SymTensorField.zeros(grid16))
        assert isinstance(out, SymTensorField)
        assert np.all(np.isfinite(out.coeffs))


class TestOscillationStress:
    JP = JetParams(sigma=2, eta=8, nu=9, mu=9, theta=4)

    @staticmethod
    def _terms(grid, **overrides) -> OscillationTerms:
        base = dict(
            jets=[],
            h_rate=SymTensorField.zeros(grid),
            leftover=SymTensorField.zeros(grid),
            principal=VectorField.zeros(grid),
            time_part=SymTensorField.zeros(grid),
            transport=VectorField.zeros(grid),
            amplitude_rate=VectorField.zeros(grid),
        )
        base.update(overrides)
        return OscillationTerms(**base)

    @staticmethod
    def _leray_div(t):
        return helmholtz_project(remove_mean(div(t)))

    def test_outside_cutoff_keeps_mollified_stress(self, grid16, rng):
        R = random_band_limited(grid16, SymTensorField, rng, 3)
        inner = random_band_limited(grid16, SymTensorField, rng, 3)
        out = oscillation_stress(inner, 0.0, 0.0, R, VectorField.zeros(grid16))
        np.testing.assert_allclose(out.coeffs, R.coeffs, atol=1e-14)

    def test_full_cutoff_keeps_only_inner(self, grid16, rng):
        R = random_band_limited(grid16, SymTensorField, rng, 3)
        inner = random_band_limited(grid16, SymTensorField, rng, 3)
        out = oscillation_stress(inner, 1.0, 0.0, R, VectorField.zeros(grid16))
        np.testing.assert_allclose(out.coeffs, inner.coeffs, atol=1e-14)

    def test_cutoff_rate_adds_temporal_antidivergence(self, grid16, random_vector):
        w = helmholtz_project(random_vector(3))
        zero = SymTensorField.zeros(grid16)
        out = oscillation_stress(zero, 0.5, 2.0, zero, w)
        np.testing.assert_allclose(self._leray_div(out).coeffs, (w * 2.0).coeffs, atol=1e-10)

    def test_leftover_is_subtracted_tracelessly(self, grid16, rng):
        left = random_band_limited(grid16, SymTensorField, rng, 3)
        out = oscillation_inner(self._terms(grid16, leftover=left), self.JP)
        c = left.coeffs
        half = 0.5 * (c[0] - c[2])
        np.testing.assert_allclose(out.coeffs, -np.stack([half, c[1], -half]), atol=1e-13)

    def test_closure_vanishes_when_inner_balances(self, grid16, rng):
        R = traceless(random_band_limited(grid16, SymTensorField, rng, 3))
        terms = self._terms(grid16, leftover=R * -1.0)
        inner = oscillation_inner(terms, self.JP)
        fix = oscillation_closure(terms, self.JP, inner, R)
        assert norm(fix, "Lp", p=1.0) <= 1e-10

    def test_closure_matches_target(self, grid16, rng, random_vector):
        wp = helmholtz_project(random_vector(4))
        terms = self._terms(
            grid16,
            principal=wp,
            time_part=random_band_limited(grid16, SymTensorField, rng, 3),
            transport=random_vector(3),
            amplitude_rate=random_vector(3),
            h_rate=random_band_limited(grid16, SymTensorField, rng, 3),
        )
        R = traceless(random_band_limited(grid16, SymTensorField, rng, 3))
        inner = oscillation_inner(terms, self.JP)
        fix = oscillation_closure(terms, self.JP, inner, R)
        lhs = self._leray_div(inner + fix)
        np.testing.assert_allclose(lhs.coeffs, oscillation_target(terms, self.JP, R).coeffs, atol=1e-10)

    def test_target_without_rates_is_leray_divergence_of_flux(self, grid16, rng, random_vector):
        wp = helmholtz_project(random_vector(4))
        R = traceless(random_band_limited(grid16, SymTensorField, rng, 3))
        target = oscillation_target(self._terms(grid16, principal=wp), self.JP, R)
        expected = self._leray_div(sym_outer(wp, wp) + R)
        np.testing.assert_allclose(target.coeffs, expected.coeffs, atol=1e-12)


class TestAssemblyHelpers:
    def test_nonfinite_component_raises_with_name(self, grid8):
        c = np.zeros((3, 8, 8), dtype=np.complex128)
        c[0, 0, 0] = np.nan
        with pytest.raises(StressComponentError) as err:
            _checked("osc", SymTensorField(grid8, c, enforce_reality=False), 0.5)
        assert err.value.name == "osc"
        assert err.value.component == "stress"

    def test_component_summary_uses_mask(self):
        l1 = {name: np.ones(4) for name in COMPONENTS}
        res = StressResult(stress=None, component_l1=l1)  # type: ignore[arg-type]
        out = component_summary(res, np.array([False, True, True, False]), 0.5)
        assert set(out) == set(COMPONENTS)
        assert out["lin"] == pytest.approx(1.0)
        assert component_summary(res, None, 0.5)["com"] == pytest.approx(2.0)


class TestMasterResidual:
    def test_zero_state_has_zero_residual(self, grid8):
        times = sample_times(-0.1, 0.1, 0.05)
        zero = TimeSeriesField.zeros(times, VectorField, grid8)
        stress = TimeSeriesField.zeros(times, SymTensorField, grid8)
        profile = master_residual(zero, zero, stress, zero, _zero_noise(times, grid8))
        assert np.isnan(profile[0]) and np.isnan(profile[-1])
        assert np.isnan(profile[1])
        assert max_residual(profile) == 0.0

    def test_stress_balancing_flux_gives_zero(self, grid16, random_vector):
        times = sample_times(0.0, 0.1, 0.05)
        u = random_vector(3)
        zero = TimeSeriesField.zeros(times, VectorField, grid16)
        z_in = TimeSeriesField.from_fields(times, [u, u, u])
        flux = sym_outer(u, u)
        stress = TimeSeriesField.from_fields(times, [flux, flux, flux])
        profile = master_residual(zero, zero, stress, z_in, _zero_noise(times, grid16))
        assert max_residual(profile) <= 1e-12

    def test_max_residual_ignores_nan(self):
        assert max_residual(np.array([np.nan, 0.3, 0.1, np.nan])) == pytest.approx(0.3)
        assert max_residual(np.array([np.nan])) == 0.0
