"""
热半群、Duhamel 积分与压缩映射测试
"""

import numpy as np
import pytest

from src.harmonic import dyadic_partition, fit_loglog_slope
from src.heat import (
    contraction_factor,
    contraction_sweep,
    duhamel,
    duhamel_monitor,
    duhamel_residual,
    duhamel_trajectory,
    heat_semigroup,
    initial_heat_flow,
    sample_times,
    schauder_monitor,
)
from src.torus_field import (
    ScalarField,
    TimeSeriesField,
    VectorField,
    helmholtz_project,
    norm,
    random_band_limited,
    to_spectral,
)


def _constant_in_time(field, times) -> TimeSeriesField:
    return TimeSeriesField.from_fields(times, [field] * len(times))


class TestSemigroup:
    """P_t = e^{t Delta}"""

    def test_identity_at_zero(self, random_scalar):
        f = random_scalar()
        np.testing.assert_array_equal(heat_semigroup(f, 0.0).coeffs, f.coeffs)

    def test_constant_is_fixed(self, grid16):
        one = ScalarField.constant(grid16, 1.0)
        np.testing.assert_allclose(heat_semigroup(one, 3.0).samples(), 1.0, atol=1e-15)

    def test_single_mode_decay(self, grid16):
        f = to_spectral(grid16, np.cos(2 * np.pi * grid16.x1))
        out = heat_semigroup(f, 0.1).samples()[0]
        factor = np.exp(-4 * np.pi ** 2 * 0.1)
        assert factor == pytest.approx(0.019296, rel=1e-4)
        np.testing.assert_allclose(out, factor * np.cos(2 * np.pi * grid16.x1), atol=1e-15)

    def test_semigroup_law(self, random_scalar):
        f = random_scalar(k_max=7)
        lhs = heat_semigroup(heat_semigroup(f, 0.003), 0.004)
        rhs = heat_semigroup(f, 0.007)
        np.testing.assert_allclose(lhs.coeffs, rhs.coeffs, atol=1e-12)

    def test_positivity_and_mean(self, grid16):
        f = to_spectral(grid16, 1.0 + np.cos(2 * np.pi * grid16.x1) * np.cos(2 * np.pi * grid16.x2))
        for t in (1e-4, 1e-2, 0.5):
            out = heat_semigroup(f, t)
            assert np.min(out.samples()) >= -1e-14
            assert out.mean()[0] == pytest.approx(1.0, abs=1e-15)

    def test_negative_time(self, random_scalar):
        with pytest.raises(ValueError):
            heat_semigroup(random_scalar(), -0.1)


class TestDuhamel:
    """I f = int_0^t P_{t-s} f(s) ds"""

    def test_zero_forcing(self, grid16):
        times = sample_times(0.0, 0.1, 0.01)
        out = duhamel(TimeSeriesField.zeros(times, ScalarField, grid16), 0.1)
        assert np.max(np.abs(out.coeffs)) == 0.0

    def test_constant_forcing_grows_linearly(self, grid16):
        times = sample_times(0.0, 0.1, 0.01)
        f = _constant_in_time(ScalarField.constant(grid16, 2.5), times)
        np.testing.assert_allclose(duhamel(f, 0.1).samples(), 2.5 * 0.1, atol=1e-12)

    def test_single_mode_closed_form(self, grid16):
        times = sample_times(0.0, 0.1, 0.01)
        cos = np.cos(2 * np.pi * grid16.x1)
        f = _constant_in_time(to_spectral(grid16, cos), times)
        lam = 4 * np.pi ** 2
        expected = (1 - np.exp(-lam * 0.1)) / lam * cos
        np.testing.assert_allclose(duhamel(f, 0.1).samples()[0], expected, atol=1e-10)

    def test_trajectory_starts_at_zero(self, random_scalar):
        times = sample_times(-0.05, 0.05, 0.01)
        f = _constant_in_time(random_scalar(), times)
        traj = duhamel_trajectory(f, 0.0)
        assert traj.times[0] == pytest.approx(0.0, abs=1e-12)
        assert len(traj) == 6
        assert np.max(np.abs(traj.coeffs[0])) == 0.0

    def test_time_out_of_range(self, grid16):
        f = TimeSeriesField.zeros(sample_times(0.0, 0.1, 0.01), ScalarField, grid16)
        with pytest.raises(ValueError):
            duhamel(f, 0.2)

    def test_residual_is_first_order(self, grid16):
        cos = to_spectral(grid16, np.cos(2 * np.pi * grid16.x1))
        dts = [1e-3, 5e-4, 2.5e-4]
        residuals = []
        for dt in dts:
            f = _constant_in_time(cos, sample_times(0.0, 0.02, dt))
            residuals.append(duhamel_residual(duhamel_trajectory(f), f))
        assert fit_loglog_slope(dts, residuals) >= 0.9


class TestSchauder:
    """热半群的光滑化估计"""

    @pytest.mark.parametrize("theta", [0.5, 1.0, 1.5])
    def test_single_mode_closed_form(self, grid32, theta):
        assert list(dyadic_partition(grid32).weights_at(12.0)) == [3]
        f = to_spectral(grid32, np.cos(2 * np.pi * 12 * grid32.x1))
        sweep = [1e-5, 1e-4, 1e-3, 1e-2]
        rep = schauder_monitor(f, theta=theta, alpha=0.3, p=np.inf, t_sweep=sweep)
        lam = 4 * np.pi ** 2 * 144
        expected = [t ** (theta / 2) * np.exp(-lam * t) * 2.0 ** (3 * theta) for t in sweep]
        np.testing.assert_allclose(rep.ratios, expected, rtol=1e-10, atol=1e-12)
        assert rep.sup_ratio <= 2.0 ** (3 * theta) * (theta / (2 * np.e * lam)) ** (theta / 2) * (1 + 1e-12)

    def test_bounded_as_t_decreases(self, grid16, rng):
        f = random_band_limited(grid16, ScalarField, rng, 7)
        rep = schauder_monitor(f, theta=1.0, alpha=0.0, p=2.0, t_sweep=np.logspace(-4, -1, 7))
        assert rep.sup_ratio < 1.0
        assert np.all(np.isfinite(rep.lp_ratios))
        assert rep.to_dict()["sup_lp_ratio"] == rep.sup_lp_ratio

    def test_rough_tail_stays_bounded(self, grid32, rng):
        f = random_band_limited(grid32, ScalarField, rng, 15, decay=1.6)
        rep = schauder_monitor(f, theta=1.0, alpha=0.5, p=2.0, t_sweep=np.logspace(-5, -1, 9))
        assert rep.sup_ratio < 1.0

    def test_rejects_bad_arguments(self, random_scalar):
        f = random_scalar()
        with pytest.raises(ValueError):
            schauder_monitor(f, theta=2.5, alpha=0.0)
        with pytest.raises(ValueError):
            schauder_monitor(f, theta=1.0, alpha=0.0, t_sweep=[0.0, 0.1])

    def test_duhamel_constants_are_reported(self, random_scalar):
        f = _constant_in_time(random_scalar(), sample_times(0.0, 0.05, 0.005))
        reps = duhamel_monitor(f, alpha=0.5)
        assert [r.name for r in reps] == ["duhamel_besov", "duhamel_holder", "duhamel_l2"]
        for rep in reps:
            assert np.isfinite(rep.constant) and rep.constant > 0.0


class TestContraction:
    """压缩映射因子"""

    @staticmethod
    def _small_field(grid, rng, amplitude=0.1) -> VectorField:
        v = helmholtz_project(random_band_limited(grid, VectorField, rng, 3))
        return v * (amplitude / norm(v, "Linfty"))

    def test_equal_inputs_give_zero(self, grid16, rng):
        times = sample_times(0.0, 0.01, 1e-3)
        v = _constant_in_time(self._small_field(grid16, rng), times)
        z = TimeSeriesField.zeros(times, VectorField, grid16)
        assert contraction_factor(v, v, z, 0.01, zeta=0.2, kappa=0.1) == 0.0

    def test_precondition(self, grid16):
        times = sample_times(0.0, 0.01, 1e-3)
        zero = TimeSeriesField.zeros(times, VectorField, grid16)
        with pytest.raises(ValueError):
            contraction_factor(zero, zero, zero, 0.01, zeta=0.9, kappa=0.1)

    def test_small_data_contracts(self, grid16, rng):
        times = sample_times(0.0, 0.01, 1e-3)
        v1 = _constant_in_time(self._small_field(grid16, rng), times)
        v2 = TimeSeriesField.zeros(times, VectorField, grid16)
        assert contraction_factor(v1, v2, v2, 0.01, zeta=0.2, kappa=0.1) < 1.0

    def test_factor_decreases_with_horizon(self, grid16, rng):
        times = sample_times(0.0, 0.01, 1e-3)
        v1 = _constant_in_time(self._small_field(grid16, rng), times)
        v2 = _constant_in_time(self._small_field(grid16, rng, 0.05), times)
        z = _constant_in_time(self._small_field(grid16, rng, 0.2), times)
        points = contraction_sweep(v1, v2, z, [0.01, 0.005, 0.0025], zeta=0.2, kappa=0.1)
        factors = [p.factor for p in points]
        assert factors[0] > factors[1] > factors[2] > 0.0
        assert points[0].theory == pytest.approx(0.01 ** 0.3)


class TestHelpers:
    """时间网格与初值热流"""

    def test_sample_times_contains_anchor(self):
        times = sample_times(-1.0, 0.5, 0.25)
        np.testing.assert_allclose(times, [-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5], atol=1e-15)

    def test_initial_heat_flow_is_even_in_time(self, random_scalar):
        u0 = random_scalar()
        flow = initial_heat_flow(u0, sample_times(-0.02, 0.02, 0.01))
        np.testing.assert_allclose(flow.at(-0.01).coeffs, flow.at(0.01).coeffs, atol=1e-15)
        np.testing.assert_allclose(flow.at(0.0).coeffs, u0.coeffs, atol=1e-15)
