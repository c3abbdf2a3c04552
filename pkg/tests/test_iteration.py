"""
迭代驱动测试：噪声搬运、v1 不动点、磨光、振幅、截断函数与小网格上的整条链
"""

import math

import numpy as np
import pytest

from src.antidiv import NotDivergenceFreeError
from src.constants import AMPLITUDE_TOLERANCE
from src.diagnostics import stress_decrease
from src.heat import sample_times
from src.iteration import (
    TIME_ORIGIN,
    Mollified,
    MollificationError,
    PicardLog,
    SolverSettings,
    adaptedness_check,
    amplitudes,
    cutoff,
    init_state,
    initial_velocity,
    iterate,
    mollify_series,
    noise_terms,
    residual_convergence,
    temporal_kernel,
)
from src.jets import JetParams, default_jet_system
from src.logger import log_manager
from src.noise import NoiseConfig, PathTooShortError, sample_path, zero_path
from src.params import IterationParams
from src.torus_field import (
    Grid,
    SymTensorField,
    TimeSeriesField,
    VectorField,
    div,
    norm,
    random_band_limited,
    traceless_outer,
)

DT = 0.05
HORIZON = 1.0
SMALL_JETS = (JetParams(sigma=2, eta=8, nu=9, mu=9, theta=4),)


def _params(**overrides) -> IterationParams:
    base = dict(a=4, b=2, alpha=0.05, beta=0.5, gamma=0.125, K=2.0, L=2.0, N=2.0, p=1.5, kappa=0.05,
                ell_override=0.15, jet_overrides=SMALL_JETS)
    base.update(overrides)
    return IterationParams(**base)


def _settings(**overrides) -> SolverSettings:
    base = dict(dt=DT, horizon=HORIZON)
    base.update(overrides)
    return SolverSettings(**base)


def _zero_path(grid: Grid):
    return zero_path(grid, sample_times(0.0, HORIZON, DT))


def _noise_path(grid: Grid, seed: int = 11):
    return sample_path(NoiseConfig(seed=seed, mode_cutoff=4, dt=DT), grid, HORIZON)


def _constant_series(grid: Grid, times, value: float) -> TimeSeriesField:
    c = np.zeros((len(times), 3, grid.n, grid.n), dtype=np.complex128)
    c[:, 0, 0, 0] = value
    c[:, 2, 0, 0] = -value
    return TimeSeriesField(times, SymTensorField, grid, c)


def _mollified(stress: TimeSeriesField, ell: float = 0.1) -> Mollified:
    zero_v = TimeSeriesField.zeros(stress.times, VectorField, stress.grid)
    zero_s = stress.with_coeffs(np.zeros_like(stress.coeffs))
    return Mollified(velocity=zero_v, stress=stress, stress_rate=zero_s, commutator=zero_s, ell=ell)


# ==================== 设置与噪声 ====================

class TestSettings:
    def test_rejects_unknown_scheme(self):
        with pytest.raises(ValueError):
            SolverSettings(picard_scheme="newton")

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ValueError):
            SolverSettings(dt=0.0)


class TestNoiseTerms:
    def test_negative_times_are_zero(self, grid16):
        path = _noise_path(grid16)
        times = sample_times(TIME_ORIGIN, HORIZON, DT)
        terms = noise_terms(path, times, cutoff_R=1)
        neg = times < 0
        assert np.max(np.abs(terms.z_low.coeffs[neg])) == 0.0
        assert np.max(np.abs(terms.wick.coeffs[neg])) == 0.0

    def test_split_recombines_noise(self, grid16):
        path = _noise_path(grid16)
        times = sample_times(TIME_ORIGIN, HORIZON, DT)
        terms = noise_terms(path, times, cutoff_R=1)
        n = int(np.argmin(np.abs(times - 0.5)))
        j = path.z_eps.index_of(0.5)
        np.testing.assert_allclose(terms.z_low.coeffs[n] + terms.z_high.coeffs[n], path.z_eps.coeffs[j],
                                   atol=1e-14)

    def test_step_mismatch_is_rejected(self, grid16):
        path = zero_path(grid16, sample_times(0.0, HORIZON, 0.02))
        with pytest.raises(ValueError):
            noise_terms(path, sample_times(TIME_ORIGIN, HORIZON, DT), cutoff_R=1)

    def test_short_path_is_rejected(self, grid16):
        path = zero_path(grid16, sample_times(0.0, 0.5, DT))
        with pytest.raises(PathTooShortError):
            noise_terms(path, sample_times(TIME_ORIGIN, HORIZON, DT), cutoff_R=1)


class TestPicardLog:
    def test_ratios_and_contraction(self):
        log = PicardLog(scheme="jacobi", increments=[1.0, 0.5, 0.1])
        assert log.iterations == 3
        assert log.ratios == pytest.approx([0.5, 0.2])
        assert log.contraction == pytest.approx(0.5)
        assert log.to_dict()["iterations"] == 3

    def test_single_sweep_has_no_ratio(self):
        assert PicardLog(scheme="gauss-seidel", increments=[0.0]).contraction == 0.0


# ==================== 磨光 ====================

class TestTemporalKernel:
    def test_weights_are_normalised(self):
        w = temporal_kernel(0.15, DT)
        assert len(w) == 2
        assert np.all(w > 0)
        assert np.sum(w) == pytest.approx(1.0)

    def test_unresolved_scale_raises(self):
        with pytest.raises(MollificationError):
            temporal_kernel(0.05, DT)
        with pytest.raises(MollificationError):
            temporal_kernel(0.01, DT)


class TestMollifySeries:
    def test_constant_series_is_unchanged(self, grid16):
        times = sample_times(0.0, 0.5, DT)
        series = _constant_series(grid16, times, 0.3)
        out = mollify_series(series, 0.2)
        np.testing.assert_allclose(out.coeffs, series.coeffs, atol=1e-14)

    def test_uses_only_strict_past(self, grid16, rng):
        times = sample_times(0.0, 0.5, DT)
        fields = [random_band_limited(grid16, VectorField, rng, 3) for _ in times]
        series = TimeSeriesField.from_fields(times, fields)
        m = 5
        changed = series.coeffs.copy()
        changed[m] *= 3.0
        a = mollify_series(series, 0.2)
        b = mollify_series(series.with_coeffs(changed), 0.2)
        np.testing.assert_array_equal(a.coeffs[:m + 1], b.coeffs[:m + 1])
        assert not np.array_equal(a.coeffs[m + 1], b.coeffs[m + 1])


# ==================== 振幅与截断 ====================

class TestAmplitudes:
    def test_zero_stress_gives_uniform_weights(self, grid8):
        times = sample_times(0.0, 0.2, DT)
        mol = _mollified(_constant_series(grid8, times, 0.0))
        ds = default_jet_system().directions
        amp = amplitudes(mol, 0.5, ds)
        np.testing.assert_allclose(amp.rho, 2 * 0.1 + 0.5)
        assert amp.reconstruction <= AMPLITUDE_TOLERANCE
        assert np.all(amp.a2 > 0)
        assert np.max(np.abs(amp.a2_rate)) == pytest.approx(0.0, abs=1e-12)

    def test_traceless_constant_stress_is_reconstructed(self, grid8):
        times = sample_times(0.0, 0.2, DT)
        mol = _mollified(_constant_series(grid8, times, 0.1))
        amp = amplitudes(mol, 0.5, default_jet_system().directions)
        ell = mol.ell
        expected = 2.0 * np.sqrt(ell ** 2 + 0.1 ** 2 + 0.1 ** 2) + 0.5
        np.testing.assert_allclose(amp.rho, expected)
        assert amp.reconstruction <= AMPLITUDE_TOLERANCE

    def test_masked_times_are_zeroed(self, grid8):
        times = sample_times(-0.1, 0.2, DT)
        mol = _mollified(_constant_series(grid8, times, 0.1))
        mask = times >= 0
        amp = amplitudes(mol, 0.5, default_jet_system().directions, mask=mask)
        assert np.max(np.abs(amp.a2[:, ~mask])) == 0.0
        assert np.all(amp.a2[:, mask] > 0)

    def test_gamma_must_be_positive(self, grid8):
        times = sample_times(0.0, 0.1, DT)
        with pytest.raises(ValueError):
            amplitudes(_mollified(_constant_series(grid8, times, 0.0)), 0.0, default_jet_system().directions)


class TestCutoff:
    def test_profile(self):
        t = np.linspace(-1.0, 2.0, 301)
        chi, rate = cutoff(t, 0.5)
        assert np.all(chi[t <= 0.5] == 0.0)
        assert np.all(chi[t >= 1.0] == 1.0)
        assert np.all(np.diff(chi) >= 0.0)
        assert np.max(rate) <= 15.0 / (8.0 * 0.5) + 1e-12
        assert np.all(rate >= 0.0)


# ==================== 初值 ====================

class TestInitialVelocity:
    def test_single_mode(self, grid16, rng):
        u = initial_velocity(grid16, "single_mode", 0.5, rng)
        s = u.samples()
        np.testing.assert_allclose(s[0], 0.0, atol=1e-13)
        np.testing.assert_allclose(s[1], -0.5 * np.cos(2 * np.pi * grid16.x1), atol=1e-13)

    def test_random_is_divergence_free_with_given_size(self, grid16, rng):
        u = initial_velocity(grid16, "random", 0.7, rng)
        assert norm(div(u), "Linfty") <= 1e-12
        assert norm(u, "Lp", p=2.0) == pytest.approx(0.7)

    def test_zero_and_unknown(self, grid16, rng):
        assert np.max(np.abs(initial_velocity(grid16, "zero", 1.0, rng).coeffs)) == 0.0
        with pytest.raises(ValueError):
            initial_velocity(grid16, "vortex", 1.0, rng)


# ==================== 第 0 层 ====================

class TestInitState:
    def test_rejects_divergent_data(self, grid16):
        u = VectorField.from_samples(grid16, np.stack([np.sin(2 * np.pi * grid16.x1), np.zeros((16, 16))]))
        with pytest.raises(NotDivergenceFreeError):
            init_state(_params(), u, _zero_path(grid16), _settings())

    def test_rejects_large_data(self, grid16, rng):
        u = initial_velocity(grid16, "single_mode", 5.0, rng)
        with pytest.raises(ValueError):
            init_state(_params(), u, _zero_path(grid16), _settings())

    def test_rejects_grid_mismatch(self, grid16, grid8):
        with pytest.raises(ValueError):
            init_state(_params(), VectorField.zeros(grid16), _zero_path(grid8), _settings())

    def test_zero_noise_level_zero(self, grid16, rng):
        u = initial_velocity(grid16, "single_mode", 0.5, rng)
        state = init_state(_params(), u, _zero_path(grid16), _settings())
        assert state.times[0] == pytest.approx(TIME_ORIGIN)
        assert np.max(np.abs(state.v1.coeffs)) == 0.0
        assert np.max(np.abs(state.v2.coeffs)) == 0.0
        for n, t in enumerate(state.times):
            expected = traceless_outer(state.z_in[n], state.z_in[n])
            if t < 0:
                np.testing.assert_array_equal(state.stress.coeffs[n], expected.coeffs)
            else:
                np.testing.assert_allclose(state.stress.coeffs[n], expected.coeffs, atol=1e-13)
        # V (x) V - R 是纯压力项，被 Leray 投影消去
        assert state.residuals["master_residual"] <= 1e-10

    def test_heat_flow_is_even_in_time(self, grid16, rng):
        u = initial_velocity(grid16, "single_mode", 0.5, rng)
        state = init_state(_params(), u, _zero_path(grid16), _settings())
        z = state.z_in
        np.testing.assert_allclose(z.at(-0.5).coeffs, z.at(0.5).coeffs, atol=1e-15)
        decay = np.exp(-4.0 * np.pi ** 2 * 0.5)
        np.testing.assert_allclose(z.at(0.5).coeffs, u.coeffs * decay, atol=1e-13)


# ==================== 整条链 ====================

class TestTrivialChain:
    @pytest.fixture
    def states(self, grid16):
        return iterate(_params(), VectorField.zeros(grid16), _zero_path(grid16), 1, _settings())

    def test_levels_and_grid(self, states):
        assert [s.q for s in states] == [0, 1]
        assert states[1].jets == SMALL_JETS[0]
        assert len(states[1].times) == len(sample_times(TIME_ORIGIN, HORIZON, DT))

    def test_v1_stays_zero_without_noise(self, states):
        for s in states:
            assert np.max(np.abs(s.v1.coeffs)) == 0.0

    def test_v2_vanishes_before_cutoff(self, states):
        s = states[1]
        keep = s.times <= _params().sigma_q(1) + 1e-12
        assert np.max(np.abs(s.v2.coeffs[keep])) == 0.0

    def test_checks_pass(self, states):
        for s in states:
            failed = [c.name for c in s.checks if not c.passed]
            assert failed == []

    def test_ledger_rows(self, states):
        for s in states:
            assert s.ledger
            assert all(row.level == s.q for row in s.ledger)
            assert all(row.passed is None for row in s.ledger if row.target is None)
        assert all(row.passed is not False for row in states[0].ledger)
        vanishing = [r for r in states[1].ledger if r.norm_name == "v2 vanishing sup"]
        assert len(vanishing) == 1 and vanishing[0].passed

    def test_empty_windows_are_not_judged(self, states):
        late = [r for r in states[0].ledger if r.norm_name == "R L1L1" and r.window.startswith("(sigma")]
        assert len(late) == 1
        assert late[0].target is not None and late[0].passed is None
        warnings = log_manager.get_recent_events(event_type="ledger")
        assert any("R L1L1" in e["message"] and e["level"] == "warning" for e in warnings)

    def test_empty_decrease_window_is_nan(self, states):
        assert math.isnan(stress_decrease(states[1], states[0], _params()))
        factor = [r for r in states[1].ledger if r.norm_name == "R decrease factor"]
        assert len(factor) == 1 and math.isnan(factor[0].value)

    def test_zero_previous_stress_is_nan(self, grid16):
        horizon = 1.5
        path = zero_path(grid16, sample_times(0.0, horizon, DT))
        states = iterate(_params(), VectorField.zeros(grid16), path, 1, _settings(horizon=horizon))
        assert states[1].horizon == pytest.approx(horizon)
        assert math.isnan(stress_decrease(states[1], states[0], _params()))

    def test_summary_is_serialisable(self, states):
        summary = states[1].summary()
        assert summary["q"] == 1
        assert summary["picard"]["scheme"] == "gauss-seidel"
        assert set(summary["components_l1l1"]) == {"lin", "cor", "osc", "com", "com1", "com2", "com3"}

    def test_requires_at_least_one_level(self, grid16):
        with pytest.raises(ValueError):
            iterate(_params(), VectorField.zeros(grid16), _zero_path(grid16), 0, _settings())


class TestNoisyChain:
    def test_deterministic(self, grid16, rng):
        u = initial_velocity(grid16, "single_mode", 0.5, rng)
        a = iterate(_params(), u, _noise_path(grid16), 1, _settings())
        b = iterate(_params(), u, _noise_path(grid16), 1, _settings())
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.v1.coeffs, y.v1.coeffs)
            np.testing.assert_array_equal(x.v2.coeffs, y.v2.coeffs)
            np.testing.assert_array_equal(x.stress.coeffs, y.stress.coeffs)

    def test_structural_checks(self, grid16, rng):
        u = initial_velocity(grid16, "single_mode", 0.5, rng)
        states = iterate(_params(), u, _noise_path(grid16), 1, _settings())
        names = {"negative-time extension", "v2 vanishing window", "divergence v2", "stress trace"}
        for s in states:
            for c in s.checks:
                if c.name in names:
                    assert c.passed, (s.q, c.name, c.value)
            assert s.picard is not None and s.picard.iterations == 2

    def test_picard_logged(self, grid16):
        iterate(_params(), VectorField.zeros(grid16), _noise_path(grid16), 1, _settings())
        events = log_manager.get_recent_events(event_type="picard")
        assert len(events) >= 2

    @pytest.mark.slow
    def test_adapted_to_noise(self, grid16, rng):
        u = initial_velocity(grid16, "single_mode", 0.5, rng)
        results = adaptedness_check(_params(), u, _noise_path(grid16), 1, _settings(), [0.3, 0.5, 0.7])
        assert [r.passed for r in results] == [True, True, True]


class TestResidualConvergence:
    def test_reports_each_step(self, grid16, rng):
        u = initial_velocity(grid16, "single_mode", 0.5, rng)
        make_path = lambda dt: zero_path(grid16, sample_times(0.0, HORIZON, dt))  # noqa: E731
        result = residual_convergence(_params(), u, make_path, _settings(), [0.05, 0.025])
        assert result["dts"] == [0.05, 0.025]
        assert len(result["residuals"]) == 2
        assert all(np.isfinite(r) and r >= 0.0 for r in result["residuals"])
        assert log_manager.get_recent_events(event_type="residual_convergence")

    @pytest.mark.slow
    def test_time_resolved_jets_converge(self, grid8, rng):
        jets = (JetParams(sigma=1, eta=1, nu=9, mu=9, theta=1),)
        params = _params(ell_override=0.05, jet_overrides=jets, active_directions=1)
        u = initial_velocity(grid8, "single_mode", 0.5, rng)
        make_path = lambda dt: zero_path(grid8, sample_times(0.0, 0.7, dt))  # noqa: E731
        result = residual_convergence(params, u, make_path, _settings(horizon=0.7), [4e-4, 2e-4])
        assert result["residuals"][1] < result["residuals"][0]
        assert result["slope"] >= 0.9
