"""
几何引理与加速射流测试
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.jets import (
    DisjointnessReport,
    JetParams,
    build_direction_set,
    check_resolution,
    default_jet_system,
    disjointness_report,
    evaluate_jet,
    geometric_sweep,
    jet_fields,
    jet_identity_checks,
    mean_tensor_check,
    oscillator_identity_check,
    oscillator_norms,
    oscillator_sobolev_norm,
    periodic_window_residual,
    scaling_spread,
    scaling_table,
    stationary_flux_identity,
    support_probe_points,
    temporal_oscillators,
)
from src.torus_field import AliasingError, Grid


@pytest.fixture(scope="module")
def system():
    return default_jet_system()


@pytest.fixture
def small_jet() -> JetParams:
    return JetParams(sigma=2, eta=8, nu=9, mu=9, theta=4)


class TestDirectionSet:
    """方向集与 gamma_xi"""

    def test_exact_unit_vectors_and_anchors(self):
        ds = build_direction_set()
        assert len(ds) == 6
        assert all(a * a + b * b == 1 for a, b in ds.directions)
        assert ds.anchor_separation() > 2.0 / ds.mu0
        assert ds.balls_inside()

    def test_identity_weights(self):
        ds = build_direction_set()
        w = ds.weights(np.eye(2))
        eps = ds.epsilon
        np.testing.assert_allclose(w[:2], 1.0 - 25.0 / 24.0 * eps, rtol=1e-15)
        np.testing.assert_allclose(w[2:], 25.0 / 24.0 * eps / 2.0, rtol=1e-14)
        np.testing.assert_allclose(ds.reconstruct(w), np.eye(2), atol=1e-15)

    def test_off_diagonal_perturbation(self):
        ds = build_direction_set()
        r = np.array([[1.0, 0.1], [0.1, 1.0]])
        w = ds.weights(r)
        assert np.all(w > 0.0)
        np.testing.assert_allclose(ds.reconstruct(w), r, atol=1e-12)
        s = np.sqrt(0.1 ** 2 + ds.epsilon ** 2)
        assert w[0] == pytest.approx(1.0 - 25.0 / 24.0 * s, rel=1e-14)

    def test_random_sweep(self, rng):
        rep = geometric_sweep(build_direction_set(), rng, n=10000)
        assert rep.max_error <= 1e-10
        assert rep.min_weight > 0.0
        assert rep.max_gradient < 1e3
        assert rep.passed

    def test_gammas_outside_domain(self):
        with pytest.raises(ValueError):
            build_direction_set().gammas(np.zeros((2, 2)))

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-0.35, 0.35), st.floats(-0.24, 0.24), st.floats(-0.35, 0.35))
    def test_reconstruction_property(self, d11, d12, d22):
        r = np.array([[1.0 + d11, d12], [d12, 1.0 + d22]])
        if np.linalg.norm(r - np.eye(2)) > 0.5:
            return
        ds = build_direction_set()
        g = ds.gammas(r)
        np.testing.assert_allclose(ds.reconstruct(g ** 2), r, atol=1e-12)


class TestJetParams:
    """参数校验与分辨率"""

    @pytest.mark.parametrize("kwargs", [
        dict(sigma=2, eta=8, nu=8, mu=9, theta=4),
        dict(sigma=2, eta=8, nu=12, mu=9, theta=4),
        dict(sigma=0, eta=8, nu=9, mu=9, theta=4),
        dict(sigma=2, eta=8.5, nu=9, mu=9, theta=4),
    ])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            JetParams(**kwargs)

    def test_resolution(self, grid16):
        check_resolution(JetParams(sigma=2, eta=8, nu=9, mu=16, theta=4), grid16)
        with pytest.raises(AliasingError) as exc:
            check_resolution(JetParams(sigma=4, eta=8, nu=9, mu=16, theta=4), grid16)
        assert exc.value.component == "jets"


class TestProfiles:
    """剖面与归一化"""

    def test_temporal_profile_moments(self, system):
        assert float(system.G_energy(1.0)) == pytest.approx(1.0, abs=1e-10)
        assert abs(float(system.G_integral(1.0))) <= 1e-10

    @pytest.mark.parametrize("index", range(6))
    def test_mean_tensor_normalization(self, system, small_jet, index):
        tensor_err, mean_err = mean_tensor_check(system, small_jet, index)
        assert tensor_err <= 1e-6
        assert mean_err <= 1e-10

    def test_horizontal_jet_alignment_and_support(self, system, small_jet, rng):
        pts = rng.random((20000, 2))
        vals = evaluate_jet(system, small_jet, 0, pts, 0.0)
        assert np.max(np.abs(vals.W[:, 1])) == 0.0
        active = np.abs(vals.w) > 0.0
        d = small_jet.sigma * pts[active] - system.directions.anchor_points[0]
        d -= np.round(d)
        assert np.all(np.abs(d[:, 0]) < 1.0 / (system.mu0 * small_jet.nu))
        assert np.all(np.abs(d[:, 1]) < 1.0 / (system.mu0 * small_jet.mu))

    def test_probe_points_hit_support(self, system, small_jet):
        pts = support_probe_points(system, small_jet, 3, 0.013, n=8)
        vals = evaluate_jet(system, small_jet, 3, pts, 0.013)
        assert np.count_nonzero(vals.psi) == pts.shape[0]

    def test_fields_on_grid(self, system, small_jet, grid32):
        fields = jet_fields(system, small_jet, 0, 0.0, grid32)
        assert set(fields) == {"psi", "W", "Wc"}
        assert np.max(np.abs(fields["psi"].samples())) > 0.0
        with pytest.raises(AliasingError):
            jet_fields(system, JetParams(sigma=4, eta=8, nu=9, mu=32, theta=4), 0, 0.0, grid32)

    def test_gap_is_pure_translation(self, system, small_jet, rng):
        pts = rng.random((500, 2))
        a = evaluate_jet(system, small_jet, 0, pts, 0.2)
        b = evaluate_jet(system, small_jet, 0, pts, 0.3)
        np.testing.assert_array_equal(a.W, b.W)
        np.testing.assert_array_equal(a.psi, b.psi)


class TestOscillators:
    """g, h, phi 与 W^{n,p} 标度"""

    def test_gap_values(self, system, small_jet):
        osc = temporal_oscillators(system, small_jet, 0, np.linspace(0.07, 0.45, 50))
        assert np.max(np.abs(osc.g)) == 0.0
        assert np.ptp(osc.phase) == 0.0

    def test_h_bounded_and_periodic(self, system, small_jet):
        t = np.linspace(0.0, 1.0, 4001)
        for index in range(6):
            h = temporal_oscillators(system, small_jet, index, t).h
            shifted = temporal_oscillators(system, small_jet, index, t + 1.0 / small_jet.sigma).h
            assert np.max(np.abs(h)) <= 1.0
            np.testing.assert_allclose(h, shifted, atol=1e-10)

    def test_energy_per_period(self, system, small_jet):
        value = oscillator_sobolev_norm(system, small_jet, 2, 0, 2.0, window=(0, 1), per_period=16000) ** 2
        assert value == pytest.approx(1.0 / small_jet.sigma, rel=1e-8)

    def test_lp_scaling_across_eta(self, system):
        l2, l1 = [], []
        for eta in (4, 16, 64):
            jp = JetParams(sigma=2, eta=eta, nu=9, mu=9, theta=4)
            norms = {(n.order, n.p): n for n in oscillator_norms(system, jp, 0, orders=(0,), ps=(1.0, 2.0))}
            l2.append(norms[(0, 2.0)].measured)
            l1.append(norms[(0, 1.0)].ratio)
        np.testing.assert_allclose(l2, 1.0, rtol=1e-6)
        np.testing.assert_allclose(l1, l1[0], rtol=1e-3)

    def test_derivative_scaling_is_stable(self, system):
        ratios = []
        for eta in (8, 16, 32):
            jp = JetParams(sigma=2, eta=eta, nu=9, mu=9, theta=4)
            ratios.append(oscillator_norms(system, jp, 1, orders=(1,), ps=(2.0,))[0].ratio)
        assert max(ratios) / min(ratios) < 1.5

    @pytest.mark.parametrize("order,p", [(0, 1.0), (0, 2.0), (1, 2.0)])
    def test_periodic_window(self, system, order, p):
        jp = JetParams(sigma=4, eta=8, nu=9, mu=9, theta=4)
        assert periodic_window_residual(system, jp, 1, order, p, (1, 3)) <= 1e-9

    @pytest.mark.parametrize("t", [0.0, 0.01, 0.013, 0.2, 0.41])
    def test_h_derivative_identity(self, system, small_jet, t):
        for index in range(6):
            assert oscillator_identity_check(system, small_jet, index, t).passed


class TestIdentities:
    """势恒等式、通量恒等式与输运恒等式"""

    def test_small_jet_all_directions(self, system, small_jet, grid32):
        for index in range(6):
            rep = jet_identity_checks(system, small_jet, index, [0.0, 0.013, 0.041, 0.27], grid32, n_probe=12)
            assert rep.passed, [c for c in rep.checks if not c.passed]
            assert len(rep.spectral_defects) == 4

    def test_fast_jet(self, system):
        jp = JetParams(sigma=4, eta=16, nu=12, mu=24, theta=16)
        rep = jet_identity_checks(system, jp, 2, [0.0, 0.005, 0.03], n_probe=10)
        assert rep.passed

    def test_potential_identity_is_exact(self, system, small_jet):
        rep = jet_identity_checks(system, small_jet, 0, [0.013], n_probe=8)
        pot = next(c for c in rep.checks if c.name == "potential_identity")
        assert pot.value <= 1e-12

    def test_quiet_window_has_zero_transport(self, system, small_jet):
        rep = jet_identity_checks(system, small_jet, 0, [0.3], n_probe=8)
        transport = next(c for c in rep.checks if c.name == "potential_transport")
        assert transport.value == 0.0
        assert transport.passed

    def test_flux_identity(self, system, small_jet):
        pts = support_probe_points(system, small_jet, 4, 0.0, n=20)
        assert stationary_flux_identity(system, small_jet, 4, pts) <= 1e-12


class TestScaling:
    """L^p 标度表与不相交性"""

    def test_ratios_stable_under_mu_doubling(self, system, small_jet):
        rows = scaling_table(system, small_jet, 2, factors=(1, 2), n=120)
        spread = scaling_spread(rows)
        assert len(spread) == 7 * 3
        assert max(spread.values()) < 3.0
        for key in ("W|N=0|p=1", "W|N=0|p=2", "Wc|N=0|p=2", "psi|N=0|p=2", "xi_grad_psi|N=0|p=2"):
            assert spread[key] == pytest.approx(1.0, rel=1e-9)

    def test_disjoint_supports(self, system, small_jet):
        rep = disjointness_report(system, small_jet)
        assert isinstance(rep, DisjointnessReport)
        assert rep.max_active == 1
        assert rep.min_tube_gap > 0.0
        assert rep.passed

    def test_short_offsets_overlap(self, system):
        rep = disjointness_report(system, JetParams(sigma=2, eta=4, nu=9, mu=9, theta=4))
        assert rep.max_active >= 2
        assert not rep.passed

    def test_resolution_grid_check(self, system):
        with pytest.raises(AliasingError):
            jet_identity_checks(system, JetParams(sigma=4, eta=8, nu=12, mu=24, theta=4), 0, [0.0], Grid(16))
