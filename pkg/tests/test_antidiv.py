"""
反散度算子测试
"""

import numpy as np
import pytest

from src.antidiv import (
    NonzeroMeanError,
    NotDivergenceFreeError,
    antidiv,
    antidiv_laplace_identity,
    antidiv_right_inverse_residual,
    antidiv_scaling_check,
    bilinear_antidiv,
    bilinear_antidiv_scalar,
    bilinear_bound_check,
)
from src.constants import ANTIDIV_TOLERANCE, BILINEAR_TOLERANCE
from src.torus_field import (
    AliasingError,
    Grid,
    ScalarField,
    SymTensorField,
    TensorField,
    VectorField,
    contract,
    div,
    helmholtz_project,
    perp_gradient,
    random_band_limited,
    remove_mean,
    scale,
    to_spectral,
)


def _vector(grid, s1, s2) -> VectorField:
    return VectorField.from_samples(grid, np.stack([s1, s2]))


class TestAntidiv:
    """R 的代数性质"""

    def test_zero_and_constant(self, grid16):
        assert np.max(np.abs(antidiv(VectorField.zeros(grid16)).coeffs)) == 0.0
        assert np.max(np.abs(antidiv(VectorField.constant(grid16, (1.5, -2.0))).coeffs)) == 0.0

    def test_single_mode_by_hand(self, grid16):
        v = _vector(grid16, np.sin(2 * np.pi * grid16.x2), np.zeros((16, 16)))
        r = antidiv(v).samples()
        np.testing.assert_allclose(r[0], 0.0, atol=1e-14)
        np.testing.assert_allclose(r[1], -np.cos(2 * np.pi * grid16.x2) / (2 * np.pi), atol=1e-14)
        np.testing.assert_allclose(div(antidiv(v)).coeffs, v.coeffs, atol=1e-14)

    def test_random_fields(self, grid16, rng):
        for _ in range(500):
            v = random_band_limited(grid16, VectorField, rng, 7, mean_zero=False)
            r = antidiv(v)
            s = r.samples()
            assert np.max(np.abs(s[0] + s[2])) <= 1e-12
            expected = remove_mean(v)
            np.testing.assert_allclose(div(r).coeffs, expected.coeffs, atol=ANTIDIV_TOLERANCE)

    def test_right_inverse_composes(self, grid16, rng):
        for _ in range(20):
            t = random_band_limited(grid16, TensorField, rng, 7, mean_zero=False)
            assert antidiv_right_inverse_residual(t) <= ANTIDIV_TOLERANCE


class TestLaplaceIdentity:
    """R(Delta v) = grad v + grad^T v"""

    def test_perp_gradient_input(self, grid16):
        v = perp_gradient(to_spectral(grid16, np.sin(2 * np.pi * grid16.x1)))
        assert antidiv_laplace_identity(v) <= ANTIDIV_TOLERANCE

    def test_projected_random(self, random_vector):
        for _ in range(20):
            assert antidiv_laplace_identity(helmholtz_project(random_vector())) <= ANTIDIV_TOLERANCE

    def test_shear_mode(self, grid16):
        v = _vector(grid16, np.sin(2 * np.pi * grid16.x2), np.zeros((16, 16)))
        assert antidiv_laplace_identity(v) <= ANTIDIV_TOLERANCE

    def test_rejects_compressible_input(self, grid16):
        v = _vector(grid16, np.sin(2 * np.pi * grid16.x1), np.zeros((16, 16)))
        with pytest.raises(NotDivergenceFreeError):
            antidiv_laplace_identity(v)


class TestScaling:
    """R f(sigma .) 的 sigma^{-1} 增益"""

    def test_single_mode_halves(self, grid32):
        f = _vector(grid32, np.zeros((32, 32)), np.cos(2 * np.pi * grid32.x1))
        rep = antidiv_scaling_check(f, sigmas=(1, 2))
        assert rep.ratios[1] / rep.ratios[0] == pytest.approx(0.5, rel=1e-12)

    def test_random_slope(self, grid32, rng):
        f = random_band_limited(grid32, VectorField, rng, 1)
        rep = antidiv_scaling_check(f, sigmas=(1, 2, 4, 8))
        assert rep.slope == pytest.approx(-1.0, abs=0.1)

    def test_aliasing(self, grid16, rng):
        f = random_band_limited(grid16, VectorField, rng, 3)
        with pytest.raises(AliasingError):
            antidiv_scaling_check(f, sigmas=(1, 4))


class TestBilinear:
    """双线性反散度 B"""

    def test_zero_velocity(self, grid16, rng):
        a = random_band_limited(grid16, TensorField, rng, 5)
        assert np.max(np.abs(bilinear_antidiv(VectorField.zeros(grid16), a).coeffs)) == 0.0

    def test_constant_velocity(self, grid16, rng):
        a = random_band_limited(grid16, TensorField, rng, 5)
        c = (0.7, -1.3)
        b = bilinear_antidiv(VectorField.constant(grid16, c), a)
        expected = antidiv(a.row(0)) * c[0] + antidiv(a.row(1)) * c[1]
        np.testing.assert_allclose(b.coeffs, expected.coeffs, atol=1e-12)

    def test_divergence_identity(self, grid16, rng):
        for _ in range(50):
            v = random_band_limited(grid16, VectorField, rng, 4, mean_zero=False)
            a = random_band_limited(grid16, TensorField, rng, 4)
            b = bilinear_antidiv(v, a)
            s = b.samples()
            assert np.max(np.abs(s[0] + s[2])) <= 1e-12
            expected = remove_mean(contract(v, a))
            np.testing.assert_allclose(div(b).coeffs, expected.coeffs, atol=BILINEAR_TOLERANCE)

    def test_single_mode_pair(self, grid16):
        v = _vector(grid16, np.cos(2 * np.pi * grid16.x2), np.sin(2 * np.pi * grid16.x1))
        zero = np.zeros((16, 16))
        a = TensorField.from_samples(grid16, np.stack([
            np.sin(2 * np.pi * 2 * grid16.x1), zero, np.cos(2 * np.pi * 3 * grid16.x2), zero,
        ]))
        b = bilinear_antidiv(v, a)
        np.testing.assert_allclose(div(b).coeffs, remove_mean(contract(v, a)).coeffs, atol=BILINEAR_TOLERANCE)

    def test_rejects_nonzero_mean(self, grid16, rng):
        a = random_band_limited(grid16, TensorField, rng, 3, mean_zero=False) \
            + TensorField.constant(grid16, (1.0, 0.0, 0.0, 0.0))
        with pytest.raises(NonzeroMeanError):
            bilinear_antidiv(VectorField.zeros(grid16), a)

    def test_scalar_version_with_mean(self, grid16, rng):
        f = random_band_limited(grid16, ScalarField, rng, 4, mean_zero=False)
        u = random_band_limited(grid16, VectorField, rng, 4) + VectorField.constant(grid16, (0.3, 0.8))
        b = bilinear_antidiv_scalar(f, u)
        np.testing.assert_allclose(div(b).coeffs, remove_mean(scale(f, u)).coeffs, atol=BILINEAR_TOLERANCE)

    def test_bound_constant(self, grid16, rng):
        v = random_band_limited(grid16, VectorField, rng, 3)
        a = random_band_limited(grid16, SymTensorField, rng, 5)
        rep = bilinear_bound_check(v, a)
        assert np.isfinite(rep.constant) and rep.constant > 0.0
