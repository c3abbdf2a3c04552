"""
反散度算子 R 与双线性反散度 B

记 u = Delta^{-1} v（零模取 0），则
    (Rv)_11 = d1 u1 - d2 u2,  (Rv)_12 = d1 u2 + d2 u1,  (Rv)_22 = -(Rv)_11
输出对称无迹，且 div(Rv) = v - mean(v)。
"""

from dataclasses import asdict, dataclass
from typing import Sequence, Union

import numpy as np

from .constants import DIVERGENCE_TOLERANCE
from .errors import NumericalError
from .harmonic import fit_loglog_slope
from .torus_field import (
    ScalarField,
    SpectralField,
    SymTensorField,
    TensorField,
    VectorField,
    derivative,
    dilate,
    div,
    from_padded,
    inverse_laplacian,
    laplacian,
    lp_from_magnitude,
    norm,
    padded_samples,
    pointwise_magnitude,
    sym_gradient,
)


class NotDivergenceFreeError(NumericalError):
    def __init__(self, message: str):
        super().__init__(message, component="antidiv")


class NonzeroMeanError(NumericalError):
    def __init__(self, message: str):
        super().__init__(message, component="antidiv")


def antidiv(v: VectorField) -> SymTensorField:
    """R v"""
    u = inverse_laplacian(v)
    u1, u2 = u.components()
    r11 = derivative(u1, 1) - derivative(u2, 2)
    r12 = derivative(u2, 1) + derivative(u1, 2)
    return SymTensorField.from_components(r11, r12, -r11)


def _rows(a: SpectralField) -> list[VectorField]:
    full = a.to_full() if isinstance(a, SymTensorField) else a
    if not isinstance(full, TensorField):
        raise TypeError(f"需要张量场，实际为 {type(a).__name__}")
    return [full.row(0), full.row(1)]


def _check_zero_mean(a: SpectralField) -> None:
    m = np.abs(a.mean())
    scale = max(1.0, float(np.max(np.abs(a.coeffs))))
    if float(np.max(m)) > 1e-12 * scale:
        raise NonzeroMeanError(f"双线性反散度要求矩阵均值为零，实际均值 {a.mean().tolist()}")


def _flux_from_gradient(grad_pad: Sequence[np.ndarray], r_pad: np.ndarray) -> np.ndarray:
    """u_j = d_i s (Rw)_ij，grad_pad = (d1 s, d2 s) 的补零采样，r_pad 为对称存储"""
    u1 = grad_pad[0] * r_pad[0] + grad_pad[1] * r_pad[1]
    u2 = grad_pad[0] * r_pad[1] + grad_pad[1] * r_pad[2]
    return np.stack([u1, u2])


def bilinear_antidiv(v: VectorField, a: SpectralField) -> SymTensorField:
    """
    B(v, A)_ij = v_l (R a^l)_ij - R(d_i v_l (R a^l)_ij)，a^l 为 A 的第 l 行。

    div B(v, A) = vA - mean(vA)，其中 (vA)_j = v_l A_lj。

    Raises:
        NonzeroMeanError: A 的空间均值不为零
    """
    _check_zero_mean(a)
    grid = v.grid
    pv = padded_samples(v)
    first = np.zeros((3, grid.padded_size, grid.padded_size))
    flux = np.zeros((2, grid.padded_size, grid.padded_size))
    for l, row in enumerate(_rows(a)):
        ra = padded_samples(antidiv(row))
        vl = v.component(l)
        grad = [padded_samples(derivative(vl, 1))[0], padded_samples(derivative(vl, 2))[0]]
        first += pv[l][np.newaxis] * ra
        flux += _flux_from_gradient(grad, ra)
    head = from_padded(grid, first, SymTensorField)
    tail = antidiv(from_padded(grid, flux, VectorField))  # type: ignore[arg-type]
    return head - tail  # type: ignore[return-value]


def _bilinear_scalar_mean_zero(f: ScalarField, w: VectorField) -> SymTensorField:
    grid = f.grid
    rw = padded_samples(antidiv(w))
    pf = padded_samples(f)[0]
    grad = [padded_samples(derivative(f, 1))[0], padded_samples(derivative(f, 2))[0]]
    head = from_padded(grid, pf[np.newaxis] * rw, SymTensorField)
    tail = antidiv(from_padded(grid, _flux_from_gradient(grad, rw), VectorField))  # type: ignore[arg-type]
    return head - tail  # type: ignore[return-value]


def bilinear_antidiv_scalar(f: ScalarField, u: VectorField) -> SymTensorField:
    """
    标量振幅版本：div B(f, u) = f u - mean(f u)。
    u 的均值部分用 R(f * mean(u)) 处理，因此 u 不必均值为零。
    """
    ubar = u.mean()
    w = u - VectorField.constant(u.grid, ubar)
    out = _bilinear_scalar_mean_zero(f, w)  # type: ignore[arg-type]
    if np.any(ubar != 0.0):
        fc = f.coeff
        out = out + antidiv(VectorField(f.grid, np.stack([ubar[0] * fc, ubar[1] * fc]),
                                        enforce_reality=False))
    return out  # type: ignore[return-value]


# ==================== 恒等式与估计 ====================

def antidiv_laplace_identity(v: VectorField) -> float:
    """
    ||R(Delta v) - (grad v + grad^T v)||_{L^inf}，要求 v 无散度。

    Raises:
        NotDivergenceFreeError: ||div v||_inf 超过 1e-8 max(1, ||v||_{C^1})
    """
    scale = max(1.0, norm(v, "CN", order=1))
    defect = norm(div(v), "Linfty")
    if defect > DIVERGENCE_TOLERANCE * scale:
        raise NotDivergenceFreeError(f"输入不是无散度场: ||div v||_inf = {defect:.3e}")
    residual = antidiv(laplacian(v)) - sym_gradient(v)  # type: ignore[arg-type]
    return norm(residual, "Linfty")


def antidiv_right_inverse_residual(t: Union[SymTensorField, TensorField]) -> float:
    """||div R div T - div T||_inf（div T 总是均值为零）"""
    d = div(t)
    return norm(div(antidiv(d)) - d, "Linfty")  # type: ignore[arg-type, operator]


@dataclass
class ScalingReport:
    p: float
    sigmas: list[int]
    ratios: list[float]
    slope: float

    def to_dict(self) -> dict:
        return asdict(self)


def antidiv_scaling_check(f: VectorField, sigmas: Sequence[int] = (1, 2, 4, 8), p: float = 2.0) -> ScalingReport:
    """
    ||R f(sigma .)||_{L^p} / ||f||_{L^p} 随 sigma 的变化，应按 sigma^{-1} 衰减。

    Raises:
        AliasingError: sigma k 超出网格分辨带
    """
    base = lp_from_magnitude(pointwise_magnitude(f), p)
    if base == 0.0:
        raise ValueError("f 不能为零场")
    ratios = []
    for s in sigmas:
        fs = dilate(f, s)
        ratios.append(lp_from_magnitude(pointwise_magnitude(antidiv(fs)), p) / base)  # type: ignore[arg-type]
    return ScalingReport(p=p, sigmas=list(sigmas), ratios=ratios, slope=fit_loglog_slope(sigmas, ratios))


@dataclass
class BilinearBound:
    lhs: float
    rhs: float

    @property
    def constant(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else 0.0


def bilinear_bound_check(v: VectorField, a: SpectralField, p: float = 2.0) -> BilinearBound:
    """||B(v, A)||_{L^p} 与 ||v||_{C^1} ||R A||_{L^p}，R A 按行作用"""
    lhs = lp_from_magnitude(pointwise_magnitude(bilinear_antidiv(v, a)), p)
    ra_sq = sum(pointwise_magnitude(antidiv(row)) ** 2 for row in _rows(a))
    rhs = norm(v, "CN", order=1) * lp_from_magnitude(np.sqrt(ra_sq), p)
    return BilinearBound(lhs=lhs, rhs=rhs)
