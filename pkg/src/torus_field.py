"""
环面 T^2 = R^2/Z^2 上的谱场表示

约定：
- 基函数 e^{2 pi i k.x}，k in {-N/2, ..., N/2-1}^2，Laplace 符号 -4 pi^2 |k|^2
- 系数 c = fft2(samples, norm="forward")，因此常数 1 的零模系数为 1
- 第 0 轴对应 x1，第 1 轴对应 x2（indexing="ij"）
- 变换保留完整 DFT；导数、投影、反散度与乘积只作用于 |k_i| < N/2 的分辨带，
  输出中的 Nyquist 线置零
- 点乘积按 3/2 补零去混叠，对输出模 |k_i| <= N/2-1 精确
"""

import io
import json
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import BinaryIO, ClassVar, Iterator, Optional, Sequence, Union

import numpy as np

from .constants import DEALIAS_DENOMINATOR, DEALIAS_NUMERATOR, TIME_GRID_TOLERANCE
from .errors import NumericalError

TWO_PI = 2.0 * np.pi


class AliasingError(NumericalError):
    """频率搬移或射流参数超出网格分辨带"""

    def __init__(self, message: str, component: str = "torus_field"):
        super().__init__(message, component=component)


# ==================== 网格 ====================

@dataclass(frozen=True)
class Grid:
    """N x N 配置点网格与对应的整数波数"""
    n_modes: int

    def __post_init__(self):
        if self.n_modes < 4 or self.n_modes % 2 != 0:
            raise ValueError(f"n_modes 必须是 >= 4 的偶数，当前值: {self.n_modes}")

    @property
    def n(self) -> int:
        return self.n_modes

    @cached_property
    def freqs(self) -> np.ndarray:
        return np.fft.fftfreq(self.n_modes, d=1.0 / self.n_modes)

    @cached_property
    def k1(self) -> np.ndarray:
        return np.meshgrid(self.freqs, self.freqs, indexing="ij")[0]

    @cached_property
    def k2(self) -> np.ndarray:
        return np.meshgrid(self.freqs, self.freqs, indexing="ij")[1]

    @cached_property
    def k_sq(self) -> np.ndarray:
        return self.k1 ** 2 + self.k2 ** 2

    @cached_property
    def k_abs(self) -> np.ndarray:
        return np.sqrt(self.k_sq)

    @cached_property
    def k_inf(self) -> np.ndarray:
        return np.maximum(np.abs(self.k1), np.abs(self.k2))

    @cached_property
    def band(self) -> np.ndarray:
        """分辨带掩码 |k_i| < N/2"""
        half = self.n_modes // 2
        return (np.abs(self.k1) < half) & (np.abs(self.k2) < half)

    @cached_property
    def x1(self) -> np.ndarray:
        pts = np.arange(self.n_modes) / self.n_modes
        return np.meshgrid(pts, pts, indexing="ij")[0]

    @cached_property
    def x2(self) -> np.ndarray:
        pts = np.arange(self.n_modes) / self.n_modes
        return np.meshgrid(pts, pts, indexing="ij")[1]

    @cached_property
    def padded_size(self) -> int:
        return self.n_modes * DEALIAS_NUMERATOR // DEALIAS_DENOMINATOR

    @cached_property
    def _pad_index(self) -> np.ndarray:
        return self.freqs.astype(int) % self.padded_size

    def mode_index(self, k1: int, k2: int) -> tuple[int, int]:
        """整数波数 (k1, k2) 在系数数组中的位置"""
        return int(k1) % self.n_modes, int(k2) % self.n_modes


# ==================== 场类型 ====================

def _mirror(c: np.ndarray) -> np.ndarray:
    """返回 c[-k]"""
    return np.roll(np.flip(c, axis=(-2, -1)), 1, axis=(-2, -1))


def hermitian_part(c: np.ndarray) -> np.ndarray:
    return 0.5 * (c + np.conj(_mirror(c)))


class SpectralField:
    """
    谱场基类：系数数组形状为 (分量数, N, N)，构造后不可变。
    公共构造总是把系数投影到共轭对称部分，因此物理值为实数。
    """
    n_components: ClassVar[int] = 1
    kind: ClassVar[str] = "scalar"

    def __init__(self, grid: Grid, coeffs: np.ndarray, *, enforce_reality: bool = True):
        arr = np.asarray(coeffs, dtype=np.complex128)
        if arr.ndim == 2:
            arr = arr[np.newaxis]
        expected = (self.n_components, grid.n, grid.n)
        if arr.shape != expected:
            raise ValueError(f"{type(self).__name__} 系数形状应为 {expected}，实际为 {arr.shape}")
        arr = hermitian_part(arr) if enforce_reality else arr.copy()
        arr.setflags(write=False)
        self.grid = grid
        self.coeffs = arr

    # ---------- 构造 ----------

    @classmethod
    def from_samples(cls, grid: Grid, samples) -> "SpectralField":
        arr = np.asarray(samples, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[np.newaxis]
        expected = (cls.n_components, grid.n, grid.n)
        if arr.shape != expected:
            raise ValueError(f"采样形状应为 {expected}，实际为 {arr.shape}")
        return cls(grid, np.fft.fft2(arr, norm="forward"))

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralField":
        return cls(grid, np.zeros((cls.n_components, grid.n, grid.n), dtype=np.complex128),
                   enforce_reality=False)

    @classmethod
    def constant(cls, grid: Grid, values) -> "SpectralField":
        vals = np.broadcast_to(np.asarray(values, dtype=np.float64), (cls.n_components,))
        c = np.zeros((cls.n_components, grid.n, grid.n), dtype=np.complex128)
        c[:, 0, 0] = vals
        return cls(grid, c, enforce_reality=False)

    def _new(self, coeffs: np.ndarray, *, enforce_reality: bool = True) -> "SpectralField":
        return type(self)(self.grid, coeffs, enforce_reality=enforce_reality)

    # ---------- 访问 ----------

    def samples(self) -> np.ndarray:
        """物理空间采样，形状 (分量数, N, N)"""
        return np.fft.ifft2(self.coeffs, norm="forward").real

    def component(self, i: int) -> "ScalarField":
        return ScalarField(self.grid, self.coeffs[i], enforce_reality=False)

    def components(self) -> list["ScalarField"]:
        return [self.component(i) for i in range(self.n_components)]

    def coefficient(self, k1: int, k2: int) -> np.ndarray:
        i, j = self.grid.mode_index(k1, k2)
        return self.coeffs[:, i, j].copy()

    def mean(self) -> np.ndarray:
        return self.coeffs[:, 0, 0].real.copy()

    # ---------- 线性运算 ----------

    def _check_compatible(self, other: "SpectralField") -> None:
        if type(other) is not type(self):
            raise TypeError(f"类型不一致: {type(self).__name__} 与 {type(other).__name__}")
        if other.grid != self.grid:
            raise ValueError("网格不一致")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check_compatible(other)
        return self._new(self.coeffs + other.coeffs, enforce_reality=False)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check_compatible(other)
        return self._new(self.coeffs - other.coeffs, enforce_reality=False)

    def __neg__(self) -> "SpectralField":
        return self._new(-self.coeffs, enforce_reality=False)

    def __mul__(self, scalar: float) -> "SpectralField":
        if not np.isscalar(scalar):
            raise TypeError("场只能与实数标量相乘；点乘请使用 multiply/scale")
        return self._new(float(scalar) * self.coeffs, enforce_reality=False)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> "SpectralField":
        return self * (1.0 / float(scalar))

    def apply_symbol(self, symbol: np.ndarray) -> "SpectralField":
        """乘以实偶符号（各分量相同）"""
        return self._new(self.coeffs * symbol, enforce_reality=False)

    def band_limited(self) -> "SpectralField":
        return self._new(self.coeffs * self.grid.band, enforce_reality=False)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(N={self.grid.n})"


class ScalarField(SpectralField):
    n_components = 1
    kind = "scalar"

    @property
    def coeff(self) -> np.ndarray:
        return self.coeffs[0]


class VectorField(SpectralField):
    n_components = 2
    kind = "vector"

    @classmethod
    def from_components(cls, f1: ScalarField, f2: ScalarField) -> "VectorField":
        return cls(f1.grid, np.stack([f1.coeff, f2.coeff]), enforce_reality=False)


class SymTensorField(SpectralField):
    """对称 2x2 张量，存储 (T11, T12, T22)"""
    n_components = 3
    kind = "symtensor"
    frobenius_weights: ClassVar[tuple[float, float, float]] = (1.0, 2.0, 1.0)

    @classmethod
    def from_components(cls, t11: ScalarField, t12: ScalarField, t22: ScalarField) -> "SymTensorField":
        return cls(t11.grid, np.stack([t11.coeff, t12.coeff, t22.coeff]), enforce_reality=False)

    def to_full(self) -> "TensorField":
        c = self.coeffs
        return TensorField(self.grid, np.stack([c[0], c[1], c[1], c[2]]), enforce_reality=False)

    def trace(self) -> ScalarField:
        return ScalarField(self.grid, self.coeffs[0] + self.coeffs[2], enforce_reality=False)


class TensorField(SpectralField):
    """一般 2x2 张量，存储 (T11, T12, T21, T22)"""
    n_components = 4
    kind = "tensor"

    def row(self, i: int) -> VectorField:
        return VectorField(self.grid, self.coeffs[2 * i:2 * i + 2], enforce_reality=False)


FIELD_KINDS: dict[str, type[SpectralField]] = {
    "scalar": ScalarField,
    "vector": VectorField,
    "symtensor": SymTensorField,
    "tensor": TensorField,
}

# 采样到谱的便捷函数

def to_spectral(grid: Grid, samples) -> ScalarField:
    arr = np.asarray(samples)
    if arr.shape != (grid.n, grid.n):
        raise ValueError(f"采样形状应为 {(grid.n, grid.n)}，实际为 {arr.shape}")
    return ScalarField.from_samples(grid, arr)


def to_physical(f: ScalarField) -> np.ndarray:
    return f.samples()[0]


# ==================== 微分与投影 ====================

def _wavenumber(grid: Grid, axis: int) -> np.ndarray:
    if axis == 1:
        return grid.k1
    if axis == 2:
        return grid.k2
    raise ValueError(f"axis 必须是 1 或 2，当前值: {axis}")


def derivative(f: SpectralField, axis: int, order: int = 1) -> SpectralField:
    """谱导数：系数乘以 (2 pi i k_axis)^order"""
    if order < 1:
        raise ValueError("order 必须是正整数")
    k = _wavenumber(f.grid, axis)
    symbol = (1j * TWO_PI * k) ** order * f.grid.band
    return f._new(f.coeffs * symbol, enforce_reality=False)


def gradient(f: ScalarField) -> VectorField:
    return VectorField.from_components(derivative(f, 1), derivative(f, 2))


def perp_gradient(f: ScalarField) -> VectorField:
    """nabla-perp f = (d2 f, -d1 f)"""
    return VectorField.from_components(derivative(f, 2), -derivative(f, 1))


def div(f: SpectralField) -> SpectralField:
    """向量场的散度为标量；张量场按 div(T)_i = d_j T_ij 得到向量"""
    if isinstance(f, VectorField):
        return ScalarField(f.grid, (derivative(f.component(0), 1) + derivative(f.component(1), 2)).coeff,
                           enforce_reality=False)
    if isinstance(f, SymTensorField):
        f = f.to_full()
    if isinstance(f, TensorField):
        t11, t12, t21, t22 = f.components()
        return VectorField.from_components(
            derivative(t11, 1) + derivative(t12, 2),
            derivative(t21, 1) + derivative(t22, 2),
        )
    raise TypeError(f"不支持对 {type(f).__name__} 求散度")


def laplacian(f: SpectralField) -> SpectralField:
    return f.apply_symbol(-(TWO_PI ** 2) * f.grid.k_sq * f.grid.band)


def inverse_laplacian(f: SpectralField) -> SpectralField:
    """Delta^{-1}：k != 0 时乘以 -1/(4 pi^2 |k|^2)，零模置零"""
    k_sq = f.grid.k_sq
    symbol = np.zeros_like(k_sq)
    nz = (k_sq > 0) & f.grid.band
    symbol[nz] = -1.0 / (TWO_PI ** 2 * k_sq[nz])
    return f.apply_symbol(symbol)


def helmholtz_project(v: VectorField) -> VectorField:
    """Leray 投影：v(k) -> (Id - k k^T/|k|^2) v(k)，零模不变"""
    grid = v.grid
    k1, k2, k_sq = grid.k1, grid.k2, grid.k_sq
    safe = np.where(k_sq > 0, k_sq, 1.0)
    c1, c2 = v.coeffs
    kv = (k1 * c1 + k2 * c2) / safe
    p1 = np.where(k_sq > 0, c1 - k1 * kv, c1) * grid.band
    p2 = np.where(k_sq > 0, c2 - k2 * kv, c2) * grid.band
    return VectorField(grid, np.stack([p1, p2]), enforce_reality=False)


def remove_mean(f: SpectralField) -> SpectralField:
    c = f.coeffs.copy()
    c[:, 0, 0] = 0.0
    return f._new(c, enforce_reality=False)


def mean(f: SpectralField) -> np.ndarray:
    return f.mean()


def traceless(t: SymTensorField) -> SymTensorField:
    c = t.coeffs
    half = 0.5 * (c[0] - c[2])
    return SymTensorField(t.grid, np.stack([half, c[1], -half]), enforce_reality=False)


def sym_part(t: TensorField) -> SymTensorField:
    c = t.coeffs
    return SymTensorField(t.grid, np.stack([c[0], 0.5 * (c[1] + c[2]), c[3]]), enforce_reality=False)


def sym_gradient(v: VectorField) -> SymTensorField:
    """nabla v + nabla^T v"""
    v1, v2 = v.components()
    return SymTensorField.from_components(
        derivative(v1, 1) * 2.0,
        derivative(v2, 1) + derivative(v1, 2),
        derivative(v2, 2) * 2.0,
    )


def dilate(f: SpectralField, sigma: int) -> SpectralField:
    """
    f(sigma x)：把模 k 搬到 sigma k。

    Raises:
        AliasingError: 有非零系数会被搬出分辨带
    """
    if sigma < 1 or int(sigma) != sigma:
        raise ValueError("sigma 必须是正整数")
    sigma = int(sigma)
    if sigma == 1:
        return f
    grid = f.grid
    half = grid.n // 2
    fits = (np.abs(sigma * grid.k1) < half) & (np.abs(sigma * grid.k2) < half)
    scale = float(np.max(np.abs(f.coeffs))) if f.coeffs.size else 0.0
    lost = np.abs(f.coeffs[:, ~fits])
    if scale > 0 and lost.size and float(np.max(lost)) > 1e-13 * scale:
        raise AliasingError(f"dilate(sigma={sigma}) 会把非零模搬出 N={grid.n} 的分辨带")
    out = np.zeros_like(f.coeffs)
    src = np.nonzero(fits)
    dst = ((sigma * grid.k1[src]).astype(int) % grid.n, (sigma * grid.k2[src]).astype(int) % grid.n)
    out[:, dst[0], dst[1]] = f.coeffs[:, src[0], src[1]]
    return f._new(out, enforce_reality=False)


# ==================== 去混叠乘积 ====================

def padded_samples(f: SpectralField) -> np.ndarray:
    """把分辨带内系数补零到 3N/2 网格并返回物理采样 (分量数, M, M)"""
    grid = f.grid
    m = grid.padded_size
    idx = grid._pad_index
    big = np.zeros((f.n_components, m, m), dtype=np.complex128)
    big[:, idx[:, None], idx[None, :]] = f.coeffs * grid.band
    return np.fft.ifft2(big, norm="forward").real


def from_padded(grid: Grid, samples: np.ndarray, cls: type[SpectralField]) -> SpectralField:
    """3N/2 网格上的采样截断回 N 网格，Nyquist 线置零"""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[np.newaxis]
    big = np.fft.fft2(arr, norm="forward")
    idx = grid._pad_index
    small = big[:, idx[:, None], idx[None, :]] * grid.band
    return cls(grid, small)


def multiply(f: ScalarField, g: ScalarField) -> ScalarField:
    return from_padded(f.grid, padded_samples(f)[0] * padded_samples(g)[0], ScalarField)  # type: ignore


def scale(f: ScalarField, v: SpectralField) -> SpectralField:
    """标量场逐分量乘以任意场"""
    pf = padded_samples(f)[0]
    return from_padded(f.grid, pf[np.newaxis] * padded_samples(v), type(v))


def outer(v: VectorField, w: VectorField) -> TensorField:
    pv, pw = padded_samples(v), padded_samples(w)
    prod = np.stack([pv[0] * pw[0], pv[0] * pw[1], pv[1] * pw[0], pv[1] * pw[1]])
    return from_padded(v.grid, prod, TensorField)  # type: ignore


def sym_outer(v: VectorField, w: VectorField) -> SymTensorField:
    """(v (x) w + w (x) v)/2"""
    pv, pw = padded_samples(v), padded_samples(w)
    prod = np.stack([pv[0] * pw[0], 0.5 * (pv[0] * pw[1] + pv[1] * pw[0]), pv[1] * pw[1]])
    return from_padded(v.grid, prod, SymTensorField)  # type: ignore


def traceless_outer(v: VectorField, w: VectorField) -> SymTensorField:
    """v (x)-ring w：v (x) w 对称无迹部分"""
    pv, pw = padded_samples(v), padded_samples(w)
    half = 0.5 * (pv[0] * pw[0] - pv[1] * pw[1])
    prod = np.stack([half, 0.5 * (pv[0] * pw[1] + pv[1] * pw[0]), -half])
    return from_padded(v.grid, prod, SymTensorField)  # type: ignore


def contract(v: VectorField, a: SpectralField) -> VectorField:
    """(vA)_j = v_l A_lj"""
    full = a.to_full() if isinstance(a, SymTensorField) else a
    if not isinstance(full, TensorField):
        raise TypeError("contract 需要张量场")
    pv, pa = padded_samples(v), padded_samples(full)
    prod = np.stack([pv[0] * pa[0] + pv[1] * pa[2], pv[0] * pa[1] + pv[1] * pa[3]])
    return from_padded(v.grid, prod, VectorField)  # type: ignore


# ==================== 范数 ====================

class NormKind(str, Enum):
    LP = "Lp"
    LINFTY = "Linfty"
    CN = "CN"
    HS = "Hs"
    WSP = "Wsp"


def pointwise_magnitude(f: SpectralField, samples: Optional[np.ndarray] = None) -> np.ndarray:
    """逐点 Euclid / Frobenius 模"""
    s = f.samples() if samples is None else samples
    if isinstance(f, SymTensorField):
        w = np.asarray(SymTensorField.frobenius_weights)[:, None, None]
        return np.sqrt(np.sum(w * s ** 2, axis=0))
    return np.sqrt(np.sum(s ** 2, axis=0))


def lp_from_magnitude(mag: np.ndarray, p: float) -> float:
    if np.isinf(p):
        return float(np.max(mag)) if mag.size else 0.0
    return float(np.mean(mag ** p) ** (1.0 / p))


def _c_norm(f: SpectralField, order: int) -> float:
    total = float(np.max(pointwise_magnitude(f)))
    frontier = [f]
    for _ in range(order):
        nxt = []
        for g in frontier:
            nxt.append(derivative(g, 1))
            nxt.append(derivative(g, 2))
        total += max(float(np.max(pointwise_magnitude(g))) for g in nxt)
        frontier = nxt
    return total


def bessel_symbol(grid: Grid, s: float) -> np.ndarray:
    """(I - Delta)^{s/2} 的符号"""
    return (1.0 + TWO_PI ** 2 * grid.k_sq) ** (0.5 * s)


def norm(f: SpectralField, kind: Union[NormKind, str] = NormKind.LP, p: float = 2.0, s: float = 0.0,
         order: int = 0) -> float:
    """
    场的范数

    Args:
        kind: Lp / Linfty / CN（空间快照，order 阶）/ Hs / Wsp
        p: 可积指数，[1, inf]
        s: 正则性指标（Hs、Wsp）
        order: CN 的阶数
    """
    kind = NormKind(kind)
    if not (p >= 1.0):
        raise ValueError(f"p 必须在 [1, inf] 中，当前值: {p}")
    if kind is NormKind.LP:
        return lp_from_magnitude(pointwise_magnitude(f), p)
    if kind is NormKind.LINFTY:
        return lp_from_magnitude(pointwise_magnitude(f), np.inf)
    if kind is NormKind.CN:
        return _c_norm(f, order)
    if kind is NormKind.HS:
        weights = np.ones(f.n_components)
        if isinstance(f, SymTensorField):
            weights = np.asarray(SymTensorField.frobenius_weights)
        dens = (1.0 + TWO_PI ** 2 * f.grid.k_sq) ** s * np.abs(f.coeffs) ** 2
        return float(np.sqrt(np.sum(weights[:, None, None] * dens)))
    return lp_from_magnitude(pointwise_magnitude(f.apply_symbol(bessel_symbol(f.grid, s))), p)


# ==================== 随机场 ====================

def random_band_limited(grid: Grid, cls: type[SpectralField], rng: np.random.Generator, k_max: int,
                        mean_zero: bool = True, decay: float = 0.0) -> SpectralField:
    """|k|_inf <= k_max 的随机实场，系数按 (1+|k|)^{-decay} 加权"""
    if k_max > grid.n // 2 - 1:
        raise AliasingError(f"k_max={k_max} 超出 N={grid.n} 的分辨带")
    shape = (cls.n_components, grid.n, grid.n)
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    mask = (grid.k_inf <= k_max) * (1.0 + grid.k_abs) ** (-decay)
    c = c * mask
    if mean_zero:
        c[:, 0, 0] = 0.0
    return cls(grid, c)


# ==================== 时间序列 ====================

class TimeSeriesField:
    """
    等步长时间网格上的场轨迹，系数数组形状 (nt, 分量数, N, N)。
    times[0] 可以为负（负时间延拓）。
    """

    def __init__(self, times: Sequence[float], cls: type[SpectralField], grid: Grid, coeffs: np.ndarray):
        t = np.asarray(times, dtype=np.float64)
        arr = np.asarray(coeffs, dtype=np.complex128)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("times 必须是非空一维序列")
        if arr.shape != (t.size, cls.n_components, grid.n, grid.n):
            raise ValueError(f"系数形状 {arr.shape} 与时间/网格不一致")
        if t.size > 1:
            steps = np.diff(t)
            if np.any(steps <= 0):
                raise ValueError("times 必须严格递增")
            if np.max(np.abs(steps - steps[0])) > TIME_GRID_TOLERANCE * max(1.0, abs(steps[0])):
                raise ValueError("times 必须等步长")
        t.setflags(write=False)
        arr.setflags(write=False)
        self.times = t
        self.cls = cls
        self.grid = grid
        self.coeffs = arr

    @classmethod
    def from_fields(cls, times: Sequence[float], fields: Sequence[SpectralField]) -> "TimeSeriesField":
        if len(fields) == 0:
            raise ValueError("fields 不能为空")
        kind = type(fields[0])
        grid = fields[0].grid
        for f in fields:
            if type(f) is not kind or f.grid != grid:
                raise ValueError("所有时刻的场必须同类型、同网格")
        return cls(times, kind, grid, np.stack([f.coeffs for f in fields]))

    @classmethod
    def zeros(cls, times: Sequence[float], kind: type[SpectralField], grid: Grid) -> "TimeSeriesField":
        t = np.asarray(times, dtype=np.float64)
        return cls(t, kind, grid, np.zeros((t.size, kind.n_components, grid.n, grid.n), dtype=np.complex128))

    @property
    def dt(self) -> float:
        if self.times.size < 2:
            return 0.0
        return float(self.times[1] - self.times[0])

    def __len__(self) -> int:
        return int(self.times.size)

    def __getitem__(self, i: int) -> SpectralField:
        return self.cls(self.grid, self.coeffs[i], enforce_reality=False)

    def __iter__(self) -> Iterator[SpectralField]:
        for i in range(len(self)):
            yield self[i]

    def index_of(self, t: float) -> int:
        """时间 t 对应的网格下标（容差为 dt 的 1e-6）"""
        i = int(np.argmin(np.abs(self.times - t)))
        tol = 1e-6 * (self.dt if self.dt > 0 else 1.0)
        if abs(self.times[i] - t) > tol:
            raise ValueError(f"时间 {t} 不在网格上（最近的是 {self.times[i]}）")
        return i

    def at(self, t: float) -> SpectralField:
        return self[self.index_of(t)]

    def map(self, fn, times: Optional[Sequence[float]] = None) -> "TimeSeriesField":
        out = [fn(f) for f in self]
        return TimeSeriesField.from_fields(self.times if times is None else times, out)

    def restrict(self, t0: float, t1: float) -> "TimeSeriesField":
        mask = (self.times >= t0 - 1e-12) & (self.times <= t1 + 1e-12)
        return TimeSeriesField(self.times[mask], self.cls, self.grid, self.coeffs[mask])

    def with_coeffs(self, coeffs: np.ndarray) -> "TimeSeriesField":
        return TimeSeriesField(self.times, self.cls, self.grid, coeffs)

    def __add__(self, other: "TimeSeriesField") -> "TimeSeriesField":
        self._check(other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: "TimeSeriesField") -> "TimeSeriesField":
        self._check(other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "TimeSeriesField":
        return self.with_coeffs(float(scalar) * self.coeffs)

    __rmul__ = __mul__

    def _check(self, other: "TimeSeriesField") -> None:
        if other.cls is not self.cls or other.grid != self.grid or other.times.shape != self.times.shape \
                or np.max(np.abs(other.times - self.times)) > 1e-12:
            raise ValueError("时间序列不兼容")

    def samples(self) -> np.ndarray:
        return np.fft.ifft2(self.coeffs, norm="forward").real


# ==================== 二进制转储 ====================

@dataclass(frozen=True)
class FieldRecord:
    header: dict
    samples: np.ndarray


def _write_record(fh: BinaryIO, f: SpectralField, time: float) -> None:
    header = {
        "grid": f.grid.n,
        "components": f.n_components,
        "kind": f.kind,
        "time": float(time),
        "endianness": "little",
        "dtype": "float64",
    }
    fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
    fh.write(np.ascontiguousarray(f.samples(), dtype="<f8").tobytes(order="C"))


def dump_field(f: SpectralField, path: Union[str, Path], time: float = 0.0) -> None:
    """单条记录：UTF-8 JSON 头一行 + 行主序小端 float64 物理采样"""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        _write_record(fh, f, time)


def dump_series(series: TimeSeriesField, path: Union[str, Path]) -> None:
    """时间序列是单场记录的串联"""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        for t, f in zip(series.times, series):
            _write_record(fh, f, float(t))


def read_records(path: Union[str, Path]) -> list[FieldRecord]:
    with open(path, "rb") as fh:
        data = fh.read()
    stream = io.BytesIO(data)
    records = []
    while stream.tell() < len(data):
        line = stream.readline()
        header = json.loads(line.decode("utf-8"))
        if header.get("endianness") != "little" or header.get("dtype") != "float64":
            raise ValueError(f"不支持的转储格式: {header}")
        n, ncomp = int(header["grid"]), int(header["components"])
        count = ncomp * n * n
        raw = stream.read(8 * count)
        if len(raw) != 8 * count:
            raise ValueError("转储文件被截断")
        samples = np.frombuffer(raw, dtype="<f8").reshape(ncomp, n, n).copy()
        records.append(FieldRecord(header=header, samples=samples))
    return records


def load_field(path: Union[str, Path]) -> SpectralField:
    rec = read_records(path)[0]
    kind = FIELD_KINDS[rec.header["kind"]]
    return kind.from_samples(Grid(int(rec.header["grid"])), rec.samples)


def load_series(path: Union[str, Path]) -> TimeSeriesField:
    recs = read_records(path)
    kind = FIELD_KINDS[recs[0].header["kind"]]
    grid = Grid(int(recs[0].header["grid"]))
    fields = [kind.from_samples(grid, r.samples) for r in recs]
    return TimeSeriesField.from_fields([r.header["time"] for r in recs], fields)
