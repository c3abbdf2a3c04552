"""
加速射流：几何引理、空间剖面、时间振子及其恒等式

约定：
- 方向 xi 与 xi_perp = (xi_2, -xi_1)，局部坐标 x_xi = (y - p).xi, y_xi = (y - p).xi_perp
- 剖面 phi, psi 支撑在 (-1/mu0, 1/mu0)，以三次样条表示；周期化按最近像取整
- 场在 sigma x + phi_xi(t) xi 处取值，所有空间导数按链式法则解析计算
"""

from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, interpolate, special

from .constants import (
    GEOMETRIC_EPSILON,
    GEOMETRIC_TOLERANCE,
    IDENTITY_TOLERANCE,
    JET_MU0,
    PROFILE_SAMPLES,
    TEMPORAL_SAMPLES,
)
from .logger import LogLevel, log_manager
from .schemas import CheckResult
from .torus_field import AliasingError, Grid, ScalarField, VectorField, norm, perp_gradient

# 有理单位向量，|xi| = 1 精确成立
DIRECTIONS: tuple[tuple[Fraction, Fraction], ...] = (
    (Fraction(1), Fraction(0)),
    (Fraction(0), Fraction(1)),
    (Fraction(3, 5), Fraction(4, 5)),
    (Fraction(3, 5), Fraction(-4, 5)),
    (Fraction(4, 5), Fraction(3, 5)),
    (Fraction(4, 5), Fraction(-3, 5)),
)

ANCHORS: tuple[tuple[float, float], ...] = (
    (0.25, 0.25),
    (0.75, 0.25),
    (0.35, 0.5),
    (0.65, 0.5),
    (0.25, 0.75),
    (0.75, 0.75),
)

# 斜方向权重的放大系数 (3/5)(4/5) * 2 = 24/25 的倒数
_DIAGONAL_GAIN = 25.0 / 24.0

# 时间中心差分的最小相对精度：h * 频率
_PHASE_RESOLUTION = 0.02


# ==================== 几何引理 ====================

@dataclass(frozen=True)
class DirectionSet:
    """方向集 Lambda、锚点与系数 gamma_xi"""
    directions: tuple[tuple[Fraction, Fraction], ...] = DIRECTIONS
    anchors: tuple[tuple[float, float], ...] = ANCHORS
    mu0: float = JET_MU0
    epsilon: float = GEOMETRIC_EPSILON

    def __len__(self) -> int:
        return len(self.directions)

    @cached_property
    def vectors(self) -> np.ndarray:
        return np.array([[float(a), float(b)] for a, b in self.directions])

    @cached_property
    def perps(self) -> np.ndarray:
        v = self.vectors
        return np.stack([v[:, 1], -v[:, 0]], axis=1)

    @cached_property
    def anchor_points(self) -> np.ndarray:
        return np.asarray(self.anchors, dtype=np.float64)

    def weights(self, matrix) -> np.ndarray:
        """
        gamma_xi^2(R)，输出形状 (6,) + R 的批量形状。

        Args:
            matrix: 对称矩阵，形状 (..., 2, 2)
        """
        r = np.asarray(matrix, dtype=np.float64)
        r11, r12, r22 = r[..., 0, 0], 0.5 * (r[..., 0, 1] + r[..., 1, 0]), r[..., 1, 1]
        s = np.sqrt(r12 ** 2 + self.epsilon ** 2)
        plus = _DIAGONAL_GAIN * 0.5 * (s + r12)
        minus = _DIAGONAL_GAIN * 0.5 * (s - r12)
        return np.stack([
            r11 - _DIAGONAL_GAIN * s,
            r22 - _DIAGONAL_GAIN * s,
            plus,
            minus,
            plus,
            minus,
        ])

    def weight_derivatives(self, matrix, rate) -> np.ndarray:
        """d/dt gamma_xi^2(R(t))，rate = dR/dt，形状同 weights"""
        r = np.asarray(matrix, dtype=np.float64)
        d = np.asarray(rate, dtype=np.float64)
        r12 = 0.5 * (r[..., 0, 1] + r[..., 1, 0])
        d12 = 0.5 * (d[..., 0, 1] + d[..., 1, 0])
        ds = r12 * d12 / np.sqrt(r12 ** 2 + self.epsilon ** 2)
        plus = _DIAGONAL_GAIN * 0.5 * (ds + d12)
        minus = _DIAGONAL_GAIN * 0.5 * (ds - d12)
        return np.stack([
            d[..., 0, 0] - _DIAGONAL_GAIN * ds,
            d[..., 1, 1] - _DIAGONAL_GAIN * ds,
            plus,
            minus,
            plus,
            minus,
        ])

    def gammas(self, matrix) -> np.ndarray:
        w = self.weights(matrix)
        if np.any(w <= 0.0):
            raise ValueError(f"矩阵超出几何引理的定义域，最小权重 {float(np.min(w)):.3e}")
        return np.sqrt(w)

    def reconstruct(self, weights: np.ndarray) -> np.ndarray:
        """sum_xi w_xi xi (x) xi，输出形状 (..., 2, 2)"""
        v = self.vectors
        dyads = np.einsum("ni,nj->nij", v, v)
        return np.einsum("n...,nij->...ij", np.asarray(weights), dyads)

    def anchor_separation(self) -> float:
        p = self.anchor_points
        d = np.linalg.norm(p[:, None, :] - p[None, :, :], axis=-1)
        return float(np.min(d[~np.eye(len(p), dtype=bool)]))

    def balls_inside(self) -> bool:
        p = self.anchor_points
        r = 2.0 / self.mu0
        return bool(np.all(p - r >= 0.0) and np.all(p + r <= 1.0))

    def geometric_check(self) -> bool:
        exact = all(a * a + b * b == 1 for a, b in self.directions)
        return exact and self.anchor_separation() > 2.0 / self.mu0 and self.balls_inside()


def build_direction_set() -> DirectionSet:
    ds = DirectionSet()
    if not ds.geometric_check():
        raise ValueError("方向集的锚点不满足分离条件")
    return ds


def sample_frobenius_ball(rng: np.random.Generator, n: int, radius: float = 0.5) -> np.ndarray:
    """在 {R 对称 : |R - Id|_F <= radius} 中均匀采样，形状 (n, 2, 2)"""
    u = rng.standard_normal((n, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    u *= radius * rng.random(n)[:, None] ** (1.0 / 3.0)
    out = np.empty((n, 2, 2))
    out[:, 0, 0] = 1.0 + u[:, 0]
    out[:, 1, 1] = 1.0 + u[:, 2]
    out[:, 0, 1] = out[:, 1, 0] = u[:, 1] / np.sqrt(2.0)
    return out


@dataclass
class GeometricReport:
    samples: int
    max_error: float
    min_weight: float
    max_gradient: float

    @property
    def passed(self) -> bool:
        return self.max_error <= GEOMETRIC_TOLERANCE and self.min_weight > 0.0

    def to_dict(self) -> dict:
        data = asdict(self)
        data["passed"] = self.passed
        return data


def geometric_sweep(ds: DirectionSet, rng: np.random.Generator, n: int = 10000,
                    step: float = 1e-6) -> GeometricReport:
    """随机矩阵上的重构误差、最小权重与 gamma 的差分梯度上界"""
    mats = sample_frobenius_ball(rng, n)
    w = ds.weights(mats)
    err = np.max(np.abs(ds.reconstruct(w) - mats))
    base = np.sqrt(np.maximum(w, 0.0))
    grad = 0.0
    for i, j in ((0, 0), (0, 1), (1, 1)):
        bumped = mats.copy()
        bumped[:, i, j] += step
        if i != j:
            bumped[:, j, i] += step
        diff = np.sqrt(np.maximum(ds.weights(bumped), 0.0)) - base
        grad = max(grad, float(np.max(np.abs(diff))) / step)
    return GeometricReport(samples=n, max_error=float(err), min_weight=float(np.min(w)), max_gradient=grad)


# ==================== 射流参数 ====================

@dataclass(frozen=True)
class JetParams:
    """sigma: 空间振荡，eta: 时间集中，nu <= mu: 空间集中，theta: 相速度"""
    sigma: int
    eta: int
    nu: int
    mu: int
    theta: int

    def __post_init__(self):
        for name in ("sigma", "eta", "nu", "mu", "theta"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} 必须是正整数，当前值: {value}")
        if not (JET_MU0 < self.nu <= self.mu):
            raise ValueError(f"需要 mu0 < nu <= mu，当前值: nu={self.nu}, mu={self.mu}")

    @classmethod
    def from_setting(cls, setting) -> "JetParams":
        return cls(sigma=setting.sigma, eta=setting.eta, nu=setting.nu, mu=setting.mu, theta=setting.theta)

    def to_dict(self) -> dict:
        return asdict(self)


def check_resolution(jp: JetParams, grid: Grid, mu0: float = JET_MU0) -> None:
    """sigma mu / mu0 必须低于 Nyquist"""
    if jp.sigma * jp.mu / mu0 >= grid.n / 2:
        raise AliasingError(
            f"射流频率 sigma*mu/mu0={jp.sigma * jp.mu / mu0:g} 超出 N={grid.n} 的分辨带",
            component="jets",
        )


# ==================== 剖面 ====================

def bump(r) -> np.ndarray:
    """exp(-1/(1-r^2))，支撑在 (-1, 1)"""
    r = np.asarray(r, dtype=np.float64)
    inside = np.abs(r) < 1.0
    safe = np.where(inside, 1.0 - r ** 2, 1.0)
    return np.where(inside, np.exp(-1.0 / safe), 0.0)


@dataclass(frozen=True)
class _CompactSpline:
    """区间 [lo, hi] 上的样条，区间外为 0"""
    spline: interpolate.CubicSpline
    lo: float
    hi: float

    def __call__(self, s, order: int = 0) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        inside = (s > self.lo) & (s < self.hi)
        return np.where(inside, self.spline(np.clip(s, self.lo, self.hi), order), 0.0)


def _compact_spline(nodes: np.ndarray, values: np.ndarray) -> _CompactSpline:
    spline = interpolate.CubicSpline(nodes, values, bc_type="clamped")
    return _CompactSpline(spline, float(nodes[0]), float(nodes[-1]))


@dataclass(frozen=True)
class JetSystem:
    """射流的全部固定构件，构造后不可变"""
    directions: DirectionSet
    phi: _CompactSpline
    psi: _CompactSpline
    normalizer: float
    temporal: _CompactSpline
    temporal_integral: interpolate.CubicSpline = field(repr=False)
    temporal_energy: interpolate.CubicSpline = field(repr=False)
    temporal_scale: float = 1.0

    def offset(self, index: int) -> float:
        return index / len(self.directions)

    @property
    def mu0(self) -> float:
        return self.directions.mu0

    def G(self, tau, order: int = 0) -> np.ndarray:
        return self.temporal(tau, order)

    def G_integral(self, tau) -> np.ndarray:
        """int_0^tau G，tau >= 1 时为常数"""
        return self.temporal_integral(np.clip(tau, 0.0, 1.0))

    def G_energy(self, tau) -> np.ndarray:
        """int_0^tau G^2"""
        return self.temporal_energy(np.clip(tau, 0.0, 1.0))


def build_jet_system(directions: Optional[DirectionSet] = None, samples: int = PROFILE_SAMPLES,
                     temporal_samples: int = TEMPORAL_SAMPLES) -> JetSystem:
    """构造剖面 phi = psi = bump(mu0 s)、归一化常数与时间剖面 G"""
    ds = directions or build_direction_set()
    half = 1.0 / ds.mu0
    s = np.linspace(-half, half, samples)
    phi = _compact_spline(s, bump(ds.mu0 * s))
    psi = phi
    normalizer = (integrate.simpson(phi(s) ** 2, x=s) * integrate.simpson(psi(s, 1) ** 2, x=s)) ** -0.5

    tau = np.linspace(0.0, 1.0, temporal_samples)
    raw = np.sin(2 * np.pi * 2 * tau) * bump(2.0 * tau - 1.0)
    raw_energy = interpolate.CubicSpline(tau, raw ** 2, bc_type="clamped").integrate(0.0, 1.0)
    scale = float(raw_energy) ** -0.5
    values = scale * raw
    temporal = _compact_spline(tau, values)
    return JetSystem(
        directions=ds,
        phi=phi,
        psi=psi,
        normalizer=float(normalizer),
        temporal=temporal,
        temporal_integral=temporal.spline.antiderivative(),
        temporal_energy=interpolate.CubicSpline(tau, values ** 2, bc_type="clamped").antiderivative(),
        temporal_scale=scale,
    )


@lru_cache(maxsize=1)
def default_jet_system() -> JetSystem:
    return build_jet_system()


# ==================== 时间振子 ====================

@dataclass
class Oscillator:
    """g_xi, h_xi, phi_xi 与 d_t g_xi 在给定时刻的值"""
    g: np.ndarray
    h: np.ndarray
    phase: np.ndarray
    dg: np.ndarray


def temporal_oscillators(system: JetSystem, jp: JetParams, index: int, t) -> Oscillator:
    """
    g(t) = g~(sigma t)，g~ 为 eta^{1/2} G(eta(t - t_xi)) 的 1-周期延拓；
    h(t) = int_0^{sigma t} (g~^2 - 1)；phi(t) = theta int_0^t g。
    G 的原函数给出闭式，因此 phi' = theta g 与 d_t(h/sigma) = g^2 - 1 与样条一致。
    """
    t = np.asarray(t, dtype=np.float64)
    eta = float(jp.eta)
    start = -system.offset(index)
    b = jp.sigma * t + start
    fb = b - np.floor(b)
    fa = start - np.floor(start)
    tau = eta * fb
    g = np.sqrt(eta) * system.G(tau)
    dg = jp.sigma * eta ** 1.5 * system.G(tau, 1)

    def burst(f):
        return system.G_integral(eta * f) / np.sqrt(eta)

    phase = jp.theta / jp.sigma * (burst(fb) - burst(fa))
    energy = np.floor(b) - np.floor(start) + system.G_energy(eta * fb) - system.G_energy(eta * fa)
    h = energy - jp.sigma * t
    return Oscillator(g=g, h=h, phase=phase, dg=dg)


# ==================== 射流场 ====================

@dataclass
class JetValues:
    """
    一个方向的射流在一组点上的取值（最后一轴为向量分量）。
    W = w xi，W^c = w_c xi_perp；grad_* 为物理坐标下的梯度。
    """
    psi: np.ndarray
    w: np.ndarray
    wc: np.ndarray
    W: np.ndarray
    Wc: np.ndarray
    grad_psi: np.ndarray
    grad_w: np.ndarray
    grad_wc: np.ndarray
    xi_grad_psi: np.ndarray


def _local_values(system: JetSystem, jp: JetParams, index: int, xs: np.ndarray, ys: np.ndarray) -> JetValues:
    xi = system.directions.vectors[index]
    perp = system.directions.perps[index]
    a, b = jp.nu * xs, jp.mu * ys
    f0, f1, f2 = (system.phi(a, k) for k in range(3))
    p0, p1, p2 = (system.psi(b, k) for k in range(3))
    amp = system.normalizer * np.sqrt(jp.nu * jp.mu)
    sig = float(jp.sigma)

    psi = amp / jp.mu * f0 * p0
    w = -amp * f0 * p1
    wc = amp * jp.nu / jp.mu * f1 * p0
    d_psi = sig * amp / jp.mu * (jp.nu * f1 * p0)
    grad_psi = d_psi[..., None] * xi + (sig * amp * f0 * p1)[..., None] * perp
    grad_w = (-sig * amp * jp.nu * f1 * p1)[..., None] * xi + (-sig * amp * jp.mu * f0 * p2)[..., None] * perp
    grad_wc = (sig * amp * jp.nu ** 2 / jp.mu * f2 * p0)[..., None] * xi \
        + (sig * amp * jp.nu * f1 * p1)[..., None] * perp
    return JetValues(
        psi=psi, w=w, wc=wc,
        W=w[..., None] * xi, Wc=wc[..., None] * perp,
        grad_psi=grad_psi, grad_w=grad_w, grad_wc=grad_wc,
        xi_grad_psi=d_psi,
    )


def evaluate_jet(system: JetSystem, jp: JetParams, index: int, points, t: float) -> JetValues:
    """在物理点 x（形状 (..., 2)）处计算 W~(sigma x + phi_xi(t) xi) 及相关量"""
    pts = np.asarray(points, dtype=np.float64)
    xi = system.directions.vectors[index]
    phase = float(temporal_oscillators(system, jp, index, t).phase)
    d = jp.sigma * pts + phase * xi - system.directions.anchor_points[index]
    d = d - np.round(d)
    return _local_values(system, jp, index, d @ xi, d @ system.directions.perps[index])


def grid_points(grid: Grid) -> np.ndarray:
    return np.stack([grid.x1, grid.x2], axis=-1)


def jet_samples(system: JetSystem, jp: JetParams, index: int, t: float, grid: Grid) -> JetValues:
    check_resolution(jp, grid, system.mu0)
    return evaluate_jet(system, jp, index, grid_points(grid), t)


def jet_fields(system: JetSystem, jp: JetParams, index: int, t: float, grid: Grid) -> dict:
    """网格上的 Psi、W、W^c"""
    vals = jet_samples(system, jp, index, t, grid)
    return {
        "psi": ScalarField.from_samples(grid, vals.psi[None]),
        "W": VectorField.from_samples(grid, np.moveaxis(vals.W, -1, 0)),
        "Wc": VectorField.from_samples(grid, np.moveaxis(vals.Wc, -1, 0)),
    }


def _support_halfwidths(system: JetSystem, jp: JetParams) -> tuple[float, float]:
    return 1.0 / (system.mu0 * jp.nu), 1.0 / (system.mu0 * jp.mu)


def support_probe_points(system: JetSystem, jp: JetParams, index: int, t: float, n: int = 16) -> np.ndarray:
    """时刻 t 时支撑内部的 n x n 个物理点，形状 (n*n, 2)"""
    hx, hy = _support_halfwidths(system, jp)
    u = np.linspace(-0.9, 0.9, n)
    X, Y = np.meshgrid(hx * u, hy * u, indexing="ij")
    xi = system.directions.vectors[index]
    perp = system.directions.perps[index]
    phase = float(temporal_oscillators(system, jp, index, t).phase)
    local = system.directions.anchor_points[index] + X[..., None] * xi + Y[..., None] * perp - phase * xi
    return np.mod(local / jp.sigma, 1.0).reshape(-1, 2)


def _support_quadrature(system: JetSystem, jp: JetParams, index: int, n: int) -> tuple[JetValues, np.ndarray]:
    """支撑盒上的 Gauss-Legendre 张量积：T^2 上的积分等于盒上的积分"""
    nodes, weights = special.roots_legendre(n)
    hx, hy = _support_halfwidths(system, jp)
    X, Y = np.meshgrid(hx * nodes, hy * nodes, indexing="ij")
    w2 = np.outer(hx * weights, hy * weights)
    return _local_values(system, jp, index, X, Y), w2


def mean_tensor_check(system: JetSystem, jp: JetParams, index: int, n: int = 256) -> tuple[float, float]:
    """返回 (|fint W (x) W - xi (x) xi|_max, |fint W|_max)"""
    vals, w2 = _support_quadrature(system, jp, index, n)
    xi = system.directions.vectors[index]
    tensor = np.einsum("ab,abi,abj->ij", w2, vals.W, vals.W)
    mean_w = np.einsum("ab,abi->i", w2, vals.W)
    return float(np.max(np.abs(tensor - np.outer(xi, xi)))), float(np.max(np.abs(mean_w)))


def stationary_flux_identity(system: JetSystem, jp: JetParams, index: int, points, t: float = 0.0) -> float:
    """div(W (x) W) = (xi . grad |W|^2) xi 的逐点相对残差"""
    vals = evaluate_jet(system, jp, index, points, t)
    xi = system.directions.vectors[index]
    # d_j(W_i W_j) = (d_j W_i) W_j + W_i d_j W_j，其中 d_j W_i = xi_i d_j w
    grad_W = xi[:, None] * vals.grad_w[..., None, :]
    lhs = np.einsum("...ij,...j->...i", grad_W, vals.W) + vals.W * np.einsum("...jj->...", grad_W)[..., None]
    directional = vals.grad_w @ xi
    rhs = (2.0 * vals.w * directional)[..., None] * xi
    scale = float(np.max(np.abs(rhs))) or 1.0
    return float(np.max(np.abs(lhs - rhs))) / scale


# ==================== 恒等式检查 ====================

@dataclass
class DifferenceCheck:
    """中心差分在步长 h 与 h/2 上的残差及观测阶"""
    residual: float
    residual_half: float
    extrapolated: float
    order: float
    scale: float

    @property
    def relative(self) -> float:
        return self.residual_half / self.scale if self.scale > 0 else 0.0

    @property
    def passed(self) -> bool:
        if self.relative <= IDENTITY_TOLERANCE:
            return True
        return bool(np.isfinite(self.order) and self.order >= 1.8)


def centred_difference_check(fn: Callable[[float], np.ndarray], rhs: np.ndarray, t: float, h: float,
                             scale: float) -> DifferenceCheck:
    def derivative(step: float) -> np.ndarray:
        return (fn(t + step) - fn(t - step)) / (2.0 * step)

    d_h = derivative(h)
    d_half = derivative(h / 2.0)
    r_h = float(np.max(np.abs(d_h - rhs)))
    r_half = float(np.max(np.abs(d_half - rhs)))
    extrapolated = float(np.max(np.abs((4.0 * d_half - d_h) / 3.0 - rhs)))
    order = float(np.log2(r_h / r_half)) if r_half > 0 and r_h > 0 else float("nan")
    return DifferenceCheck(r_h, r_half, extrapolated, order, scale)


def _temporal_frequency(system: JetSystem, jp: JetParams) -> float:
    g_max = np.sqrt(jp.eta) * float(np.max(np.abs(system.temporal.spline.c[-1])))
    transport = jp.theta * jp.sigma * jp.mu * g_max * system.mu0 * 4.0
    return max(transport, jp.sigma * jp.eta * 40.0)


def temporal_step(system: JetSystem, jp: JetParams, h: float) -> float:
    """不超过 h，且使相位在一步内的移动远小于剖面宽度"""
    return min(h, _PHASE_RESOLUTION / _temporal_frequency(system, jp))


@dataclass
class JetIdentityReport:
    index: int
    params: dict
    checks: list[CheckResult] = field(default_factory=list)
    spectral_defects: list[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "params": self.params,
            "checks": [c.model_dump() for c in self.checks],
            "spectral_defects": self.spectral_defects,
            "passed": self.passed,
        }


def _difference_result(name: str, t: float, check: DifferenceCheck) -> CheckResult:
    return CheckResult(
        name=name, value=check.relative, target=IDENTITY_TOLERANCE, passed=check.passed,
        detail=f"t={t:g} order={check.order:.3f} extrapolated={check.extrapolated:.3e}",
    )


def potential_identity_residual(system: JetSystem, jp: JetParams, index: int, points, t: float) -> float:
    """sigma^{-1} grad-perp Psi - (W + W^c) 的逐点相对残差"""
    vals = evaluate_jet(system, jp, index, points, t)
    gp = vals.grad_psi
    perp = np.stack([gp[..., 1], -gp[..., 0]], axis=-1) / jp.sigma
    target = vals.W + vals.Wc
    scale = float(np.max(np.abs(target))) or 1.0
    return float(np.max(np.abs(perp - target))) / scale


def spectral_potential_defect(system: JetSystem, jp: JetParams, index: int, t: float, grid: Grid) -> float:
    """谱导数版本的势恒等式残差，仅作分辨率指标"""
    fields = jet_fields(system, jp, index, t, grid)
    residual = perp_gradient(fields["psi"]) / jp.sigma - (fields["W"] + fields["Wc"])
    scale = norm(fields["W"] + fields["Wc"], "Linfty") or 1.0
    return norm(residual, "Linfty") / scale


def jet_identity_checks(system: JetSystem, jp: JetParams, index: int, t_sweep: Sequence[float],
                        grid: Optional[Grid] = None, h: float = 1e-4, n_probe: int = 16) -> JetIdentityReport:
    """
    逐时刻检查：
    - sigma^{-1} grad-perp Psi = W + W^c（逐点）
    - div(W (x) W) = (xi . grad |W|^2) xi（逐点）
    - d_t |W|^2 xi = sigma^{-1} theta g div(W (x) W)（中心差分）
    - d_t Psi = sigma^{-1} theta g (xi . grad) Psi（中心差分）
    - d_t (h / sigma) = g^2 - 1（样条导数与中心差分）
    """
    if grid is not None:
        check_resolution(jp, grid, system.mu0)
    report = JetIdentityReport(index=index, params=jp.to_dict())
    xi = system.directions.vectors[index]
    step = temporal_step(system, jp, h)
    freq = _temporal_frequency(system, jp)

    for t in t_sweep:
        t = float(t)
        pts = support_probe_points(system, jp, index, t, n_probe)
        pot = potential_identity_residual(system, jp, index, pts, t)
        report.checks.append(CheckResult(name="potential_identity", value=pot, target=IDENTITY_TOLERANCE,
                                         passed=pot <= IDENTITY_TOLERANCE, detail=f"t={t:g}"))
        flux = stationary_flux_identity(system, jp, index, pts, t)
        report.checks.append(CheckResult(name="flux_identity", value=flux, target=IDENTITY_TOLERANCE,
                                         passed=flux <= IDENTITY_TOLERANCE, detail=f"t={t:g}"))

        osc = temporal_oscillators(system, jp, index, t)
        vals = evaluate_jet(system, jp, index, pts, t)
        directional = vals.grad_w @ xi
        div_ww = (2.0 * vals.w * directional)[..., None] * xi
        energy_rhs = jp.theta / jp.sigma * float(osc.g) * div_ww

        def energy(s: float) -> np.ndarray:
            return (evaluate_jet(system, jp, index, pts, s).w ** 2)[..., None] * xi

        energy_scale = float(np.max(vals.w ** 2)) * freq
        report.checks.append(_difference_result(
            "energy_transport", t, centred_difference_check(energy, energy_rhs, t, step, energy_scale)))

        def potential(s: float) -> np.ndarray:
            return evaluate_jet(system, jp, index, pts, s).psi

        potential_rhs = jp.theta / jp.sigma * float(osc.g) * vals.xi_grad_psi
        potential_scale = float(np.max(np.abs(vals.psi))) * freq
        report.checks.append(_difference_result(
            "potential_transport", t, centred_difference_check(potential, potential_rhs, t, step, potential_scale)))

        report.checks.append(oscillator_identity_check(system, jp, index, t))

        if grid is not None:
            report.spectral_defects.append(spectral_potential_defect(system, jp, index, t, grid))

    failed = [c for c in report.checks if not c.passed]
    if failed:
        log_manager.log_event(LogLevel.WARNING, "jet_identity", f"方向 {index} 有 {len(failed)} 项恒等式未通过",
                              component="jets", value=failed[0].value)
    else:
        log_manager.log_event(LogLevel.DEBUG, "jet_identity", f"方向 {index} 恒等式全部通过", component="jets")
    return report


def oscillator_identity_check(system: JetSystem, jp: JetParams, index: int, t: float) -> CheckResult:
    """d_t(h/sigma) 的样条导数与 g^2 - 1 的差；d_t 取自 G^2 的原函数"""
    eta = float(jp.eta)
    b = jp.sigma * t - system.offset(index)
    tau = eta * (b - np.floor(b))
    derivative = eta * float(system.temporal_energy(np.clip(tau, 0.0, 1.0), 1)) * float(tau < 1.0) - 1.0
    g = float(temporal_oscillators(system, jp, index, t).g)
    residual = abs(derivative - (g ** 2 - 1.0)) / (1.0 + g ** 2)
    return CheckResult(name="oscillator_identity", value=residual, target=IDENTITY_TOLERANCE,
                       passed=residual <= IDENTITY_TOLERANCE, detail=f"t={t:g}")


# ==================== 标度表 ====================

@dataclass
class ScalingRow:
    quantity: str
    order: int
    p: float
    sigma: int
    nu: int
    mu: int
    measured: float
    predicted: float

    @property
    def ratio(self) -> float:
        return self.measured / self.predicted if self.predicted > 0 else float("inf")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["ratio"] = self.ratio
        return data


def _quadrature_norm(values: np.ndarray, weights: np.ndarray, p: float) -> float:
    mag = np.abs(values) if values.ndim == weights.ndim else np.linalg.norm(values, axis=-1)
    if np.isinf(p):
        return float(np.max(mag))
    return float(np.sum(weights * mag ** p) ** (1.0 / p))


def scaling_table(system: JetSystem, jp: JetParams, index: int, factors: Sequence[int] = (1, 2, 4),
                  ps: Sequence[float] = (1.0, 2.0, np.inf), n: int = 200) -> list[ScalingRow]:
    """
    对 mu -> factor * mu 测量
    ||grad^N W||, nu^{-1} mu ||grad^N W^c||, mu ||grad^N Psi|| 相对 (sigma mu)^N (nu mu)^{1/2-1/p}，
    以及 ||(xi . grad) Psi|| 相对 mu^{-1} sigma nu (nu mu)^{1/2-1/p}
    """
    rows = []
    for factor in factors:
        params = replace(jp, mu=jp.mu * int(factor))
        vals, w2 = _support_quadrature(system, params, index, n)
        s, nu, mu = params.sigma, params.nu, params.mu
        quantities = {
            ("W", 0): (vals.w, 1.0),
            ("W", 1): (vals.grad_w, 1.0),
            ("Wc", 0): (vals.wc, mu / nu),
            ("Wc", 1): (vals.grad_wc, mu / nu),
            ("psi", 0): (vals.psi, float(mu)),
            ("psi", 1): (vals.grad_psi, float(mu)),
        }
        for p in ps:
            base = (nu * mu) ** (0.5 - (0.0 if np.isinf(p) else 1.0 / p))
            for (name, order), (values, weight) in quantities.items():
                rows.append(ScalingRow(name, order, float(p), s, nu, mu,
                                       weight * _quadrature_norm(values, w2, p), (s * mu) ** order * base))
            rows.append(ScalingRow("xi_grad_psi", 0, float(p), s, nu, mu,
                                   _quadrature_norm(vals.xi_grad_psi, w2, p), s * nu / mu * base))
    return rows


def scaling_spread(rows: Sequence[ScalingRow]) -> dict:
    """每个 (量, N, p) 在参数倍增下比值的 max/min"""
    groups: dict = {}
    for row in rows:
        groups.setdefault(f"{row.quantity}|N={row.order}|p={row.p:g}", []).append(row.ratio)
    return {key: max(v) / min(v) for key, v in groups.items()}


# ==================== 振子范数 ====================

@dataclass
class OscillatorNorm:
    order: int
    p: float
    measured: float
    predicted: float

    @property
    def ratio(self) -> float:
        return self.measured / self.predicted

    def to_dict(self) -> dict:
        data = asdict(self)
        data["ratio"] = self.ratio
        return data


def _oscillator_grid(jp: JetParams, start: int, stop: int, per_period: int) -> np.ndarray:
    """[start/sigma, stop/sigma] 上的均匀网格，周期边界落在节点上"""
    count = (stop - start) * per_period
    return np.linspace(start / jp.sigma, stop / jp.sigma, count + 1)


def _sobolev_power(values: Sequence[np.ndarray], t: np.ndarray, p: float) -> float:
    if np.isinf(p):
        return max(float(np.max(np.abs(v))) for v in values)
    return float(sum(integrate.trapezoid(np.abs(v) ** p, x=t) for v in values))


def oscillator_sobolev_norm(system: JetSystem, jp: JetParams, index: int, order: int, p: float,
                            window: Optional[tuple[int, int]] = None, per_period: Optional[int] = None) -> float:
    """
    ||g||_{W^{n,p}} 在 [n1/sigma, n2/sigma] 上（缺省为 [0, 1]），
    定义为 (sum_{k<=n} ||g^(k)||_p^p)^{1/p}，p = inf 时取各阶上确界的最大值
    """
    n1, n2 = window if window is not None else (0, jp.sigma)
    m = per_period or max(400 * jp.eta, 2000)
    t = _oscillator_grid(jp, n1, n2, m)
    osc = temporal_oscillators(system, jp, index, t)
    values = [osc.g, osc.dg][: order + 1]
    power = _sobolev_power(values, t, p)
    return power if np.isinf(p) else power ** (1.0 / p)


def oscillator_norms(system: JetSystem, jp: JetParams, index: int, orders: Sequence[int] = (0, 1),
                     ps: Sequence[float] = (1.0, 2.0, np.inf)) -> list[OscillatorNorm]:
    """测量值对 (sigma eta)^n eta^{1/2-1/p}"""
    out = []
    for order in orders:
        for p in ps:
            exponent = 0.5 - (0.0 if np.isinf(p) else 1.0 / p)
            predicted = (jp.sigma * jp.eta) ** order * jp.eta ** exponent
            out.append(OscillatorNorm(order, float(p),
                                      oscillator_sobolev_norm(system, jp, index, order, p), predicted))
    return out


def periodic_window_residual(system: JetSystem, jp: JetParams, index: int, order: int, p: float,
                             window: tuple[int, int]) -> float:
    """|| g ||^p_{W^{n,p}[n1/sigma, n2/sigma]} 与 (n2-n1)/sigma ||g||^p_{W^{n,p}[0,1]} 的相对差"""
    if np.isinf(p):
        raise ValueError("窗口恒等式只对有限 p 成立")
    n1, n2 = window
    part = oscillator_sobolev_norm(system, jp, index, order, p, window) ** p
    whole = oscillator_sobolev_norm(system, jp, index, order, p) ** p
    expected = (n2 - n1) / jp.sigma * whole
    return abs(part - expected) / expected


# ==================== 不相交性 ====================

@dataclass
class DisjointnessReport:
    max_active: int
    min_tube_gap: float
    anchor_separation: float
    balls_inside: bool

    @property
    def passed(self) -> bool:
        return self.max_active <= 1 and self.min_tube_gap > 0.0 and self.balls_inside

    def to_dict(self) -> dict:
        data = asdict(self)
        data["passed"] = self.passed
        return data


def disjointness_report(system: JetSystem, jp: JetParams, n_times: int = 20001) -> DisjointnessReport:
    """时间上至多一个 g 非零；空间上各方向 W~ 的支撑两两不交"""
    ds = system.directions
    t = np.linspace(0.0, 1.0, max(n_times, 40 * jp.sigma * jp.eta + 1))
    active = sum((np.abs(temporal_oscillators(system, jp, i, t).g) > 0.0).astype(int) for i in range(len(ds)))
    hx, hy = _support_halfwidths(system, jp)
    radius = float(np.hypot(hx, hy))
    p = ds.anchor_points
    gaps = [
        float(np.linalg.norm(p[i] - p[j])) - 2.0 * radius
        for i in range(len(ds)) for j in range(i + 1, len(ds))
    ]
    return DisjointnessReport(
        max_active=int(np.max(active)),
        min_tube_gap=min(gaps),
        anchor_separation=ds.anchor_separation(),
        balls_inside=ds.balls_inside(),
    )
