"""
热半群、Duhamel 积分与 Schauder 估计监控

时间积分采用逐模指数积分 (ETD)，外力在每个时间步内取左端点值：
    u_{m+1} = e^{-lambda dt} u_m + E f_m,  E = (1 - e^{-lambda dt}) / lambda,  lambda = 4 pi^2 |k|^2
零模时 E = dt。线性部分精确，无稳定性限制。
"""

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .harmonic import BesovIndex, BoundReport, besov_norm
from .logger import LogLevel, log_manager
from .torus_field import (
    TWO_PI,
    Grid,
    SpectralField,
    TimeSeriesField,
    VectorField,
    div,
    helmholtz_project,
    laplacian,
    lp_from_magnitude,
    norm,
    outer,
    pointwise_magnitude,
)


def decay_rate(grid: Grid) -> np.ndarray:
    """lambda(k) = 4 pi^2 |k|^2"""
    return TWO_PI ** 2 * grid.k_sq


def heat_semigroup(f: SpectralField, t: float) -> SpectralField:
    """P_t f = e^{t Delta} f"""
    if t < 0:
        raise ValueError(f"t 必须非负，当前值: {t}")
    if t == 0:
        return f
    return f.apply_symbol(np.exp(-decay_rate(f.grid) * t))


def etd_weights(grid: Grid, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """单步 ETD 系数 (e^{-lambda dt}, E)"""
    lam = decay_rate(grid)
    damp = np.exp(-lam * dt)
    safe = np.where(lam > 0, lam, 1.0)
    gain = np.where(lam > 0, -np.expm1(-lam * dt) / safe, dt)
    return damp, gain


def duhamel_trajectory(f: TimeSeriesField, t0: float = 0.0) -> TimeSeriesField:
    """
    I f 在 t >= t0 的全部网格时刻上的值，I f(t0) = 0。

    Args:
        f: 等步长外力轨迹，在每步内按左端点取常值
        t0: 积分起点（必须在时间网格上）
    """
    start = f.index_of(t0)
    times = f.times[start:]
    out = np.zeros((times.size,) + f.coeffs.shape[1:], dtype=np.complex128)
    if times.size > 1:
        damp, gain = etd_weights(f.grid, f.dt)
        for m in range(1, times.size):
            out[m] = damp * out[m - 1] + gain * f.coeffs[start + m - 1]
    return TimeSeriesField(times, f.cls, f.grid, out)


def duhamel(f: TimeSeriesField, t: float) -> SpectralField:
    """I f(t) = int_0^t P_{t-s} f(s) ds"""
    if t < 0 or t > f.times[-1] + 1e-12:
        raise ValueError(f"t={t} 超出外力的时间范围 [0, {f.times[-1]}]")
    traj = duhamel_trajectory(f, 0.0)
    return traj.at(t)


def duhamel_residual(u: TimeSeriesField, f: TimeSeriesField) -> float:
    """sup_m ||(u_{m+1} - u_m)/dt - Delta u_m - f_m||_{L^2}，一阶精度"""
    if len(u) < 2:
        return 0.0
    offset = f.index_of(float(u.times[0]))
    worst = 0.0
    for m in range(len(u) - 1):
        um = u[m]
        dudt = (u[m + 1] - um) / u.dt
        res = dudt - laplacian(um) - f[offset + m]
        worst = max(worst, norm(res, "Lp", p=2.0))
    return worst


# ==================== 估计监控 ====================

@dataclass
class SchauderReport:
    theta: float
    alpha: float
    times: list[float]
    ratios: list[float]
    lp_ratios: list[float]

    @property
    def sup_ratio(self) -> float:
        return float(max(self.ratios)) if self.ratios else 0.0

    @property
    def sup_lp_ratio(self) -> float:
        return float(max(self.lp_ratios)) if self.lp_ratios else 0.0

    def to_dict(self) -> dict:
        data = asdict(self)
        data["sup_ratio"] = self.sup_ratio
        data["sup_lp_ratio"] = self.sup_lp_ratio
        return data


def schauder_monitor(f: SpectralField, theta: float, alpha: float, p: float = np.inf,
                     t_sweep: Sequence[float] = (1e-4, 1e-3, 1e-2, 1e-1), q: float = np.inf,
                     horizon: float = 1.0) -> SchauderReport:
    """
    热半群的光滑化估计：
    t^{theta/2} ||P_t f||_{B^{theta+alpha}_{p,q}} / ||f||_{B^alpha_{p,q}}
    t^{theta/2} ||P_t f||_{L^p} / ||f||_{B^{-theta}_{p,inf}}
    """
    if not (0.0 < theta < 2.0):
        raise ValueError("theta 必须在 (0, 2) 中")
    if any(t <= 0 or t > horizon for t in t_sweep):
        raise ValueError(f"t_sweep 必须在 (0, {horizon}] 中")
    base = besov_norm(f, BesovIndex(alpha, p, q))
    base_neg = besov_norm(f, BesovIndex(-theta, p, np.inf))
    ratios, lp_ratios = [], []
    for t in t_sweep:
        pt = heat_semigroup(f, t)
        weight = (t / horizon) ** (theta / 2.0)
        ratios.append(weight * besov_norm(pt, BesovIndex(theta + alpha, p, q)) / base if base > 0 else 0.0)
        lp = lp_from_magnitude(pointwise_magnitude(pt), p)
        lp_ratios.append(weight * lp / base_neg if base_neg > 0 else 0.0)
    return SchauderReport(theta=theta, alpha=alpha, times=list(t_sweep), ratios=ratios, lp_ratios=lp_ratios)


def _sup_besov(series: TimeSeriesField, idx: BesovIndex) -> float:
    return max(besov_norm(f, idx) for f in series)


def _l2_hs(series: TimeSeriesField, s: float) -> float:
    return float(np.sqrt(series.dt * sum(norm(f, "Hs", s=s) ** 2 for f in series)))


def holder_time_norm(series: TimeSeriesField, exponent: float, p: float = 2.0) -> float:
    """C^{exponent}_T L^p：时间 Hölder 半范数加上确界"""
    samples = [lp_from_magnitude(pointwise_magnitude(f), p) for f in series]
    semi = 0.0
    n = len(series)
    for i in range(n):
        for j in range(i + 1, n):
            d = lp_from_magnitude(pointwise_magnitude(series[j] - series[i]), p)
            semi = max(semi, d / (series.times[j] - series.times[i]) ** exponent)
    return semi + max(samples)


def duhamel_monitor(f: TimeSeriesField, alpha: float, beta: float = 0.0, p: float = 2.0) -> list[BoundReport]:
    """
    Duhamel 积分的三项估计（常数只报告）：
    ||I f||_{C_T B^alpha_{p,inf}} <~ T ||f||_{C_T B^{alpha-2}_{p,inf}}
    ||I f||_{C^{alpha/2}_T L^p} <~ T ||f||_{C_T B^{alpha-2}_{p,inf}}
    ||I f||_{L^2_T H^beta} <~ ||f||_{L^2_T H^{beta-2}}
    """
    if not (0.0 < alpha < 2.0):
        raise ValueError("alpha 必须在 (0, 2) 中")
    traj = duhamel_trajectory(f, float(f.times[0]))
    span = float(f.times[-1] - f.times[0])
    horizon = max(1.0, span)
    rhs = horizon * _sup_besov(f, BesovIndex(alpha - 2.0, p, np.inf))
    return [
        BoundReport("duhamel_besov", _sup_besov(traj, BesovIndex(alpha, p, np.inf)), rhs),
        BoundReport("duhamel_holder", holder_time_norm(traj, alpha / 2.0, p), rhs),
        BoundReport("duhamel_l2", _l2_hs(traj, beta), _l2_hs(f, beta - 2.0)),
    ]


# ==================== 压缩映射 ====================

def _contraction_forcing(v1: VectorField, v2: VectorField, z: VectorField) -> VectorField:
    w = v1 - v2
    flux = outer(v1 + z, w) + outer(w, v2 + z)  # type: ignore[arg-type]
    return -helmholtz_project(div(flux))  # type: ignore[arg-type, return-value]


def contraction_factor(v1: TimeSeriesField, v2: TimeSeriesField, z: TimeSeriesField, t_star: float,
                       zeta: float, kappa: float) -> float:
    """
    w = v1 - v2 上的映射 w -> -I[P_H div((v1+z) (x) w + w (x) (v2+z))]，
    返回 ||Phi(w)||_{L^2 H^zeta} / ||w||_{L^2 H^zeta}（[0, T*] 上）。w = 0 时返回 0。
    """
    if not (0.0 < 2 * kappa + zeta < 1.0):
        raise ValueError(f"需要 0 < 2 kappa + zeta < 1，当前值: {2 * kappa + zeta}")
    r1, r2, rz = (s.restrict(0.0, t_star) for s in (v1, v2, z))
    w = r1 - r2
    w_norm = _l2_hs(w, zeta)
    if w_norm == 0.0:
        return 0.0
    forcing = TimeSeriesField.from_fields(
        r1.times, [_contraction_forcing(a, b, c) for a, b, c in zip(r1, r2, rz)]  # type: ignore[arg-type]
    )
    image = duhamel_trajectory(forcing, 0.0)
    return _l2_hs(image, zeta) / w_norm


@dataclass
class ContractionPoint:
    t_star: float
    factor: float
    theory: float

    def to_dict(self) -> dict:
        return asdict(self)


def contraction_sweep(v1: TimeSeriesField, v2: TimeSeriesField, z: TimeSeriesField, t_values: Sequence[float],
                      zeta: float, kappa: float) -> list[ContractionPoint]:
    """逐个 T* 计算压缩因子，并给出理论标度 T*^{(1-2 kappa-zeta)/2}"""
    out = []
    for t_star in t_values:
        factor = contraction_factor(v1, v2, z, t_star, zeta, kappa)
        out.append(ContractionPoint(t_star=float(t_star), factor=factor,
                                    theory=float(t_star) ** ((1.0 - 2 * kappa - zeta) / 2.0)))
        log_manager.log_event(LogLevel.DEBUG, "contraction", f"T*={t_star} factor={factor:.4e}",
                              component="heat", value=factor)
    return out


def initial_heat_flow(u0: SpectralField, times: Sequence[float]) -> TimeSeriesField:
    """z_in(t) = e^{|t| Delta} u0，负时间按 |t| 延拓"""
    return TimeSeriesField.from_fields(times, [heat_semigroup(u0, abs(float(t))) for t in times])


def sample_times(t0: float, t1: float, dt: float, anchor: Optional[float] = 0.0) -> np.ndarray:
    """[t0, t1] 上步长 dt 的均匀网格，anchor 恰好落在网格上"""
    if dt <= 0:
        raise ValueError("dt 必须为正")
    a = 0.0 if anchor is None else anchor
    i0 = int(np.ceil((t0 - a) / dt - 1e-9))
    i1 = int(np.floor((t1 - a) / dt + 1e-9))
    return a + dt * np.arange(i0, i1 + 1, dtype=np.float64)
