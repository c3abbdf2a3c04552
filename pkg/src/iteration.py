"""
凸积分迭代驱动

一层的流程：
    磨光 (v_l, R_l) -> 振幅 a_xi -> 扰动 w_{q+1} -> 求解 v1_{q+1} -> 组装 R_{q+1} -> 诊断
所有量放在同一条从 t = -1 开始的等步长时间网格上；t < 0 时 v1 = v2 = 0，
应力为 z_in (x)o z_in。时间方向只使用当前及更早的值，因此整条链是因果的。
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .antidiv import NotDivergenceFreeError
from .constants import AMPLITUDE_TOLERANCE, DIVERGENCE_TOLERANCE, PICARD_MAX_ITERATIONS, PICARD_TOLERANCE
from .diagnostics import energy_increment, level_checks, level_ledger
from .errors import NumericalError
from .harmonic import Side, fit_loglog_slope, localize
from .heat import etd_weights, initial_heat_flow, sample_times
from .jets import (
    DirectionSet,
    JetParams,
    JetSystem,
    bump,
    check_resolution,
    default_jet_system,
    jet_samples,
    temporal_oscillators,
)
from .logger import LogLevel, log_manager
from .noise import NoisePath, PathTooShortError, mollifier_symbol, mollify_noise, wick_square
from .params import IterationParams
from .schemas import CheckResult, LedgerRow
from .stress import StressResult, assemble_stress, master_residual, max_residual, quadratic_flux, v1_flux
from .torus_field import (
    Grid,
    ScalarField,
    SymTensorField,
    TimeSeriesField,
    VectorField,
    div,
    helmholtz_project,
    norm,
    perp_gradient,
    random_band_limited,
    remove_mean,
    to_spectral,
    traceless,
    traceless_outer,
)

# 初始时间网格的左端点
TIME_ORIGIN: float = -1.0


# ==================== 异常 ====================

class FixedPointError(NumericalError):
    """v1 的 Picard 迭代在给定次数内未收敛"""

    def __init__(self, message: str, ratio: float):
        super().__init__(message, component="iteration")
        self.ratio = ratio


class DomainGuardError(NumericalError):
    """Id - R_l / rho 超出几何引理的定义域"""

    def __init__(self, message: str):
        super().__init__(message, component="iteration")


class MollificationError(NumericalError):
    """时间步长不足以分辨磨光尺度"""

    def __init__(self, message: str):
        super().__init__(message, component="iteration")


# ==================== 求解器设置 ====================

@dataclass(frozen=True)
class SolverSettings:
    dt: float = 0.01
    horizon: float = 1.0
    picard_tolerance: float = PICARD_TOLERANCE
    picard_max_iterations: int = PICARD_MAX_ITERATIONS
    picard_scheme: str = "gauss-seidel"
    identity_tolerance: float = 1e-8
    divergence_tolerance: float = 1e-10

    def __post_init__(self):
        if self.dt <= 0 or self.horizon <= 0:
            raise ValueError(f"dt 与 horizon 必须为正，当前值: dt={self.dt}, horizon={self.horizon}")
        if self.picard_scheme not in ("gauss-seidel", "jacobi"):
            raise ValueError(f"未知的 Picard 扫描方式: {self.picard_scheme}")

    @classmethod
    def from_config(cls, iteration: Any, assertions: Any) -> "SolverSettings":
        return cls(
            dt=iteration.dt,
            horizon=iteration.horizon,
            picard_tolerance=iteration.picard_tolerance,
            picard_max_iterations=iteration.picard_max_iterations,
            picard_scheme=iteration.picard_scheme,
            identity_tolerance=assertions.identity_tolerance,
            divergence_tolerance=assertions.divergence_tolerance,
        )


# ==================== 噪声项 ====================

@dataclass
class NoiseTerms:
    """迭代网格上的 Delta_{<=R} z、Delta_{>R} z 与 z^{:2:}，t < 0 时为 0"""
    z_low: TimeSeriesField
    z_high: TimeSeriesField
    wick: TimeSeriesField


def noise_terms(path: NoisePath, times: np.ndarray, cutoff_R: int) -> NoiseTerms:
    """
    把噪声路径搬到迭代网格上

    Raises:
        ValueError: 步长不一致
        PathTooShortError: 路径没有覆盖网格的右端
    """
    grid = path.grid
    dt = float(times[1] - times[0]) if len(times) > 1 else path.z.dt
    if len(path.times) > 1 and abs(path.z.dt - dt) > 1e-9 * dt:
        raise ValueError(f"噪声路径步长 {path.z.dt} 与迭代步长 {dt} 不一致")
    if path.times[-1] < times[-1] - 1e-9:
        raise PathTooShortError(f"噪声路径只覆盖到 t={path.times[-1]:.4g}，迭代需要 t={times[-1]:.4g}")
    wick = path.wick if path.wick is not None else wick_square(path.z_eps, path.renorm)

    nt = len(times)
    low = np.zeros((nt, 2, grid.n, grid.n), dtype=np.complex128)
    high = np.zeros_like(low)
    sq = np.zeros((nt, 3, grid.n, grid.n), dtype=np.complex128)
    for n, t in enumerate(times):
        if t < 0:
            continue
        j = path.z_eps.index_of(float(t))
        z = path.z_eps[j]
        zl = localize(z, cutoff_R, Side.LOW)
        low[n] = zl.coeffs
        high[n] = z.coeffs - zl.coeffs
        sq[n] = wick.coeffs[j]
    return NoiseTerms(
        z_low=TimeSeriesField(times, VectorField, grid, low),
        z_high=TimeSeriesField(times, VectorField, grid, high),
        wick=TimeSeriesField(times, SymTensorField, grid, sq),
    )


# ==================== v1 的不动点 ====================

@dataclass
class PicardLog:
    scheme: str
    increments: list[float] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.increments)

    @property
    def ratios(self) -> list[float]:
        inc = self.increments
        return [inc[i + 1] / inc[i] if inc[i] > 0 else 0.0 for i in range(len(inc) - 1)]

    @property
    def contraction(self) -> float:
        r = self.ratios
        return max(r) if r else 0.0

    def to_dict(self) -> dict:
        data = asdict(self)
        data["iterations"] = self.iterations
        data["contraction"] = self.contraction
        return data


def solve_v1(params: IterationParams, v2: TimeSeriesField, z_in: TimeSeriesField, noise: NoiseTerms, q: int,
             settings: SolverSettings) -> tuple[TimeSeriesField, PicardLog]:
    """
    v1 = -I[P_H div(z^{:2:} + V < z_loc + z_loc > V)]，V = v1 + v2 + z_in，z_loc = Delta_{<=f(q)} Delta_{>R} z。

    外力在每步内取左端点值，ETD 推进。gauss-seidel 在一次扫描内使用刚算出的值，
    第二次扫描逐位复现，因此两次即收敛；jacobi 是整条轨迹的 Picard 迭代。

    Raises:
        FixedPointError: 超过最大次数仍未收敛，携带测得的压缩比
    """
    started = time.perf_counter()
    times = v2.times
    grid = v2.grid
    nt = len(times)
    start = v2.index_of(0.0)
    J = params.f(q)

    z_loc = [localize(noise.z_high[n], J, Side.LOW) for n in range(nt)]
    idle = [not np.any(z_loc[n].coeffs) and not np.any(noise.wick.coeffs[n]) for n in range(nt)]
    damp, gain = etd_weights(grid, v2.dt) if nt > 1 else (None, None)

    def forcing(m: int, v1_m: np.ndarray) -> np.ndarray:
        if idle[m]:
            return np.zeros((2, grid.n, grid.n), dtype=np.complex128)
        V = VectorField(grid, v1_m, enforce_reality=False) + v2[m] + z_in[m]
        flux = v1_flux(V, z_loc[m], noise.wick[m])  # type: ignore[arg-type]
        return -helmholtz_project(div(flux)).coeffs  # type: ignore[arg-type]

    log = PicardLog(scheme=settings.picard_scheme)
    current = np.zeros((nt, 2, grid.n, grid.n), dtype=np.complex128)
    gauss_seidel = settings.picard_scheme == "gauss-seidel"
    for _ in range(settings.picard_max_iterations):
        nxt = np.zeros_like(current)
        src = nxt if gauss_seidel else current
        for m in range(start + 1, nt):
            nxt[m] = damp * nxt[m - 1] + gain * forcing(m - 1, src[m - 1])
        increment = float(np.max(np.sqrt(np.sum(np.abs(nxt - current) ** 2, axis=(1, 2, 3)))))
        log.increments.append(increment)
        current = nxt
        if increment < settings.picard_tolerance:
            break
    else:
        log_manager.log_event(
            LogLevel.ERROR, "picard",
            f"v1 不动点在 {log.iterations} 次内未收敛，末次增量 {log.increments[-1]:.3e}",
            component="iteration", level_q=q, value=log.contraction,
        )
        raise FixedPointError(
            f"v1 不动点在 {log.iterations} 次内未收敛（压缩比 {log.contraction:.3f}）", log.contraction)

    log_manager.log_event(
        LogLevel.INFO, "picard",
        f"{log.scheme} 扫描 {log.iterations} 次收敛，压缩比 {log.contraction:.3e}",
        component="iteration", level_q=q, value=log.contraction,
        duration_ms=(time.perf_counter() - started) * 1000.0,
    )
    return TimeSeriesField(times, VectorField, grid, current), log


# ==================== 磨光 ====================

def temporal_kernel(ell: float, dt: float) -> np.ndarray:
    """
    单侧时间核的权重 w_m（m = 1..count），支撑在 (0, ell) 上且不含当前时刻

    Raises:
        MollificationError: dt 太粗，(0, ell) 内没有网格点
    """
    count = int(np.ceil(ell / dt - 1e-9)) - 1
    if ell <= dt or count < 1:
        raise MollificationError(f"时间步长 dt={dt:g} 无法分辨磨光尺度 ell={ell:g}")
    s = np.arange(1, count + 1) * dt / ell
    w = bump(2.0 * s - 1.0)
    return w / np.sum(w)


def mollify_series(series: TimeSeriesField, ell: float) -> TimeSeriesField:
    """(f *_x phi_l) *_t varphi_l；网格起点之前的值取第一个采样"""
    w = temporal_kernel(ell, series.dt)
    nt = len(series)
    out = np.zeros_like(series.coeffs)
    idx = np.arange(nt)
    for m, weight in enumerate(w, start=1):
        out += weight * series.coeffs[np.maximum(idx - m, 0)]
    out *= mollifier_symbol(series.grid, ell)
    return series.with_coeffs(out)


def centred_rate(series: TimeSeriesField) -> TimeSeriesField:
    """内部中心差分，两端单侧差分"""
    if len(series) < 2:
        return series.with_coeffs(np.zeros_like(series.coeffs))
    return series.with_coeffs(np.gradient(series.coeffs, series.dt, axis=0))


@dataclass
class Mollified:
    velocity: TimeSeriesField
    stress: TimeSeriesField
    stress_rate: TimeSeriesField
    commutator: TimeSeriesField
    ell: float


def _flux_series(state: "IterationState") -> TimeSeriesField:
    fields = []
    for n in range(len(state.times)):
        V = state.v1[n] + state.v2[n] + state.z_in[n]
        fields.append(quadratic_flux(V, state.noise.z_low[n], state.noise.z_high[n]))  # type: ignore[arg-type]
    return TimeSeriesField.from_fields(state.times, fields)


def mollify_step(state: "IterationState", ell: float) -> Mollified:
    """v_l、R_l、d_t R_l 与交换子 N(V_q) - N(V_q)_l 的无迹部分"""
    flux = _flux_series(state)
    gap = flux - mollify_series(flux, ell)
    return Mollified(
        velocity=mollify_series(state.v2, ell),
        stress=mollify_series(state.stress, ell),
        stress_rate=mollify_series(centred_rate(state.stress), ell),
        commutator=gap.map(traceless),
        ell=ell,
    )


# ==================== 振幅 ====================

@dataclass
class Amplitudes:
    """rho 形状 (nt, N, N)；a2 与 a2_rate 形状 (6, nt, N, N)"""
    rho: np.ndarray
    rho_rate: np.ndarray
    a2: np.ndarray
    a2_rate: np.ndarray
    reconstruction: float


def _matrix(samples: np.ndarray) -> np.ndarray:
    """(T11, T12, T22) 采样 -> (..., 2, 2)"""
    s11, s12, s22 = samples[:, 0], samples[:, 1], samples[:, 2]
    return np.stack([np.stack([s11, s12], axis=-1), np.stack([s12, s22], axis=-1)], axis=-2)


def amplitudes(mollified: Mollified, gamma_next: float, directions: DirectionSet,
               mask: Optional[np.ndarray] = None) -> Amplitudes:
    """
    rho = 2 sqrt(l^2 + |R_l|^2) + gamma_{q+1}，a_xi^2 = rho gamma_xi^2(Id - R_l / rho)

    Raises:
        DomainGuardError: 某处权重非正或 |R_l / rho|_F > 1/2
    """
    if gamma_next <= 0:
        raise ValueError(f"gamma_{{q+1}} 必须为正，当前值: {gamma_next}")
    ell = mollified.ell
    s = mollified.stress.samples()
    d = mollified.stress_rate.samples()
    fro2 = s[:, 0] ** 2 + 2.0 * s[:, 1] ** 2 + s[:, 2] ** 2
    root = np.sqrt(ell ** 2 + fro2)
    rho = 2.0 * root + gamma_next
    rho_rate = 2.0 * (s[:, 0] * d[:, 0] + 2.0 * s[:, 1] * d[:, 1] + s[:, 2] * d[:, 2]) / root

    R = _matrix(s)
    Rdot = _matrix(d)
    r, rr = rho[..., None, None], rho_rate[..., None, None]
    M = np.eye(2) - R / r
    Mdot = -(Rdot * r - R * rr) / r ** 2
    weights = directions.weights(M)

    sel = np.ones(len(rho), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    ratio = np.sqrt(fro2) / rho
    if np.any(weights[:, sel] <= 0.0) or np.any(ratio[sel] > 0.5):
        worst = float(np.min(weights[:, sel])) if sel.any() else 0.0
        raise DomainGuardError(f"Id - R_l/rho 超出定义域：最小权重 {worst:.3e}，"
                               f"最大 |R_l/rho| = {float(np.max(ratio[sel])):.3f}")

    a2 = rho[None] * weights
    a2_rate = rho_rate[None] * weights + rho[None] * directions.weight_derivatives(M, Mdot)
    a2[:, ~sel] = 0.0
    a2_rate[:, ~sel] = 0.0

    target = rho[..., None, None] * np.eye(2) - R
    diff = np.abs(directions.reconstruct(a2) - target)[sel]
    residual = float(np.max(diff)) / float(np.max(rho)) if diff.size else 0.0
    return Amplitudes(rho=rho, rho_rate=rho_rate, a2=a2, a2_rate=a2_rate, reconstruction=residual)


# ==================== 扰动 ====================

def cutoff(t, sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """chi 与 chi'：t <= sigma 时为 0，t >= 2 sigma 时为 1，|chi'| <= 15/(8 sigma)"""
    s = np.clip((np.asarray(t, dtype=np.float64) - sigma) / sigma, 0.0, 1.0)
    chi = s ** 3 * (10.0 - 15.0 * s + 6.0 * s ** 2)
    rate = 30.0 * s ** 2 * (1.0 - s) ** 2 / sigma
    return chi, rate


@dataclass
class ActiveJet:
    """一个启用方向在某一时刻的振荡应力原料"""
    index: int
    g: float
    dg: float
    a2: ScalarField
    a2_rate: ScalarField
    ww: SymTensorField
    w2xi: VectorField


@dataclass
class OscillationTerms:
    """
    一个时刻的振荡应力原料。time_part、transport、amplitude_rate 为
    sum a^2 (g^2 - 1) xi (x) xi、sum 2 a^2 g^2 w (xi . grad w) xi 与 sum d_t(a^2 g) w^2 xi 的采样，
    合起来给出 w_t 的解析时间导数
    """
    jets: list[ActiveJet]
    h_rate: SymTensorField
    leftover: SymTensorField
    principal: VectorField
    time_part: SymTensorField
    transport: VectorField
    amplitude_rate: VectorField


@dataclass
class Perturbation:
    """principal/corrector/temporal 未乘 chi；total = chi (w_p + w_c) + chi^2 (w_o + w_a)"""
    chi: np.ndarray
    chi_rate: np.ndarray
    principal: TimeSeriesField
    corrector: TimeSeriesField
    temporal: TimeSeriesField
    potential_rate: TimeSeriesField
    total: TimeSeriesField
    velocity: TimeSeriesField
    terms: list[Optional[OscillationTerms]]
    oscillation_identity: float = 0.0
    corrector_identity: float = 0.0
    corrector_defect: float = 0.0


def _sym_samples(m: np.ndarray) -> np.ndarray:
    """(N, N, 2, 2) -> (3, N, N)"""
    return np.stack([m[..., 0, 0], 0.5 * (m[..., 0, 1] + m[..., 1, 0]), m[..., 1, 1]])


def _vec_samples(v: np.ndarray) -> np.ndarray:
    return np.moveaxis(v, -1, 0)


def perturbation(mollified: Mollified, amp: Amplitudes, jp: JetParams, params: IterationParams, q: int,
                 system: JetSystem) -> Perturbation:
    """
    逐时刻构造 w_{q+1}。

    启用方向贡献 w_p = sum a g W、势函数 sum a g Psi 以及振荡项；
    未启用方向的 a^2 xi (x) xi 记入 leftover，由应力吸收。
    """
    times = mollified.velocity.times
    grid = mollified.velocity.grid
    nt, n = len(times), grid.n
    ds = system.directions
    xis = ds.vectors
    dyads = np.einsum("ni,nj->nij", xis, xis)
    active = set(params.active_set(len(ds)))
    sig, theta = float(jp.sigma), float(jp.theta)
    chi_all, chi_rate_all = cutoff(times, params.sigma_q(q + 1))
    R_samples = mollified.stress.samples()

    vec_shape = (nt, 2, n, n)
    principal = np.zeros(vec_shape, dtype=np.complex128)
    corrector = np.zeros_like(principal)
    temporal = np.zeros_like(principal)
    pot_rate = np.zeros_like(principal)
    total = np.zeros_like(principal)
    terms: list[Optional[OscillationTerms]] = [None] * nt
    osc_res = cor_res = defect = 0.0
    rho_max = float(np.max(amp.rho))

    for k, t in enumerate(times):
        chi, chi_rate = float(chi_all[k]), float(chi_rate_all[k])
        if chi <= 0.0:
            continue
        pot = np.zeros((n, n))
        rate = np.zeros((n, n))
        wp = np.zeros((n, n, 2))
        wc = np.zeros((n, n, 2))
        target = np.zeros((n, n, 2))
        wa_pts = np.zeros((n, n, 2))
        transport = np.zeros((n, n, 2))
        amp_rate = np.zeros((n, n, 2))
        ww_sum = np.zeros((n, n, 2, 2))
        time_part = np.zeros((n, n, 2, 2))
        ha2 = np.zeros((n, n, 2, 2))
        h_rate = np.zeros((n, n, 2, 2))
        leftover = np.zeros((n, n, 2, 2))
        jets: list[ActiveJet] = []

        for i in range(len(ds)):
            a2 = amp.a2[i, k]
            a2_dt = amp.a2_rate[i, k]
            dyad = dyads[i]
            if i not in active:
                leftover += a2[..., None, None] * dyad
                continue
            osc = temporal_oscillators(system, jp, i, float(t))
            g, h, dg = float(osc.g), float(osc.h), float(osc.dg)
            ha2 += (h * a2)[..., None, None] * dyad
            h_rate += (h * a2_dt)[..., None, None] * dyad
            time_part += (a2 * (g ** 2 - 1.0))[..., None, None] * dyad
            if g == 0.0 and dg == 0.0:
                continue

            vals = jet_samples(system, jp, i, float(t), grid)
            a = np.sqrt(a2)
            a_dt = a2_dt / (2.0 * a)
            perp_a = np.moveaxis(perp_gradient(ScalarField.from_samples(grid, a)).samples(), 0, -1)  # type: ignore[arg-type]
            psi = vals.psi
            pot += a * g * psi
            rate += chi_rate * a * g * psi + chi * (a_dt * g * psi + a * dg * psi
                                                     + a * g * (theta / sig) * g * vals.xi_grad_psi)
            wp += (a * g)[..., None] * vals.W
            wc += g * (a[..., None] * vals.Wc + psi[..., None] * perp_a / sig)
            gp = vals.grad_psi
            perp_psi = np.stack([gp[..., 1], -gp[..., 0]], axis=-1)
            target += g * (a[..., None] * perp_psi + psi[..., None] * perp_a) / sig
            w2 = vals.w ** 2
            wa_pts += (a2 * g * w2)[..., None] * xis[i]
            transport += (2.0 * a2 * g ** 2 * vals.w * (vals.grad_w @ xis[i]))[..., None] * xis[i]
            amp_rate += ((a2_dt * g + a2 * dg) * w2)[..., None] * xis[i]
            WW = np.einsum("...i,...j->...ij", vals.W, vals.W) - dyad
            ww_sum += (a2 * g ** 2)[..., None, None] * WW
            jets.append(ActiveJet(
                index=i, g=g, dg=dg,
                a2=ScalarField.from_samples(grid, a2),  # type: ignore[arg-type]
                a2_rate=ScalarField.from_samples(grid, a2_dt),  # type: ignore[arg-type]
                ww=SymTensorField.from_samples(grid, _sym_samples(WW)),  # type: ignore[arg-type]
                w2xi=VectorField.from_samples(grid, _vec_samples(w2[..., None] * xis[i])),  # type: ignore[arg-type]
            ))

        # w_p (x) w_p + R_l = sum a^2 g^2 (W (x) W - xi (x) xi) + sum a^2 (g^2 - 1) xi (x) xi + rho Id - leftover
        R = _matrix(R_samples[k:k + 1])[0]
        lhs = np.einsum("...i,...j->...ij", wp, wp) + R
        rhs = ww_sum + time_part + amp.rho[k][..., None, None] * np.eye(2) - leftover
        osc_res = max(osc_res, float(np.max(np.abs(lhs - rhs))) / rho_max)
        scale = float(np.max(np.abs(target))) or 1.0
        cor_res = max(cor_res, float(np.max(np.abs(wp + wc - target))) / scale)

        wpc = perp_gradient(ScalarField.from_samples(grid, pot)) / sig  # type: ignore[arg-type]
        wp_field = VectorField.from_samples(grid, _vec_samples(wp))
        pointwise = VectorField.from_samples(grid, _vec_samples(wp + wc))
        size = norm(wpc, "Linfty")
        if size > 0:
            defect = max(defect, norm(wpc - pointwise, "Linfty") / size)
        w_o = -helmholtz_project(remove_mean(div(SymTensorField.from_samples(grid, _sym_samples(ha2)))))  # type: ignore
        w_a = -helmholtz_project(remove_mean(VectorField.from_samples(grid, _vec_samples(wa_pts))))  # type: ignore
        w_t = w_o / sig + w_a * (sig / theta)

        principal[k] = wp_field.coeffs
        corrector[k] = (wpc - wp_field).coeffs
        temporal[k] = w_t.coeffs
        pot_rate[k] = (perp_gradient(ScalarField.from_samples(grid, rate)) / sig).coeffs  # type: ignore[arg-type]
        total[k] = (wpc * chi + w_t * chi ** 2).coeffs
        terms[k] = OscillationTerms(
            jets=jets,
            h_rate=SymTensorField.from_samples(grid, _sym_samples(h_rate)),  # type: ignore[arg-type]
            leftover=SymTensorField.from_samples(grid, _sym_samples(leftover)),  # type: ignore[arg-type]
            principal=wp_field,  # type: ignore[arg-type]
            time_part=SymTensorField.from_samples(grid, _sym_samples(time_part)),  # type: ignore[arg-type]
            transport=VectorField.from_samples(grid, _vec_samples(transport)),  # type: ignore[arg-type]
            amplitude_rate=VectorField.from_samples(grid, _vec_samples(amp_rate)),  # type: ignore[arg-type]
        )

    def series(c: np.ndarray) -> TimeSeriesField:
        return TimeSeriesField(times, VectorField, grid, c)

    total_series = series(total)
    return Perturbation(
        chi=chi_all, chi_rate=chi_rate_all,
        principal=series(principal), corrector=series(corrector), temporal=series(temporal),
        potential_rate=series(pot_rate), total=total_series,
        velocity=mollified.velocity + total_series,
        terms=terms,
        oscillation_identity=osc_res, corrector_identity=cor_res, corrector_defect=defect,
    )


# ==================== 迭代状态 ====================

@dataclass
class IterationState:
    q: int
    v1: TimeSeriesField
    v2: TimeSeriesField
    stress: TimeSeriesField
    z_in: TimeSeriesField
    noise: NoiseTerms
    horizon: float
    u0_lp: float = 0.0
    jets: Optional[JetParams] = None
    picard: Optional[PicardLog] = None
    residuals: dict[str, float] = field(default_factory=dict)
    component_l1: dict[str, np.ndarray] = field(default_factory=dict)
    ledger: list[LedgerRow] = field(default_factory=list)
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return self.v2.times

    @property
    def grid(self) -> Grid:
        return self.v2.grid

    def summary(self) -> dict:
        dt = self.v2.dt
        return {
            "q": self.q,
            "horizon": self.horizon,
            "jets": None if self.jets is None else self.jets.to_dict(),
            "picard": None if self.picard is None else self.picard.to_dict(),
            "residuals": dict(self.residuals),
            "components_l1l1": {k: float(dt * np.sum(v)) for k, v in self.component_l1.items()},
        }


def _check_divergence_free(u0: VectorField) -> None:
    scale = max(1.0, norm(u0, "CN", order=1))
    defect = norm(div(u0), "Linfty")
    if defect > DIVERGENCE_TOLERANCE * scale:
        raise NotDivergenceFreeError(f"初值不是无散场：|div u0|_inf = {defect:.3e}")


def _horizon(path: NoisePath, settings: SolverSettings) -> float:
    horizon = settings.horizon
    if path.stopping is not None:
        horizon = min(horizon, path.stopping.T_L)
    return float(min(horizon, path.times[-1]))


def _initial_stress(v1: TimeSeriesField, z_in: TimeSeriesField, noise: NoiseTerms) -> TimeSeriesField:
    fields = []
    for n, t in enumerate(v1.times):
        zin = z_in[n]
        if t < 0:
            fields.append(traceless_outer(zin, zin))  # type: ignore[arg-type]
        else:
            V = v1[n] + zin
            fields.append(traceless(quadratic_flux(V, noise.z_low[n], noise.z_high[n])))  # type: ignore[arg-type]
    return TimeSeriesField.from_fields(v1.times, fields)


def init_state(params: IterationParams, u0: VectorField, path: NoisePath, settings: SolverSettings) -> IterationState:
    """
    第 0 层：v2 = 0，v1 由不动点求得，R_0 取二次项与噪声项的无迹部分，负时间延拓显式写入

    Raises:
        NotDivergenceFreeError: u0 不是无散场
        ValueError: ||u0||_{L^p} > N，或网格不一致
    """
    if u0.grid != path.grid:
        raise ValueError("初值与噪声路径的网格不一致")
    _check_divergence_free(u0)
    u0_lp = norm(u0, "Lp", p=params.p)
    if u0_lp > params.N:
        raise ValueError(f"||u0||_Lp = {u0_lp:.4g} 超过上界 N = {params.N}")

    horizon = _horizon(path, settings)
    times = sample_times(TIME_ORIGIN, horizon, settings.dt)
    z_in = initial_heat_flow(u0.band_limited(), times)
    noise = noise_terms(path, times, params.cutoff_R)
    v2 = TimeSeriesField.zeros(times, VectorField, u0.grid)
    v1, picard = solve_v1(params, v2, z_in, noise, 0, settings)
    stress = _initial_stress(v1, z_in, noise)
    state = IterationState(q=0, v1=v1, v2=v2, stress=stress, z_in=z_in, noise=noise,
                           horizon=float(times[-1]), u0_lp=u0_lp, picard=picard)
    residual = master_residual(v1, v2, stress, z_in, noise)
    state.residuals["master_residual"] = max_residual(residual)
    log_manager.log_event(LogLevel.INFO, "level", f"q=0 初始化完成，T={state.horizon:.4g}，nt={len(times)}",
                          component="iteration", level_q=0)
    return state


def advance(state: IterationState, params: IterationParams, settings: SolverSettings,
            system: JetSystem) -> IterationState:
    """由第 q 层构造第 q+1 层"""
    started = time.perf_counter()
    q = state.q
    jp = params.jet_params(q)
    check_resolution(jp, state.grid, system.mu0)
    ell = params.ell(q)
    if ell > params.delta(q + 1) ** 0.5:
        log_manager.log_event(LogLevel.WARNING, "mollify",
                              f"ell={ell:.4g} 大于 delta_{q + 1}^(1/2)={params.delta(q + 1) ** 0.5:.4g}",
                              component="iteration", level_q=q + 1, value=ell)

    mol = mollify_step(state, ell)
    amp = amplitudes(mol, params.gamma_q(q + 1), system.directions, mask=state.times >= 0)
    pert = perturbation(mol, amp, jp, params, q, system)
    v1, picard = solve_v1(params, pert.velocity, state.z_in, state.noise, q + 1, settings)
    result: StressResult = assemble_stress(state.v1, state.v2, v1, mol, pert, state.z_in, state.noise, jp)

    nxt = IterationState(q=q + 1, v1=v1, v2=pert.velocity, stress=result.stress, z_in=state.z_in,
                         noise=state.noise, horizon=state.horizon, u0_lp=state.u0_lp, jets=jp, picard=picard,
                         component_l1=result.component_l1)
    residual = master_residual(v1, pert.velocity, result.stress, state.z_in, state.noise)
    nxt.residuals.update({
        "master_residual": max_residual(residual),
        "oscillation_identity": pert.oscillation_identity,
        "corrector_identity": pert.corrector_identity,
        "corrector_defect": pert.corrector_defect,
        "amplitude_reconstruction": amp.reconstruction,
        "oscillation_closure": float(settings.dt * np.sum(result.closure_l1)) if result.closure_l1 is not None
        else 0.0,
    })
    if amp.reconstruction > AMPLITUDE_TOLERANCE:
        log_manager.log_event(LogLevel.WARNING, "amplitudes", f"振幅重构残差 {amp.reconstruction:.3e}",
                              component="iteration", level_q=q + 1, value=amp.reconstruction)
    log_manager.log_event(LogLevel.INFO, "level", f"q={q + 1} 构造完成",
                          component="iteration", level_q=q + 1,
                          duration_ms=(time.perf_counter() - started) * 1000.0)
    return nxt


def iterate(params: IterationParams, u0: VectorField, path: NoisePath, q_max: int, settings: SolverSettings,
            system: Optional[JetSystem] = None) -> list[IterationState]:
    """q = 0..q_max 的全部层，每层附带诊断账本与检查结果"""
    if q_max < 1:
        raise ValueError(f"q_max 至少为 1，当前值: {q_max}")
    system = system or default_jet_system()
    states = [init_state(params, u0, path, settings)]
    for _ in range(q_max):
        states.append(advance(states[-1], params, settings, system))
    for k, state in enumerate(states):
        previous = states[k - 1] if k > 0 else None
        state.ledger = level_ledger(state, params, previous)
        state.checks = level_checks(state, params, settings)
    return states


# ==================== 初值 ====================

def initial_velocity(grid: Grid, kind: str, amplitude: float, rng: np.random.Generator) -> VectorField:
    """zero；single_mode = amplitude (0, -cos 2 pi x1)；random 为 L^2 范数等于 amplitude 的无散随机场"""
    if kind == "zero" or amplitude == 0.0:
        return VectorField.zeros(grid)  # type: ignore[return-value]
    if kind == "single_mode":
        mode = to_spectral(grid, np.sin(2.0 * np.pi * grid.x1))
        return perp_gradient(mode) * (amplitude / (2.0 * np.pi))  # type: ignore[return-value]
    if kind == "random":
        raw = random_band_limited(grid, VectorField, rng, min(4, grid.n // 2 - 1), decay=2.0)
        u = helmholtz_project(raw)  # type: ignore[arg-type]
        size = norm(u, "Lp", p=2.0)
        return u * (amplitude / size) if size > 0 else u  # type: ignore[return-value]
    raise ValueError(f"未知的初值类型: {kind}")


# ==================== 因果性与标度研究 ====================

def mutate_path_after(path: NoisePath, t_cut: float, factor: float = 1.5) -> NoisePath:
    """t > t_cut 的 z 乘以 factor，重新计算 z_eps 与 Wick 平方；停时不再保留"""
    keep = path.times <= t_cut + 1e-12
    scale = np.where(keep, 1.0, factor)[:, None, None, None]
    z = path.z.with_coeffs(path.z.coeffs * scale)
    z_eps = mollify_noise(z, path.eps)
    return NoisePath(z=z, z_eps=z_eps, renorm=path.renorm, wick=wick_square(z_eps, path.renorm),
                     seed=path.seed, eps=path.eps)


def adaptedness_check(params: IterationParams, u0: VectorField, path: NoisePath, q_max: int,
                      settings: SolverSettings, cut_times: Sequence[float],
                      system: Optional[JetSystem] = None) -> list[CheckResult]:
    """改动 t_cut 之后的噪声，比较所有层在 t <= t_cut 处的 v1、v2、R 是否逐位相同"""
    system = system or default_jet_system()
    fixed = replace(settings, horizon=_horizon(path, settings))
    base = iterate(params, u0, path, q_max, fixed, system)
    out = []
    for t_cut in cut_times:
        other = iterate(params, u0, mutate_path_after(path, t_cut), q_max, fixed, system)
        mismatches = 0
        for a, b in zip(base, other):
            keep = a.times <= t_cut + 1e-12
            for name in ("v1", "v2", "stress"):
                if not np.array_equal(getattr(a, name).coeffs[keep], getattr(b, name).coeffs[keep]):
                    mismatches += 1
        out.append(CheckResult(name="adaptedness", value=float(mismatches), target=0.0, passed=mismatches == 0,
                               detail=f"t_cut={t_cut:g}"))
    return out


def energy_scaling_study(params: IterationParams, u0: VectorField, path: NoisePath, settings: SolverSettings,
                         k_values: Sequence[float], system: Optional[JetSystem] = None) -> list[dict]:
    """
    对每个 K 运行到 energy_level 层，测量该层的能量增量
    ||v2_q||^2 - ||v2_{q-1}||^2（L^2_t L^2，窗口 (2 ^ T, T]，为空时改用 (2 sigma_q ^ T, T]）
    """
    system = system or default_jet_system()
    q = params.energy_level
    rows = []
    for K in k_values:
        p = replace(params, K=float(K))
        states = iterate(p, u0, path, q, settings, system)
        value, window = energy_increment(states[q], states[q - 1], p)
        rows.append({"K": float(K), "gamma": p.gamma_q(q), "window": window, "increment": value,
                     "expected": 2.0 * p.gamma_q(q) * (window[1] - window[0])})
    base = rows[0]
    for row in rows:
        measured = row["increment"] / base["increment"] if base["increment"] else float("nan")
        row["ratio"] = measured
        row["gamma_ratio"] = row["gamma"] / base["gamma"]
    return rows


def residual_convergence(params: IterationParams, u0: VectorField, make_path: Callable[[float], NoisePath],
                         settings: SolverSettings, dts: Sequence[float],
                         system: Optional[JetSystem] = None) -> dict:
    """第 1 层主残差随 dt 减半的变化，返回对数斜率"""
    system = system or default_jet_system()
    residuals = []
    for dt in dts:
        s = replace(settings, dt=float(dt))
        states = iterate(params, u0, make_path(float(dt)), 1, s, system)
        residuals.append(states[1].residuals["master_residual"])
    positive = [(d, r) for d, r in zip(dts, residuals) if r > 0]
    slope = fit_loglog_slope([d for d, _ in positive], [r for _, r in positive]) if len(positive) >= 2 \
        else float("nan")
    log_manager.log_event(LogLevel.INFO, "residual_convergence", f"主残差的 dt 斜率 {slope:.3f}",
                          component="iteration", value=slope)
    return {"dts": [float(d) for d in dts], "residuals": residuals, "slope": slope}
