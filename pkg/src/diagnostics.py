"""
逐层诊断账本

每一层输出一组 LedgerRow：速度与应力在各时间窗口上的时空范数、相邻两层的增量、
能量注入量以及恒等式残差。目标值为空的行只记录测量值。
时间积分按矩形公式计算，每个网格点代表长度 dt。
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING, Optional

import numpy as np

from .harmonic import BesovIndex, besov_norm
from .logger import LogLevel, log_manager
from .schemas import CheckResult, LedgerRow
from .torus_field import TimeSeriesField, div, norm, traceless_outer

if TYPE_CHECKING:
    from .iteration import IterationState, SolverSettings
    from .params import IterationParams

_EPS = 1e-9


# ==================== 时间窗口 ====================

def window_mask(times: np.ndarray, lo: float, hi: float, open_left: bool = False) -> np.ndarray:
    """[lo, hi] 或 (lo, hi] 的布尔掩码"""
    left = times > lo + _EPS if open_left else times >= lo - _EPS
    return left & (times <= hi + _EPS)


def l2_profile(series: TimeSeriesField) -> np.ndarray:
    """逐时刻 L^2 范数（Parseval）"""
    return np.sqrt(np.sum(np.abs(series.coeffs) ** 2, axis=(1, 2, 3)))


def norm_profile(series: TimeSeriesField, mask: Optional[np.ndarray] = None, **kwargs) -> np.ndarray:
    """逐时刻 norm(f, **kwargs)，掩码外为 0"""
    out = np.zeros(len(series))
    for n in range(len(series)):
        if mask is None or mask[n]:
            out[n] = norm(series[n], **kwargs)
    return out


def besov_profile(series: TimeSeriesField, idx: BesovIndex, mask: np.ndarray) -> np.ndarray:
    out = np.zeros(len(series))
    for n in np.nonzero(mask)[0]:
        out[n] = besov_norm(series[n], idx)
    return out


def time_integral(profile: np.ndarray, mask: np.ndarray, dt: float) -> float:
    return float(dt * np.sum(profile[mask]))


def sup(profile: np.ndarray, mask: np.ndarray) -> float:
    sel = profile[mask]
    return float(np.max(sel)) if sel.size else 0.0


def c1_tx(series: TimeSeriesField, mask: np.ndarray) -> float:
    """sup_t ||f||_{C^1_x} + sup_t ||d_t f||_inf，d_t 为中心差分"""
    space = sup(norm_profile(series, mask, kind="CN", order=1), mask)
    if len(series) < 2:
        return space
    rate = series.with_coeffs(np.gradient(series.coeffs, series.dt, axis=0))
    return space + sup(norm_profile(rate, mask, kind="Linfty"), mask)


def sliding_window_sup(profile: np.ndarray, times: np.ndarray, lo: float, hi: float, h: float,
                       dt: float) -> float:
    """sup_{a in [lo, hi - h]} int_a^{a+h} profile"""
    steps = max(int(round(h / dt)), 1)
    best = 0.0
    for i in np.nonzero((times >= lo - _EPS) & (times <= hi - h + _EPS))[0]:
        best = max(best, float(dt * np.sum(profile[i:i + steps])))
    return best


def _row(q: int, window: str, name: str, value: float, target: Optional[float] = None,
         empty: bool = False) -> LedgerRow:
    """空窗口上的行不判定，pass 记为空"""
    if empty:
        log_manager.log_event(LogLevel.WARNING, "ledger", f"q={q} {name} 的窗口 {window} 不含网格点，不作判定",
                              component="diagnostics", level_q=q)
    passed = None if target is None or empty else bool(value <= target * (1.0 + 1e-12))
    return LedgerRow(level=q, window=window, norm_name=name, value=float(value), target=target, passed=passed)


# ==================== 单项量 ====================

def stress_l1_profile(state: "IterationState") -> np.ndarray:
    return norm_profile(state.stress, kind="Lp", p=1.0)


def energy_increment(state: "IterationState", previous: "IterationState",
                     params: "IterationParams") -> tuple[float, tuple[float, float]]:
    """
    ||v2_q||^2 - ||v2_{q-1}||^2（L^2_t L^2）及所用窗口 (2 ^ T, T]；
    该窗口为空时改用 (2 sigma_q ^ T, T]，其上 chi = 1
    """
    T = state.horizon
    lo = min(2.0, T)
    if T - lo < state.v2.dt:
        lo = min(2.0 * params.sigma_q(state.q), T)
    mask = window_mask(state.times, lo, T, open_left=True)
    dt = state.v2.dt
    now = time_integral(l2_profile(state.v2) ** 2, mask, dt)
    before = time_integral(l2_profile(previous.v2) ** 2, mask, dt)
    return now - before, (lo, T)


def decrease_window(state: "IterationState", params: "IterationParams") -> np.ndarray:
    """(sigma_{q-1} ^ T, T] 的掩码；T <= sigma_{q-1} 时为空"""
    return window_mask(state.times, min(params.sigma_q(state.q - 1), state.horizon), state.horizon,
                       open_left=True)


def stress_decrease(state: "IterationState", previous: "IterationState", params: "IterationParams") -> float:
    """
    ||R_q||_{L^1L^1} / ||R_{q-1}||_{L^1L^1}，窗口 (sigma_{q-1} ^ T, T]

    窗口为空或上一层应力在窗口上为 0 时返回 NaN，任何上界比较都不成立
    """
    mask = decrease_window(state, params)
    if not mask.any():
        return math.nan
    dt = state.v2.dt
    before = time_integral(stress_l1_profile(previous), mask, dt)
    now = time_integral(stress_l1_profile(state), mask, dt)
    if before == 0.0:
        return math.nan
    return now / before


def z_in_bound_check(z_in: TimeSeriesField, u0_lp: float, p: float) -> float:
    """sup_{t > 0} (||z_in||_{W^{2/p-1,p}} + ||z_in||_{L^2}) / ((1 + t^{1/2-1/p}) ||u0||_{L^p})"""
    if u0_lp == 0.0:
        return 0.0
    worst = 0.0
    for n, t in enumerate(z_in.times):
        if t <= 0:
            continue
        f = z_in[n]
        lhs = norm(f, "Wsp", p=p, s=2.0 / p - 1.0) + norm(f, "Lp", p=2.0)
        worst = max(worst, lhs / ((1.0 + t ** (0.5 - 1.0 / p)) * u0_lp))
    return worst


def divergence_defect(series: TimeSeriesField) -> float:
    """max_t ||div f||_inf / max(1, max_t ||f||_{C^1})"""
    worst = 0.0
    scale = 1.0
    for f in series:
        worst = max(worst, norm(div(f), "Linfty"))
        scale = max(scale, norm(f, "CN", order=1))
    return worst / scale


def trace_defect(stress: TimeSeriesField) -> float:
    c = stress.coeffs
    scale = max(1.0, float(np.max(np.abs(c)))) if c.size else 1.0
    return float(np.max(np.abs(c[:, 0] + c[:, 2]))) / scale


def negative_extension_defect(state: "IterationState") -> float:
    """t < 0 时 |R - z_in (x)o z_in| 的最大值，应逐位为 0"""
    worst = 0.0
    for n in np.nonzero(state.times < 0)[0]:
        expected = traceless_outer(state.z_in[n], state.z_in[n])  # type: ignore[arg-type]
        worst = max(worst, float(np.max(np.abs(state.stress.coeffs[n] - expected.coeffs))))
    return worst


def vanishing_defect(state: "IterationState", params: "IterationParams") -> float:
    """v2 在 [t_q, sigma_q ^ T] 上的最大系数"""
    mask = window_mask(state.times, params.t_q(state.q), min(params.sigma_q(state.q), state.horizon))
    sel = state.v2.coeffs[mask]
    return float(np.max(np.abs(sel))) if sel.size else 0.0


# ==================== 账本 ====================

def level_ledger(state: "IterationState", params: "IterationParams",
                 previous: Optional["IterationState"] = None) -> list[LedgerRow]:
    """第 q 层的全部账本行"""
    q = state.q
    times = state.times
    dt = state.v2.dt
    T = state.horizon
    root_M = math.sqrt(params.M_L)
    s_q = min(params.sigma_q(q), T)
    s_prev = min(params.sigma_q(q - 1), T)
    whole = window_mask(times, 0.0, T)
    rows: list[LedgerRow] = []

    def add(window: str, name: str, value: float, target: Optional[float] = None,
            mask: Optional[np.ndarray] = None) -> None:
        rows.append(_row(q, window, name, value, target, empty=mask is not None and not mask.any()))

    # v2
    add("[0,T_L]", "v2 L2L2", math.sqrt(time_integral(l2_profile(state.v2) ** 2, whole, dt)))
    add("[t_q,sigma_q^T_L]", "v2 vanishing sup", vanishing_defect(state, params), 0.0,
        mask=window_mask(times, params.t_q(q), s_q))
    add("[0,T_L]", "v2 C1_tx", c1_tx(state.v2, whole), params.lam(q) ** 4 * root_M)
    add("[0,T_L]", "v2 CtLp", sup(norm_profile(state.v2, whole, kind="Lp", p=params.p), whole),
        root_M * sum(params.delta(m) ** 0.5 for m in range(1, q + 1)))

    # 应力
    r_l1 = stress_l1_profile(state)
    late = window_mask(times, s_prev, T, open_left=True)
    add("(sigma_{q-1}^T_L,T_L]", "R L1L1", time_integral(r_l1, late, dt), params.M_L * params.delta(q + 1),
        mask=late)
    add("[0,T_L]", "R L1L1", time_integral(r_l1, whole, dt),
        params.M_L * params.delta(q + 1) + 2 * (q + 1) * params.A * s_q ** (2.0 - 2.0 / params.p))
    t_start = params.t_q(q)
    h = 0.5 * (s_q - t_start)
    if h >= dt:
        add(f"sliding h={h:.6g}", "R L1L1 sup_a",
            sliding_window_sup(r_l1, times, t_start, s_q, h, dt),
            2 * (q + 1) * params.A * (h / 2.0) ** (2.0 - 2.0 / params.p))

    # v1
    besov = BesovIndex(1.0 - params.kappa - params.kappa0, params.p, math.inf)
    add("[0,T_L]", "v1 CtL2", sup(l2_profile(state.v1), whole), root_M)
    add("[0,T_L]", "v1 CtB", sup(besov_profile(state.v1, besov, whole), whole), root_M)

    # 相邻两层
    if previous is not None:
        d2 = state.v2 - previous.v2
        d1 = state.v1 - previous.v1
        inc_target = root_M * params.delta(q) ** 0.5
        add("[0,T_L]", "v2 increment CtLp", sup(norm_profile(d2, whole, kind="Lp", p=params.p), whole), inc_target)
        add("[0,T_L]", "v2 increment CtW(1/2,6/5)",
            sup(norm_profile(d2, whole, kind="Wsp", p=1.2, s=0.5), whole), inc_target)
        two_prev = min(2.0 * params.sigma_q(q - 2), T)
        sq_d2 = l2_profile(d2) ** 2
        tail = window_mask(times, two_prev, T, open_left=True)
        middle = window_mask(times, s_q, two_prev, open_left=True)
        add("(2sigma_{q-2}^T_L,T_L]", "v2 increment L2L2", math.sqrt(time_integral(sq_d2, tail, dt)), mask=tail)
        add("(sigma_q^T_L,2sigma_{q-2}^T_L]", "v2 increment L2L2", math.sqrt(time_integral(sq_d2, middle, dt)),
            mask=middle)
        energy, (lo, hi) = energy_increment(state, previous, params)
        pumped = 2.0 * params.gamma_q(q) * (hi - lo)
        energy_mask = window_mask(times, lo, hi, open_left=True)
        add(f"({lo:.6g},{hi:.6g}]", "energy gap", abs(energy - pumped), 5.0 * params.M_L * params.delta(q),
            mask=energy_mask)
        add(f"({lo:.6g},{hi:.6g}]", "energy increment", energy, mask=energy_mask)
        add("[0,T_L]", "v1 increment CtL2", sup(l2_profile(d1), whole), inc_target)
        add("[0,T_L]", "v1 increment CtB", sup(besov_profile(d1, besov, whole), whole), inc_target)
        add("(sigma_{q-1}^T_L,T_L]", "R decrease factor", stress_decrease(state, previous, params), mask=late)

    # 残差
    for name in ("master_residual", "oscillation_identity", "corrector_identity", "corrector_defect",
                 "amplitude_reconstruction", "oscillation_closure"):
        if name in state.residuals:
            add("[0,T_L]", name, state.residuals[name])
    if q == 0:
        add("(0,T_L]", "z_in bound constant", z_in_bound_check(state.z_in, state.u0_lp, params.p))
    if state.picard is not None:
        add("[0,T_L]", "picard contraction", state.picard.contraction)
    return rows


# ==================== 检查 ====================

def _check(name: str, value: float, target: float, detail: Optional[str] = None) -> CheckResult:
    return CheckResult(name=name, value=float(value), target=target, passed=bool(value <= target), detail=detail)


def level_checks(state: "IterationState", params: "IterationParams",
                 settings: "SolverSettings") -> list[CheckResult]:
    """恒等式、无散性、无迹性、消失窗口与负时间延拓"""
    q = state.q
    tag = f"q={q}"
    div_tol = settings.divergence_tolerance
    out = [
        _check("divergence v1", divergence_defect(state.v1), div_tol, tag),
        _check("divergence v2", divergence_defect(state.v2), div_tol, tag),
        _check("stress trace", trace_defect(state.stress), div_tol, tag),
        _check("negative-time extension", negative_extension_defect(state), 0.0, tag),
        _check("v2 vanishing window", vanishing_defect(state, params), 0.0, tag),
    ]
    for name in ("oscillation_identity", "corrector_identity"):
        if name in state.residuals:
            out.append(_check(name, state.residuals[name], settings.identity_tolerance, tag))
    return out
