"""
Reynolds 应力组装

新一层的应力由七个分量相加：
    R_lin  = -(grad w + grad^T w) + R(d_t(w~p + w~c)) + U (x)o w + w (x)o U
    R_cor  = (w~c + w~t) (x)o w + w~p (x)o (w~c + w~t)
    R_osc  = chi^2 (R_osc,x + R_osc,a + R_osc,t - 未启用方向的余项 + 混叠补项) + (chi^2)' R w_t + (1 - chi^2) R_l
    R_com  = 磨光交换子，R_com1..3 为新旧速度之差与噪声项、z_in 的交叉项
其中 U = v_l + v1_{q+1}。t < 0 时应力直接取 z_in (x)o z_in。
混叠补项只在网格无法分辨射流时显著；有了它，离散主方程只剩时间差分误差。
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np

from .antidiv import antidiv, bilinear_antidiv, bilinear_antidiv_scalar
from .errors import NumericalError
from .harmonic import ParaKind, tensor_paraproduct
from .logger import LogLevel, log_manager
from .torus_field import (
    SymTensorField,
    TimeSeriesField,
    VectorField,
    div,
    gradient,
    helmholtz_project,
    laplacian,
    norm,
    remove_mean,
    sym_gradient,
    sym_outer,
    sym_part,
    traceless,
    traceless_outer,
)

if TYPE_CHECKING:
    from .iteration import Mollified, NoiseTerms, OscillationTerms, Perturbation
    from .jets import JetParams

COMPONENTS: tuple[str, ...] = ("lin", "cor", "osc", "com", "com1", "com2", "com3")


class StressComponentError(NumericalError):
    """某个应力分量出现非有限值"""

    def __init__(self, message: str, name: str):
        super().__init__(message, component="stress")
        self.name = name


# ==================== 通量 ====================

def noise_flux(v: VectorField, z_low: VectorField, z_high: VectorField) -> SymTensorField:
    """v (x) z_low + z_low (x) v + v >= z_high + z_high <= v"""
    out = sym_outer(v, z_low) * 2.0
    if np.any(z_high.coeffs):
        out = out + sym_part(tensor_paraproduct(v, z_high, ParaKind.SUCCEQ)  # type: ignore[arg-type]
                             + tensor_paraproduct(z_high, v, ParaKind.PRECEQ))
    return out  # type: ignore[return-value]


def quadratic_flux(v: VectorField, z_low: VectorField, z_high: VectorField) -> SymTensorField:
    """v2 方程的全部二次项与噪声项 V (x) V + noise_flux(V)"""
    return sym_outer(v, v) + noise_flux(v, z_low, z_high)  # type: ignore[return-value]


def v1_flux(v: VectorField, z_loc: VectorField, wick: SymTensorField) -> SymTensorField:
    """v1 方程的通量 z^{:2:} + V < z_loc + z_loc > V"""
    if not np.any(z_loc.coeffs):
        return wick
    para = tensor_paraproduct(v, z_loc, ParaKind.PREC) + tensor_paraproduct(z_loc, v, ParaKind.SUCC)
    return wick + sym_part(para)  # type: ignore[arg-type,return-value]


# ==================== 振荡应力 ====================

def oscillation_inner(terms: "OscillationTerms", jp: "JetParams") -> SymTensorField:
    """R_osc,x + R_osc,a + R_osc,t 减去未启用方向的余项，未乘 chi^2"""
    inner = SymTensorField.zeros(terms.h_rate.grid)
    for jet in terms.jets:
        if jet.g != 0.0:
            inner = inner + bilinear_antidiv(gradient(jet.a2), remove_mean(jet.ww)) * jet.g ** 2  # type: ignore
        rate = jet.a2_rate * jet.g + jet.a2 * jet.dg
        inner = inner - bilinear_antidiv_scalar(rate, jet.w2xi) * (jp.sigma / jp.theta)  # type: ignore
    return inner - antidiv(div(terms.h_rate)) / jp.sigma - traceless(terms.leftover)  # type: ignore[return-value]


def oscillation_target(terms: "OscillationTerms", jp: "JetParams", stress_ell: SymTensorField) -> VectorField:
    """
    P div(w_p (x) w_p + R_l) + d_t(w^(o)/sigma + sigma/theta w^(a))，
    即 inner 的 Leray 散度应等于的场；d_t 取解析导数
    """
    sig = float(jp.sigma)
    flux = sym_outer(terms.principal, terms.principal) + stress_ell
    rate = (div(terms.time_part) + remove_mean(terms.transport)  # type: ignore[operator]
            + remove_mean(terms.amplitude_rate) * (sig / jp.theta) + div(terms.h_rate) / sig)
    return helmholtz_project(remove_mean(div(flux) - rate))  # type: ignore[arg-type,return-value]


def oscillation_closure(terms: "OscillationTerms", jp: "JetParams", inner: SymTensorField,
                        stress_ell: SymTensorField) -> SymTensorField:
    """
    网格上逐点成立的分解与去混叠乘积之间的差，用 R 补回，
    使 P div(inner + closure) 与 oscillation_target 逐模相等
    """
    gap = oscillation_target(terms, jp, stress_ell) - helmholtz_project(remove_mean(div(inner)))  # type: ignore
    return antidiv(gap)  # type: ignore[arg-type]


def oscillation_stress(inner: SymTensorField, chi: float, chi_rate: float, stress_ell: SymTensorField,
                       temporal: VectorField) -> SymTensorField:
    """R_osc 在一个时刻的值；temporal 为未乘 chi^2 的 w^(o)/sigma + sigma/theta w^(a)"""
    out = inner * chi ** 2 + stress_ell * (1.0 - chi ** 2)
    if chi_rate != 0.0:
        out = out + antidiv(temporal) * (2.0 * chi * chi_rate)
    return out  # type: ignore[return-value]


# ==================== 组装 ====================

@dataclass
class StressResult:
    """新应力、各分量逐时刻的 L^1 范数，以及 R_osc 中混叠补项的 L^1 范数"""
    stress: TimeSeriesField
    component_l1: dict[str, np.ndarray] = field(default_factory=dict)
    closure_l1: Optional[np.ndarray] = None


def _checked(name: str, value: SymTensorField, t: float) -> SymTensorField:
    if not np.all(np.isfinite(value.coeffs)):
        log_manager.log_event(LogLevel.ERROR, "stress", f"应力分量 R_{name} 在 t={t:.4g} 出现非有限值",
                              component="stress")
        raise StressComponentError(f"应力分量 R_{name} 在 t={t:.4g} 出现非有限值", name)
    return value


def assemble_stress(v1_old: TimeSeriesField, v2_old: TimeSeriesField, v1_new: TimeSeriesField,
                    mollified: "Mollified", pert: "Perturbation", z_in: TimeSeriesField,
                    noise: "NoiseTerms", jp: "JetParams") -> StressResult:
    """
    组装 R_{q+1}

    Raises:
        StressComponentError: 某个分量非有限，携带分量名
    """
    times = v1_new.times
    grid = v1_new.grid
    nt = len(times)
    out = np.zeros((nt, 3, grid.n, grid.n), dtype=np.complex128)
    l1 = {name: np.zeros(nt) for name in COMPONENTS}
    closure = np.zeros(nt)
    zero = SymTensorField.zeros(grid)

    for n, t in enumerate(times):
        zin = z_in[n]
        if t < 0:
            out[n] = traceless_outer(zin, zin).coeffs  # type: ignore[arg-type]
            continue
        u_old = v1_old[n] + v2_old[n]
        v_ell = mollified.velocity[n]
        U = v1_new[n] + v_ell
        w = pert.total[n]
        D = U + w - u_old
        chi = float(pert.chi[n])

        parts: dict[str, SymTensorField] = {}
        if chi > 0.0:
            wp = pert.principal[n] * chi
            wc = pert.corrector[n] * chi
            wt = pert.temporal[n] * chi ** 2
            parts["lin"] = (traceless(-sym_gradient(w)) + antidiv(pert.potential_rate[n])  # type: ignore
                            + traceless_outer(U, w) * 2.0)
            parts["cor"] = traceless_outer(wc + wt, w) + traceless_outer(wp, wc + wt)  # type: ignore
            terms = pert.terms[n]
            stress_ell = mollified.stress[n]
            inner = oscillation_inner(terms, jp)  # type: ignore[arg-type]
            fix = oscillation_closure(terms, jp, inner, stress_ell)  # type: ignore[arg-type]
            closure[n] = norm(fix, "Lp", p=1.0)
            parts["osc"] = oscillation_stress(inner + fix, chi, float(pert.chi_rate[n]),  # type: ignore[arg-type]
                                              stress_ell, pert.temporal[n])  # type: ignore[arg-type]
        else:
            parts["lin"] = zero
            parts["cor"] = zero
            parts["osc"] = mollified.stress[n]  # type: ignore[assignment]
        parts["com"] = mollified.commutator[n]  # type: ignore[assignment]
        parts["com1"] = traceless(noise_flux(D, noise.z_low[n], noise.z_high[n]))  # type: ignore[arg-type]
        parts["com2"] = traceless_outer(U, U) - traceless_outer(u_old, u_old)  # type: ignore
        parts["com3"] = traceless_outer(D, zin) * 2.0  # type: ignore

        total = np.zeros((3, grid.n, grid.n), dtype=np.complex128)
        for name in COMPONENTS:
            value = _checked(name, parts[name], float(t))
            total += value.coeffs
            l1[name][n] = norm(value, "Lp", p=1.0)
        out[n] = traceless(SymTensorField(grid, total, enforce_reality=False)).coeffs

    return StressResult(stress=TimeSeriesField(times, SymTensorField, grid, out), component_l1=l1,
                        closure_l1=closure)


# ==================== 主残差 ====================

def master_residual(v1: TimeSeriesField, v2: TimeSeriesField, stress: TimeSeriesField, z_in: TimeSeriesField,
                    noise: "NoiseTerms", t_min: float = 0.0) -> np.ndarray:
    """
    d_t v2 - Delta v2 + P_H P_{!=0} div(Q - R) 在 H^{-2} 中的逐时刻范数，
    d_t 为中心差分；两端及 t < t_min 处为 nan。
    """
    times = v2.times
    dt = v2.dt
    out = np.full(len(times), np.nan)
    for n in range(1, len(times) - 1):
        if times[n] < t_min:
            continue
        rate = (v2[n + 1] - v2[n - 1]) / (2.0 * dt)
        V = v1[n] + v2[n] + z_in[n]
        flux = quadratic_flux(V, noise.z_low[n], noise.z_high[n]) - stress[n]  # type: ignore[arg-type]
        res = rate - laplacian(v2[n]) + helmholtz_project(remove_mean(div(flux)))  # type: ignore[arg-type]
        out[n] = norm(res, "Hs", s=-2.0)
    return out


def max_residual(profile: np.ndarray) -> float:
    finite = profile[np.isfinite(profile)]
    return float(np.max(finite)) if finite.size else 0.0


def component_summary(result: StressResult, mask: Optional[np.ndarray], dt: float) -> dict[str, float]:
    """各分量在时间掩码上的 L^1_t L^1"""
    out = {}
    for name, values in result.component_l1.items():
        sel = values if mask is None else values[mask]
        out[name] = float(dt * np.sum(sel))
    return out
