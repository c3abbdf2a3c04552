"""
子命令编排

每个子命令读取 RunConfig，调用数值模块，返回 RunReport 与需要写出的 CSV 表；
write_outputs 在输出目录锁内统一写文件。
"""

import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from filelock import FileLock, Timeout

from .config import RunConfig
from .constants import APP_VERSION, OUTPUT_LOCK_FILENAME, OUTPUT_LOCK_TIMEOUT, REPORT_FILENAME
from .diagnostics import stress_decrease
from .errors import LabError
from .harmonic import improved_holder_sweep
from .heat import contraction_sweep, sample_times
from .iteration import SolverSettings, energy_scaling_study, initial_velocity, iterate, residual_convergence
from .jets import (
    disjointness_report,
    default_jet_system,
    geometric_sweep,
    jet_identity_checks,
    JetParams,
    mean_tensor_check,
    oscillator_norms,
    scaling_table,
)
from .logger import LogLevel, log_manager
from .noise import (
    ENSEMBLE_COLUMNS,
    NoiseConfig,
    NoisePath,
    StoppingParams,
    derive_seed,
    ensemble_rows,
    sample_ensemble,
    sample_path,
    stopping_time,
    stopping_time_sweep,
    wick_cauchy_trend,
    zero_path,
)
from .params import IterationParams, constraint_report
from .report import LEDGER_COLUMNS, ledger_rows, plain, report_render, write_csv, write_report
from .schemas import CheckResult, LedgerRow, RunReport
from .torus_field import Grid, TimeSeriesField, VectorField, dump_field, helmholtz_project, norm, random_band_limited

# 初值随机数流在 derive_seed 中使用的编号，噪声路径占用编号 0 之后的区间
INITIAL_DATA_STREAM: int = 2 ** 32


class OutputLockedError(LabError):
    """输出目录已被另一个运行占用"""

    def __init__(self, message: str):
        super().__init__(message, component="output")


@dataclass
class RunOutcome:
    """一次运行的报告、CSV 表与场快照"""
    report: RunReport
    tables: dict[str, tuple[tuple[str, ...], list[list]]] = field(default_factory=dict)
    fields: dict[str, tuple[object, float]] = field(default_factory=dict)
    ledger_text: str = ""

    @property
    def passed(self) -> bool:
        return self.report.all_passed


def _check(name: str, value: float, target: float, passed: bool, detail: Optional[str] = None) -> CheckResult:
    return CheckResult(name=name, value=float(value), target=float(target), passed=bool(passed), detail=detail)


def _report(cfg: RunConfig, results: dict, checks: list[CheckResult], **extra) -> RunReport:
    enabled = checks if cfg.assertions.enabled else []
    return RunReport(command=cfg.command, version=APP_VERSION, seed=cfg.seed,
                     config=cfg.model_dump(mode="json"), results=plain(results), checks=enabled, **extra)


# ==================== noise-ensemble ====================

def run_noise_ensemble(cfg: RunConfig) -> RunOutcome:
    """路径集合的范数表、Wick 平方的 Cauchy 趋势与停时中位数"""
    grid = Grid(cfg.grid.n_modes)
    ncfg = NoiseConfig.from_section(cfg.noise, cfg.seed)
    ncfg.check_grid(grid)
    ens = cfg.ensemble
    kappa = cfg.stopping.kappa

    paths = sample_ensemble(ncfg, grid, cfg.noise.horizon, ens.n_paths, workers=ens.workers)
    rows = ensemble_rows(paths, ens.sample_times, kappa)
    trend = wick_cauchy_trend(paths[0].z, ncfg, ens.eps_values, ens.sample_times[-1], kappa)
    sweep = stopping_time_sweep(ncfg, grid, ens.level_values, ens.n_paths, kappa, cfg.stopping.p,
                                workers=ens.workers)

    by_eps = sorted(trend, key=lambda row: -row["eps"])
    first, last = by_eps[0]["difference"], by_eps[-1]["difference"]
    medians = [s.median for s in sweep]
    checks = [
        _check("wick cauchy trend", last, first, last <= first,
               f"eps {by_eps[0]['eps']:g} -> {by_eps[-1]['eps']:g}"),
        _check("stopping time monotone", -min(np.diff(medians), default=0.0), 0.0,
               all(b >= a for a, b in zip(medians, medians[1:])), "T_L 的中位数随 L 不减"),
    ]
    results = {"wick_trend": trend, "stopping_sweep": sweep, "n_paths": len(paths)}
    return RunOutcome(
        report=_report(cfg, results, checks),
        tables={
            "ensemble.csv": (ENSEMBLE_COLUMNS, [r.as_row() for r in rows]),
            "stopping.csv": (("level", "median"), [[s.level, s.median] for s in sweep]),
        },
    )


# ==================== jets-verify ====================

def run_jets_verify(cfg: RunConfig) -> RunOutcome:
    """几何引理、射流恒等式、支撑不交、归一化与标度表"""
    grid = Grid(cfg.grid.n_modes)
    system = default_jet_system()
    ds = system.directions
    js = cfg.jets
    rng = np.random.default_rng(cfg.seed)

    geometric = geometric_sweep(ds, rng, n=js.geometric_samples)
    checks = [_check("geometric lemma", geometric.max_error, 1e-10, geometric.passed,
                     f"min weight {geometric.min_weight:.4f}")]
    identity_rows: list[list] = []
    scaling_rows: list[list] = []
    settings_out = []
    for setting in js.settings:
        jp = JetParams.from_setting(setting)
        tag = f"sigma={jp.sigma},mu={jp.mu}"
        for index in range(len(ds)):
            rep = jet_identity_checks(system, jp, index, js.t_sweep, grid, h=js.time_step, n_probe=js.probe_points)
            for c in rep.checks:
                identity_rows.append([jp.sigma, jp.eta, jp.nu, jp.mu, jp.theta, index, c.name, c.detail, c.value,
                                      c.target, c.passed])
            checks.extend(c.model_copy(update={"detail": f"{tag},xi={index},{c.detail}"}) for c in rep.checks)
        disjoint = disjointness_report(system, jp)
        checks.append(_check("disjoint supports", disjoint.max_active, 1, disjoint.passed, tag))
        tensor_err, mean_err = mean_tensor_check(system, jp, 0)
        checks.append(_check("mean tensor", tensor_err, 1e-6, tensor_err <= 1e-6, tag))
        checks.append(_check("mean zero", mean_err, 1e-10, mean_err <= 1e-10, tag))
        for row in scaling_table(system, jp, 0):
            scaling_rows.append([row.quantity, row.order, row.p, row.sigma, row.nu, row.mu, row.measured,
                                 row.predicted, row.ratio])
        settings_out.append({
            "params": jp.to_dict(),
            "disjointness": disjoint,
            "mean_tensor_error": tensor_err,
            "mean_error": mean_err,
            "oscillator_norms": oscillator_norms(system, jp, 0),
        })
    results = {"geometric": geometric, "settings": settings_out}
    return RunOutcome(
        report=_report(cfg, results, checks),
        tables={
            "jet_identities.csv": (("sigma", "eta", "nu", "mu", "theta", "direction", "check", "detail", "value",
                                    "target", "pass"), identity_rows),
            "jet_scaling.csv": (("quantity", "order", "p", "sigma", "nu", "mu", "measured", "predicted", "ratio"),
                                scaling_rows),
        },
    )


# ==================== holder-sweep ====================

def _amplitude(t):
    return 1.0 + t


def _profile(u):
    return np.sin(2 * np.pi * u) + 0.5 * np.cos(4 * np.pi * u)


def run_holder_sweep(cfg: RunConfig) -> RunOutcome:
    """||a f(sigma .)||_p - ||a||_p ||f||_p 随 sigma 的衰减斜率，目标 -1/p + 0.2"""
    hs = cfg.holder
    checks = []
    rows = []
    sweeps = []
    for p in hs.p_values:
        sweep = improved_holder_sweep(_amplitude, _profile, hs.sigmas, p, window=tuple(hs.window),
                                      resolution=hs.resolution)
        sweeps.append(sweep)
        target = -1.0 / p + 0.2
        checks.append(_check("improved holder slope", sweep.slope, target, sweep.slope <= target, f"p={p:g}"))
        rows.extend([g.sigma, g.p, g.lhs_gap, g.bound] for g in sweep.gaps)
    return RunOutcome(
        report=_report(cfg, {"sweeps": sweeps}, checks),
        tables={"holder.csv": (("sigma", "p", "gap", "bound"), rows)},
    )


# ==================== contraction-demo ====================

def run_contraction_demo(cfg: RunConfig) -> RunOutcome:
    """v1 不动点映射在 [0, T*] 上的压缩因子随 T* 减小"""
    cs = cfg.contraction
    grid = Grid(cfg.grid.n_modes)
    rng = np.random.default_rng(cfg.seed)
    times = sample_times(0.0, max(cs.t_values), cs.dt)

    def field_of(scale: float) -> TimeSeriesField:
        v = helmholtz_project(random_band_limited(grid, VectorField, rng, 3))
        v = v * (scale / norm(v, "Linfty"))  # type: ignore[operator]
        return TimeSeriesField.from_fields(times, [v] * len(times))

    v1, v2, z = field_of(cs.amplitude), field_of(0.5 * cs.amplitude), field_of(2.0 * cs.amplitude)
    points = contraction_sweep(v1, v2, z, cs.t_values, cs.zeta, cs.kappa)
    ordered = sorted(points, key=lambda pt: pt.t_star)
    factors = [pt.factor for pt in ordered]
    checks = [
        _check("contraction below one", max(factors), 1.0, max(factors) < 1.0),
        _check("contraction shrinks with T*", 0.0, 0.0, all(a <= b for a, b in zip(factors, factors[1:]))),
    ]
    return RunOutcome(
        report=_report(cfg, {"points": points}, checks),
        tables={"contraction.csv": (("t_star", "factor", "theory"),
                                    [[pt.t_star, pt.factor, pt.theory] for pt in points])},
    )


# ==================== iterate ====================

def _iteration_path(cfg: RunConfig, grid: Grid, sp: StoppingParams, dt: Optional[float] = None,
                    horizon: Optional[float] = None) -> NoisePath:
    """迭代用的噪声路径，步长默认取 iteration.dt；路径够长时附带停时"""
    it = cfg.iteration
    dt = it.dt if dt is None else dt
    horizon = max(cfg.noise.horizon, it.horizon) if horizon is None else horizon
    if not cfg.noise.enabled:
        return zero_path(grid, sample_times(0.0, horizon, dt))
    ncfg = NoiseConfig(seed=derive_seed(cfg.seed, 0), mode_cutoff=cfg.noise.mode_cutoff, dt=dt,
                       include_zero_mode=cfg.noise.include_zero_mode, mollifier_scale=cfg.noise.mollifier_scale)
    ncfg.check_grid(grid)
    path = sample_path(ncfg, grid, horizon)
    if path.times[-1] >= sp.level:
        stopping_time(path, sp)
    else:
        log_manager.log_event(LogLevel.WARNING, "stopping",
                              f"路径长度 {path.times[-1]:.4g} 小于 L={sp.level:g}，不使用停时截断",
                              component="runner")
    return path


def run_iterate(cfg: RunConfig) -> RunOutcome:
    """q = 0..q_max 的迭代、诊断账本与可选的 K 配对能量实验"""
    it = cfg.iteration
    grid = Grid(cfg.grid.n_modes)
    sp = StoppingParams.from_section(cfg.stopping)
    params = IterationParams.from_config(it, sp)
    settings = SolverSettings.from_config(it, cfg.assertions)
    path = _iteration_path(cfg, grid, sp)
    u0 = initial_velocity(grid, it.initial_data, it.initial_amplitude,
                          np.random.default_rng(derive_seed(cfg.seed, INITIAL_DATA_STREAM)))

    states = iterate(params, u0, path, it.q_max, settings)
    ledger: list[LedgerRow] = [row for s in states for row in s.ledger]
    checks: list[CheckResult] = [c for s in states for c in s.checks]

    for q in range(1, len(states)):
        factor = stress_decrease(states[q], states[q - 1], params)
        limit = cfg.assertions.stress_decrease_factor
        if cfg.assertions.check_monotonicity:
            detail = f"q={q}" if np.isfinite(factor) else f"q={q}，窗口为空或上一层应力为 0"
            checks.append(_check("stress decrease", factor, limit, factor <= limit, detail))

    energy_rows: list[dict] = []
    if it.energy_study:
        energy_rows = energy_scaling_study(params, u0, path, settings, it.energy_k_values)
        tol = cfg.assertions.energy_tolerance
        for row in energy_rows[1:]:
            gap = abs(row["ratio"] / row["gamma_ratio"] - 1.0) if np.isfinite(row["ratio"]) else float("inf")
            checks.append(_check("energy scaling", gap, tol, gap <= tol, f"K={row['K']:g}"))

    residual_study: Optional[dict] = None
    if it.residual_dts:
        horizon = min(it.residual_horizon, it.horizon)
        residual_study = residual_convergence(
            params, u0, lambda dt: _iteration_path(cfg, grid, sp, dt=dt, horizon=horizon),
            replace(settings, horizon=horizon), it.residual_dts,
        )
        slope = residual_study["slope"]
        target = cfg.assertions.residual_slope
        checks.append(_check("master residual convergence", slope, target, slope >= target,
                             "dt=" + ",".join(f"{d:g}" for d in it.residual_dts)))

    components = []
    for s in states:
        for name, value in s.summary()["components_l1l1"].items():
            components.append([s.q, name, value])

    fields = {}
    for t in cfg.output.dump_fields:
        for s in states:
            n = int(np.argmin(np.abs(s.times - t)))
            stamp = f"{s.times[n]:.6g}"
            fields[f"q{s.q}_v1_t{stamp}.bin"] = (s.v1[n], float(s.times[n]))
            fields[f"q{s.q}_v2_t{stamp}.bin"] = (s.v2[n], float(s.times[n]))
            fields[f"q{s.q}_stress_t{stamp}.bin"] = (s.stress[n], float(s.times[n]))

    results = {
        "params": params.to_dict(),
        "schedule": params.schedule(it.q_max),
        "stopping": path.stopping,
        "horizon": states[0].horizon,
        "levels": [s.summary() for s in states],
        "energy_study": energy_rows,
        "residual_study": residual_study,
    }
    report = _report(cfg, results, checks, constraints=constraint_report(params, it.q_max), ledger=ledger)
    log_manager.record_ledger([row.as_row() for row in ledger])
    return RunOutcome(
        report=report,
        tables={
            "ledger.csv": (LEDGER_COLUMNS, ledger_rows(ledger)),
            "components.csv": (("level", "component", "l1l1"), components),
        },
        fields=fields,
        ledger_text=report_render(ledger),
    )


# ==================== 调度与输出 ====================

COMMAND_HANDLERS: dict[str, Callable[[RunConfig], RunOutcome]] = {
    "noise-ensemble": run_noise_ensemble,
    "jets-verify": run_jets_verify,
    "iterate": run_iterate,
    "holder-sweep": run_holder_sweep,
    "contraction-demo": run_contraction_demo,
}


def write_outputs(outcome: RunOutcome, out_dir: Path) -> None:
    write_report(out_dir / REPORT_FILENAME, outcome.report)
    for name, (columns, rows) in outcome.tables.items():
        write_csv(out_dir / name, columns, rows)
    for name, (f, t) in outcome.fields.items():
        dump_field(f, out_dir / "fields" / name, time=t)  # type: ignore[arg-type]


def run(cfg: RunConfig) -> RunOutcome:
    """
    在输出目录锁内执行子命令并写出全部产物

    Raises:
        OutputLockedError: 锁等待超时
        LabError / ValueError: 由子命令抛出
    """
    out_dir = Path(cfg.output.directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(out_dir / OUTPUT_LOCK_FILENAME), timeout=OUTPUT_LOCK_TIMEOUT)
    try:
        with lock:
            if cfg.output.persist_events:
                log_manager.attach(str(out_dir))
            started = time.perf_counter()
            try:
                log_manager.log_event(LogLevel.INFO, "run", f"开始 {cfg.command}", component="runner")
                outcome = COMMAND_HANDLERS[cfg.command](cfg)
                write_outputs(outcome, out_dir)
                log_manager.log_event(
                    LogLevel.INFO, "run",
                    f"{cfg.command} 完成，{sum(c.passed for c in outcome.report.checks)}/"
                    f"{len(outcome.report.checks)} 项检查通过",
                    component="runner", duration_ms=(time.perf_counter() - started) * 1000.0,
                )
                return outcome
            finally:
                log_manager.detach()
    except Timeout:
        raise OutputLockedError(f"输出目录 {out_dir} 正被另一个运行占用")


__all__ = ["COMMAND_HANDLERS", "OutputLockedError", "RunOutcome", "run"]
