"""
随机对象：Leray 投影的随机卷积 z、磨光 z_eps、Wick 平方与停时

z 的每个非零模按 Ornstein-Uhlenbeck 精确更新：
    z(k, t+dt) = e^{-4 pi^2 |k|^2 dt} z(k, t) + P(k) xi,
    E|xi|^2 = (1 - e^{-8 pi^2 |k|^2 dt}) / (8 pi^2 |k|^2)（每个分量）
P(k) = Id - k k^T / |k|^2。边际方差与 dt 无关。
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Any, Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special

from .constants import DEFAULT_ENSEMBLE_WORKERS, HOLDER_LAG_WINDOW, MOLLIFIER_QUADRATURE_POINTS
from .errors import NumericalError
from .harmonic import dyadic_partition, holder_norm
from .heat import sample_times
from .logger import LogLevel, log_manager
from .torus_field import (
    TWO_PI,
    AliasingError,
    Grid,
    SymTensorField,
    TimeSeriesField,
    VectorField,
    hermitian_part,
    norm,
    sym_outer,
)


class PathTooShortError(NumericalError):
    def __init__(self, message: str):
        super().__init__(message, component="noise")


# ==================== 配置 ====================

@dataclass(frozen=True)
class NoiseConfig:
    seed: int
    mode_cutoff: int
    dt: float
    include_zero_mode: bool = False
    mollifier_scale: float = 0.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt 必须为正，当前值: {self.dt}")
        if self.mode_cutoff < 1:
            raise ValueError("mode_cutoff 至少为 1")
        if self.mollifier_scale < 0:
            raise ValueError("mollifier_scale 不能为负")

    @classmethod
    def from_section(cls, section: Any, seed: int) -> "NoiseConfig":
        return cls(
            seed=seed,
            mode_cutoff=section.mode_cutoff,
            dt=section.dt,
            include_zero_mode=section.include_zero_mode,
            mollifier_scale=section.mollifier_scale,
        )

    def with_seed(self, seed: int) -> "NoiseConfig":
        return NoiseConfig(seed, self.mode_cutoff, self.dt, self.include_zero_mode, self.mollifier_scale)

    def with_scale(self, eps: float) -> "NoiseConfig":
        return NoiseConfig(self.seed, self.mode_cutoff, self.dt, self.include_zero_mode, eps)

    def check_grid(self, grid: Grid) -> None:
        if self.mode_cutoff > grid.n // 2 - 1:
            raise AliasingError(f"噪声截断 {self.mode_cutoff} 超出 N={grid.n} 的分辨带", component="noise")


@dataclass(frozen=True)
class StoppingParams:
    level: float
    kappa: float
    p: float

    def __post_init__(self):
        if self.level < 2:
            raise ValueError(f"停时水平 L 至少为 2，当前值: {self.level}")
        if not (1.0 < self.p < 2.0):
            raise ValueError(f"p 必须在 (1, 2) 中，当前值: {self.p}")
        if not (0.0 < self.kappa < self.kappa0):
            raise ValueError(f"需要 0 < kappa < kappa_0 = {self.kappa0:.4f}，当前值: {self.kappa}")

    @property
    def kappa0(self) -> float:
        """kappa_0 = (1 - 1/p) ^ (2/p - 1)"""
        return min(1.0 - 1.0 / self.p, 2.0 / self.p - 1.0)

    @classmethod
    def from_section(cls, section: Any) -> "StoppingParams":
        return cls(level=section.level, kappa=section.kappa, p=section.p)


@dataclass
class StoppingTimes:
    T_L: float
    T_L1: float
    T_L2: float
    T_L3: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class NoisePath:
    """一条噪声实现；renorm 形状 (nt, 2, 2)"""
    z: TimeSeriesField
    z_eps: TimeSeriesField
    renorm: np.ndarray
    wick: Optional[TimeSeriesField] = None
    stopping: Optional[StoppingTimes] = None
    seed: Optional[int] = None
    eps: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return self.z.times

    @property
    def grid(self) -> Grid:
        return self.z.grid


# ==================== 种子与磨光 ====================

def derive_seed(master: int, index: int) -> int:
    """路径种子：SeedSequence([master, index]) 的第一个 64 位状态"""
    state = np.random.SeedSequence([int(master), int(index)]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def _bump_radial(r: np.ndarray) -> np.ndarray:
    out = np.zeros_like(r)
    inside = r < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


@lru_cache(maxsize=64)
def _radial_transform(scaled: tuple) -> np.ndarray:
    r = np.linspace(0.0, 1.0, MOLLIFIER_QUADRATURE_POINTS)
    weight = _bump_radial(r) * r
    mass = integrate.simpson(weight, x=r)
    s = np.asarray(scaled, dtype=np.float64)
    kernel = special.j0(TWO_PI * s[:, None] * r[None, :]) * weight[None, :]
    return integrate.simpson(kernel, x=r, axis=1) / mass


def mollifier_symbol(grid: Grid, eps: float) -> np.ndarray:
    """标准径向鼓包 rho_eps 的 Fourier 系数 m(eps k)，m(0) = 1"""
    if eps < 0:
        raise ValueError("eps 不能为负")
    if eps == 0:
        return np.ones_like(grid.k_abs)
    values, inverse = np.unique(np.round(eps * grid.k_abs, 14), return_inverse=True)
    return _radial_transform(tuple(values.tolist()))[inverse].reshape(grid.k_abs.shape)


def mollify_noise(z: TimeSeriesField, eps: float) -> TimeSeriesField:
    if eps == 0:
        return z
    return z.with_coeffs(z.coeffs * mollifier_symbol(z.grid, eps))


# ==================== 采样 ====================

def _mode_mask(grid: Grid, cfg: NoiseConfig) -> np.ndarray:
    mask = grid.k_inf <= cfg.mode_cutoff
    if not cfg.include_zero_mode:
        mask = mask & (grid.k_sq > 0)
    return mask


def _step_variance(grid: Grid, dt: float) -> np.ndarray:
    two_lam = 2.0 * TWO_PI ** 2 * grid.k_sq
    safe = np.where(two_lam > 0, two_lam, 1.0)
    return np.where(two_lam > 0, -np.expm1(-two_lam * dt) / safe, dt)


def _projector(grid: Grid) -> np.ndarray:
    """P(k)_{ij}，零模取单位阵；形状 (2, 2, N, N)"""
    k = np.stack([grid.k1, grid.k2]).astype(np.float64)
    safe = np.where(grid.k_sq > 0, grid.k_sq, 1.0)
    proj = np.eye(2)[:, :, None, None] - k[:, None] * k[None, :] / safe
    proj[:, :, grid.k_sq == 0] = np.eye(2)[:, :, None]
    return proj


def sample_z(cfg: NoiseConfig, grid: Grid, horizon: float) -> TimeSeriesField:
    """[0, horizon] 上的 z，z(0) = 0，由 cfg.seed 完全确定"""
    if horizon <= 0:
        raise ValueError("horizon 必须为正")
    cfg.check_grid(grid)
    times = sample_times(0.0, horizon, cfg.dt)
    rng = np.random.default_rng(cfg.seed)
    mask = _mode_mask(grid, cfg)
    damp = np.exp(-TWO_PI ** 2 * grid.k_sq * cfg.dt)
    amp = np.sqrt(0.5 * _step_variance(grid, cfg.dt)) * mask
    proj = _projector(grid)

    out = np.zeros((times.size, 2, grid.n, grid.n), dtype=np.complex128)
    shape = (2, grid.n, grid.n)
    for m in range(1, times.size):
        xi = amp * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        xi = np.sqrt(2.0) * hermitian_part(xi)
        xi = np.einsum("ijab,jab->iab", proj, xi)
        out[m] = damp * out[m - 1] + xi
    return TimeSeriesField(times, VectorField, grid, out)


def renorm_constant(cfg: NoiseConfig, grid: Grid, t: float) -> np.ndarray:
    """C_eps(t) = E[z_eps (x) z_eps(t)]，空间常数 2x2 矩阵"""
    if t < 0:
        raise ValueError(f"t 必须非负，当前值: {t}")
    cfg.check_grid(grid)
    mask = _mode_mask(grid, cfg)
    two_lam = 2.0 * TWO_PI ** 2 * grid.k_sq
    safe = np.where(two_lam > 0, two_lam, 1.0)
    var = np.where(two_lam > 0, -np.expm1(-two_lam * t) / safe, t)
    weight = mask * var * mollifier_symbol(grid, cfg.mollifier_scale) ** 2
    return np.einsum("ijab,ab->ij", _projector(grid), weight)


def renorm_series(cfg: NoiseConfig, grid: Grid, times: Sequence[float]) -> np.ndarray:
    return np.stack([renorm_constant(cfg, grid, max(float(t), 0.0)) for t in times])


def wick_square(z_eps: TimeSeriesField, renorm: Optional[np.ndarray]) -> TimeSeriesField:
    """z^{:2:}(t) = z_eps (x) z_eps(t) - C_eps(t)"""
    if renorm is None:
        raise ValueError("缺少重整化常数 C_eps(t)")
    renorm = np.asarray(renorm, dtype=np.float64)
    if renorm.shape != (len(z_eps), 2, 2):
        raise ValueError(f"重整化常数形状应为 ({len(z_eps)}, 2, 2)，实际为 {renorm.shape}")
    grid = z_eps.grid
    fields = []
    for f, c in zip(z_eps, renorm):
        shift = SymTensorField.constant(grid, (c[0, 0], 0.5 * (c[0, 1] + c[1, 0]), c[1, 1]))
        fields.append(sym_outer(f, f) - shift)  # type: ignore[arg-type]
    return TimeSeriesField.from_fields(z_eps.times, fields)


def sample_path(cfg: NoiseConfig, grid: Grid, horizon: float) -> NoisePath:
    """z、z_eps、C_eps(t) 与 Wick 平方"""
    z = sample_z(cfg, grid, horizon)
    z_eps = mollify_noise(z, cfg.mollifier_scale)
    renorm = renorm_series(cfg, grid, z.times)
    return NoisePath(z=z, z_eps=z_eps, renorm=renorm, wick=wick_square(z_eps, renorm),
                     seed=cfg.seed, eps=cfg.mollifier_scale)


def inject_path(times: Sequence[float], z_values: Sequence[VectorField],
                renorm: Optional[np.ndarray] = None) -> NoisePath:
    """确定性替身路径，C 默认取 0"""
    z = TimeSeriesField.from_fields(times, z_values)
    c = np.zeros((len(z), 2, 2)) if renorm is None else np.asarray(renorm, dtype=np.float64)
    return NoisePath(z=z, z_eps=z, renorm=c, wick=wick_square(z, c))


def zero_path(grid: Grid, times: Sequence[float]) -> NoisePath:
    z = TimeSeriesField.zeros(times, VectorField, grid)
    return inject_path(z.times, list(z))


# ==================== 停时 ====================

def _block_samples(series: TimeSeriesField) -> np.ndarray:
    """每个时刻每个 LP 块的物理采样，形状 (nt, nb, 分量数, N, N)"""
    part = dyadic_partition(series.grid)
    symbols = np.stack([part.block_symbol(j) for j in part.indices])
    hat = series.coeffs[:, None] * symbols[None, :, None]
    return np.fft.ifft2(hat, norm="forward").real


def _block_weights(series: TimeSeriesField, alpha: float) -> np.ndarray:
    part = dyadic_partition(series.grid)
    return 2.0 ** (np.arange(-1, part.j_max + 1, dtype=np.float64) * alpha)


def _holder_space_norms(blocks: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """blocks 形状 (..., nb, 分量数, N, N) 的 C^alpha 范数"""
    mag = np.sqrt(np.sum(blocks ** 2, axis=-3))
    return np.max(np.max(mag, axis=(-2, -1)) * weights, axis=-1)


def holder_time_seminorm(series: TimeSeriesField, exponent: float, alpha: float,
                         window: int = HOLDER_LAG_WINDOW) -> np.ndarray:
    """
    [0, t_m] 上离散 Hölder 商的累积上确界：
        max_{i<j<=m, j-i<=window} ||z(t_j) - z(t_i)||_{C^alpha} / (t_j - t_i)^exponent
    """
    nt = len(series)
    running = np.zeros(nt)
    if nt < 2:
        return running
    blocks = _block_samples(series)
    weights = _block_weights(series, alpha)
    best_at = np.zeros(nt)
    for lag in range(1, min(window, nt - 1) + 1):
        diffs = _holder_space_norms(blocks[lag:] - blocks[:-lag], weights)
        quot = diffs / (lag * series.dt) ** exponent
        best_at[lag:] = np.maximum(best_at[lag:], quot)
    return np.maximum.accumulate(best_at)


def _first_crossing(times: np.ndarray, values: np.ndarray, threshold: float, cap: float) -> float:
    hit = np.nonzero(values >= threshold)[0]
    if hit.size == 0:
        return float(cap)
    return float(min(times[hit[0]], cap))


def stopping_time(path: NoisePath, sp: StoppingParams, window: int = HOLDER_LAG_WINDOW) -> StoppingTimes:
    """
    T_L = T_L^1 ^ T_L^2 ^ T_L^3，各自在 L 处截断。

    Raises:
        PathTooShortError: 路径没有覆盖 [0, L]
    """
    times = path.times
    level = sp.level
    if times[-1] < level - 1e-9 * max(1.0, level):
        raise PathTooShortError(f"路径只覆盖到 t={times[-1]:.4g}，停时需要 [0, {level}]")
    keep = times <= level + 1e-12
    z = path.z.restrict(float(times[0]), level)
    wick = path.wick.restrict(float(times[0]), level) if path.wick is not None else None
    t = times[keep]

    root4 = level ** 0.25
    blocks = _block_samples(z)
    k, k0 = sp.kappa, sp.kappa0
    t1 = _first_crossing(t, _holder_space_norms(blocks, _block_weights(z, -k)), root4, level)

    crossings = []
    for exponent, alpha in ((k0 / 2.0, -k - k0), ((1.0 - 2 * k - k0) / 4.0, -0.5 + k0 / 2.0)):
        sup = np.maximum.accumulate(_holder_space_norms(blocks, _block_weights(z, alpha)))
        total = sup + holder_time_seminorm(z, exponent, alpha, window)
        crossings.append(_first_crossing(t, total, root4, level))
    t2 = min(crossings)

    if wick is None:
        t3 = float(level)
    else:
        wick_norms = np.array([holder_norm(w, -2 * k) for w in wick])
        t3 = _first_crossing(t, wick_norms, level ** 0.5, level)

    result = StoppingTimes(T_L=min(t1, t2, t3), T_L1=t1, T_L2=t2, T_L3=t3)
    path.stopping = result
    log_manager.log_event(LogLevel.INFO, "stopping_time",
                          f"L={level} T_L={result.T_L:.4g} (T1={t1:.4g}, T2={t2:.4g}, T3={t3:.4g})",
                          component="noise", value=result.T_L)
    return result


# ==================== 集合 ====================

def sample_ensemble(cfg: NoiseConfig, grid: Grid, horizon: float, n_paths: int,
                    workers: int = DEFAULT_ENSEMBLE_WORKERS,
                    reducer: Optional[Callable[[int, NoisePath], Any]] = None) -> list:
    """
    并行采样 n_paths 条路径，第 i 条使用 derive_seed(cfg.seed, i)。
    结果按路径编号排序；给出 reducer 时只保留 reducer(i, path) 的返回值。
    """
    def run(i: int):
        path = sample_path(cfg.with_seed(derive_seed(cfg.seed, i)), grid, horizon)
        return path if reducer is None else reducer(i, path)

    start = time.time()
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        results = list(executor.map(run, range(n_paths)))
    log_manager.log_event(LogLevel.INFO, "ensemble", f"{n_paths} 条路径采样完成", component="noise",
                          duration_ms=(time.time() - start) * 1000)
    return results


@dataclass
class EnsembleRow:
    path_id: int
    t: float
    norm_kind: str
    value: float

    def as_row(self) -> list:
        return [self.path_id, self.t, self.norm_kind, self.value]


ENSEMBLE_COLUMNS = ("path_id", "t", "norm_kind", "value")


def path_norms(path_id: int, path: NoisePath, times: Sequence[float], kappa: float) -> list[EnsembleRow]:
    """一条路径在给定时刻的范数行"""
    rows = []
    for t in times:
        z = path.z.at(t)
        rows.append(EnsembleRow(path_id, float(t), "z_C^-kappa", holder_norm(z, -kappa)))
        rows.append(EnsembleRow(path_id, float(t), "z_L2", norm(z, "Lp", p=2.0)))
        rows.append(EnsembleRow(path_id, float(t), "z_eps_C^-kappa", holder_norm(path.z_eps.at(t), -kappa)))
        if path.wick is not None:
            rows.append(EnsembleRow(path_id, float(t), "wick_C^-2kappa", holder_norm(path.wick.at(t), -2 * kappa)))
    if path.stopping is not None:
        for name, value in path.stopping.to_dict().items():
            rows.append(EnsembleRow(path_id, float(path.times[-1]), name, float(value)))
    return rows


def ensemble_rows(paths: Sequence[NoisePath], times: Sequence[float], kappa: float) -> list[EnsembleRow]:
    rows: list[EnsembleRow] = []
    for i, path in enumerate(paths):
        rows.extend(path_norms(i, path, times, kappa))
    return rows


def wick_cauchy_trend(z: TimeSeriesField, cfg: NoiseConfig, eps_values: Sequence[float], t: float,
                      kappa: float) -> list[dict]:
    """同一条 z 上相邻 eps 的 ||z^{:2:}_{2 eps} - z^{:2:}_{eps}||_{C^{-2 kappa}}，eps 依次减半"""
    grid = z.grid
    zt = z.restrict(t, t)
    out = []
    for eps in eps_values:
        pair = []
        for scale in (2.0 * eps, eps):
            z_eps = mollify_noise(zt, scale)
            c = renorm_series(cfg.with_scale(scale), grid, zt.times)
            pair.append(wick_square(z_eps, c)[0])
        out.append({"eps": float(eps), "difference": holder_norm(pair[0] - pair[1], -2 * kappa)})
    return out


@dataclass
class LevelSummary:
    level: float
    median: float
    values: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def stopping_time_sweep(cfg: NoiseConfig, grid: Grid, levels: Sequence[float], n_paths: int, kappa: float,
                        p: float, workers: int = DEFAULT_ENSEMBLE_WORKERS) -> list[LevelSummary]:
    """每条路径采样到 max(L)，对每个 L 计算 T_L 并取中位数"""
    horizon = float(max(levels))

    def reducer(_: int, path: NoisePath) -> list[float]:
        return [stopping_time(path, StoppingParams(level, kappa, p)).T_L for level in levels]

    values = np.array(sample_ensemble(cfg, grid, horizon, n_paths, workers, reducer))
    return [LevelSummary(level=float(level), median=float(np.median(values[:, i])), values=values[:, i].tolist())
            for i, level in enumerate(levels)]
