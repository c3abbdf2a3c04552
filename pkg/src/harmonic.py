"""
Littlewood-Paley 分解、Besov 范数、Bony 仿积与局部化算子

二进剖分：chi(r) 在 r <= 3/4 时为 1，r >= 4/3 时为 0，中间用 e^{-1/s} 型光滑过渡。
块 -1 的符号为 chi(|k|)，块 j >= 0 的符号为 chi(2^{-j-1}|k|) - chi(2^{-j}|k|)，
因此 sum_{j<=J} Delta_j 的符号是 chi(2^{-J-1}|k|)，单位分解逐模精确。

所有不等式型估计只报告测得的常数，不断言具体数值。
"""

from dataclasses import asdict, dataclass
from enum import Enum
from functools import cached_property, lru_cache
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import stats

from .constants import LP_INNER_RADIUS, LP_OUTER_RADIUS
from .torus_field import (
    TWO_PI,
    Grid,
    ScalarField,
    SpectralField,
    TensorField,
    VectorField,
    from_padded,
    helmholtz_project,
    lp_from_magnitude,
    padded_samples,
    pointwise_magnitude,
)


# ==================== 二进剖分 ====================

def _transition(s: np.ndarray) -> np.ndarray:
    """光滑阶跃：s <= 0 为 0，s >= 1 为 1"""
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros_like(s)
    out[s >= 1.0] = 1.0
    mid = (s > 0.0) & (s < 1.0)
    a = np.exp(-1.0 / s[mid])
    b = np.exp(-1.0 / (1.0 - s[mid]))
    out[mid] = a / (a + b)
    return out


def lp_cutoff(r) -> np.ndarray:
    """低频截断剖面 chi(r)"""
    r = np.asarray(r, dtype=np.float64)
    return 1.0 - _transition((r - LP_INNER_RADIUS) / (LP_OUTER_RADIUS - LP_INNER_RADIUS))


def lp_annulus(r) -> np.ndarray:
    """环形剖面 phi(r) = chi(r/2) - chi(r)，支撑在 [3/4, 8/3]"""
    return lp_cutoff(np.asarray(r) / 2.0) - lp_cutoff(r)


@dataclass(frozen=True)
class DyadicPartition:
    """网格上的二进单位分解"""
    grid: Grid

    @cached_property
    def j_max(self) -> int:
        kmax = float(np.max(self.grid.k_abs))
        j = -1
        while np.any(lp_cutoff(2.0 ** (-j - 1) * kmax) < 1.0):
            j += 1
        return j

    @property
    def indices(self) -> range:
        return range(-1, self.j_max + 1)

    def low_symbol(self, J: int) -> np.ndarray:
        """Delta_{<=J} 的符号"""
        if J <= -2:
            return np.zeros_like(self.grid.k_abs)
        return lp_cutoff(2.0 ** (-J - 1) * self.grid.k_abs)

    def block_symbol(self, j: int) -> np.ndarray:
        if j < -1 or j > self.j_max:
            raise ValueError(f"块指标 j 必须在 [-1, {self.j_max}] 中，当前值: {j}")
        return self._symbols[j + 1]

    @cached_property
    def _symbols(self) -> list[np.ndarray]:
        out = [lp_cutoff(self.grid.k_abs)]
        for j in range(0, self.j_max + 1):
            out.append(lp_cutoff(2.0 ** (-j - 1) * self.grid.k_abs) - lp_cutoff(2.0 ** (-j) * self.grid.k_abs))
        return out

    def blocks_containing(self, k_abs: float) -> list[int]:
        """|k| 处剖面非零的块"""
        return [j for j in self.indices
                if float(self._profile(j, k_abs)) != 0.0]

    def _profile(self, j: int, r: float) -> float:
        if j == -1:
            return float(lp_cutoff(r))
        return float(lp_cutoff(2.0 ** (-j - 1) * r) - lp_cutoff(2.0 ** (-j) * r))

    def weights_at(self, k_abs: float) -> dict[int, float]:
        return {j: self._profile(j, k_abs) for j in self.blocks_containing(k_abs)}


@lru_cache(maxsize=16)
def dyadic_partition(grid: Grid) -> DyadicPartition:
    return DyadicPartition(grid)


def lp_block(f: SpectralField, j: int) -> SpectralField:
    """Delta_j f"""
    return f.apply_symbol(dyadic_partition(f.grid).block_symbol(j))


def lp_blocks(f: SpectralField) -> list[SpectralField]:
    part = dyadic_partition(f.grid)
    return [lp_block(f, j) for j in part.indices]


class Side(str, Enum):
    LOW = "<="
    HIGH = ">"


def localize(f: SpectralField, J: int, side: Union[Side, str] = Side.LOW) -> SpectralField:
    """Delta_{<=J} f 或 Delta_{>J} f，二者之和精确等于 f"""
    side = Side(side)
    low = f.apply_symbol(dyadic_partition(f.grid).low_symbol(J))
    if side is Side.LOW:
        return low
    return f - low


# ==================== Besov 范数 ====================

@dataclass(frozen=True)
class BesovIndex:
    alpha: float
    p: float = np.inf
    q: float = np.inf

    def __post_init__(self):
        if not (self.p >= 1.0 and self.q >= 1.0):
            raise ValueError(f"Besov 指标要求 p, q >= 1，当前值: p={self.p}, q={self.q}")


def block_norms(f: SpectralField, p: float) -> np.ndarray:
    """(||Delta_j f||_{L^p})_{j >= -1}"""
    return np.array([lp_from_magnitude(pointwise_magnitude(b), p) for b in lp_blocks(f)])


def besov_norm(f: SpectralField, idx: BesovIndex) -> float:
    """(sum_j 2^{j alpha q} ||Delta_j f||_{L^p}^q)^{1/q}，块 -1 的权重为 2^{-alpha}"""
    part = dyadic_partition(f.grid)
    js = np.arange(-1, part.j_max + 1, dtype=np.float64)
    weighted = 2.0 ** (js * idx.alpha) * block_norms(f, idx.p)
    if np.isinf(idx.q):
        return float(np.max(weighted))
    return float(np.sum(weighted ** idx.q) ** (1.0 / idx.q))


def holder_norm(f: SpectralField, alpha: float) -> float:
    """C^alpha = B^alpha_{inf,inf}"""
    return besov_norm(f, BesovIndex(alpha, np.inf, np.inf))


def besov_sobolev_sandwich(grid: Grid, alpha: float) -> tuple[float, float]:
    """
    H^alpha = B^alpha_{2,2} 的逐模等价常数 [c_lo, c_hi]：
    对任意场都有 c_lo <= ||f||_{B^alpha_{2,2}} / ||f||_{H^alpha} <= c_hi。
    """
    part = dyadic_partition(grid)
    w = np.zeros_like(grid.k_abs)
    for j in part.indices:
        w = w + 2.0 ** (2 * j * alpha) * part.block_symbol(j) ** 2
    h = (1.0 + TWO_PI ** 2 * grid.k_sq) ** alpha
    ratio = np.sqrt(w[grid.band] / h[grid.band])
    return float(np.min(ratio)), float(np.max(ratio))


# ==================== 仿积 ====================

class ParaKind(str, Enum):
    PREC = "prec"
    SUCC = "succ"
    RES = "res"
    PRECEQ = "preceq"
    SUCCEQ = "succeq"


def _padded_blocks(f: SpectralField) -> list[np.ndarray]:
    """各块在 3/2 补零网格上的物理采样"""
    band = f.band_limited()
    return [padded_samples(b) for b in lp_blocks(band)]


def _prec(bf: Sequence[np.ndarray], bg: Sequence[np.ndarray]) -> np.ndarray:
    out = np.zeros_like(bg[0])
    low = np.zeros_like(bf[0])
    for b in range(len(bg)):
        # low = sum_{i <= j-2} Delta_i f
        if b >= 2:
            low = low + bf[b - 2]
            out = out + low * bg[b]
    return out


def _res(bf: Sequence[np.ndarray], bg: Sequence[np.ndarray]) -> np.ndarray:
    out = np.zeros_like(bg[0])
    n = len(bg)
    for b in range(n):
        near = bf[b]
        if b > 0:
            near = near + bf[b - 1]
        if b + 1 < n:
            near = near + bf[b + 1]
        out = out + near * bg[b]
    return out


def _combine(bf: Sequence[np.ndarray], bg: Sequence[np.ndarray], kind: ParaKind) -> np.ndarray:
    if kind is ParaKind.PREC:
        return _prec(bf, bg)
    if kind is ParaKind.SUCC:
        return _prec(bg, bf)
    if kind is ParaKind.RES:
        return _res(bf, bg)
    if kind is ParaKind.PRECEQ:
        return _res(bf, bg) + _prec(bf, bg)
    return _res(bf, bg) + _prec(bg, bf)


def paraproduct(f: ScalarField, g: ScalarField, kind: Union[ParaKind, str]) -> ScalarField:
    """
    Bony 仿积 f < g, f > g, f o g 及 <=、>= 组合。
    在补零网格上计算，三者之和等于去混叠乘积。
    """
    if f.grid != g.grid:
        raise ValueError("网格不一致")
    kind = ParaKind(kind)
    bf = [b[0] for b in _padded_blocks(f)]
    bg = [b[0] for b in _padded_blocks(g)]
    return from_padded(f.grid, _combine(bf, bg, kind), ScalarField)  # type: ignore


def tensor_paraproduct(f: VectorField, g: VectorField, kind: Union[ParaKind, str]) -> TensorField:
    """逐分量 (f_i op g_j)，存储顺序 (11, 12, 21, 22)"""
    if f.grid != g.grid:
        raise ValueError("网格不一致")
    kind = ParaKind(kind)
    bf = _padded_blocks(f)
    bg = _padded_blocks(g)
    comps = []
    for i in range(2):
        for j in range(2):
            comps.append(_combine([b[i] for b in bf], [b[j] for b in bg], kind))
    return from_padded(f.grid, np.stack(comps), TensorField)  # type: ignore


# ==================== 估计监控 ====================

@dataclass
class BoundReport:
    """lhs <= C * rhs 型估计的测量结果"""
    name: str
    lhs: float
    rhs: float

    @property
    def constant(self) -> float:
        if self.rhs == 0.0:
            return 0.0 if self.lhs == 0.0 else float("inf")
        return self.lhs / self.rhs

    def to_dict(self) -> dict:
        data = asdict(self)
        data["constant"] = self.constant
        return data


def localization_bound_check(f: SpectralField, J: int, alpha: float, beta: float,
                             gamma: Optional[float] = None) -> list[BoundReport]:
    """
    局部化估计：
    ||Delta_{>J} f||_{C^alpha} <~ 2^{-J(beta-alpha)} ||f||_{C^beta}
    ||Delta_{<=J} f||_{C^gamma} <~ 2^{J(gamma-beta)} ||f||_{C^beta}
    """
    if alpha > beta:
        raise ValueError("需要 alpha <= beta")
    gamma = beta if gamma is None else gamma
    if gamma < beta:
        raise ValueError("需要 beta <= gamma")
    fb = holder_norm(f, beta)
    high = BoundReport(
        name="localize_high",
        lhs=holder_norm(localize(f, J, Side.HIGH), alpha),
        rhs=2.0 ** (-J * (beta - alpha)) * fb,
    )
    low = BoundReport(
        name="localize_low",
        lhs=holder_norm(localize(f, J, Side.LOW), gamma),
        rhs=2.0 ** (J * (gamma - beta)) * fb,
    )
    return [high, low]


def _holder_exponent(p1: float, p2: float) -> float:
    inv = (0.0 if np.isinf(p1) else 1.0 / p1) + (0.0 if np.isinf(p2) else 1.0 / p2)
    if inv > 1.0:
        raise ValueError("需要 1/p1 + 1/p2 <= 1")
    return np.inf if inv == 0.0 else 1.0 / inv


def paraproduct_bound_check(f: ScalarField, g: ScalarField, alpha: float, beta: float,
                            p1: float = np.inf, p2: float = np.inf, q: float = np.inf) -> list[BoundReport]:
    """
    仿积估计（1/p = 1/p1 + 1/p2）：
    ||f < g||_{B^beta_{p,q}} <~ ||f||_{L^p1} ||g||_{B^beta_{p2,q}}
    alpha < 0 时 ||f < g||_{B^{alpha+beta}_{p,q}} <~ ||f||_{B^alpha_{p1,q}} ||g||_{B^beta_{p2,q}}
    alpha + beta > 0 时 ||f o g||_{B^{alpha+beta}_{p,q}} <~ ||f||_{B^alpha_{p1,q}} ||g||_{B^beta_{p2,q}}
    """
    p = _holder_exponent(p1, p2)
    prec = paraproduct(f, g, ParaKind.PREC)
    g_beta = besov_norm(g, BesovIndex(beta, p2, q))
    f_lp = lp_from_magnitude(pointwise_magnitude(f), p1)
    reports = [BoundReport("paraproduct_lp", besov_norm(prec, BesovIndex(beta, p, q)), f_lp * g_beta)]
    f_alpha = besov_norm(f, BesovIndex(alpha, p1, q))
    if alpha < 0:
        reports.append(BoundReport("paraproduct_negative",
                                   besov_norm(prec, BesovIndex(alpha + beta, p, q)), f_alpha * g_beta))
    if alpha + beta > 0:
        res = paraproduct(f, g, ParaKind.RES)
        reports.append(BoundReport("resonant",
                                   besov_norm(res, BesovIndex(alpha + beta, p, q)), f_alpha * g_beta))
    return reports


def embedding_check(f: SpectralField, alpha: float, p1: float, p2: float, q: float = np.inf) -> BoundReport:
    """B^alpha_{p1,q} 嵌入 B^{alpha - 2(1/p1 - 1/p2)}_{p2,q}，p1 <= p2"""
    if p1 > p2:
        raise ValueError("需要 p1 <= p2")
    inv = lambda p: 0.0 if np.isinf(p) else 1.0 / p
    loss = 2.0 * (inv(p1) - inv(p2))
    return BoundReport(
        name="embedding",
        lhs=besov_norm(f, BesovIndex(alpha - loss, p2, q)),
        rhs=besov_norm(f, BesovIndex(alpha, p1, q)),
    )


def helmholtz_bound_check(v: VectorField, alpha: float, p: float = np.inf) -> BoundReport:
    """||P_H v||_{B^alpha_{p,inf}} 与 ||v||_{B^alpha_{p,inf}} 之比"""
    idx = BesovIndex(alpha, p, np.inf)
    return BoundReport("helmholtz", besov_norm(helmholtz_project(v), idx), besov_norm(v, idx))


# ==================== 改进 Hölder 不等式 ====================

@dataclass
class HolderGap:
    sigma: int
    p: float
    lhs_gap: float
    bound: float

    def to_dict(self) -> dict:
        return asdict(self)


def _cell_points(m: int, n: int, sigma: int, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """[m/sigma, n/sigma] 的中点求积节点，以及单位胞内的相对坐标"""
    u = (np.arange(resolution) + 0.5) / resolution
    cells = np.arange(m, n)
    t = ((cells[:, None] + u[None, :]) / sigma).ravel()
    return t, u


def _lipschitz_norm(values: np.ndarray, h: float) -> float:
    sup = float(np.max(np.abs(values)))
    if values.ndim == 1:
        grads = [np.diff(values) / h]
    else:
        grads = [np.diff(values, axis=0) / h, np.diff(values, axis=1) / h]
    lip = max(float(np.max(np.abs(g))) if g.size else 0.0 for g in grads)
    return sup + lip


def improved_holder_check(a: Callable, f: Callable, sigma: int, m: int, n: int, p: float = 1.0,
                          dim: int = 1, resolution: int = 64, mean_zero_form: bool = False) -> HolderGap:
    """
    ||a f(sigma .)||_{L^p(Q)} 与 ||a||_{L^p(Q)} ||f||_{L^p(T^d)} 之差，Q = [m/sigma, n/sigma]^d。

    mean_zero_form=True 时（仅 d = 1，f 均值为零）改为 |int_Q a f(sigma t) dt|，
    上界为 (n-m)/sigma^2 ||a||_{C^{0,1}} ||f||_{L^1}。

    Args:
        a: 光滑函数，接受 d 个坐标数组
        f: 1-周期函数，接受 d 个坐标数组
        resolution: 每个 1/sigma 胞内每个方向的求积点数
    """
    if sigma < 1:
        raise ValueError("sigma 必须是正整数")
    if m >= n:
        raise ValueError(f"空窗口: m={m}, n={n}")
    if dim not in (1, 2):
        raise ValueError("dim 只能是 1 或 2")
    t, u = _cell_points(m, n, sigma, resolution)
    h = 1.0 / (sigma * resolution)
    width = (n - m) / sigma

    if dim == 1:
        a_vals = np.asarray(a(t), dtype=np.float64)
        f_cell = np.asarray(f(u), dtype=np.float64)
        f_vals = np.tile(f_cell, n - m)
        vol_h = h
        lip = _lipschitz_norm(a_vals, h)
    else:
        t1, t2 = np.meshgrid(t, t, indexing="ij")
        u1, u2 = np.meshgrid(u, u, indexing="ij")
        a_vals = np.asarray(a(t1, t2), dtype=np.float64)
        f_cell = np.asarray(f(u1, u2), dtype=np.float64)
        f_vals = np.tile(f_cell, (n - m, n - m))
        vol_h = h * h
        lip = _lipschitz_norm(a_vals, h)

    if mean_zero_form:
        if dim != 1:
            raise ValueError("均值为零的积分形式只支持 d = 1")
        lhs = abs(float(np.sum(a_vals * f_vals) * vol_h))
        bound = (n - m) / sigma ** 2 * lip * float(np.mean(np.abs(f_cell)))
        return HolderGap(sigma=sigma, p=1.0, lhs_gap=lhs, bound=bound)

    def lp(values: np.ndarray, weight: float) -> float:
        if np.isinf(p):
            return float(np.max(np.abs(values)))
        return float(np.sum(np.abs(values) ** p) * weight) ** (1.0 / p)

    lhs = lp(a_vals * f_vals, vol_h)
    a_norm = lp(a_vals, vol_h)
    f_norm = lp(f_cell, 1.0 / f_cell.size)
    gap = abs(lhs - a_norm * f_norm)
    inv_p = 0.0 if np.isinf(p) else 1.0 / p
    bound = sigma ** (-inv_p) * width ** (dim * inv_p) * lip * f_norm
    return HolderGap(sigma=sigma, p=p, lhs_gap=gap, bound=bound)


@dataclass
class HolderSweep:
    p: float
    gaps: list[HolderGap]
    slope: float

    def to_dict(self) -> dict:
        return {"p": self.p, "slope": self.slope, "gaps": [g.to_dict() for g in self.gaps]}


def fit_loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """log-log 线性回归斜率；非正值被剔除"""
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    keep = (xs > 0) & (ys > 0)
    if np.count_nonzero(keep) < 2:
        return float("nan")
    return float(stats.linregress(np.log(xs[keep]), np.log(ys[keep])).slope)


def improved_holder_sweep(a: Callable, f: Callable, sigmas: Sequence[int], p: float,
                          window: tuple[int, int] = (0, 1), dim: int = 1, resolution: int = 64,
                          mean_zero_form: bool = False) -> HolderSweep:
    """固定物理窗口 [window[0], window[1]]，对 sigma 扫描并拟合间隙的衰减斜率"""
    gaps = [
        improved_holder_check(a, f, s, window[0] * s, window[1] * s, p=p, dim=dim,
                              resolution=resolution, mean_zero_form=mean_zero_form)
        for s in sigmas
    ]
    slope = fit_loglog_slope([g.sigma for g in gaps], [g.lhs_gap for g in gaps])
    return HolderSweep(p=p, gaps=gaps, slope=slope)
