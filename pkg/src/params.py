"""
迭代参数表

lambda_q = a^{b^q}，delta_q = lambda_1^{2 beta} lambda_q^{-2 beta} / 2（delta_0 = delta_{-1} = 1），
sigma_q = delta_q，gamma_q = delta_q（energy_level 层取 K），t_q = -1 + sum_{1<=r<=q} delta_r^{1/2}。
桌面尺度下渐近约束通常不满足，constraint_report 逐条列出而不拒绝运行。
"""

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

from .constants import DEFAULT_CUTOFF_R, JET_MU0, KAPPA_FLOOR
from .jets import DIRECTIONS, JetParams
from .logger import LogLevel, log_manager
from .noise import StoppingParams
from .schemas import ConstraintStatus


@dataclass(frozen=True)
class IterationParams:
    a: int
    b: int
    alpha: float
    beta: float
    gamma: float
    K: float
    L: float
    N: float
    p: float
    kappa: float
    cutoff_R: int = DEFAULT_CUTOFF_R
    energy_level: int = 3
    ell_override: Optional[float] = None
    jet_overrides: tuple[JetParams, ...] = field(default_factory=tuple)
    active_directions: Optional[int] = None

    def __post_init__(self):
        if self.a < 2 or self.b < 1:
            raise ValueError(f"需要 a >= 2, b >= 1，当前值: a={self.a}, b={self.b}")
        for name in ("alpha", "beta", "gamma"):
            value = getattr(self, name)
            if not (0.0 < value < 1.0):
                raise ValueError(f"{name} 必须在 (0, 1) 中，当前值: {value}")
        if self.K <= 1.0:
            raise ValueError(f"K 必须大于 1，当前值: {self.K}")
        if self.L < 2 or self.N < 2:
            raise ValueError(f"需要 L, N >= 2，当前值: L={self.L}, N={self.N}")
        if not (1.0 < self.p < 2.0):
            raise ValueError(f"p 必须在 (1, 2) 中，当前值: {self.p}")
        if self.cutoff_R < 0:
            raise ValueError("cutoff_R 不能为负")

    @classmethod
    def from_config(cls, section: Any, stopping: StoppingParams) -> "IterationParams":
        return cls(
            a=section.a,
            b=section.b,
            alpha=section.alpha,
            beta=section.beta,
            gamma=section.gamma,
            K=section.K,
            L=stopping.level,
            N=section.data_bound,
            p=stopping.p,
            kappa=stopping.kappa,
            cutoff_R=section.cutoff_R,
            energy_level=section.energy_level,
            ell_override=section.ell_override,
            jet_overrides=tuple(JetParams.from_setting(s) for s in section.jet_overrides),
            active_directions=section.active_directions,
        )

    # ---------- 频率与振幅 ----------

    def lam(self, q: int) -> float:
        """lambda_q = a^{b^q}"""
        if q < 0:
            raise ValueError(f"q 不能为负，当前值: {q}")
        return float(self.a ** (self.b ** q))

    def delta(self, q: int) -> float:
        if q <= 0:
            return 1.0
        return 0.5 * (self.lam(1) / self.lam(q)) ** (2.0 * self.beta)

    def sigma_q(self, q: int) -> float:
        return self.delta(q)

    def gamma_q(self, q: int) -> float:
        return float(self.K) if q == self.energy_level else self.delta(q)

    def t_q(self, q: int) -> float:
        return -1.0 + sum(self.delta(r) ** 0.5 for r in range(1, q + 1))

    def ell(self, q: int) -> float:
        """磨光尺度 lambda_{q+1}^{-3 alpha/2} lambda_q^{-2}"""
        if self.ell_override is not None:
            return float(self.ell_override)
        return self.lam(q + 1) ** (-1.5 * self.alpha) * self.lam(q) ** -2.0

    def f(self, q: int) -> int:
        """2^{f(q)} = lambda_q^{alpha/8}，取最近整数"""
        return int(round(self.alpha / 8.0 * math.log2(self.lam(q))))

    # ---------- 停时相关常数 ----------

    @property
    def M_L(self) -> float:
        return max(self.L ** 9, self.N ** 2 * self.L ** 2)

    @property
    def A(self) -> float:
        return (math.floor(3.0 * self.p / (self.p - 1.0)) + 1) * self.M_L

    @property
    def kappa0(self) -> float:
        return min(1.0 - 1.0 / self.p, 2.0 / self.p - 1.0)

    @property
    def kappa1(self) -> float:
        """p = 3/2 时两支相消，舍入残差按 0 处理"""
        k1 = min(self.kappa0 / 4.0, 1.0 / 6.0 - self.kappa0 / 2.0)
        return 0.0 if abs(k1) < KAPPA_FLOOR else k1

    @property
    def implied_C(self) -> float:
        """2^{kappa_0 R} = 4 C L^2 反解出的常数"""
        return 2.0 ** (self.kappa0 * self.cutoff_R) / (4.0 * self.L ** 2)

    # ---------- 射流 ----------

    def active_set(self, n_directions: int) -> range:
        k = n_directions if self.active_directions is None else min(self.active_directions, n_directions)
        return range(k)

    def jet_params(self, q: int) -> JetParams:
        """
        构造第 q+1 层所用的射流参数：
        sigma = lambda^{2 gamma}, eta = lambda^{16 gamma}, nu = lambda^{1-8 gamma}, mu = lambda,
        theta = lambda^{1+5 gamma}，lambda = lambda_{q+1}；取整并夹到 mu0 < nu <= mu, eta >= |Lambda|
        """
        if q < len(self.jet_overrides):
            return self.jet_overrides[q]
        lam = self.lam(q + 1)
        g = self.gamma
        nu = max(int(round(lam ** (1.0 - 8.0 * g))), int(math.floor(JET_MU0)) + 1)
        mu = max(int(round(lam)), nu)
        return JetParams(
            sigma=max(int(round(lam ** (2.0 * g))), 1),
            eta=max(int(round(lam ** (16.0 * g))), len(DIRECTIONS)),
            nu=nu,
            mu=mu,
            theta=max(int(round(lam ** (1.0 + 5.0 * g))), 1),
        )

    def to_dict(self) -> dict:
        data = asdict(self)
        data["jet_overrides"] = [jp.to_dict() for jp in self.jet_overrides]
        data["M_L"] = self.M_L
        data["A"] = self.A
        data["kappa0"] = self.kappa0
        data["kappa1"] = self.kappa1
        data["implied_C"] = self.implied_C
        return data

    def schedule(self, q_max: int) -> list[dict]:
        """q = 0..q_max 的派生量表"""
        rows = []
        for q in range(q_max + 1):
            rows.append({
                "q": q,
                "lambda": self.lam(q),
                "delta": self.delta(q),
                "sigma": self.sigma_q(q),
                "gamma": self.gamma_q(q),
                "t_q": self.t_q(q),
                "ell": self.ell(q),
                "f": self.f(q),
                "jets": self.jet_params(q).to_dict(),
            })
        return rows


# ==================== 约束 ====================

def _status(name: str, lhs: float, rhs: float, strict: bool = False) -> ConstraintStatus:
    """lhs <= rhs（strict 时为 <）"""
    ok = lhs < rhs if strict else lhs <= rhs
    return ConstraintStatus(name=name, lhs=float(lhs), rhs=float(rhs), satisfied=bool(ok))


def _over(num: float, den: float) -> float:
    """kappa_1 可以为 0（p = 3/2），此时约束无法满足"""
    return num / den if den > KAPPA_FLOOR else math.inf


def constraint_report(params: IterationParams, q_max: int = 1) -> list[ConstraintStatus]:
    """逐条列出参数选择所需的渐近约束；不满足的条目记 WARNING 事件"""
    a, b, al, be, g = params.a, params.b, params.alpha, params.beta, params.gamma
    k0, k1 = params.kappa0, params.kappa1
    out = [
        _status(f"2 delta_{q + 1} <= delta_{q}", 2.0 * params.delta(q + 1), params.delta(q))
        for q in range(1, q_max + 1)
    ]
    out += [
        _status("a^{2 beta (b-1)} >= 2", 2.0, a ** (2.0 * be * (b - 1))),
        _status("a^{b beta} >= 4", 4.0, a ** (b * be)),
        _status("gamma < 1/56", g, 1.0 / 56.0, strict=True),
        _status("1/gamma integer", abs(1.0 / g - round(1.0 / g)), 1e-9),
        _status("(1/2-1/p)(2-8 gamma) < -10 gamma", (0.5 - 1.0 / params.p) * (2.0 - 8.0 * g), -10.0 * g, strict=True),
        _status("alpha < gamma/144", al, g / 144.0, strict=True),
        _status("alpha > 4 beta b/(3 kappa_1)", _over(4.0 * be * b, 3.0 * k1), al, strict=True),
        _status("alpha > 16 beta b^2/kappa_0", _over(16.0 * be * b ** 2, k0), al, strict=True),
        _status("alpha b > 16/(3 kappa_1)", _over(16.0, 3.0 * k1), al * b, strict=True),
    ]
    for q in range(q_max):
        out.append(_status(f"ell_{q} <= delta_{q + 1}^(1/2)", params.ell(q), params.delta(q + 1) ** 0.5))
    violated = [c for c in out if not c.satisfied]
    if violated:
        log_manager.log_event(
            LogLevel.WARNING, "constraints",
            f"{len(violated)}/{len(out)} 条参数约束不满足（桌面尺度）: " + "; ".join(c.name for c in violated[:4]),
            component="params", value=float(len(violated)),
        )
    return out
