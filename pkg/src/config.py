import json
import os
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, ValidationError

from .errors import ConfigError


COMMANDS = ("noise-ensemble", "jets-verify", "iterate", "holder-sweep", "contraction-demo")


class _Section(BaseModel):
    """所有配置节的基类：未知键一律报错"""
    model_config = ConfigDict(extra="forbid")


class GridConfig(_Section):
    """离散网格配置"""
    n_modes: int = Field(default=32, ge=4, description="每个方向的模数 N（偶数）")


class NoiseSection(_Section):
    """噪声采样配置"""
    enabled: bool = Field(default=True, description="关闭时 z 及其 Wick 平方恒为 0")
    mode_cutoff: int = Field(default=8, ge=1, description="保留 |k|_inf <= cutoff 的模")
    dt: float = Field(default=0.01, gt=0.0, description="时间步长")
    horizon: float = Field(default=2.0, gt=0.0, description="路径长度 T")
    include_zero_mode: bool = Field(default=False, description="是否保留零模（纯布朗运动）")
    mollifier_scale: float = Field(default=0.0, ge=0.0, description="空间磨光尺度 epsilon")


class StoppingSection(_Section):
    """停时参数"""
    level: float = Field(default=2.0, ge=2.0, description="停时水平 L")
    kappa: float = Field(default=0.05, gt=0.0, description="正则性指标 kappa，需小于 kappa_0")
    p: float = Field(default=1.5, gt=1.0, lt=2.0, description="初值的可积指数 p")


class JetSetting(_Section):
    """一组射流参数"""
    sigma: int = Field(default=2, ge=1)
    eta: int = Field(default=8, ge=1)
    nu: int = Field(default=9, ge=1)
    mu: int = Field(default=16, ge=1)
    theta: int = Field(default=4, ge=1)


def _default_jet_settings() -> list[JetSetting]:
    return [
        JetSetting(sigma=2, eta=8, nu=9, mu=9, theta=4),
        JetSetting(sigma=2, eta=8, nu=9, mu=16, theta=8),
        JetSetting(sigma=4, eta=16, nu=12, mu=24, theta=16),
    ]


class JetsSection(_Section):
    """射流验证配置"""
    settings: list[JetSetting] = Field(default_factory=_default_jet_settings)
    t_sweep: list[float] = Field(default_factory=lambda: [0.0, 0.013, 0.041, 0.27, 0.5])
    time_step: float = Field(default=1e-4, gt=0.0, description="时间中心差分的步长 h")
    geometric_samples: int = Field(default=10000, ge=1)
    probe_points: int = Field(default=64, ge=4, description="每个方向的支撑探针点数")


class IterationSection(_Section):
    """凸积分迭代参数表"""
    a: int = Field(default=4, ge=2)
    b: int = Field(default=2, ge=1)
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    beta: float = Field(default=0.5, gt=0.0, lt=1.0)
    gamma: float = Field(default=0.125, gt=0.0, lt=1.0, description="1/gamma 必须为整数")
    K: float = Field(default=2.0, gt=1.0, description="能量分裂常数")
    data_bound: float = Field(default=2.0, ge=2.0, description="初值 L^p 上界 N")
    q_max: int = Field(default=1, ge=1)
    cutoff_R: int = Field(default=4, ge=0, description="局部化截断 R")
    dt: float = Field(default=0.01, gt=0.0)
    horizon: float = Field(default=1.0, gt=0.0, description="T_L 的上限")
    ell_override: Optional[float] = Field(default=None, gt=0.0, description="覆盖推导得到的磨光尺度")
    jet_overrides: list[JetSetting] = Field(default_factory=list, description="逐层覆盖射流参数")
    active_directions: Optional[int] = Field(default=None, ge=1, le=6)
    initial_data: Literal["zero", "single_mode", "random"] = Field(default="zero")
    initial_amplitude: float = Field(default=0.0, ge=0.0)
    picard_tolerance: float = Field(default=1e-9, gt=0.0)
    picard_max_iterations: int = Field(default=100, ge=1)
    picard_scheme: Literal["gauss-seidel", "jacobi"] = Field(
        default="gauss-seidel", description="就地前推扫描或整体 Picard 扫描"
    )
    energy_level: int = Field(default=3, ge=1, description="gamma_q = K 所在的层")
    energy_study: bool = Field(default=False, description="是否追加 K 配对实验")
    energy_k_values: list[float] = Field(default_factory=lambda: [2.0, 4.0], min_length=2)
    residual_dts: list[PositiveFloat] = Field(default_factory=list, description="主残差 dt 减半实验的步长，空表示不做")
    residual_horizon: float = Field(default=0.7, gt=0.0, description="主残差实验的时间上限")


class EnsembleSection(_Section):
    """集合采样配置"""
    n_paths: int = Field(default=16, ge=1)
    workers: int = Field(default=4, ge=1)
    sample_times: list[float] = Field(default_factory=lambda: [0.1, 0.5, 1.0])
    eps_values: list[float] = Field(default_factory=lambda: [0.04, 0.02, 0.01, 0.005])
    level_values: list[float] = Field(default_factory=lambda: [2.0, 4.0, 8.0])


class HolderSection(_Section):
    """改进 Hölder 不等式扫描配置"""
    sigmas: list[int] = Field(default_factory=lambda: [4, 8, 16, 32, 64])
    p_values: list[float] = Field(default_factory=lambda: [1.0, 2.0])
    window: tuple[int, int] = Field(default=(0, 1))
    resolution: int = Field(default=64, ge=8, description="每个 1/sigma 单元内的求积点数")


class ContractionSection(_Section):
    """压缩映射演示配置"""
    t_values: list[float] = Field(default_factory=lambda: [0.04, 0.02, 0.01, 0.005])
    zeta: float = Field(default=0.2, gt=0.0)
    kappa: float = Field(default=0.1, gt=0.0)
    amplitude: float = Field(default=0.1, gt=0.0)
    dt: float = Field(default=0.00125, gt=0.0)


class AssertionsSection(_Section):
    """检查开关与目标比值"""
    enabled: bool = Field(default=True)
    stress_decrease_factor: float = Field(default=0.7, gt=0.0, description="逐层应力 L1L1 比值上限")
    energy_tolerance: float = Field(default=0.2, gt=0.0)
    identity_tolerance: float = Field(default=1e-8, gt=0.0)
    divergence_tolerance: float = Field(default=1e-10, gt=0.0)
    check_monotonicity: bool = Field(default=False, description="是否把逐层应力下降作为硬性检查")
    residual_slope: float = Field(default=0.9, gt=0.0, description="主残差对 dt 的对数斜率下限")


class OutputSection(_Section):
    """输出配置"""
    directory: str = Field(default="runs/latest")
    dump_fields: list[float] = Field(default_factory=list, description="输出场快照的时间点")
    persist_events: bool = Field(default=True, description="事件写入 <out>/events.db")


class RunConfig(_Section):
    """运行计划：一个子命令及其全部参数"""
    command: Literal["noise-ensemble", "jets-verify", "iterate", "holder-sweep", "contraction-demo"]
    seed: int = Field(default=20240601, ge=0, lt=2**64)
    grid: GridConfig = Field(default_factory=GridConfig)
    noise: NoiseSection = Field(default_factory=NoiseSection)
    stopping: StoppingSection = Field(default_factory=StoppingSection)
    jets: JetsSection = Field(default_factory=JetsSection)
    iteration: IterationSection = Field(default_factory=IterationSection)
    ensemble: EnsembleSection = Field(default_factory=EnsembleSection)
    holder: HolderSection = Field(default_factory=HolderSection)
    contraction: ContractionSection = Field(default_factory=ContractionSection)
    assertions: AssertionsSection = Field(default_factory=AssertionsSection)
    output: OutputSection = Field(default_factory=OutputSection)


def load_config_file(config_path: str) -> dict:
    """
    加载运行计划并返回原始字典。

    Args:
        config_path: 配置文件路径

    Returns:
        dict: 配置文件内容

    Raises:
        ConfigError: 文件不存在、JSON 语法错误（附带行列号）或顶层不是对象
    """
    try:
        with open(config_path, "r", encoding="utf-8") as f:
            text = f.read()
    except FileNotFoundError:
        raise ConfigError(
            f"配置文件 '{config_path}' 未找到。"
            f"请从 config.example.json 复制并填写配置。"
        )
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(
            f"配置文件 '{config_path}' JSON 解析失败: {e.msg} (line {e.lineno}, column {e.colno})",
            line=e.lineno,
            column=e.colno,
        )
    if not isinstance(data, dict):
        raise ConfigError(f"配置文件 '{config_path}' 顶层必须是 JSON 对象", line=1, column=1)
    return data


def validate_config(data: dict) -> RunConfig:
    """把原始字典校验为 RunConfig，pydantic 的错误统一转换为 ConfigError"""
    try:
        return RunConfig(**data)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(part) for part in first.get("loc", ()))
        raise ConfigError(f"配置项 '{key}' 无效: {first.get('msg')}", key=key)


# 环境变量名称常量
ENV_SEED = "CILAB_SEED"
ENV_OUT_DIR = "CILAB_OUT_DIR"
ENV_WORKERS = "CILAB_WORKERS"


class ConfigManager:
    """配置管理器，支持环境变量覆盖配置文件"""

    def __init__(self, config_path: str = "configs/reference.json"):
        self.config_path = config_path
        self._config: Optional[RunConfig] = None

    def load(self) -> RunConfig:
        """
        加载配置，优先级：环境变量 > 配置文件 > 默认值

        环境变量：
        - CILAB_SEED: 主种子
        - CILAB_OUT_DIR: 输出目录
        - CILAB_WORKERS: 集合采样线程数

        Returns:
            RunConfig: 运行计划
        """
        config_data = load_config_file(self.config_path)

        env_seed = os.getenv(ENV_SEED)
        if env_seed:
            config_data["seed"] = _env_int(ENV_SEED, env_seed)

        env_out = os.getenv(ENV_OUT_DIR)
        if env_out:
            config_data.setdefault("output", {})["directory"] = env_out

        env_workers = os.getenv(ENV_WORKERS)
        if env_workers:
            config_data.setdefault("ensemble", {})["workers"] = _env_int(ENV_WORKERS, env_workers)

        self._config = validate_config(config_data)
        return self._config

    def override(self, seed: Optional[int] = None, out_dir: Optional[str] = None,
                 dump_fields: Optional[list[float]] = None) -> RunConfig:
        """命令行参数覆盖（优先级最高）"""
        data = self.config.model_dump(mode="json")
        if seed is not None:
            data["seed"] = seed
        if out_dir is not None:
            data["output"]["directory"] = out_dir
        if dump_fields is not None:
            data["output"]["dump_fields"] = dump_fields
        self._config = validate_config(data)
        return self._config

    @property
    def config(self) -> RunConfig:
        """获取配置（懒加载）"""
        if self._config is None:
            self.load()
        return self._config  # type: ignore


def _env_int(name: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"环境变量 {name} 必须是整数，当前值: {raw!r}", key=name)

