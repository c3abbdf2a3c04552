"""
统一常量管理模块

数值容差、默认值与退出码集中定义在此文件中，便于集中管理和维护

注意：以下配置在运行计划 (JSON) 中给出，通过 ConfigManager 获取：
- grid.n_modes (网格尺寸)
- noise.* (噪声采样)
- iteration.* (迭代参数表)
- assertions.* (各项检查的开关与目标比值)
"""

# ==================== 应用信息 ====================

# 应用名称
APP_NAME: str = "torus-ci-lab"

# 应用版本
APP_VERSION: str = "0.4.0"

# 应用描述
APP_DESCRIPTION: str = "环面凸积分谱方法实验室"


# ==================== 退出码 ====================

# 全部启用的检查通过
EXIT_OK: int = 0

# 至少一项启用的检查未通过
EXIT_ASSERTION_FAILED: int = 1

# 配置文件解析或校验失败
EXIT_CONFIG_ERROR: int = 2

# 数值错误 (附带组件名)
EXIT_NUMERICAL_ERROR: int = 3


# ==================== 谱方法容差 ====================

# 变换往返的相对误差
ROUND_TRIP_TOLERANCE: float = 1e-12

# 散度为零的判定阈值 (相对 C^1 范数)
DIVERGENCE_TOLERANCE: float = 1e-8

# 反散度恒等式的残差上限
ANTIDIV_TOLERANCE: float = 1e-10

# 双线性反散度恒等式的残差上限 (乘积截断)
BILINEAR_TOLERANCE: float = 1e-9

# 时间网格的均匀性判定 (相对步长)
TIME_GRID_TOLERANCE: float = 1e-9

# 反混叠补零倍数的分子/分母 (3/2 规则)
DEALIAS_NUMERATOR: int = 3
DEALIAS_DENOMINATOR: int = 2


# ==================== Littlewood-Paley 剖面 ====================

# 低频截断函数在 r <= 3/4 时恒为 1
LP_INNER_RADIUS: float = 3.0 / 4.0

# 低频截断函数在 r >= 4/3 时恒为 0
LP_OUTER_RADIUS: float = 4.0 / 3.0


# ==================== 噪声与停时 ====================

# 时间 Hölder 商的滞后窗口 (步数)
HOLDER_LAG_WINDOW: int = 64

# 磨光核径向积分的采样点数
MOLLIFIER_QUADRATURE_POINTS: int = 2001

# 集合采样默认线程数
DEFAULT_ENSEMBLE_WORKERS: int = 4


# ==================== 射流构件 ====================

# 分离参数 mu_0
JET_MU0: float = 8.0

# 几何引理中非对角项的正则化参数
GEOMETRIC_EPSILON: float = 1.0 / 100.0

# 剖面样条的采样点数
PROFILE_SAMPLES: int = 4097

# 时间剖面 G 的积分采样点数
TEMPORAL_SAMPLES: int = 8193

# 几何引理重构误差上限
GEOMETRIC_TOLERANCE: float = 1e-10


# ==================== 迭代 ====================

# Picard 迭代的收敛阈值 (L^inf_t L^2)
PICARD_TOLERANCE: float = 1e-9

# Picard 迭代的最大次数
PICARD_MAX_ITERATIONS: int = 100

# 局部化截断 R 的默认值
DEFAULT_CUTOFF_R: int = 4

# kappa_1 低于此值视为 0
KAPPA_FLOOR: float = 1e-12

# 振荡应力分解与扰动散度的残差上限
IDENTITY_TOLERANCE: float = 1e-8

# 振幅重构残差上限
AMPLITUDE_TOLERANCE: float = 1e-9


# ==================== 日志系统配置 ====================

# 内存中保留的最大事件条数
LOG_MAX_MEMORY_ENTRIES: int = 1000

# 最近事件查询默认限制
LOG_RECENT_LIMIT_DEFAULT: int = 100


# ==================== 输出 ====================

# 报告文件名
REPORT_FILENAME: str = "report.json"

# 事件数据库文件名
EVENTS_DB_FILENAME: str = "events.db"

# 输出目录锁文件名
OUTPUT_LOCK_FILENAME: str = ".lock"

# 获取输出目录锁的超时 (秒)
OUTPUT_LOCK_TIMEOUT: float = 10.0
