"""
报告数据模型定义
"""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


# ==================== 检查结果 ====================

class CheckResult(BaseModel):
    """一项可判定的检查：测量值与目标的比较"""
    name: str = Field(..., description="检查名称")
    value: float = Field(..., description="测量值")
    target: Optional[float] = Field(default=None, description="目标值或上界")
    passed: bool = Field(..., description="是否通过")
    detail: Optional[str] = Field(default=None, description="附加说明")


class ConstraintStatus(BaseModel):
    """参数表中一条渐近约束的满足情况"""
    name: str
    lhs: float
    rhs: float
    satisfied: bool


# ==================== 诊断账本 ====================

class LedgerRow(BaseModel):
    """账本的一行，列顺序固定为 (level, window, norm_name, value, target, pass)"""
    level: int = Field(..., ge=0, description="迭代层 q")
    window: str = Field(..., description="时间窗口描述")
    norm_name: str = Field(..., description="范数名称")
    value: float = Field(..., description="测量值")
    target: Optional[float] = Field(default=None, description="目标值")
    passed: Optional[bool] = Field(default=None, alias="pass", description="未设目标时为空")

    model_config = {"populate_by_name": True}

    def as_row(self) -> dict:
        return {
            "level": self.level,
            "window": self.window,
            "norm_name": self.norm_name,
            "value": self.value,
            "target": self.target,
            "pass": self.passed,
        }


# ==================== 运行报告 ====================

class RunReport(BaseModel):
    """report.json 的顶层结构"""
    command: str = Field(..., description="子命令")
    version: str = Field(..., description="软件版本")
    seed: int = Field(..., description="主种子")
    config: Dict[str, Any] = Field(..., description="解析后的完整配置")
    results: Dict[str, Any] = Field(default_factory=dict, description="子命令的原始结果")
    checks: List[CheckResult] = Field(default_factory=list, description="启用的检查")
    constraints: List[ConstraintStatus] = Field(default_factory=list)
    ledger: List[LedgerRow] = Field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)
