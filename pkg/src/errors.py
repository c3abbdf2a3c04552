"""
异常基类

各模块在此基础上定义自己的异常；CLI 依据基类映射退出码
"""

from typing import Optional


class LabError(Exception):
    """所有可预期失败的基类，携带出错组件名"""

    def __init__(self, message: str, component: str = "unknown"):
        super().__init__(message)
        self.message = message
        self.component = component


class ConfigError(LabError):
    """配置解析或校验失败 (退出码 2)"""

    def __init__(
        self,
        message: str,
        line: Optional[int] = None,
        column: Optional[int] = None,
        key: Optional[str] = None,
    ):
        super().__init__(message, component="config")
        self.line = line
        self.column = column
        self.key = key


class NumericalError(LabError):
    """数值计算失败 (退出码 3)"""
