"""
异常定义

所有库内异常都继承自 CGSError，并携带命令行退出码。
采样不可行不是异常，而是正常结果（见 SampleAttemptResult）。
"""

from typing import Optional


class CGSError(Exception):
    """库内异常基类"""

    exit_code = 1

    def __init__(self, message: str, entity: Optional[str] = None):
        self.entity = entity
        if entity:
            message = f"[{entity}] {message}"
        super().__init__(message)


class GraphParseError(CGSError):
    """问题描述文件语法错误（带行列号）"""

    exit_code = 2

    def __init__(self, message: str, line: int = 0, column: int = 0,
                 entity: Optional[str] = None):
        self.line = line
        self.column = column
        location = f"第{line}行第{column}列: " if line else ""
        super().__init__(f"{location}{message}", entity)


class GraphValidationError(GraphParseError):
    """约束图结构不合法（未知残差类型、作用域解析失败、维度不匹配）"""


class UnassignedVariableError(CGSError, KeyError):
    """残差求值时作用域内变量尚未赋值"""

    exit_code = 3


class ConfigValidationError(CGSError):
    """配置校验失败"""

    exit_code = 3


class StrategyValidationError(CGSError):
    """采样策略校验失败（专家序列不合法或包含被剪枝的转移）"""

    exit_code = 3


class LatticeSizeError(CGSError):
    """计算状态格规模超过上限"""

    exit_code = 3


class NoPathError(CGSError):
    """剪枝后不存在从空状态到全集的路径"""

    exit_code = 4
