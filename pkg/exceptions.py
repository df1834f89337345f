"""
exceptions.py - 统一异常层次
所有模块抛出的错误都派生自 ZitterError，CLI 边界据此映射退出码
"""
from typing import Any, Optional


class ZitterError(Exception):
    """工具包根异常"""


class DomainError(ZitterError, ValueError):
    """前置条件不满足（阶数越界、非单位向量、r <= 0 等）"""


class SingularSpinorError(DomainError):
    """旋量密度 rho 为零，无法规范分解"""


class UnstableOrbitError(DomainError):
    """圆轨道附近 W0'' <= 0，径向振荡不稳定"""


class RotorNormError(ZitterError):
    """转子 R R~ 偏离 1 超过允许漂移"""

    def __init__(self, message: str, drift: float):
        super().__init__(message)
        self.drift = drift


class DegenerateStateError(ZitterError):
    """m <= 0 或动量类空"""


class GaugeConstraintError(ZitterError):
    """规范约束 p^u^e0 = 0 被破坏"""

    def __init__(self, message: str, violation: float):
        super().__init__(message)
        self.violation = violation


class InvariantDriftError(ZitterError):
    """积分中不变量越界，携带已完成的轨迹前缀"""

    def __init__(self, message: str, monitor: str, value: float,
                 trajectory: Optional[Any] = None):
        super().__init__(message)
        self.monitor = monitor
        self.value = value
        self.trajectory = trajectory


class ConvergenceError(ZitterError):
    """迭代或数值求积未收敛"""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (残差 {residual:.3e})")
        self.residual = residual


class ConfigError(ZitterError):
    """配置解析失败，path 指向出错的键"""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
