"""
异常定义模块
求解器各层抛出的异常类型，统一继承自 DispEigError
"""


class DispEigError(Exception):
    """求解器异常基类"""


class OperatorError(DispEigError):
    """算符串非法（格点越界、需要量子项却给了对角项、序列化文本损坏等）"""


class UndefinedRotationError(DispEigError):
    """耦合与能量差同时为零，转角无定义"""


class InadmissibleMoveError(DispEigError):
    """X|Φ0⟩ = 0，该变换与参考态无关"""


class OracleSizeError(DispEigError):
    """精确对角化基矢数超过上限"""


class SectorMismatchError(DispEigError):
    """算符与基矢的格点数或粒子数不匹配"""


class SpectrumError(DispEigError):
    """谱统计输入不足或矩阵不对称"""


class ConfigError(DispEigError):
    """参数或配置文件无效"""


class ExperimentError(DispEigError):
    """实验流程失败"""
