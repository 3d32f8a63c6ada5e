"""
位移变换模块
对算符和施加离散幺正变换 D_X(λ) = exp{λ(X† − X)}，H' = D_X(λ)† H D_X(λ)

变换通过 X 支撑格点上的局部表完成：表项由显式算符乘法得到，支撑外的因子按费米符号透传。
"""
import math
from dataclasses import dataclass
from itertools import product
from typing import Dict, Iterator, List, Optional, Tuple

from .errors import OperatorError, UndefinedRotationError
from .logger_util import get_logger
from .opalg import (DEFAULT_PRUNE_THRESHOLD, OperatorString, OperatorSum,
                    accumulate_hermitian, conjugate_code, decode,
                    is_diagonal_code, merge_sign, multiply_codes, spread)

LAMBDA_QUANTUM = 1e-14

_logger = get_logger(__name__)

Expansion = Dict[int, float]


@dataclass(frozen=True)
class Displacement:
    """生成元 X 与转角 λ"""
    x: OperatorString
    angle: float

    def __post_init__(self):
        if self.x.is_diagonal:
            raise OperatorError(f"位移生成元不能是对角算符: {self.x}")
        if not self.x.is_particle_conserving:
            raise OperatorError(f"位移生成元不守恒粒子数: {self.x}")
        if not -math.pi / 2 < self.angle <= math.pi / 2:
            raise OperatorError(f"转角超出 (−π/2, π/2]: {self.angle}")


def _product(left: Expansion, right: Expansion) -> Expansion:
    result: Expansion = {}
    for code_a, value_a in left.items():
        for code_b, value_b in right.items():
            for code, value in multiply_codes(code_a, code_b):
                result[code] = result.get(code, 0.0) + value_a * value_b * value
    return result


def displacement_operator(x_code: int, angle: float) -> Expansion:
    """D_X(λ) = 1 + sinλ (X† − X) + (cosλ − 1)(X†X + XX†)，按普通（非配对）算符串展开"""
    conj, conj_sign = conjugate_code(x_code)
    sin, cos = math.sin(angle), math.cos(angle)
    expansion: Expansion = {0: 1.0}

    def add(code: int, value: float):
        expansion[code] = expansion.get(code, 0.0) + value

    add(conj, sin * conj_sign)
    add(x_code, -sin)
    for code, value in multiply_codes(conj, x_code) + multiply_codes(x_code, conj):
        add(code, (cos - 1.0) * conj_sign * value)
    return {code: value for code, value in expansion.items() if value != 0.0}


class LocalTable:
    """
    X 支撑格点上的局部变换表

    对任意局部模式 P 给出 D(−λ)·P·D(λ) 的正规序展开；表项在首次查询时计算并缓存，
    complete() 一次性填满全部 4^|support| 个模式。
    """

    def __init__(self, x: OperatorString, angle: float,
                 prune_threshold: float = DEFAULT_PRUNE_THRESHOLD):
        if x.is_diagonal:
            raise OperatorError(f"位移生成元不能是对角算符: {x}")
        self.x = x
        self.angle = angle
        self.prune_threshold = prune_threshold
        cre, ann, den = decode(x.code)
        self.support: Tuple[int, ...] = x.support
        self.support_bits = spread(cre | ann | den) * 3
        self._forward = displacement_operator(x.code, angle)
        self._backward = displacement_operator(x.code, -angle)
        self._entries: Dict[int, Tuple[Tuple[int, float], ...]] = {}

    def entry(self, pattern: int) -> Tuple[Tuple[int, float], ...]:
        """局部模式（只含支撑格点位）变换后的 (编码, 系数) 列表"""
        cached = self._entries.get(pattern)
        if cached is not None:
            return cached
        if pattern & ~self.support_bits:
            raise OperatorError("局部模式含有支撑以外的格点")
        if self.angle == 0.0:
            result = ((pattern, 1.0),)
        else:
            expanded = _product(_product(self._backward, {pattern: 1.0}), self._forward)
            result = tuple(sorted((code, value) for code, value in expanded.items()
                                  if abs(value) >= self.prune_threshold))
        self._entries[pattern] = result
        return result

    def patterns(self) -> Iterator[int]:
        for ops in product(range(4), repeat=len(self.support)):
            code = 0
            for site, op in zip(self.support, ops):
                code |= op << (2 * site)
            yield code

    def complete(self) -> 'LocalTable':
        for pattern in self.patterns():
            self.entry(pattern)
        return self

    def __len__(self) -> int:
        return len(self._entries)


def build_table(x: OperatorString, angle: float,
                prune_threshold: float = DEFAULT_PRUNE_THRESHOLD) -> LocalTable:
    """
    构建局部变换表（表项按需计算，覆盖全部局部模式）

    Args:
        x: 非对角生成元
        angle: 转角 λ
        prune_threshold: 表项系数剪枝阈值

    Returns:
        局部变换表
    """
    return LocalTable(x, angle, prune_threshold)


class TableCache:
    """以 (X 编码, 量化后的 λ) 为键的局部表缓存"""

    def __init__(self, prune_threshold: float = DEFAULT_PRUNE_THRESHOLD):
        self.prune_threshold = prune_threshold
        self._tables: Dict[Tuple[int, int, int], LocalTable] = {}
        self.hits = 0
        self.misses = 0

    def get(self, x: OperatorString, angle: float) -> LocalTable:
        key = (x.code, x.length, round(angle / LAMBDA_QUANTUM))
        table = self._tables.get(key)
        if table is None:
            self.misses += 1
            table = build_table(x, angle, self.prune_threshold)
            self._tables[key] = table
        else:
            self.hits += 1
        return table

    def clear(self):
        self._tables.clear()

    def __len__(self) -> int:
        return len(self._tables)


def apply(hamiltonian: OperatorSum, displacement: Displacement,
          cache: Optional[TableCache] = None) -> OperatorSum:
    """
    对算符和施加一次位移变换

    Args:
        hamiltonian: 哈密顿量或任意可观测量
        displacement: 位移变换
        cache: 局部表缓存（可选）

    Returns:
        变换后的新算符和
    """
    if displacement.x.length != hamiltonian.length:
        raise OperatorError("生成元与算符和的格点数不一致")
    if displacement.angle == 0.0:
        return hamiltonian.copy()
    if cache is not None:
        table = cache.get(displacement.x, displacement.angle)
    else:
        table = build_table(displacement.x, displacement.angle, hamiltonian.prune_threshold)

    support_bits = table.support_bits
    accumulator: Dict[int, float] = {}
    for code, value in hamiltonian.terms.items():
        local = code & support_bits
        if not local:
            accumulator[code] = accumulator.get(code, 0.0) + value
            continue
        outside = code ^ local
        # 配对项 v(R + R†) 的变换等于 2v·R' 的厄米部分
        weight = value if is_diagonal_code(code) else 2.0 * value
        weight *= merge_sign(local, outside)
        for image, coefficient in table.entry(local):
            accumulate_hermitian(accumulator, image | outside,
                                 weight * coefficient * merge_sign(image, outside))
    return OperatorSum.from_accumulator(hamiltonian.length, hamiltonian.prune_threshold,
                                        accumulator)


def delta_epsilon(hamiltonian: OperatorSum, x: OperatorString) -> float:
    """
    X 所连接的两个组态的经典能量差

    对角项的密度集合 D ⊆ α∪β∪γ 时贡献 coef·([D ⊆ α∪β] − [D ⊆ α∪γ])，
    其中 α 为 X 的密度格点，β 为产生格点，γ 为湮灭格点。
    """
    if x.is_diagonal:
        raise OperatorError(f"对角算符串没有能量差: {x}")
    cre, ann, den = decode(x.code)
    after = den | cre
    before = den | ann
    total = 0.0
    for code, value in hamiltonian.terms.items():
        t_cre, t_ann, densities = decode(code)
        if t_cre | t_ann:
            continue
        in_after = not densities & ~after
        in_before = not densities & ~before
        if in_after != in_before:
            total += value if in_after else -value
    return total


def coupling(hamiltonian: OperatorSum, x: OperatorString) -> float:
    """
    X 作用子空间内的有效耦合 V_X

    汇总量子部分与 X 相同（任一方向）且密度格点包含于 X 密度格点的所有项，按 X 的方向取系数。
    """
    if x.is_diagonal:
        raise OperatorError(f"对角算符串没有耦合: {x}")
    cre, ann, den = decode(x.code)
    total = 0.0
    for code, value in hamiltonian.terms.items():
        t_cre, t_ann, densities = decode(code)
        if densities & ~den:
            continue
        if t_cre == cre and t_ann == ann:
            total += value
        elif t_cre == ann and t_ann == cre:
            total += value * conjugate_code(code)[1]
    return total


def fold_angle(angle: float) -> float:
    """把 λ 折回 [−π/4, π/4]（tan 2λ 以 π/2 为周期）"""
    if angle > math.pi / 4:
        angle -= math.pi / 2
    elif angle < -math.pi / 4:
        angle += math.pi / 2
    return angle


def lambda_for_elimination(v_x: float, delta_eps: float) -> float:
    """
    消去耦合所需的转角 tan 2λ = 2V/Δε，取 |λ| ≤ π/4 的解

    Raises:
        UndefinedRotationError: V 与 Δε 同时为零
    """
    if v_x == 0.0:
        if delta_eps == 0.0:
            raise UndefinedRotationError("耦合与能量差同时为零")
        return 0.0
    return fold_angle(0.5 * math.atan2(2.0 * v_x, delta_eps))


def elimination_angle(hamiltonian: OperatorSum, x: OperatorString) -> float:
    return lambda_for_elimination(coupling(hamiltonian, x), delta_epsilon(hamiltonian, x))


def apply_all(operator: OperatorSum, displacements: List[Displacement],
              cache: Optional[TableCache] = None) -> OperatorSum:
    """按顺序施加一串位移变换"""
    for displacement in displacements:
        operator = apply(operator, displacement, cache)
    return operator
