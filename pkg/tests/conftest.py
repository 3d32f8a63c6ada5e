"""
测试公用工具：按占据掩码索引的完整 Fock 空间稠密矩阵
"""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from core.opalg import OperatorString, OperatorSum, decode, is_diagonal_code  # noqa: E402


def annihilator(length: int, site: int) -> np.ndarray:
    """c_site；基矢 |m⟩ = c†_{b1}…c†_{bN}|0⟩（格点升序），矩阵下标即掩码 m"""
    size = 1 << length
    matrix = np.zeros((size, size))
    below = (1 << site) - 1
    for config in range(size):
        if config >> site & 1:
            sign = -1.0 if (config & below).bit_count() & 1 else 1.0
            matrix[config ^ (1 << site), config] = sign
    return matrix


def string_matrix(string: OperatorString) -> np.ndarray:
    """按格点升序逐个相乘得到算符串的稠密矩阵"""
    size = 1 << string.length
    result = np.eye(size)
    cre, ann, den = decode(string.code)
    for site in string.support:
        c = annihilator(string.length, site)
        if cre >> site & 1:
            factor = c.T
        elif ann >> site & 1:
            factor = c
        else:
            factor = c.T @ c
        result = result @ factor
    return result


def operator_matrix(operator: OperatorSum) -> np.ndarray:
    """OperatorSum 的稠密矩阵：对角项 v·D，非对角项 v(R + R†)"""
    size = 1 << operator.length
    result = np.zeros((size, size))
    for code, value in operator.terms.items():
        matrix = string_matrix(OperatorString(code, operator.length))
        if is_diagonal_code(code):
            result += value * matrix
        else:
            result += value * (matrix + matrix.T)
    return result


def sector(matrix: np.ndarray, length: int, particles: int) -> np.ndarray:
    """取出固定粒子数的子块（掩码升序）"""
    configs = [m for m in range(1 << length) if m.bit_count() == particles]
    return matrix[np.ix_(configs, configs)]


def random_hamiltonian(length: int, seed: int, scale: float = 0.3) -> OperatorSum:
    """随机的守恒粒子数哈密顿量：单体、密度-密度、辅助跃迁与对跃迁项"""
    rng = np.random.default_rng(seed)
    hamiltonian = OperatorSum(length)
    for site in range(length):
        hamiltonian.add_term(OperatorString.from_sites(length, {site: 'n'}), rng.uniform(-2, 2))
    for i in range(length):
        for j in range(i + 1, length):
            hamiltonian.add_term(OperatorString.from_sites(length, {i: 'n', j: 'n'}),
                                 rng.uniform(-1, 1))
            hamiltonian.add_term(OperatorString.from_sites(length, {i: 'cdag', j: 'c'}),
                                 scale * rng.uniform(-1, 1))
    if length >= 3:
        hamiltonian.add_term(OperatorString.from_sites(length, {0: 'cdag', 1: 'n', 2: 'c'}),
                             scale * rng.uniform(-1, 1))
    if length >= 4:
        hamiltonian.add_term(OperatorString.from_sites(length, {0: 'cdag', 1: 'cdag', 2: 'c', 3: 'c'}),
                             scale * rng.uniform(-1, 1))
    return hamiltonian


@pytest.fixture
def small_hamiltonian() -> OperatorSum:
    return random_hamiltonian(4, seed=7)
