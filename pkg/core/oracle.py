"""
精确对角化模块
固定粒子数 Fock 子空间内的稠密矩阵、全谱与热平均，作为所有精度检查的基准
"""
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Tuple, Union

import numpy as np
import scipy.linalg

from .errors import ConfigError, OracleSizeError, SectorMismatchError, SpectrumError
from .logger_util import get_logger
from .opalg import OperatorSum, decode, action_data

MAX_BASIS_SIZE = 20_000

_logger = get_logger(__name__)


@dataclass(frozen=True)
class FockBasis:
    """全部 C(L, N) 个占据掩码（升序）"""
    length: int
    particles: int
    configs: np.ndarray

    @classmethod
    def build(cls, length: int, particles: int, max_size: int = MAX_BASIS_SIZE) -> 'FockBasis':
        if not 0 <= particles <= length:
            raise SectorMismatchError(f"粒子数 {particles} 超出 [0, {length}]")
        size = math.comb(length, particles)
        if size > max_size:
            raise OracleSizeError(f"基矢数 C({length},{particles}) = {size} 超过上限 {max_size}")
        configs = np.fromiter((sum(1 << site for site in sites)
                               for sites in combinations(range(length), particles)),
                              dtype=np.int64, count=size)
        return cls(length, particles, np.sort(configs))

    def __len__(self) -> int:
        return len(self.configs)

    def index(self, config: int) -> int:
        position = int(np.searchsorted(self.configs, config))
        if position >= len(self.configs) or self.configs[position] != config:
            raise SectorMismatchError(f"组态 {config:#b} 不在基中")
        return position

    def occupations(self, site: int) -> np.ndarray:
        return ((self.configs >> site) & 1).astype(float)


def _parity(values: np.ndarray) -> np.ndarray:
    return (np.bitwise_count(values) & 1).astype(np.int64)


def dense_matrix(hamiltonian: OperatorSum, basis: FockBasis) -> np.ndarray:
    """
    固定粒子数子空间内的稠密矩阵（规范 Slater 基）

    Raises:
        SectorMismatchError: 格点数不一致
    """
    if hamiltonian.length != basis.length:
        raise SectorMismatchError(f"算符格点数 {hamiltonian.length} 与基 {basis.length} 不一致")
    configs = basis.configs
    size = len(configs)
    matrix = np.zeros((size, size))
    columns = np.arange(size)

    for code, value in hamiltonian.terms.items():
        cre, ann, den, flip, parity_mask, conj_sign = action_data(code)
        if not flip:
            inside = (configs & den) == den
            matrix[columns[inside], columns[inside]] += value
            continue
        # 代表方向与共轭方向
        for need_full, need_empty, sign in ((ann | den, cre, 1), (cre | den, ann, conj_sign)):
            valid = ((configs & need_full) == need_full) & ((configs & need_empty) == 0)
            if not valid.any():
                continue
            source = configs[valid]
            rows = np.searchsorted(configs, source ^ flip)
            signs = sign * (1 - 2 * _parity(source & parity_mask))
            matrix[rows, columns[valid]] += value * signs
    return matrix


def full_spectrum(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """全部本征值（升序）与正交本征矢（按列）"""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise SpectrumError(f"需要方阵，实际形状 {matrix.shape}")
    if not np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(matrix).max(initial=0.0))):
        raise SpectrumError("矩阵不对称")
    return scipy.linalg.eigh(matrix)


def site_number_variance(eigvec: np.ndarray, site: int, basis: FockBasis) -> Union[float, np.ndarray]:
    """
    ⟨n⟩ − ⟨n⟩²（n 为投影算符）

    eigvec 为一维时返回标量，为二维（按列）时逐列返回
    """
    weights = np.asarray(eigvec) ** 2
    mean = basis.occupations(site) @ weights
    variance = mean - mean ** 2
    return float(variance) if np.ndim(variance) == 0 else variance


def thermal_average(values: np.ndarray, energies: np.ndarray, temperature: float) -> float:
    """
    Gibbs 加权平均；T = ∞ 时退化为算术平均

    Raises:
        ConfigError: T ≤ 0
    """
    values = np.asarray(values, dtype=float)
    energies = np.asarray(energies, dtype=float)
    if temperature <= 0:
        raise ConfigError(f"温度必须为正: {temperature}")
    if len(values) != len(energies) or not len(values):
        raise SpectrumError("取值与能量个数不一致或为空")
    if math.isinf(temperature):
        return float(values.mean())
    weights = np.exp(-(energies - energies.min()) / temperature)
    return float(weights @ values / weights.sum())


def single_particle_matrix(hamiltonian: OperatorSum) -> np.ndarray:
    """二次部分 Σ h_ij c†_i c_j 的 L×L 矩阵"""
    length = hamiltonian.length
    matrix = np.zeros((length, length))
    for code, value in hamiltonian.terms.items():
        cre, ann, den = decode(code)
        if den and not (cre | ann) and not den & (den - 1):
            site = den.bit_length() - 1
            matrix[site, site] += value
        elif not den and cre.bit_count() == 1 and ann.bit_count() == 1:
            i, j = cre.bit_length() - 1, ann.bit_length() - 1
            # 按格点排序的 c_j c†_i（j < i）等于 −c†_i c_j
            sign = 1.0 if i < j else -1.0
            matrix[i, j] += sign * value
            matrix[j, i] += sign * value
    return matrix


def save_spectrum(path: Union[str, Path], energies: np.ndarray):
    """每行一个能量"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.asarray(energies, dtype=float), fmt='%.17g')


def load_spectrum(path: Union[str, Path]) -> np.ndarray:
    return np.loadtxt(path, ndmin=1)
