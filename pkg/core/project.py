"""
投影对角化模块
在参考态及其一、二粒子-空穴激发张成的子空间内构建并对角化哈密顿量，并计算可观测量
"""
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import scipy.linalg

from .errors import ConfigError, SpectrumError
from .logger_util import get_logger
from .opalg import OperatorString, OperatorSum, encode
from .refstate import DiagonalView, ReferenceState

DEFAULT_CI_CAP = 8000
RESONANCE_TOLERANCE = 1e-14
SYMMETRY_TOLERANCE = 1e-10

_logger = get_logger(__name__)


@dataclass
class ExcitationBasis:
    """投影基：configs[0] 为参考态，generators[n] 把参考态映到 configs[n]"""
    configs: List[int]
    generators: List[Optional[OperatorString]]
    scores: List[float]
    reference: ReferenceState

    def __len__(self) -> int:
        return len(self.configs)

    def index_map(self) -> dict:
        return {config: position for position, config in enumerate(self.configs)}


@dataclass
class ProjectedMatrix:
    """投影哈密顿量（规范 Slater 基下的稠密对称矩阵）"""
    matrix: np.ndarray
    basis: ExcitationBasis


@dataclass(frozen=True)
class ObservableEstimate:
    """选定本征态中的期望值与投影空间内的方差"""
    expectation: float
    second_moment: float

    @property
    def variance(self) -> float:
        return self.second_moment - self.expectation ** 2


def _excitations(occupied: int, length: int, max_pairs: int = 2) -> List[int]:
    filled = [i for i in range(length) if occupied >> i & 1]
    empty = [i for i in range(length) if not occupied >> i & 1]
    configs = []
    for pairs in range(1, max_pairs + 1):
        for holes in combinations(filled, pairs):
            for particles in combinations(empty, pairs):
                config = occupied
                for site in holes + particles:
                    config ^= 1 << site
                configs.append(config)
    return configs


def enumerate_basis(hamiltonian: OperatorSum, ref: ReferenceState,
                    cap: int = DEFAULT_CI_CAP) -> ExcitationBasis:
    """
    按 |V_X/ΔE_X| 排序选取激发组态

    Args:
        hamiltonian: 扫描后的哈密顿量
        ref: 参考态
        cap: 基矢数上限（含参考态）

    Returns:
        投影基；同分时 |V_X| 大者优先，再按掩码升序
    """
    if cap < 1:
        raise ConfigError(f"基矢上限必须至少为 1: {cap}")
    occupied = ref.occupied
    candidates = _excitations(occupied, hamiltonian.length)
    _, amplitudes = hamiltonian.act_on(occupied)

    view = DiagonalView(hamiltonian)
    reference_energy = view.energy(occupied)
    gaps = view.energies(candidates) - reference_energy if candidates else np.empty(0)

    ranked = []
    for config, gap in zip(candidates, gaps):
        coupling = abs(amplitudes.get(config, 0.0))
        score = math.inf if abs(gap) <= RESONANCE_TOLERANCE else coupling / abs(gap)
        ranked.append((-score, -coupling, config))
    ranked.sort()
    ranked = ranked[:cap - 1]

    configs = [occupied]
    generators: List[Optional[OperatorString]] = [None]
    scores = [math.inf]
    for neg_score, _, config in ranked:
        configs.append(config)
        generators.append(OperatorString(encode(config & ~occupied, occupied & ~config, 0),
                                         hamiltonian.length))
        scores.append(-neg_score)
    _logger.debug("投影基：%d 个候选，保留 %d 个", len(candidates) + 1, len(configs))
    return ExcitationBasis(configs, generators, scores, ref)


def build_matrix(hamiltonian: OperatorSum, basis: ExcitationBasis) -> ProjectedMatrix:
    """M[m, n] = ⟨Φ_m|H|Φ_n⟩，Φ_n 为规范 Slater 态"""
    index = basis.index_map()
    size = len(basis)
    matrix = np.zeros((size, size))
    for column, config in enumerate(basis.configs):
        energy, amplitudes = hamiltonian.act_on(config)
        matrix[column, column] = energy
        for target, value in amplitudes.items():
            row = index.get(target)
            if row is not None:
                matrix[row, column] += value
    return ProjectedMatrix(matrix, basis)


def _as_array(matrix: Union[ProjectedMatrix, np.ndarray]) -> np.ndarray:
    return matrix.matrix if isinstance(matrix, ProjectedMatrix) else np.asarray(matrix, dtype=float)


def diagonalize(matrix: Union[ProjectedMatrix, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """
    对称矩阵对角化

    Returns:
        (升序本征值, 正交矩阵 R)，R 的第 k 列是第 k 个本征矢

    Raises:
        SpectrumError: 矩阵非方阵或不对称
    """
    array = _as_array(matrix)
    if array.ndim != 2 or array.shape[0] != array.shape[1]:
        raise SpectrumError(f"需要方阵，实际形状 {array.shape}")
    scale = max(1.0, float(np.max(np.abs(array)))) if array.size else 1.0
    if not np.allclose(array, array.T, rtol=0.0, atol=SYMMETRY_TOLERANCE * scale):
        raise SpectrumError("矩阵不对称")
    return scipy.linalg.eigh(0.5 * (array + array.T))


def reference_state_index(rotation: np.ndarray) -> int:
    """与参考组态重叠最大的本征态序号"""
    return int(np.argmax(np.abs(rotation[0, :])))


def observable_in_state(operator: OperatorSum, basis: ExcitationBasis, rotation: np.ndarray,
                        state_index: int, square: Optional[OperatorSum] = None) -> ObservableEstimate:
    """
    投影空间内选定本征态的可观测量

    O 须已经历与 H 相同的变换。二阶矩缺省取旋转后 O 矩阵自乘的对角元；
    给出 square（变换后的 O²）时改用其矩阵。

    Args:
        operator: 变换后的可观测量
        basis: 投影基
        rotation: diagonalize 返回的正交矩阵
        state_index: 本征态序号
        square: 变换后的 O²（可选）
    """
    if not 0 <= state_index < rotation.shape[1]:
        raise SpectrumError(f"本征态序号 {state_index} 越界")
    vector = rotation[:, state_index]
    rotated = rotation.T @ build_matrix(operator, basis).matrix @ vector
    expectation = float(rotated[state_index])
    if square is None:
        second = float(rotated @ rotated)
    else:
        second = float(vector @ build_matrix(square, basis).matrix @ vector)
    return ObservableEstimate(expectation, second)


def dump_matrix(path: Union[str, Path], matrix: Union[ProjectedMatrix, np.ndarray]):
    """稠密文本格式导出"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, _as_array(matrix), fmt='%.17g')
