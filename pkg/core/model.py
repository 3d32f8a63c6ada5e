"""
模型构建模块
一维无序相互作用无自旋费米链的哈密顿量与无序样本
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from .errors import ConfigError
from .logger_util import get_logger
from .opalg import OperatorSum, SiteOp, canonicalize

GENERATOR_NAME = 'PCG64'
BOUNDARIES = ('open', 'periodic')

_logger = get_logger(__name__)


@dataclass(frozen=True)
class ModelParams:
    """
    链模型参数

    H = Σ ε_i n_i + t Σ (c†_j c_i + h.c.) + U Σ n_i n_j，求和取最近邻键，ε_i ∈ [−W, W]
    """
    L: int
    W: float = 5.0
    t: float = 0.5
    U: float = 1.0
    seed: int = 0
    boundary: str = 'open'
    N: Optional[int] = field(default=None)

    def __post_init__(self):
        if self.L <= 0 or self.L % 2:
            raise ConfigError(f"格点数必须为正偶数: {self.L}")
        if self.N is None:
            object.__setattr__(self, 'N', self.L // 2)
        if self.N != self.L // 2:
            raise ConfigError(f"粒子数必须为半填充 {self.L // 2}，实际 {self.N}")
        if self.W < 0:
            raise ConfigError(f"无序强度不能为负: {self.W}")
        if self.boundary not in BOUNDARIES:
            raise ConfigError(f"未知的边界条件: {self.boundary}")


def draw_site_energies(rng: np.random.Generator, L: int, W: float) -> np.ndarray:
    """在 [−W, W] 上均匀抽取 L 个格点能量"""
    return rng.uniform(-W, W, size=L)


def disorder_realization(params: ModelParams) -> Tuple[np.ndarray, str]:
    """
    由种子确定的无序样本

    Returns:
        (格点能量数组, 随机数发生器名称)
    """
    rng = np.random.default_rng(params.seed)
    return draw_site_energies(rng, params.L, params.W), GENERATOR_NAME


def bonds(params: ModelParams) -> List[Tuple[int, int]]:
    """最近邻键列表；周期边界额外加入 (L−1, 0)"""
    pairs = [(i, i + 1) for i in range(params.L - 1)]
    if params.boundary == 'periodic' and params.L > 2:
        pairs.append((params.L - 1, 0))
    return pairs


def build_hamiltonian(params: ModelParams, energies: Optional[np.ndarray] = None) -> OperatorSum:
    """
    构建链哈密顿量

    Args:
        params: 模型参数
        energies: 格点能量（可选，缺省时按种子抽取）

    Returns:
        厄米配对的算符和
    """
    if energies is None:
        energies, _ = disorder_realization(params)
    if len(energies) != params.L:
        raise ConfigError(f"格点能量个数 {len(energies)} 与 L={params.L} 不一致")

    hamiltonian = OperatorSum(params.L)
    for site, energy in enumerate(energies):
        if energy != 0.0:
            hamiltonian.add_term(int(SiteOp.DENSITY) << (2 * site), float(energy))

    for i, j in bonds(params):
        if params.t != 0.0:
            for string, sign in canonicalize([('cdag', j), ('c', i)], params.L):
                hamiltonian.add_term(string, params.t * sign)
        if params.U != 0.0:
            for string, sign in canonicalize([('n', i), ('n', j)], params.L):
                hamiltonian.add_term(string, params.U * sign)

    _logger.debug("构建哈密顿量 L=%d W=%.3f seed=%d，共 %d 项",
                  params.L, params.W, params.seed, len(hamiltonian))
    return hamiltonian


def number_operator(length: int, site: int) -> OperatorSum:
    """单格点粒子数算符 n_site"""
    operator = OperatorSum(length)
    for string, sign in canonicalize([('n', site)], length):
        operator.add_term(string, sign)
    return operator


def save_disorder_csv(path: Union[str, Path], energies: np.ndarray, seed: Optional[int] = None):
    """把一个无序样本写成 CSV（site, energy）"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = f"generator: {GENERATOR_NAME}\n"
    if seed is not None:
        header += f"seed: {seed}\n"
    header += "site,energy"
    table = np.column_stack([np.arange(len(energies)), np.asarray(energies, dtype=float)])
    np.savetxt(path, table, delimiter=',', fmt=['%d', '%.17g'], header=header, comments='# ')
