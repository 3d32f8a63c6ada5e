"""
参考态模块
参考态记账、使能量取极值或方差极小的位移选择，以及基态与激发态扫描

扫描拥有自己的哈密顿量与参考态，不与其他扫描共享可变状态。
"""
import heapq
import math
from dataclasses import dataclass, field
from itertools import count
from pathlib import Path
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize_scalar

from .displace import (Displacement, TableCache, apply, elimination_angle,
                       lambda_for_elimination)
from .errors import ConfigError, InadmissibleMoveError, OperatorError
from .logger_util import get_logger, log_timing, log_warning
from .opalg import (DEFAULT_PRUNE_THRESHOLD, OperatorString, OperatorSum,
                    apply_to_config, decode, encode, truncate_by_excitation)

MODES = ('ground', 'excited')
VARIANCE_GRID_POINTS = 256
INTERVAL_GRID_POINTS = 64
SWAP_TOLERANCE = 1e-12
# 基态方差阶段允许的参考能量上升（仅舍入误差）
ENERGY_SLACK = 1e-12

_logger = get_logger(__name__)


# ---------------------------------------------------------------------------
# 数据类型
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReferenceState:
    """
    参考乘积态 |Φ0⟩ = c†_{β1}···c†_{βN}|0⟩

    occupied 是当前轨道上的占据掩码；labels 是固定的积分量标签（激发态扫描中不再改变）。
    """
    occupied: int
    length: int
    labels: Optional[int] = None
    energy: float = 0.0

    def __post_init__(self):
        if self.occupied < 0 or self.occupied >> self.length:
            raise ConfigError(f"占据掩码超出 {self.length} 个格点")
        if self.labels is None:
            object.__setattr__(self, 'labels', self.occupied)

    @property
    def particles(self) -> int:
        return self.occupied.bit_count()

    @property
    def occupied_sites(self) -> Tuple[int, ...]:
        return tuple(i for i in range(self.length) if self.occupied >> i & 1)

    def with_occupation(self, occupied: int, energy: float) -> 'ReferenceState':
        if occupied.bit_count() != self.particles:
            raise ConfigError("重新选择占据时粒子数发生变化")
        return ReferenceState(occupied, self.length, self.labels, energy)

    def with_energy(self, energy: float) -> 'ReferenceState':
        return ReferenceState(self.occupied, self.length, self.labels, energy)


@dataclass(frozen=True)
class CandidateMove:
    """候选位移：生成元、V_{X,1}、ΔE_X、转角与预期能量变化"""
    x: OperatorString
    v_x1: float
    delta_E: float
    angle: float
    energy_gain: float
    variance_drop: float = 0.0


@dataclass(frozen=True)
class SweepConfig:
    """扫描参数；max_order 只计产生与湮灭算符"""
    max_order: int = 2
    lambda_cutoff: float = 1e-3
    max_particles: Optional[int] = 2
    max_holes: Optional[int] = 2
    mode: str = 'ground'
    max_iterations: int = 1_000_000
    hopping_tolerance: float = 1e-10
    variance_tolerance: float = 1e-12
    prune_threshold: float = DEFAULT_PRUNE_THRESHOLD
    single_particle_basis: bool = True
    variance_stage: bool = True

    def __post_init__(self):
        if self.lambda_cutoff <= 0:
            raise ConfigError(f"λ 截断必须为正: {self.lambda_cutoff}")
        if self.mode not in MODES:
            raise ConfigError(f"未知的扫描模式: {self.mode}")
        if self.max_order < 2 or self.max_order % 2:
            raise ConfigError(f"最高阶数必须是不小于 2 的偶数: {self.max_order}")
        for cap in (self.max_particles, self.max_holes):
            if cap is not None and cap < 0:
                raise ConfigError("激发上限不能为负")
        if self.max_iterations <= 0:
            raise ConfigError("最大迭代次数必须为正")


@dataclass(frozen=True)
class VarianceCoefficients:
    """
    σ²(λ) = σ0² − sin2λ·c1 + sin²λ·c2 − sin4λ·c3 + sin²2λ·c4

    c1 = Σ V_{X,Z}V_{Z,1}，c2 = Σ(V_{X,Z}² − V_{Z,1}²)，c3 = ΔE·V/2，c4 = ΔE²/4 − V²
    """
    sigma0_sq: float
    c1: float
    c2: float
    c3: float
    c4: float

    def variance_at(self, angle):
        return (self.sigma0_sq
                - np.sin(2 * angle) * self.c1
                + np.sin(angle) ** 2 * self.c2
                - np.sin(4 * angle) * self.c3
                + np.sin(2 * angle) ** 2 * self.c4)

    @property
    def is_flat(self) -> bool:
        return self.c1 == 0.0 and self.c2 == 0.0 and self.c3 == 0.0 and self.c4 == 0.0


class TransformationLog:
    """按施加顺序记录的位移变换序列，定义累积幺正变换 U"""

    def __init__(self, length: int, records: Optional[Iterable[Displacement]] = None):
        self.length = length
        self.records: List[Displacement] = []
        for record in records or ():
            self.append(record)

    def append(self, displacement: Displacement):
        if displacement.x.length != self.length:
            raise OperatorError("位移生成元的格点数与记录不一致")
        self.records.append(displacement)

    def copy(self) -> 'TransformationLog':
        return TransformationLog(self.length, self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Displacement]:
        return iter(self.records)

    def to_lines(self) -> List[str]:
        """每行 `pattern λ`，pattern 为 site:code 片段"""
        lines = [f"# length={self.length}"]
        lines.extend(f"{record.x.to_text()} {record.angle!r}" for record in self.records)
        return lines

    @classmethod
    def from_lines(cls, lines: Iterable[str], length: Optional[int] = None) -> 'TransformationLog':
        body = []
        for raw in lines:
            line = raw.strip()
            if not line:
                continue
            if line.startswith('#'):
                header = line[1:].strip()
                if header.startswith('length='):
                    length = int(header[len('length='):])
                continue
            body.append(line)
        if length is None:
            raise OperatorError("缺少格点数（# length=L）")

        log = cls(length)
        for line in body:
            tokens = line.split()
            if len(tokens) < 2:
                raise OperatorError(f"无法解析的变换记录: {line!r}")
            x = OperatorString.parse(' '.join(tokens[:-1]), length)
            log.append(Displacement(x, float(tokens[-1])))
        return log

    def save(self, path: Union[str, Path]):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text('\n'.join(self.to_lines()) + '\n', encoding='utf-8')

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'TransformationLog':
        return cls.from_lines(Path(path).read_text(encoding='utf-8').splitlines())

    def replay(self, operator: OperatorSum, cache: Optional[TableCache] = None) -> OperatorSum:
        """对任意可观测量按相同顺序重放全部变换"""
        for record in self.records:
            operator = apply(operator, record, cache)
        return operator


@dataclass
class SweepResult:
    """扫描结果；可按 (H', ref, log) 解包"""
    hamiltonian: OperatorSum
    reference: Optional[ReferenceState]
    log: TransformationLog
    observables: Dict[str, OperatorSum] = field(default_factory=dict)
    converged: bool = True
    iterations: int = 0
    history: List[Tuple[str, float, float]] = field(default_factory=list)

    def __iter__(self):
        yield self.hamiltonian
        yield self.reference
        yield self.log


# ---------------------------------------------------------------------------
# 参考态上的量
# ---------------------------------------------------------------------------

class DiagonalView:
    """对角项的向量化视图：密度掩码与系数数组"""

    def __init__(self, hamiltonian: OperatorSum):
        diagonal = hamiltonian.diagonal_terms()
        self.densities = np.fromiter((decode(code)[2] for code in diagonal),
                                     dtype=np.int64, count=len(diagonal))
        self.coefficients = np.fromiter(diagonal.values(), dtype=float, count=len(diagonal))

    def energy(self, occupied: int) -> float:
        inside = (self.densities & ~np.int64(occupied)) == 0
        return float(self.coefficients[inside].sum())

    def energies(self, configs: Sequence[int], chunk: int = 512) -> np.ndarray:
        configs = np.asarray(configs, dtype=np.int64)
        result = np.empty(len(configs))
        for begin in range(0, len(configs), chunk):
            block = configs[begin:begin + chunk]
            inside = (self.densities[None, :] & ~block[:, None]) == 0
            result[begin:begin + chunk] = inside @ self.coefficients
        return result


def _occupation(ref: Union[ReferenceState, int]) -> int:
    return ref if isinstance(ref, int) else ref.occupied


def _admissible_action(x: OperatorString, occupied: int) -> Tuple[int, int]:
    if x.is_diagonal:
        raise InadmissibleMoveError(f"对角算符串不能作为位移: {x}")
    action = apply_to_config(x, occupied)
    if action is None:
        raise InadmissibleMoveError(f"X|Φ0⟩ = 0: {x}")
    return action


def classical_energy(hamiltonian: OperatorSum, ref: Union[ReferenceState, int]) -> float:
    """参考态的经典能量 ⟨Φ0|H|Φ0⟩"""
    return hamiltonian.classical_energy(_occupation(ref))


def matrix_element_to_ref(hamiltonian: OperatorSum, ref: Union[ReferenceState, int],
                          x: OperatorString) -> float:
    """V_{X,1} = ⟨Φ0|X† H|Φ0⟩，含 X|Φ0⟩ 相对规范 Slater 序的费米符号"""
    occupied = _occupation(ref)
    sign, target = _admissible_action(x, occupied)
    _, amplitudes = hamiltonian.act_on(occupied)
    return sign * amplitudes.get(target, 0.0)


def energy_difference(hamiltonian: OperatorSum, ref: Union[ReferenceState, int],
                      x: OperatorString) -> float:
    """ΔE_X = ⟨Φ_X|H|Φ_X⟩ − ⟨Φ0|H|Φ0⟩"""
    occupied = _occupation(ref)
    _, target = _admissible_action(x, occupied)
    return hamiltonian.classical_energy(target) - hamiltonian.classical_energy(occupied)


def lambda_energy(v_x1: float, delta_E: float) -> float:
    """使参考态能量取极值的转角 tan 2λ = 2V_{X,1}/ΔE_X，|λ| ≤ π/4"""
    return lambda_for_elimination(v_x1, delta_E)


def energy_gain(v_x1: float, delta_E: float, angle: float) -> float:
    """⟨H(λ)⟩ − ⟨H⟩ = −sin2λ·V_{X,1} + sin²λ·ΔE_X"""
    return -math.sin(2 * angle) * v_x1 + math.sin(angle) ** 2 * delta_E


def reference_variance(hamiltonian: OperatorSum, ref: Union[ReferenceState, int]) -> float:
    """σ²(0) = ⟨H²⟩ − ⟨H⟩²"""
    _, amplitudes = hamiltonian.act_on(_occupation(ref))
    return float(sum(value * value for value in amplitudes.values()))


def _profile(amp0: Dict[int, float], e0: float, ampx: Dict[int, float], ex: float,
             sign: int, occupied: int, target: int) -> VarianceCoefficients:
    v = sign * amp0.get(target, 0.0)
    sigma0_sq = 0.0
    reach_ref = 0.0
    for config, value in amp0.items():
        sigma0_sq += value * value
        if config != target:
            reach_ref += value * value
    reach_x = 0.0
    overlap = 0.0
    for config, value in ampx.items():
        if config == occupied:
            continue
        reach_x += value * value
        partner = amp0.get(config)
        if partner is not None and config != target:
            overlap += value * partner
    delta_E = ex - e0
    return VarianceCoefficients(sigma0_sq=sigma0_sq,
                                c1=sign * overlap,
                                c2=reach_x - reach_ref,
                                c3=0.5 * delta_E * v,
                                c4=0.25 * delta_E * delta_E - v * v)


def variance_profile(hamiltonian: OperatorSum, ref: Union[ReferenceState, int],
                     x: OperatorString) -> VarianceCoefficients:
    """
    参考态能量方差随 λ 变化的系数

    Z 求和只包含从 Φ0 或 Φ_X 经单个哈密顿量项可达、且不是 Φ0 与 Φ_X 本身的组态。
    """
    occupied = _occupation(ref)
    sign, target = _admissible_action(x, occupied)
    e0, amp0 = hamiltonian.act_on(occupied)
    ex, ampx = hamiltonian.act_on(target)
    return _profile(amp0, e0, ampx, ex, sign, occupied, target)


def _wrap_angle(angle: float) -> float:
    while angle <= -math.pi / 2:
        angle += math.pi
    while angle > math.pi / 2:
        angle -= math.pi
    return angle


def energy_preserving_intervals(v_x1: float, delta_E: float,
                                limit: float = math.pi / 4) -> List[Tuple[float, float]]:
    """
    [−limit, limit] 中不提高参考能量（energy_gain ≤ 0）的转角区间

    energy_gain = sinλ·cosλ·ΔE·(tanλ − tanλ0)，tanλ0 = 2V/ΔE。
    """
    if delta_E == 0.0:
        if v_x1 == 0.0:
            return [(-limit, limit)]
        return [(0.0, limit)] if v_x1 > 0 else [(-limit, 0.0)]
    lam0 = max(-limit, min(limit, math.atan(2 * v_x1 / delta_E)))
    low, high = min(0.0, lam0), max(0.0, lam0)
    if delta_E > 0:
        intervals = [(low, high)]
    else:
        intervals = [(-limit, low), (high, limit)]
    return [(a, b) for a, b in intervals if b > a]


def _minimize_in(coeffs: VarianceCoefficients, low: float, high: float) -> Tuple[float, float]:
    grid = np.linspace(low, high, INTERVAL_GRID_POINTS + 1)
    values = coeffs.variance_at(grid)
    best = int(np.argmin(values))
    angle, value = float(grid[best]), float(values[best])
    a, b = grid[max(best - 1, 0)], grid[min(best + 1, INTERVAL_GRID_POINTS)]
    refined = minimize_scalar(coeffs.variance_at, bounds=(a, b), method='bounded',
                              options={'xatol': 1e-12})
    if refined.success and refined.fun <= value:
        angle, value = float(refined.x), float(refined.fun)
    return angle, value


def minimize_variance_lambda(coeffs: VarianceCoefficients,
                             bounds: Optional[Sequence[Tuple[float, float]]] = None
                             ) -> Tuple[float, float]:
    """
    在 (−π/2, π/2] 上求 σ²(λ) 的全局极小

    先在 256 点网格上定位，再以黄金分割细化。给出 bounds 时只在这些闭区间内搜索。

    Returns:
        (λ, σ²(0) − σ²(λ))；没有下降时返回 (0, 0)
    """
    if coeffs.is_flat:
        return 0.0, 0.0
    if bounds is not None:
        found = [_minimize_in(coeffs, low, high) for low, high in bounds if high > low]
        if not found:
            return 0.0, 0.0
        angle, value = min(found, key=lambda item: item[1])
        drop = coeffs.sigma0_sq - value
        return (angle, drop) if drop > 0.0 else (0.0, 0.0)

    step = math.pi / VARIANCE_GRID_POINTS
    grid = -math.pi / 2 + step * np.arange(1, VARIANCE_GRID_POINTS + 1)
    values = coeffs.variance_at(grid)
    best = int(np.argmin(values))
    angle, value = float(grid[best]), float(values[best])

    try:
        refined = minimize_scalar(coeffs.variance_at, bracket=(angle - step, angle, angle + step),
                                  method='golden', options={'xtol': 1e-12})
        if refined.fun <= value:
            angle, value = float(refined.x), float(refined.fun)
    except ValueError:
        # 平台区没有严格的括号
        pass

    angle = _wrap_angle(angle)
    drop = coeffs.sigma0_sq - float(coeffs.variance_at(angle))
    if drop <= 0.0:
        return 0.0, 0.0
    return angle, drop


def select_occupation(hamiltonian: OperatorSum, particles: int,
                      start: Optional[int] = None) -> ReferenceState:
    """
    以单轨道交换的最速下降选择经典能量最低的占据

    Args:
        hamiltonian: 哈密顿量
        particles: 粒子数
        start: 初始占据（缺省取单体能量最低的 N 个轨道）
    """
    length = hamiltonian.length
    if not 0 <= particles <= length:
        raise ConfigError(f"粒子数 {particles} 超出 [0, {length}]")
    view = DiagonalView(hamiltonian)

    if start is None:
        single = np.zeros(length)
        for density, value in zip(view.densities, view.coefficients):
            density = int(density)
            if density and not density & (density - 1):
                single[density.bit_length() - 1] += value
        chosen = np.argsort(single, kind='stable')[:particles]
        occupied = sum(1 << int(site) for site in chosen)
    else:
        if start.bit_count() != particles:
            raise ConfigError("初始占据的粒子数不符")
        occupied = start

    energy = view.energy(occupied)
    while 0 < particles < length:
        filled = [i for i in range(length) if occupied >> i & 1]
        empty = [i for i in range(length) if not occupied >> i & 1]
        swaps = [occupied ^ (1 << i) ^ (1 << j) for i in filled for j in empty]
        energies = view.energies(swaps)
        best = int(np.argmin(energies))
        if energies[best] >= energy - SWAP_TOLERANCE:
            break
        occupied, energy = swaps[best], float(energies[best])
    return ReferenceState(occupied, length, energy=energy)


def harvest_moves(amplitudes: Dict[int, float], occupied: int, length: int,
                  max_order: int) -> List[OperatorString]:
    """
    由 H|Φ0⟩ 可达的组态收集候选生成元

    每个组态 z 给出裸量子部分 X = c†_{z∖Φ0} c_{Φ0∖z}，只保留阶数不超过 max_order 的。
    """
    moves = []
    for config in sorted(amplitudes):
        if amplitudes[config] == 0.0:
            continue
        created = config & ~occupied
        if 2 * created.bit_count() > max_order:
            continue
        moves.append(OperatorString(encode(created, occupied & ~config, 0), length))
    return moves


# ---------------------------------------------------------------------------
# 扫描
# ---------------------------------------------------------------------------

class _Frame:
    """当前哈密顿量与参考态下的缓存量"""

    def __init__(self, hamiltonian: OperatorSum, ref: ReferenceState):
        self.hamiltonian = hamiltonian
        self.ref = ref
        self.occupied = ref.occupied
        self.view = DiagonalView(hamiltonian)
        self.diagonal, self.amplitudes = hamiltonian.act_on(ref.occupied)
        self.energy = self.view.energy(ref.occupied)
        self.variance = float(sum(value * value for value in self.amplitudes.values()))

    def energy_move(self, x: OperatorString) -> Optional[CandidateMove]:
        action = apply_to_config(x, self.occupied)
        if action is None:
            return None
        sign, target = action
        v = sign * self.amplitudes.get(target, 0.0)
        if v == 0.0:
            return None
        delta_E = self.view.energy(target) - self.energy
        angle = lambda_energy(v, delta_E)
        return CandidateMove(x, v, delta_E, angle, energy_gain(v, delta_E, angle))

    def profile(self, x: OperatorString) -> Optional[Tuple[VarianceCoefficients, float, float]]:
        action = apply_to_config(x, self.occupied)
        if action is None:
            return None
        sign, target = action
        ex, ampx = self.hamiltonian.act_on(target)
        coeffs = _profile(self.amplitudes, self.diagonal, ampx, ex, sign, self.occupied, target)
        return coeffs, sign * self.amplitudes.get(target, 0.0), ex - self.diagonal


Evaluator = Callable[[_Frame, OperatorString, bool], Optional[Tuple[float, CandidateMove]]]


class _Sweep:
    """一次扫描的可变状态"""

    def __init__(self, hamiltonian: OperatorSum, config: SweepConfig,
                 observables: Optional[Dict[str, OperatorSum]] = None,
                 log: Optional[TransformationLog] = None):
        self.config = config
        self.hamiltonian = hamiltonian
        self.length = hamiltonian.length
        self.observables = dict(observables or {})
        self.log = log.copy() if log is not None else TransformationLog(self.length)
        self.cache = TableCache(config.prune_threshold)
        self.iterations = 0
        self.converged = True
        self.history: List[Tuple[str, float, float]] = []
        self._logger = get_logger(__name__)

    @property
    def exhausted(self) -> bool:
        return self.iterations >= self.config.max_iterations

    def _mark_exhausted(self, stage: str):
        if self.converged:
            log_warning(f"扫描在阶段 {stage} 达到最大迭代次数 {self.config.max_iterations}，返回部分结果",
                        self._logger)
        self.converged = False

    def apply_move(self, x: OperatorString, angle: float, stage: str,
                   ref: Optional[ReferenceState] = None):
        displacement = Displacement(x, angle)
        self.hamiltonian = apply(self.hamiltonian, displacement, self.cache)
        self.observables = {name: apply(operator, displacement, self.cache)
                            for name, operator in self.observables.items()}
        if ref is not None:
            cfg = self.config
            self.hamiltonian = truncate_by_excitation(self.hamiltonian, ref,
                                                      cfg.max_particles, cfg.max_holes)
            self.observables = {name: truncate_by_excitation(operator, ref,
                                                             cfg.max_particles, cfg.max_holes)
                                for name, operator in self.observables.items()}
        self.log.append(displacement)
        self.iterations += 1
        self._logger.debug("阶段 %s 施加 X=%s λ=%.6g，共 %d 项", stage, x, angle, len(self.hamiltonian))

    def rotate_orbitals(self) -> bool:
        """循环消去裸的 c†_i c_j 项，直到所有转角小于 hopping_tolerance"""
        tolerance = self.config.hopping_tolerance
        while True:
            applied = 0
            for code in sorted(self.hamiltonian.offdiagonal_terms()):
                cre, ann, den = decode(code)
                if den or (cre | ann).bit_count() != 2 or code not in self.hamiltonian.terms:
                    continue
                x = OperatorString(code, self.length)
                angle = elimination_angle(self.hamiltonian, x)
                if abs(angle) < tolerance:
                    continue
                if self.exhausted:
                    self._mark_exhausted('orbital')
                    return False
                # 二次型生成元不会提高任何项的阶数，此阶段不截断
                self.apply_move(x, angle, 'orbital')
                applied += 1
            if not applied:
                return True

    def greedy(self, ref: ReferenceState, stage: str, evaluate: Evaluator,
               after_move: Callable[[ReferenceState], ReferenceState]) -> ReferenceState:
        """
        惰性优先队列驱动的贪心循环

        堆中保存过期评分；取出堆顶后重新评估，若新评分仍不低于下一个堆顶则接受，否则放回。
        堆空时重新收集候选；收集不到，或上一轮收集的候选一个也没有被接受，即收敛。
        """
        frame = _Frame(self.hamiltonian, ref)
        heap: List[Tuple[float, int, int]] = []
        sequence = count()
        max_order = self.config.max_order
        fresh = False

        while True:
            if not heap:
                if fresh:
                    # 参考态未变，再收集只会得到同一批候选
                    return frame.ref
                for x in harvest_moves(frame.amplitudes, frame.occupied, self.length, max_order):
                    scored = evaluate(frame, x, False)
                    if scored is not None:
                        heapq.heappush(heap, (-scored[0], next(sequence), x.code))
                if not heap:
                    return frame.ref
                fresh = True

            _, _, code = heapq.heappop(heap)
            scored = evaluate(frame, OperatorString(code, self.length), True)
            if scored is None:
                continue
            score, move = scored
            if heap and score < -heap[0][0]:
                heapq.heappush(heap, (-score, next(sequence), code))
                continue
            if self.exhausted:
                self._mark_exhausted(stage)
                return frame.ref

            self.apply_move(move.x, move.angle, stage, frame.ref)
            fresh = False
            ref = after_move(frame.ref)
            frame = _Frame(self.hamiltonian, ref)
            frame.ref = ref.with_energy(frame.energy)
            self.history.append((stage, frame.energy, frame.variance))

    def result(self, ref: Optional[ReferenceState]) -> SweepResult:
        self.cache.clear()
        if ref is not None:
            ref = ref.with_energy(self.hamiltonian.classical_energy(ref.occupied))
        return SweepResult(hamiltonian=self.hamiltonian, reference=ref, log=self.log,
                           observables=self.observables, converged=self.converged,
                           iterations=self.iterations, history=self.history)


def _ground_energy_evaluator(cutoff: float) -> Evaluator:
    def evaluate(frame: _Frame, x: OperatorString, final: bool):
        move = frame.energy_move(x)
        if move is None or abs(move.angle) < cutoff or move.energy_gain >= 0.0:
            return None
        return -move.energy_gain, move
    return evaluate


def _excited_energy_evaluator(cutoff: float, tolerance: float) -> Evaluator:
    def evaluate(frame: _Frame, x: OperatorString, final: bool):
        move = frame.energy_move(x)
        if move is None or abs(move.angle) < cutoff:
            return None
        # 收集与最终评估用同一道 σ² 门槛
        coeffs, _, _ = frame.profile(x)
        if coeffs.variance_at(move.angle) > coeffs.sigma0_sq + tolerance:
            return None
        return abs(move.energy_gain), move
    return evaluate


def _variance_evaluator(cutoff: float, tolerance: float, keep_energy: bool = False) -> Evaluator:
    """keep_energy 时转角限于 |λ| ≤ π/4 且不提高参考能量"""
    def evaluate(frame: _Frame, x: OperatorString, final: bool):
        profiled = frame.profile(x)
        if profiled is None:
            return None
        coeffs, v, delta_E = profiled
        bounds = energy_preserving_intervals(v, delta_E) if keep_energy else None
        angle, drop = minimize_variance_lambda(coeffs, bounds)
        if drop <= tolerance or abs(angle) < cutoff:
            return None
        gain = energy_gain(v, delta_E, angle)
        if keep_energy and gain > ENERGY_SLACK:
            return None
        return drop, CandidateMove(x, v, delta_E, angle, gain, drop)
    return evaluate


def rotate_to_orbital_basis(hamiltonian: OperatorSum, tolerance: float = 1e-10,
                            observables: Optional[Dict[str, OperatorSum]] = None,
                            log: Optional[TransformationLog] = None,
                            max_iterations: int = 1_000_000,
                            prune_threshold: float = DEFAULT_PRUNE_THRESHOLD) -> SweepResult:
    """
    基态扫描的第一阶段：把二次项对角化到单粒子轨道基

    可对同一样本只做一次，再供多个激发态标签共享。
    """
    config = SweepConfig(hopping_tolerance=tolerance, max_iterations=max_iterations,
                         prune_threshold=prune_threshold)
    sweep = _Sweep(hamiltonian, config, observables, log)
    with log_timing('orbital', _logger):
        sweep.rotate_orbitals()
    return sweep.result(None)


def ground_state_sweep(hamiltonian: OperatorSum, config: SweepConfig,
                       particles: Optional[int] = None,
                       observables: Optional[Dict[str, OperatorSum]] = None,
                       log: Optional[TransformationLog] = None) -> SweepResult:
    """
    基态扫描

    1. 消去二阶量子项；2. 选能量最低的占据，反复施加最能降低能量的位移并重新选择占据；
    3. 固定占据做方差极小化，转角限于 |λ| ≤ π/4 且不提高参考能量。每次施加后按激发上限截断。

    Args:
        hamiltonian: 哈密顿量
        config: 扫描参数（mode 须为 ground）
        particles: 粒子数（缺省半填充）
        observables: 随 H 一起变换的可观测量
        log: 已有的变换记录（在其后追加）

    Returns:
        扫描结果
    """
    if config.mode != 'ground':
        raise ConfigError("基态扫描需要 mode=ground")
    particles = hamiltonian.length // 2 if particles is None else particles
    sweep = _Sweep(hamiltonian, config, observables, log)

    with log_timing('ground', _logger):
        if config.single_particle_basis and not sweep.rotate_orbitals():
            return sweep.result(select_occupation(sweep.hamiltonian, particles))

        ref = select_occupation(sweep.hamiltonian, particles)
        _logger.info("基态扫描：单粒子阶段完成，%d 次变换，参考能量 %.10g", sweep.iterations, ref.energy)

        def reselect(previous: ReferenceState) -> ReferenceState:
            return select_occupation(sweep.hamiltonian, particles, start=previous.occupied)

        ref = sweep.greedy(ref, 'energy', _ground_energy_evaluator(config.lambda_cutoff), reselect)
        _logger.info("基态扫描：能量阶段完成，%d 次变换，参考能量 %.10g", sweep.iterations, ref.energy)

        if config.variance_stage and sweep.converged:
            ref = sweep.greedy(ref, 'variance',
                               _variance_evaluator(config.lambda_cutoff, config.variance_tolerance,
                                                   keep_energy=True),
                               lambda previous: previous)
    return sweep.result(ref)


def excited_state_sweep(hamiltonian: OperatorSum, labels: int, config: SweepConfig,
                        observables: Optional[Dict[str, OperatorSum]] = None,
                        log: Optional[TransformationLog] = None) -> SweepResult:
    """
    激发态扫描：标签固定，先施加能量变化最大且不增大 σ² 的位移，再做方差极小化

    Args:
        hamiltonian: 哈密顿量
        labels: 固定的积分量标签（占据掩码）
        config: 扫描参数（mode 须为 excited）
        observables: 随 H 一起变换的可观测量
        log: 已有的变换记录（在其后追加）

    Returns:
        扫描结果
    """
    if config.mode != 'excited':
        raise ConfigError("激发态扫描需要 mode=excited")
    sweep = _Sweep(hamiltonian, config, observables, log)

    with log_timing('excited', _logger):
        if config.single_particle_basis and not sweep.rotate_orbitals():
            return sweep.result(ReferenceState(labels, hamiltonian.length))

        ref = ReferenceState(labels, hamiltonian.length,
                             energy=sweep.hamiltonian.classical_energy(labels))
        ref = sweep.greedy(ref, 'energy',
                           _excited_energy_evaluator(config.lambda_cutoff, config.variance_tolerance),
                           lambda previous: previous)
        if config.variance_stage and sweep.converged:
            ref = sweep.greedy(ref, 'variance',
                               _variance_evaluator(config.lambda_cutoff, config.variance_tolerance),
                               lambda previous: previous)
    return sweep.result(ref)
