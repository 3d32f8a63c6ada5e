"""
实验流程模块
实验配置、按种子生成的无序样本、样本级并行执行、结果持久化与汇总

五种实验：基态能量误差、基态中心格点粒子数方差、激发能级统计、无穷温度方差与有限温度方差。
"""
import csv
import math
import re
from dataclasses import dataclass, fields, replace
from itertools import combinations
from multiprocessing import Pool
from pathlib import Path
from time import perf_counter
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats as scipy_stats

from .errors import ConfigError, DispEigError, ExperimentError, SpectrumError
from .logger_util import get_logger, log_error, log_warning
from .model import GENERATOR_NAME, ModelParams, build_hamiltonian, number_operator
from .opalg import OperatorSum
from .oracle import FockBasis, dense_matrix, full_spectrum, site_number_variance, thermal_average
from .project import (ExcitationBasis, build_matrix, diagonalize, enumerate_basis,
                      observable_in_state, reference_state_index)
from .refstate import (SweepConfig, SweepResult, excited_state_sweep, ground_state_sweep,
                       rotate_to_orbital_basis)
from .resource_path import get_results_dir
from .stats import (DEFAULT_BIN_WIDTH, DEFAULT_S_MAX, DEFAULT_WINDOW, SpacingSample,
                    distribution_distance, normalized_spacings, save_histogram, success_ratio)

EXPERIMENTS = ('gs_energy_error', 'gs_site_variance', 'excited_levels',
               'infinite_T_variance', 'thermal_variance')
LABEL_STRATEGIES = ('all', 'random')
MAX_ALL_LABELS_LENGTH = 14
ROW_FIELDS = ['experiment', 'L', 'W', 'seed', 'order', 'observable', 'value', 'aux']
SUMMARY_FIELDS = ['experiment', 'L', 'W', 'order', 'observable', 'statistic',
                  'value', 'std_error', 'count']
LEVEL_OBSERVABLES = ('level', 'exact_level')
CENTER = 'n_center'

_logger = get_logger(__name__)


# ---------------------------------------------------------------------------
# 配置与结果行
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """一次实验的全部参数；样本 i 使用种子 base_seed + i"""
    experiment: str = 'gs_energy_error'
    lengths: Tuple[int, ...] = (12,)
    disorders: Tuple[float, ...] = (5.0,)
    orders: Tuple[int, ...] = (2,)
    samples: int = 1
    base_seed: int = 0
    workers: int = 1
    output: Optional[Path] = None
    t: float = 0.5
    U: float = 1.0
    boundary: str = 'open'
    lambda_cutoff_ground: float = 1e-3
    lambda_cutoff_excited: float = 1e-4
    max_particles: Optional[int] = 2
    max_holes: Optional[int] = 2
    max_iterations: int = 1_000_000
    hopping_tolerance: float = 1e-10
    variance_tolerance: float = 1e-12
    prune_threshold: float = 1e-12
    ci_cap: int = 8000
    label_strategy: str = 'all'
    label_count: int = 0
    temperatures: Tuple[float, ...] = (0.5, 1.0, 2.0, 4.0, math.inf)
    oracle_max_length: int = 16
    record_wall_time: bool = False

    def __post_init__(self):
        for name in ('lengths', 'disorders', 'orders', 'temperatures'):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.output is not None:
            object.__setattr__(self, 'output', Path(self.output))

        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"未知的实验: {self.experiment}")
        if self.samples < 0:
            raise ConfigError(f"样本数不能为负: {self.samples}")
        if self.workers < 1:
            raise ConfigError(f"进程数至少为 1: {self.workers}")
        if self.ci_cap < 1:
            raise ConfigError(f"投影基上限至少为 1: {self.ci_cap}")
        if self.label_strategy not in LABEL_STRATEGIES:
            raise ConfigError(f"未知的标签策略: {self.label_strategy}")
        if any(temperature <= 0 for temperature in self.temperatures):
            raise ConfigError("温度必须为正")
        # 提前校验模型与扫描参数
        for L in self.lengths:
            for W in self.disorders:
                self.model_params(L, W, self.base_seed)
        for order in self.orders:
            self.sweep_config(order, 'ground')
            self.sweep_config(order, 'excited')

    @property
    def output_path(self) -> Path:
        if self.output is not None:
            return self.output
        return get_results_dir() / f"{self.experiment}.csv"

    def model_params(self, L: int, W: float, seed: int) -> ModelParams:
        return ModelParams(L=L, W=W, t=self.t, U=self.U, seed=seed, boundary=self.boundary)

    def sweep_config(self, order: int, mode: str, **overrides) -> SweepConfig:
        cutoff = self.lambda_cutoff_ground if mode == 'ground' else self.lambda_cutoff_excited
        options = dict(max_order=order, lambda_cutoff=cutoff, max_particles=self.max_particles,
                       max_holes=self.max_holes, mode=mode, max_iterations=self.max_iterations,
                       hopping_tolerance=self.hopping_tolerance,
                       variance_tolerance=self.variance_tolerance,
                       prune_threshold=self.prune_threshold)
        options.update(overrides)
        return SweepConfig(**options)

    def header_items(self) -> List[Tuple[str, str]]:
        items = []
        for item in fields(self):
            value = getattr(self, item.name)
            if item.name == 'output':
                value = self.output_path.as_posix()
            elif isinstance(value, tuple):
                value = '[' + ', '.join(_format_number(v) for v in value) + ']'
            elif isinstance(value, float):
                value = _format_number(value)
            items.append((item.name, str(value)))
        items.append(('generator', GENERATOR_NAME))
        return items


@dataclass(frozen=True)
class ResultRow:
    """一行结果；aux 存放标签、温度或收敛标记"""
    experiment: str
    L: int
    W: float
    seed: int
    order: int
    observable: str
    value: float
    aux: str = ''
    wall_time: Optional[float] = None

    def as_dict(self, with_wall_time: bool = False) -> Dict[str, str]:
        row = {'experiment': self.experiment, 'L': str(self.L), 'W': _format_number(self.W),
               'seed': str(self.seed), 'order': str(self.order), 'observable': self.observable,
               'value': _format_number(self.value), 'aux': self.aux}
        if with_wall_time:
            row['wall_time'] = '' if self.wall_time is None else f"{self.wall_time:.3f}"
        return row


def _format_number(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ---------------------------------------------------------------------------
# 激发态标签
# ---------------------------------------------------------------------------

def parse_label_strategy(text: str) -> Tuple[str, int]:
    """解析 'all' 或 'random(k)'"""
    text = text.strip()
    if text == 'all':
        return 'all', 0
    match = re.fullmatch(r'random\((\d+)\)', text)
    if match:
        return 'random', int(match.group(1))
    raise ConfigError(f"无法解析的标签策略: {text}")


def enumerate_excited_labels(L: int, N: int, strategy: str = 'all', count: int = 0,
                             seed: int = 0) -> List[int]:
    """
    激发态的积分量标签集合

    Args:
        L: 格点数
        N: 粒子数
        strategy: 'all'（全部 C(L,N) 个，要求 L ≤ 14）或 'random'
        count: random 策略下不重复抽取的个数
        seed: random 策略的种子

    Returns:
        占据掩码列表
    """
    if strategy == 'all':
        if L > MAX_ALL_LABELS_LENGTH:
            raise ConfigError(f"all 策略要求 L ≤ {MAX_ALL_LABELS_LENGTH}，实际 {L}")
        return sorted(sum(1 << site for site in sites) for sites in combinations(range(L), N))
    if strategy != 'random':
        raise ConfigError(f"未知的标签策略: {strategy}")
    if count > math.comb(L, N):
        raise ConfigError(f"无法从 C({L},{N}) 个标签中不重复抽取 {count} 个")

    rng = np.random.default_rng(seed)
    labels: List[int] = []
    seen = set()
    while len(labels) < count:
        mask = sum(1 << int(site) for site in rng.choice(L, size=N, replace=False))
        if mask not in seen:
            seen.add(mask)
            labels.append(mask)
    return labels


# ---------------------------------------------------------------------------
# 单个样本
# ---------------------------------------------------------------------------

@dataclass
class _ExactSolution:
    basis: FockBasis
    energies: np.ndarray
    vectors: np.ndarray


class _SampleContext:
    """一个 (L, W, seed) 样本的共享数据，惰性计算"""

    def __init__(self, config: ExperimentConfig, L: int, W: float, seed: int):
        self.config = config
        self.params = config.model_params(L, W, seed)
        self.hamiltonian = build_hamiltonian(self.params)
        self.center = L // 2
        self._exact: Optional[_ExactSolution] = None
        self._rotated: Dict[bool, SweepResult] = {}
        self._labels: Optional[List[int]] = None

    def row(self, order: int, observable: str, value: float, aux: str = '') -> ResultRow:
        p = self.params
        return ResultRow(self.config.experiment, p.L, p.W, p.seed, order, observable, float(value), aux)

    @property
    def exact(self) -> Optional[_ExactSolution]:
        if self.params.L > self.config.oracle_max_length:
            return None
        if self._exact is None:
            basis = FockBasis.build(self.params.L, self.params.N)
            energies, vectors = full_spectrum(dense_matrix(self.hamiltonian, basis))
            self._exact = _ExactSolution(basis, energies, vectors)
        return self._exact

    def observables(self) -> Dict[str, OperatorSum]:
        return {CENTER: number_operator(self.params.L, self.center)}

    def rotated(self, with_observable: bool) -> SweepResult:
        """单粒子阶段只做一次，供同一样本的全部标签共享"""
        if with_observable not in self._rotated:
            cfg = self.config
            self._rotated[with_observable] = rotate_to_orbital_basis(
                self.hamiltonian, cfg.hopping_tolerance,
                observables=self.observables() if with_observable else None,
                max_iterations=cfg.max_iterations, prune_threshold=cfg.prune_threshold)
        return self._rotated[with_observable]

    @property
    def labels(self) -> List[int]:
        if self._labels is None:
            cfg = self.config
            self._labels = enumerate_excited_labels(self.params.L, self.params.N,
                                                    cfg.label_strategy, cfg.label_count,
                                                    self.params.seed)
        return self._labels

    def project(self, result: SweepResult) -> Tuple[np.ndarray, np.ndarray, ExcitationBasis]:
        basis = enumerate_basis(result.hamiltonian, result.reference, self.config.ci_cap)
        eigenvalues, rotation = diagonalize(build_matrix(result.hamiltonian, basis))
        return eigenvalues, rotation, basis

    def excited_states(self, order: int, with_observable: bool) -> Iterator[Tuple[int, SweepResult]]:
        rotated = self.rotated(with_observable)
        sweep_config = self.config.sweep_config(order, 'excited', single_particle_basis=False)
        for label in self.labels:
            yield label, excited_state_sweep(rotated.hamiltonian, label, sweep_config,
                                             observables=rotated.observables, log=rotated.log)


def _convergence_tag(result: SweepResult) -> str:
    return 'converged' if result.converged else 'not_converged'


def _gs_energy_error(ctx: _SampleContext, order: int) -> List[ResultRow]:
    result = ground_state_sweep(ctx.hamiltonian, ctx.config.sweep_config(order, 'ground'))
    eigenvalues, _, _ = ctx.project(result)
    energy = float(eigenvalues[0])
    rows = [ctx.row(order, 'energy', energy, _convergence_tag(result))]
    exact = ctx.exact
    if exact is not None:
        error = abs(energy - float(exact.energies[0])) / ctx.params.L
        rows.append(ctx.row(order, 'energy_error', error))
    return rows


def _gs_site_variance(ctx: _SampleContext, order: int) -> List[ResultRow]:
    result = ground_state_sweep(ctx.hamiltonian, ctx.config.sweep_config(order, 'ground'),
                                observables=ctx.observables())
    _, rotation, basis = ctx.project(result)
    estimate = observable_in_state(result.observables[CENTER], basis, rotation, 0)
    return [ctx.row(order, 'site_variance', estimate.variance, _convergence_tag(result))]


def _excited_levels(ctx: _SampleContext, order: int) -> List[ResultRow]:
    rows = []
    failures = 0
    for label, result in ctx.excited_states(order, with_observable=False):
        eigenvalues, rotation, _ = ctx.project(result)
        rows.append(ctx.row(order, 'level', eigenvalues[reference_state_index(rotation)], str(label)))
        failures += not result.converged
    rows.append(ctx.row(order, 'nonconverged', failures))
    return rows


def _excited_variances(ctx: _SampleContext, order: int) -> Tuple[List[int], np.ndarray, np.ndarray, int]:
    labels, energies, variances = [], [], []
    failures = 0
    for label, result in ctx.excited_states(order, with_observable=True):
        eigenvalues, rotation, basis = ctx.project(result)
        index = reference_state_index(rotation)
        estimate = observable_in_state(result.observables[CENTER], basis, rotation, index)
        labels.append(label)
        energies.append(eigenvalues[index])
        variances.append(estimate.variance)
        failures += not result.converged
    return labels, np.asarray(energies), np.asarray(variances), failures


def _infinite_T_variance(ctx: _SampleContext, order: int) -> List[ResultRow]:
    labels, _, variances, failures = _excited_variances(ctx, order)
    rows = [ctx.row(order, 'site_variance', value, str(label))
            for label, value in zip(labels, variances)]
    rows.append(ctx.row(order, 'nonconverged', failures))
    return rows


def _thermal_variance(ctx: _SampleContext, order: int) -> List[ResultRow]:
    _, energies, variances, failures = _excited_variances(ctx, order)
    rows = [ctx.row(order, 'thermal_site_variance', thermal_average(variances, energies, T),
                    f"T={_format_number(T)}")
            for T in ctx.config.temperatures]
    rows.append(ctx.row(order, 'nonconverged', failures))
    return rows


def _exact_rows(ctx: _SampleContext) -> List[ResultRow]:
    exact = ctx.exact
    if exact is None:
        return []
    experiment = ctx.config.experiment
    if experiment == 'gs_energy_error':
        return [ctx.row(0, 'exact_energy', exact.energies[0])]
    if experiment == 'excited_levels':
        return [ctx.row(0, 'exact_level', energy, str(index))
                for index, energy in enumerate(exact.energies)]

    variances = site_number_variance(exact.vectors, ctx.center, exact.basis)
    if experiment == 'gs_site_variance':
        return [ctx.row(0, 'exact_site_variance', variances[0])]
    if experiment == 'infinite_T_variance':
        return [ctx.row(0, 'exact_site_variance', thermal_average(variances, exact.energies, math.inf))]
    return [ctx.row(0, 'exact_thermal_site_variance', thermal_average(variances, exact.energies, T),
                    f"T={_format_number(T)}")
            for T in ctx.config.temperatures]


PIPELINES: Dict[str, Callable[[_SampleContext, int], List[ResultRow]]] = {
    'gs_energy_error': _gs_energy_error,
    'gs_site_variance': _gs_site_variance,
    'excited_levels': _excited_levels,
    'infinite_T_variance': _infinite_T_variance,
    'thermal_variance': _thermal_variance,
}


def run_sample(config: ExperimentConfig, L: int, W: float, sample_index: int) -> List[ResultRow]:
    """
    一个样本的完整流程（方法 + 可用时的精确对角化）

    Args:
        config: 实验配置
        L: 格点数
        W: 无序强度
        sample_index: 样本序号，种子为 base_seed + sample_index

    Returns:
        结果行
    """
    seed = config.base_seed + sample_index
    begin = perf_counter()
    ctx = _SampleContext(config, L, W, seed)
    rows: List[ResultRow] = []
    for order in config.orders:
        rows.extend(PIPELINES[config.experiment](ctx, order))
    rows.extend(_exact_rows(ctx))
    elapsed = perf_counter() - begin
    _logger.info("样本 L=%d W=%s seed=%d 完成，耗时 %.2f s", L, W, seed, elapsed)
    if config.record_wall_time:
        rows = [replace(row, wall_time=elapsed) for row in rows]
    return rows


def _run_task(task: Tuple[ExperimentConfig, int, float, int]) -> List[ResultRow]:
    config, L, W, sample_index = task
    try:
        return run_sample(config, L, W, sample_index)
    except DispEigError as e:
        seed = config.base_seed + sample_index
        log_error(f"样本 L={L} W={W} seed={seed} 失败", e, _logger)
        return [ResultRow(config.experiment, L, float(W), seed, 0, 'failed', math.nan, type(e).__name__)]


def _execute(tasks: List[Tuple[ExperimentConfig, int, float, int]], workers: int) -> Iterator[List[ResultRow]]:
    if workers <= 1 or len(tasks) <= 1:
        for task in tasks:
            yield _run_task(task)
        return
    with Pool(processes=min(workers, len(tasks))) as pool:
        # imap 按提交顺序返回
        yield from pool.imap(_run_task, tasks)


def _write_header(handle, items: Iterable[Tuple[str, str]]):
    for key, value in items:
        handle.write(f"# {key}: {value}\n")


def run(config: ExperimentConfig) -> Path:
    """
    执行实验并写出结果 CSV（注释头 + 逐行结果）

    Returns:
        结果文件路径
    """
    path = config.output_path
    path.parent.mkdir(parents=True, exist_ok=True)
    tasks = [(config, L, float(W), index)
             for L in config.lengths for W in config.disorders for index in range(config.samples)]
    fieldnames = ROW_FIELDS + (['wall_time'] if config.record_wall_time else [])
    _logger.info("实验 %s：%d 个样本，%d 个进程，输出 %s",
                 config.experiment, len(tasks), config.workers, path)

    with open(path, 'w', encoding='utf-8', newline='') as handle:
        _write_header(handle, config.header_items())
        writer = csv.DictWriter(handle, fieldnames=fieldnames, lineterminator='\n')
        writer.writeheader()
        for rows in _execute(tasks, config.workers):
            for row in rows:
                writer.writerow(row.as_dict(config.record_wall_time))
            handle.flush()
    return path


# ---------------------------------------------------------------------------
# 汇总
# ---------------------------------------------------------------------------

def read_rows(path: Union[str, Path], required: Sequence[str] = ()) -> List[Dict[str, str]]:
    """
    读取结果 CSV（跳过 # 注释头）

    Raises:
        ExperimentError: 缺少 required 中的列
    """
    with open(path, 'r', encoding='utf-8', newline='') as handle:
        lines = [line for line in handle if not line.startswith('#')]
    reader = csv.DictReader(lines)
    missing = [name for name in required if name not in (reader.fieldnames or [])]
    if missing:
        raise ExperimentError(f"{path} 缺少列: {', '.join(missing)}")
    return list(reader)


def _summary_row(key: Tuple, statistic: str, value: float, std_error: float, count: int) -> Dict[str, str]:
    experiment, L, W, order, observable = key[:5]
    if len(key) > 5 and key[5]:
        observable = f"{observable}[{key[5]}]"
    return {'experiment': experiment, 'L': str(L), 'W': _format_number(W), 'order': str(order),
            'observable': observable, 'statistic': statistic, 'value': _format_number(float(value)),
            'std_error': _format_number(float(std_error)), 'count': str(count)}


def _scalar_summary(key: Tuple, values: Sequence[float]) -> Dict[str, str]:
    values = np.asarray([v for v in values if np.isfinite(v)], dtype=float)
    count = len(values)
    if not count:
        return _summary_row(key, 'mean', math.nan, math.nan, 0)
    if key[4].endswith('_error'):
        magnitudes = np.abs(values)
        if np.any(magnitudes == 0):
            return _summary_row(key, 'geometric_mean', 0.0, math.nan, count)
        logs = np.log10(magnitudes)
        spread = logs.std(ddof=1) / math.sqrt(count) if count > 1 else math.nan
        return _summary_row(key, 'geometric_mean', scipy_stats.gmean(magnitudes), spread, count)
    spread = values.std(ddof=1) / math.sqrt(count) if count > 1 else math.nan
    return _summary_row(key, 'mean', values.mean(), spread, count)


def _level_summary(key: Tuple, by_seed: Dict[int, List[float]],
                   histogram_path: Path) -> List[Dict[str, str]]:
    samples = []
    for seed in sorted(by_seed):
        try:
            samples.append(normalized_spacings(np.asarray(by_seed[seed])))
        except SpectrumError as e:
            log_warning(f"种子 {seed} 的能级不足以计算间距: {e}", _logger)
    pooled = SpacingSample.pooled(samples)
    if not len(pooled):
        return []
    save_histogram(histogram_path, pooled)
    count = len(pooled)
    return [
        _summary_row(key, 'ks_poisson', distribution_distance(pooled, 'poisson'), math.nan, count),
        _summary_row(key, 'ks_wigner_dyson', distribution_distance(pooled, 'wigner_dyson'), math.nan, count),
        _summary_row(key, 'success_ratio', success_ratio(pooled), math.nan, count),
    ]


def aggregate(result_path: Union[str, Path], summary_path: Optional[Union[str, Path]] = None) -> Path:
    """
    汇总结果文件

    *_error 量取 |值| 的几何平均（std_error 为 log10 的标准误差），其余取算术平均与标准误差；
    能级按样本归一化间距后合并，给出 KS 距离与成功率并写出直方图 CSV。

    Returns:
        汇总 CSV 路径
    """
    result_path = Path(result_path)
    summary_path = Path(summary_path) if summary_path else result_path.with_name(f"{result_path.stem}_summary.csv")
    scalars: Dict[Tuple, List[float]] = {}
    levels: Dict[Tuple, Dict[int, List[float]]] = {}

    for row in read_rows(result_path, ROW_FIELDS):
        observable = row['observable']
        if observable in ('failed', 'nonconverged'):
            if observable == 'nonconverged':
                key = (row['experiment'], int(row['L']), float(row['W']), int(row['order']), observable, '')
                scalars.setdefault(key, []).append(float(row['value']))
            continue
        key = (row['experiment'], int(row['L']), float(row['W']), int(row['order']), observable)
        if observable in LEVEL_OBSERVABLES:
            levels.setdefault(key, {}).setdefault(int(row['seed']), []).append(float(row['value']))
            continue
        aux = row['aux'] if row['aux'].startswith('T=') else ''
        scalars.setdefault(key + (aux,), []).append(float(row['value']))

    summary = [_scalar_summary(key, values) for key, values in sorted(scalars.items())]
    for key in sorted(levels):
        experiment, L, W, order, observable = key
        histogram = summary_path.with_name(
            f"{summary_path.stem}_hist_{observable}_L{L}_W{_format_number(W)}_o{order}.csv")
        summary.extend(_level_summary(key, levels[key], histogram))

    summary_path.parent.mkdir(parents=True, exist_ok=True)
    with open(summary_path, 'w', encoding='utf-8', newline='') as handle:
        _write_header(handle, [('source', result_path.as_posix()),
                               ('spacing_window', str(DEFAULT_WINDOW)),
                               ('bin_width', _format_number(DEFAULT_BIN_WIDTH)),
                               ('s_max', _format_number(DEFAULT_S_MAX))])
        writer = csv.DictWriter(handle, fieldnames=SUMMARY_FIELDS, lineterminator='\n')
        writer.writeheader()
        writer.writerows(summary)
    _logger.info("汇总 %d 组结果写入 %s", len(summary), summary_path)
    return summary_path
