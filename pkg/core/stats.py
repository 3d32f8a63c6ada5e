"""
能级统计模块
局部归一化的能级间距、与 Poisson / Wigner-Dyson 分布的 KS 距离，以及成功率估计
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import stats

from .errors import SpectrumError
from .logger_util import get_logger

DEFAULT_WINDOW = 20
DEFAULT_BIN_WIDTH = 0.05
DEFAULT_S_MAX = 6.0
DEGENERACY_THRESHOLD = 1e-10
REFERENCES = ('poisson', 'wigner_dyson')

_logger = get_logger(__name__)


@dataclass(frozen=True)
class SpacingSample:
    """归一化间距 s_i ≥ 0"""
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def mean(self) -> float:
        return float(self.values.mean()) if len(self.values) else float('nan')

    @classmethod
    def pooled(cls, samples) -> 'SpacingSample':
        arrays = [sample.values for sample in samples]
        return cls(np.concatenate(arrays) if arrays else np.empty(0))


def poisson_pdf(s):
    return np.exp(-np.asarray(s, dtype=float))


def wigner_dyson_pdf(s):
    s = np.asarray(s, dtype=float)
    return 0.5 * np.pi * s * np.exp(-0.25 * np.pi * s * s)


def poisson_cdf(s):
    return 1.0 - np.exp(-np.asarray(s, dtype=float))


def wigner_dyson_cdf(s):
    s = np.asarray(s, dtype=float)
    return 1.0 - np.exp(-0.25 * np.pi * s * s)


_CDFS = {'poisson': poisson_cdf, 'wigner_dyson': wigner_dyson_cdf}


def normalized_spacings(energies: np.ndarray, window: int = DEFAULT_WINDOW) -> SpacingSample:
    """
    按最近 window 个间距的平均值归一化

    窗口起点为 clip(i − window/2, 0, n − window)，边缘处截齐；原始间距小于 1e−10 记为 0。

    Raises:
        SpectrumError: 能级数少于 window + 2
    """
    levels = np.sort(np.asarray(energies, dtype=float))
    if len(levels) < window + 2:
        raise SpectrumError(f"能级数 {len(levels)} 少于 {window + 2}")
    raw = np.diff(levels)
    raw[raw < DEGENERACY_THRESHOLD] = 0.0

    window_means = sliding_window_view(raw, window).mean(axis=1)
    starts = np.clip(np.arange(len(raw)) - window // 2, 0, len(raw) - window)
    local = window_means[starts]
    spacings = np.divide(raw, local, out=np.zeros_like(raw), where=local > 0)
    return SpacingSample(spacings)


def distribution_distance(sample: SpacingSample, reference: str = 'poisson') -> float:
    """
    到参考分布的 Kolmogorov-Smirnov 距离

    Args:
        sample: 归一化间距
        reference: 'poisson' 或 'wigner_dyson'
    """
    if not len(sample):
        raise SpectrumError("间距样本为空")
    try:
        cdf = _CDFS[reference]
    except KeyError:
        raise SpectrumError(f"未知的参考分布: {reference}") from None
    return float(stats.kstest(sample.values, cdf).statistic)


def _bin_edges(bin_width: float, s_max: float) -> np.ndarray:
    bins = int(round(s_max / bin_width))
    return np.linspace(0.0, bins * bin_width, bins + 1)


def success_ratio(sample: SpacingSample, bin_width: float = DEFAULT_BIN_WIDTH,
                  s_max: float = DEFAULT_S_MAX) -> float:
    """
    1 − ½Σ|p̂ − p_Poisson|，在 [0, s_max] 上按 bin_width 分箱，另加尾箱 (s_max, ∞)

    Returns:
        [0, 1] 内的成功率
    """
    if not len(sample):
        raise SpectrumError("间距样本为空")
    edges = _bin_edges(bin_width, s_max)
    values = sample.values
    counts, _ = np.histogram(values, bins=edges)
    observed = np.append(counts, np.count_nonzero(values > edges[-1])) / len(values)
    expected = np.append(-np.diff(np.exp(-edges)), np.exp(-edges[-1]))
    area = 0.5 * np.abs(observed - expected).sum()
    return float(np.clip(1.0 - area, 0.0, 1.0))


def spacing_histogram(sample: SpacingSample, bin_width: float = DEFAULT_BIN_WIDTH,
                      s_max: float = DEFAULT_S_MAX) -> Tuple[np.ndarray, np.ndarray]:
    """
    Returns:
        (箱中心, 概率密度)
    """
    edges = _bin_edges(bin_width, s_max)
    counts, _ = np.histogram(sample.values, bins=edges)
    total = max(len(sample), 1)
    return 0.5 * (edges[:-1] + edges[1:]), counts / (total * bin_width)


def save_histogram(path: Union[str, Path], sample: SpacingSample,
                   bin_width: float = DEFAULT_BIN_WIDTH, s_max: float = DEFAULT_S_MAX):
    """写出 bin_center,density 两列 CSV"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    centers, densities = spacing_histogram(sample, bin_width, s_max)
    np.savetxt(path, np.column_stack([centers, densities]), delimiter=',', fmt='%.10g',
               header='bin_center,density', comments='')
    _logger.debug("写出间距直方图 %s（%d 个间距）", path, len(sample))
