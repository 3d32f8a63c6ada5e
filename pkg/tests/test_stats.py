"""能级间距统计的测试"""
import math

import numpy as np
import pytest

from core.errors import SpectrumError
from core.stats import (SpacingSample, distribution_distance, normalized_spacings, poisson_cdf,
                        poisson_pdf, save_histogram, spacing_histogram, success_ratio,
                        wigner_dyson_cdf, wigner_dyson_pdf)


def _poisson_quantiles(count: int) -> np.ndarray:
    u = (np.arange(count) + 0.5) / count
    return -np.log1p(-u)


def _wigner_dyson_quantiles(count: int) -> np.ndarray:
    u = (np.arange(count) + 0.5) / count
    return np.sqrt(-4.0 * np.log1p(-u) / math.pi)


def test_reference_densities_are_normalized():
    s = np.linspace(0.0, 40.0, 400_001)
    assert np.trapezoid(poisson_pdf(s), s) == pytest.approx(1.0, abs=1e-6)
    assert np.trapezoid(wigner_dyson_pdf(s), s) == pytest.approx(1.0, abs=1e-6)
    assert np.trapezoid(s * wigner_dyson_pdf(s), s) == pytest.approx(1.0, abs=1e-6)
    assert poisson_cdf(0.0) == 0.0 and wigner_dyson_cdf(0.0) == 0.0


def test_equally_spaced_levels_normalize_to_one():
    sample = normalized_spacings(0.3 * np.arange(60))
    assert len(sample) == 59
    np.testing.assert_allclose(sample.values, 1.0)


def test_degenerate_levels_give_zero_spacing():
    levels = np.concatenate([np.arange(30.0), [10.0]])
    sample = normalized_spacings(levels)
    assert np.count_nonzero(sample.values == 0.0) == 1


def test_too_few_levels():
    with pytest.raises(SpectrumError):
        normalized_spacings(np.arange(21.0))
    normalized_spacings(np.arange(22.0))


def test_unfolding_removes_smooth_density_variation():
    rng = np.random.default_rng(1)
    raw = rng.exponential(size=20_000)
    # 能级密度沿谱缓慢变化
    scale = 1.0 + 0.5 * np.sin(np.linspace(0.0, 3.0, raw.size))
    sample = normalized_spacings(np.cumsum(raw * scale))
    assert sample.mean() == pytest.approx(1.0, abs=0.02)
    assert distribution_distance(sample, 'poisson') < 0.04


def test_distribution_distance_discriminates():
    poisson = SpacingSample(_poisson_quantiles(20_000))
    goe = SpacingSample(_wigner_dyson_quantiles(20_000))
    assert distribution_distance(poisson, 'poisson') < 1e-3
    assert distribution_distance(goe, 'wigner_dyson') < 1e-3
    assert distribution_distance(poisson, 'wigner_dyson') > 0.1
    assert distribution_distance(goe, 'poisson') > 0.1
    with pytest.raises(SpectrumError):
        distribution_distance(poisson, 'goe')
    with pytest.raises(SpectrumError):
        distribution_distance(SpacingSample(np.empty(0)), 'poisson')


def test_success_ratio_collapse_fraction():
    count = 1_000_000
    collapsed = count // 10
    values = np.concatenate([np.zeros(collapsed), _poisson_quantiles(count - collapsed)])
    ratio = success_ratio(SpacingSample(values))
    first_bin = 1.0 - math.exp(-0.05)
    assert ratio == pytest.approx(1.0 - 0.1 * (1.0 - first_bin), abs=1e-3)
    assert 0.895 <= ratio <= 0.905


def test_success_ratio_limits():
    assert success_ratio(SpacingSample(np.zeros(1000))) == pytest.approx(0.049, abs=5e-4)
    rng = np.random.default_rng(0)
    assert success_ratio(SpacingSample(rng.exponential(size=100_000))) > 0.97
    with pytest.raises(SpectrumError):
        success_ratio(SpacingSample(np.empty(0)))


def test_histogram_and_file(tmp_path):
    sample = SpacingSample(_poisson_quantiles(50_000))
    centers, density = spacing_histogram(sample)
    assert len(centers) == 120
    assert centers[0] == pytest.approx(0.025)
    assert density.sum() * 0.05 == pytest.approx(1.0 - math.exp(-6.0), abs=1e-3)

    path = tmp_path / 'hist.csv'
    save_histogram(path, sample)
    assert path.read_text(encoding='utf-8').splitlines()[0] == 'bin_center,density'
    table = np.loadtxt(path, delimiter=',', skiprows=1)
    np.testing.assert_allclose(table[:, 1], density, rtol=1e-9)


def test_pooled_samples():
    pooled = SpacingSample.pooled([SpacingSample(np.ones(3)), SpacingSample(np.zeros(2))])
    assert len(pooled) == 5
    assert pooled.mean() == pytest.approx(0.6)
    assert len(SpacingSample.pooled([])) == 0
