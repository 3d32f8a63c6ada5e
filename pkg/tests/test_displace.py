"""位移变换的测试：以完整 Fock 空间中的 exp{λ(X† − X)} 为基准"""
import math

import numpy as np
import pytest
import scipy.linalg

from core.displace import (Displacement, TableCache, apply, apply_all, build_table, coupling,
                           delta_epsilon, elimination_angle, lambda_for_elimination)
from core.errors import OperatorError, UndefinedRotationError
from core.model import number_operator
from core.opalg import OperatorString, OperatorSum

from conftest import operator_matrix, random_hamiltonian, string_matrix

GENERATORS = [
    {0: 'cdag', 2: 'c'},
    {1: 'c', 3: 'cdag'},
    {0: 'cdag', 1: 'n', 2: 'c'},
    {0: 'cdag', 1: 'cdag', 2: 'c', 3: 'c'},
    {0: 'c', 2: 'n', 3: 'cdag'},
]


def _dense_rotation(x: OperatorString, angle: float) -> np.ndarray:
    matrix = string_matrix(x)
    return scipy.linalg.expm(angle * (matrix.T - matrix))


@pytest.mark.parametrize('sites', GENERATORS)
@pytest.mark.parametrize('angle', [0.3, -1.2, math.pi / 2])
def test_apply_matches_dense_unitary(small_hamiltonian, sites, angle):
    x = OperatorString.from_sites(4, sites)
    rotation = _dense_rotation(x, angle)
    transformed = apply(small_hamiltonian, Displacement(x, angle))
    expected = rotation.T @ operator_matrix(small_hamiltonian) @ rotation
    np.testing.assert_allclose(operator_matrix(transformed), expected, atol=1e-10)


@pytest.mark.parametrize('seed', [0, 4])
@pytest.mark.parametrize('sites', GENERATORS)
def test_apply_keeps_traces(seed, sites):
    hamiltonian = random_hamiltonian(4, seed=seed, scale=0.6)
    before = operator_matrix(hamiltonian)
    x = OperatorString.from_sites(4, sites)
    after = operator_matrix(apply(hamiltonian, Displacement(x, 0.9)))
    assert np.trace(after) == pytest.approx(np.trace(before), abs=1e-10)
    assert np.trace(after @ after) == pytest.approx(np.trace(before @ before), abs=1e-9)


def test_apply_transforms_observables_consistently(small_hamiltonian):
    displacements = [Displacement(OperatorString.from_sites(4, sites), 0.17 * (k + 1))
                     for k, sites in enumerate(GENERATORS)]
    cache = TableCache()
    observable = number_operator(4, 1)
    rotated_h = apply_all(small_hamiltonian, displacements, cache)
    rotated_o = apply_all(observable, displacements, cache)

    rotation = np.eye(16)
    for d in displacements:
        rotation = rotation @ _dense_rotation(d.x, d.angle)
    np.testing.assert_allclose(operator_matrix(rotated_h),
                               rotation.T @ operator_matrix(small_hamiltonian) @ rotation, atol=1e-10)
    np.testing.assert_allclose(operator_matrix(rotated_o),
                               rotation.T @ operator_matrix(observable) @ rotation, atol=1e-10)
    # 第二个算符复用全部局部表
    assert cache.hits == len(displacements)


def test_two_site_elimination_example():
    hamiltonian = OperatorSum(2)
    n0 = OperatorString.from_sites(2, {0: 'n'})
    n1 = OperatorString.from_sites(2, {1: 'n'})
    hop = OperatorString.from_sites(2, {0: 'cdag', 1: 'c'})
    hamiltonian.add_term(n0, 1.0)
    hamiltonian.add_term(n1, -1.0)
    hamiltonian.add_term(hop, 0.5)

    assert delta_epsilon(hamiltonian, hop) == pytest.approx(2.0)
    assert coupling(hamiltonian, hop) == pytest.approx(0.5)
    angle = elimination_angle(hamiltonian, hop)
    assert angle == pytest.approx(0.5 * math.atan(0.5))
    assert angle == pytest.approx(0.2318, abs=1e-4)

    rotated = apply(hamiltonian, Displacement(hop, angle))
    assert rotated.coefficient(hop) == pytest.approx(0.0, abs=1e-12)
    assert rotated.coefficient(n0) == pytest.approx(math.sqrt(1.25))
    assert rotated.coefficient(n1) == pytest.approx(-math.sqrt(1.25))


def test_zero_angle_returns_copy(small_hamiltonian):
    x = OperatorString.from_sites(4, {0: 'cdag', 2: 'c'})
    result = apply(small_hamiltonian, Displacement(x, 0.0))
    assert result is not small_hamiltonian
    assert result.terms == small_hamiltonian.terms


def test_displacement_validation():
    with pytest.raises(OperatorError):
        Displacement(OperatorString.from_sites(3, {0: 'n'}), 0.1)
    with pytest.raises(OperatorError):
        Displacement(OperatorString.from_sites(3, {0: 'cdag'}), 0.1)
    with pytest.raises(OperatorError):
        Displacement(OperatorString.from_sites(3, {0: 'cdag', 1: 'c'}), -math.pi / 2)
    Displacement(OperatorString.from_sites(3, {0: 'cdag', 1: 'c'}), math.pi / 2)


def test_local_table_is_lazy_and_cached():
    x = OperatorString.from_sites(4, {0: 'cdag', 2: 'c'})
    table = build_table(x, 0.4)
    assert len(table) == 0
    table.entry(0)
    assert len(table) == 1
    assert len(table.complete()) == 4 ** len(x.support)

    cache = TableCache()
    first = cache.get(x, 0.4)
    second = cache.get(x, 0.4 + 1e-17)
    assert first is second
    assert (cache.hits, cache.misses) == (1, 1)
    cache.clear()
    assert len(cache) == 0


def test_lambda_for_elimination_branch():
    assert lambda_for_elimination(0.0, 1.0) == 0.0
    with pytest.raises(UndefinedRotationError):
        lambda_for_elimination(0.0, 0.0)
    angle = lambda_for_elimination(0.5, -2.0)
    assert abs(angle) <= math.pi / 4
    assert math.tan(2 * angle) == pytest.approx(2 * 0.5 / -2.0)
    assert lambda_for_elimination(1.0, 0.0) == pytest.approx(math.pi / 4)


def test_delta_epsilon_counts_density_terms_inside_support():
    hamiltonian = OperatorSum(3)
    hamiltonian.add_term(OperatorString.from_sites(3, {0: 'n'}), 0.7)
    hamiltonian.add_term(OperatorString.from_sites(3, {1: 'n'}), -0.4)
    hamiltonian.add_term(OperatorString.from_sites(3, {0: 'n', 2: 'n'}), 1.5)
    hamiltonian.add_term(OperatorString.from_sites(3, {1: 'n', 2: 'n'}), 0.25)
    bare = OperatorString.from_sites(3, {0: 'cdag', 1: 'c'})
    dressed = OperatorString.from_sites(3, {0: 'cdag', 1: 'c', 2: 'n'})
    assert delta_epsilon(hamiltonian, bare) == pytest.approx(1.1)
    assert delta_epsilon(hamiltonian, dressed) == pytest.approx(1.1 + 1.5 - 0.25)


def test_coupling_collects_dressed_terms_in_either_orientation():
    hamiltonian = OperatorSum(3)
    bare = OperatorString.from_sites(3, {0: 'cdag', 1: 'c'})
    dressed = OperatorString.from_sites(3, {0: 'cdag', 1: 'c', 2: 'n'})
    hamiltonian.add_term(bare, 0.3)
    hamiltonian.add_term(dressed, 0.2)
    assert coupling(hamiltonian, bare) == pytest.approx(0.3)
    assert coupling(hamiltonian, dressed) == pytest.approx(0.5)
    reversed_bare = OperatorString.from_sites(3, {0: 'c', 1: 'cdag'})
    assert coupling(hamiltonian, reversed_bare) == pytest.approx(hamiltonian.coefficient(reversed_bare))
    assert coupling(hamiltonian, reversed_bare) == pytest.approx(-0.3)
