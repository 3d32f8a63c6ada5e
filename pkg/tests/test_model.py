"""链模型的测试"""
import numpy as np
import pytest

from core.errors import ConfigError
from core.model import (ModelParams, bonds, build_hamiltonian, disorder_realization,
                        number_operator, save_disorder_csv)
from core.opalg import OperatorString

from conftest import annihilator, operator_matrix


def _reference_chain(energies, t, U, pairs):
    length = len(energies)
    c = [annihilator(length, site) for site in range(length)]
    n = [op.T @ op for op in c]
    matrix = sum(e * n[i] for i, e in enumerate(energies))
    for i, j in pairs:
        matrix = matrix + t * (c[j].T @ c[i] + c[i].T @ c[j]) + U * n[i] @ n[j]
    return matrix


def test_params_validation():
    assert ModelParams(L=8).N == 4
    for bad in (dict(L=7), dict(L=0), dict(L=8, N=3), dict(L=8, W=-1.0), dict(L=8, boundary='twisted')):
        with pytest.raises(ConfigError):
            ModelParams(**bad)


def test_disorder_is_reproducible_from_seed():
    params = ModelParams(L=10, W=3.0, seed=42)
    first, name = disorder_realization(params)
    second, _ = disorder_realization(params)
    np.testing.assert_array_equal(first, second)
    assert name == 'PCG64'
    assert np.all(np.abs(first) <= 3.0)
    other, _ = disorder_realization(ModelParams(L=10, W=3.0, seed=43))
    assert not np.array_equal(first, other)


@pytest.mark.parametrize('boundary', ['open', 'periodic'])
def test_hamiltonian_matches_dense_chain(boundary):
    params = ModelParams(L=4, W=2.0, t=0.5, U=1.0, seed=3, boundary=boundary)
    energies, _ = disorder_realization(params)
    hamiltonian = build_hamiltonian(params)
    expected = _reference_chain(energies, params.t, params.U, bonds(params))
    np.testing.assert_allclose(operator_matrix(hamiltonian), expected, atol=1e-12)


def test_periodic_bond_added_only_for_longer_chains():
    assert (3, 0) in bonds(ModelParams(L=4, boundary='periodic'))
    assert bonds(ModelParams(L=2, boundary='periodic')) == [(0, 1)]


def test_zero_disorder_hamiltonian_has_no_single_density_terms():
    params = ModelParams(L=4, W=0.0, t=0.5, U=0.0)
    hamiltonian = build_hamiltonian(params, energies=np.zeros(4))
    assert len(hamiltonian.diagonal_terms()) == 0
    assert len(hamiltonian) == 3
    with pytest.raises(ConfigError):
        build_hamiltonian(params, energies=np.zeros(3))


def test_number_operator():
    operator = number_operator(4, 2)
    assert operator.coefficient(OperatorString.from_sites(4, {2: 'n'})) == 1.0
    assert len(operator) == 1


def test_save_disorder_csv(tmp_path):
    energies = np.array([0.25, -1.5])
    path = tmp_path / 'disorder.csv'
    save_disorder_csv(path, energies, seed=5)
    text = path.read_text(encoding='utf-8')
    assert '# seed: 5' in text
    table = np.loadtxt(path, delimiter=',')
    np.testing.assert_allclose(table[:, 1], energies)
