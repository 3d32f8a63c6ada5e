"""投影对角化的测试"""
import math

import numpy as np
import pytest

from core.errors import ConfigError, SpectrumError
from core.model import ModelParams, build_hamiltonian, number_operator
from core.opalg import apply_to_config
from core.oracle import FockBasis, dense_matrix, full_spectrum, site_number_variance
from core.project import (ObservableEstimate, build_matrix, diagonalize, dump_matrix,
                          enumerate_basis, observable_in_state, reference_state_index)
from core.refstate import ReferenceState, SweepConfig, ground_state_sweep

from conftest import random_hamiltonian


def test_basis_ranking_and_generators():
    hamiltonian = random_hamiltonian(6, seed=9)
    ref = ReferenceState(0b000111, 6)
    basis = enumerate_basis(hamiltonian, ref, cap=10)
    assert len(basis) == 10
    assert basis.configs[0] == ref.occupied
    assert basis.generators[0] is None
    assert len(set(basis.configs)) == len(basis)
    assert all(config.bit_count() == 3 for config in basis.configs)
    scores = basis.scores[1:]
    assert all(a >= b for a, b in zip(scores, scores[1:]))
    for config, generator in zip(basis.configs[1:], basis.generators[1:]):
        sign, target = apply_to_config(generator, ref.occupied)
        assert target == config and sign in (-1, 1)
    assert len(enumerate_basis(hamiltonian, ref, cap=1)) == 1
    with pytest.raises(ConfigError):
        enumerate_basis(hamiltonian, ref, cap=0)


def test_projected_matrix_matches_dense_block():
    hamiltonian = random_hamiltonian(6, seed=4)
    ref = ReferenceState(0b101010, 6)
    basis = enumerate_basis(hamiltonian, ref, cap=40)
    projected = build_matrix(hamiltonian, basis).matrix
    fock = FockBasis.build(6, 3)
    full = dense_matrix(hamiltonian, fock)
    index = [fock.index(config) for config in basis.configs]
    np.testing.assert_allclose(projected, full[np.ix_(index, index)], atol=1e-12)


def test_full_projection_recovers_exact_spectrum():
    hamiltonian = random_hamiltonian(4, seed=2)
    basis = enumerate_basis(hamiltonian, ReferenceState(0b0011, 4), cap=100)
    assert len(basis) == math.comb(4, 2)
    eigenvalues, rotation = diagonalize(build_matrix(hamiltonian, basis))
    exact = full_spectrum(dense_matrix(hamiltonian, FockBasis.build(4, 2)))[0]
    np.testing.assert_allclose(eigenvalues, exact, atol=1e-10)
    np.testing.assert_allclose(rotation.T @ rotation, np.eye(len(basis)), atol=1e-10)


def test_diagonalize_rejects_asymmetric_matrices():
    with pytest.raises(SpectrumError):
        diagonalize(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(SpectrumError):
        diagonalize(np.zeros((2, 3)))


def test_reference_state_index_and_estimate():
    rotation = np.array([[0.6, 0.8], [-0.8, 0.6]])
    assert reference_state_index(rotation) == 1
    assert ObservableEstimate(0.5, 0.5).variance == pytest.approx(0.25)


@pytest.mark.slow
def test_ground_energy_close_to_exact():
    params = ModelParams(L=8, W=5.0, seed=1)
    hamiltonian = build_hamiltonian(params)
    exact = full_spectrum(dense_matrix(hamiltonian, FockBasis.build(8, 4)))[0][0]
    result = ground_state_sweep(hamiltonian, SweepConfig())
    eigenvalues, _ = diagonalize(build_matrix(result.hamiltonian,
                                              enumerate_basis(result.hamiltonian, result.reference)))
    assert eigenvalues[0] <= result.reference.energy + 1e-12
    assert abs(eigenvalues[0] - exact) / params.L < 1e-3


def test_site_variance_with_complete_projection_is_exact():
    params = ModelParams(L=4, W=3.0, seed=6)
    hamiltonian = build_hamiltonian(params)
    site = 2
    fock = FockBasis.build(4, 2)
    energies, vectors = full_spectrum(dense_matrix(hamiltonian, fock))
    exact = site_number_variance(vectors[:, 0], site, fock)

    config = SweepConfig(max_particles=None, max_holes=None)
    result = ground_state_sweep(hamiltonian, config, observables={'n': number_operator(4, site)})
    basis = enumerate_basis(result.hamiltonian, result.reference, cap=100)
    eigenvalues, rotation = diagonalize(build_matrix(result.hamiltonian, basis))
    assert eigenvalues[0] == pytest.approx(energies[0], abs=1e-9)
    estimate = observable_in_state(result.observables['n'], basis, rotation, 0)
    assert estimate.variance == pytest.approx(exact, abs=1e-9)
    with pytest.raises(SpectrumError):
        observable_in_state(result.observables['n'], basis, rotation, len(basis))


def test_dump_matrix(tmp_path):
    path = tmp_path / 'sub' / 'matrix.txt'
    dump_matrix(path, np.array([[1.0, 0.5], [0.5, -1.0]]))
    np.testing.assert_allclose(np.loadtxt(path), [[1.0, 0.5], [0.5, -1.0]])
