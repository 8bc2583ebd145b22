import numpy as np
import pytest

from qmem.builder import MemorySpec, make_cavity, module_rotation, qubit_config, qudit_config
from qmem.linear import (
    NotUnitaryError,
    StateSpace,
    controllability_matrix,
    dfs_decompose,
    is_hurwitz,
    matrix_rank,
    observability_matrix,
    passivity_residuals,
    ranks,
    rotate,
    to_state_space,
    transfer_function,
)
from qmem.slh import SlhModel


def _random_passive(rng, n, m):
    X = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    S, _ = np.linalg.qr(X)
    K = rng.normal(size=(m, n)) + 1j * rng.normal(size=(m, n))
    H = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return SlhModel(S, K, (H + H.conj().T) / 2)


def test_state_space_formulas():
    rng = np.random.default_rng(3)
    model = _random_passive(rng, 3, 2)
    ss = to_state_space(model)
    K, S, O = model.K, model.S, model.Omega
    np.testing.assert_allclose(ss.A, -1j * O - 0.5 * K.conj().T @ K, atol=1e-14)
    np.testing.assert_allclose(ss.B, -K.conj().T @ S, atol=1e-14)
    np.testing.assert_allclose(ss.C, K)
    np.testing.assert_allclose(ss.D, S)
    assert max(passivity_residuals(ss).values()) < 1e-12


def test_single_cavity_response():
    ss = to_state_space(make_cavity(2.0))
    # (s - 1)/(s + 1) for a one-sided cavity with total rate 2
    for s in [0.5, 2j, 1 + 1j]:
        np.testing.assert_allclose(transfer_function(ss, s)[0, 0], (s - 1) / (s + 1), atol=1e-14)
    with pytest.raises(np.linalg.LinAlgError):
        transfer_function(ss, -1.0)


@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0])
def test_config_spectra(gamma):
    spec = MemorySpec(gamma=gamma)
    ev1 = to_state_space(qubit_config(spec, 1)).eigenvalues()
    np.testing.assert_allclose(ev1, sorted([-gamma - np.sqrt(3) * gamma / 2,
                                            -gamma + np.sqrt(3) * gamma / 2]), atol=1e-10)
    ev2 = to_state_space(qubit_config(spec, 2)).eigenvalues()
    np.testing.assert_allclose(ev2, [-gamma, 0], atol=1e-10)
    assert is_hurwitz(to_state_space(qubit_config(spec, 1)))
    assert not is_hurwitz(to_state_space(qubit_config(spec, 2)))


def test_ranks_against_numpy():
    rng = np.random.default_rng(5)
    for _ in range(5):
        ss = to_state_space(_random_passive(rng, 3, 1))
        Wc, Wo = controllability_matrix(ss), observability_matrix(ss)
        assert Wc.shape == (3, 3) and Wo.shape == (3, 3)
        assert ranks(ss) == (np.linalg.matrix_rank(Wc), np.linalg.matrix_rank(Wo))
    assert matrix_rank(np.zeros((2, 2))) == 0


def test_config2_dfs():
    ss = to_state_space(qubit_config(MemorySpec(), 2))
    assert ranks(ss) == (1, 1)
    dec = dfs_decompose(ss)
    assert dec.dfs_indices == [1]
    np.testing.assert_allclose(dec.rotated.A, np.diag([-1, 0]), atol=1e-12)
    assert np.abs(dec.rotated.B[1]).max() <= 1e-12
    assert np.abs(dec.rotated.C[:, 1]).max() <= 1e-12
    np.testing.assert_allclose(dec.U.conj().T @ dec.U, np.eye(2), atol=1e-12)


def test_config1_has_no_dfs():
    assert dfs_decompose(to_state_space(qubit_config(MemorySpec(), 1))).dfs_indices == []


@pytest.mark.parametrize("n", [2, 3])
def test_qudit_dfs_count(n):
    ss = to_state_space(qudit_config(MemorySpec(n), 2))
    dec = dfs_decompose(ss)
    assert len(dec.dfs_indices) == n
    for j in dec.dfs_indices:
        assert np.abs(dec.rotated.B[j]).max() < 1e-10
        assert np.abs(dec.rotated.C[:, j]).max() < 1e-10
        assert abs(dec.rotated.A[j, j].real) < 1e-10


def test_non_normal_block_uses_kernel():
    # a DFS mode hidden inside a non-normal drift
    A = np.array([[-1.0, 0.3, 0], [0, -2.0, 0], [0, 0, 0]])
    ss = StateSpace(A, np.array([[1.0], [1.0], [0]]), np.array([[1.0, 0.5, 0]]), np.eye(1))
    dec = dfs_decompose(ss)
    assert len(dec.dfs_indices) == 1


def test_rotation_checks():
    ss = to_state_space(qubit_config(MemorySpec(), 1))
    with pytest.raises(NotUnitaryError):
        rotate(ss, np.array([[1, 1], [0, 1]]))
    with pytest.raises(ValueError):
        rotate(ss, np.eye(3))
    r = rotate(ss, module_rotation(1))
    np.testing.assert_allclose(r.A, [[-2, -0.5], [0.5, 0]], atol=1e-12)
    np.testing.assert_allclose(r.C, [[2, 0]], atol=1e-12)


def test_rotation_preserves_transfer_function():
    rng = np.random.default_rng(11)
    ss = to_state_space(_random_passive(rng, 2, 2))
    X = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    U, _ = np.linalg.qr(X)
    np.testing.assert_allclose(transfer_function(rotate(ss, U), 0.7j),
                               transfer_function(ss, 0.7j), atol=1e-12)


def test_spec_rank_and_hurwitz_edge_cases():
    assert ranks(to_state_space(qubit_config(MemorySpec(), 1))) == (2, 2)
    ss = StateSpace(np.diag([-1.0, -2.0]), np.array([[1.0], [0.0]]), np.zeros((1, 2)), np.eye(1))
    assert ranks(ss)[0] == 1
    assert not is_hurwitz(StateSpace(np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)), np.eye(1)))
    ss0 = to_state_space(SlhModel(np.eye(2), np.zeros((2, 2)), np.zeros((2, 2))))
    assert np.abs(ss0.A).max() == 0 and np.abs(ss0.B).max() == 0


def test_all_pass_on_imaginary_axis():
    rng = np.random.default_rng(7)
    for which in (1, 2):
        ss = to_state_space(qubit_config(MemorySpec(), which))
        for w in rng.normal(scale=5, size=10):
            if which == 2 and abs(w) < 1e-6:
                continue
            G = transfer_function(ss, 1j * w)
            np.testing.assert_allclose(G.conj().T @ G, np.eye(ss.m), atol=1e-8)
    ss1 = to_state_space(qubit_config(MemorySpec(), 1))
    G0 = transfer_function(ss1, 0.0)
    np.testing.assert_allclose(G0, ss1.D - ss1.C @ np.linalg.inv(ss1.A) @ ss1.B, atol=1e-14)
    np.testing.assert_allclose(transfer_function(ss1, 1e9), ss1.D, atol=1e-8)


def test_rotation_preserves_spectrum():
    ss = to_state_space(qudit_config(MemorySpec(2), 1))
    r = rotate(ss, module_rotation(2))
    np.testing.assert_allclose(r.eigenvalues(), ss.eigenvalues(), atol=1e-10)
    assert max(passivity_residuals(r).values()) < 1e-12
    np.testing.assert_allclose(rotate(ss, np.eye(4)).A, ss.A)


@pytest.mark.parametrize("gamma", [0.1, 1.0, 10.0])
def test_dfs_count_matches_imaginary_axis(gamma):
    for which, expect in [(1, 0), (2, 1)]:
        ss = to_state_space(qubit_config(MemorySpec(gamma=gamma), which))
        n_axis = int(np.sum(np.abs(ss.eigenvalues().real) < 1e-9))
        dec = dfs_decompose(ss)
        rc, ro = ranks(ss)
        assert n_axis == len(dec.dfs_indices) == expect
        assert len(dec.dfs_indices) == ss.n - min(rc, ro)


def test_storage_mode_is_null_vector():
    ss = to_state_space(qubit_config(MemorySpec(), 2))
    v = np.array([1, -1]) / np.sqrt(2)
    assert np.abs(ss.A @ v).max() <= 1e-12
    assert np.abs(ss.C @ v).max() <= 1e-12
