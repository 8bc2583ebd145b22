import warnings

import numpy as np
import pytest

from qmem.builder import (
    MemorySpec,
    dfs_mode_indices,
    make_cavity,
    module_rotation,
    qubit_config,
    qudit_config,
    storage_state,
    storage_state_from_modes,
)
from qmem.linear import is_hurwitz, rotate, to_state_space


def test_make_cavity():
    cav = make_cavity(0.25, 1.0, name="x")
    np.testing.assert_allclose(cav.K, [[0.5], [1.0]])
    assert cav.port_labels == ("x.1", "x.2")
    with pytest.raises(ValueError):
        make_cavity()
    with pytest.raises(ValueError):
        make_cavity(0.5, -1.0)
    with pytest.raises(ValueError):
        make_cavity(0.5, 0.0)
    with pytest.warns(UserWarning):
        cav = make_cavity(0.5, 0.0, name="y", allow_zero=True)
    assert cav.port_labels == ("y.1",)


def test_spec_overrides():
    spec = MemorySpec(2, 1.0, {"c1": 0.6, "2.p2": 0.4})
    assert spec.kappas(1) == {"p1": 0.5, "p2": 0.5, "c1": 0.6, "c2": 0.5}
    assert spec.kappas(2) == {"p1": 0.5, "p2": 0.4, "c1": 0.6, "c2": 0.5}
    assert spec.with_overrides(c1=0.7).kappas()["c1"] == 0.7
    for bad in [{"x1": 1.0}, {"3.c1": 1.0}, {"c1": -1.0}]:
        with pytest.raises(ValueError):
            MemorySpec(2, 1.0, bad)
    with pytest.raises(ValueError):
        MemorySpec(0)
    with pytest.raises(ValueError):
        MemorySpec(gamma=0)
    with pytest.raises(ValueError):
        qubit_config(MemorySpec(), 3)


def test_rotated_qubit_drift():
    gamma = 1.7
    ss = rotate(to_state_space(qubit_config(MemorySpec(gamma=gamma), 1)), module_rotation(1))
    np.testing.assert_allclose(ss.A, [[-2 * gamma, -gamma / 2], [gamma / 2, 0]], atol=1e-12)
    np.testing.assert_allclose(ss.C, [[2 * np.sqrt(gamma), 0]], atol=1e-12)
    np.testing.assert_allclose(ss.B, [[-2 * np.sqrt(gamma)], [0]], atol=1e-12)


@pytest.mark.parametrize("n", [2, 3])
def test_qudit_cascade_structure(n):
    gamma = 1.3
    spec = MemorySpec(n, gamma)
    ss = rotate(to_state_space(qudit_config(spec, 1)), module_rotation(n))
    single = rotate(to_state_space(qubit_config(spec, 1)), module_rotation(1))
    assert is_hurwitz(ss)
    # independent cascade rule: block (i, j) below the diagonal is -C_i^H C_j
    for i in range(n):
        for j in range(n):
            blk = ss.A[2 * i:2 * i + 2, 2 * j:2 * j + 2]
            if i == j:
                np.testing.assert_allclose(blk, single.A, atol=1e-12)
            elif i > j:
                np.testing.assert_allclose(blk, -single.C.conj().T @ single.C, atol=1e-12)
            else:
                assert np.abs(blk).max() <= 1e-12
    np.testing.assert_allclose(ss.A[2, 0], -4 * gamma, atol=1e-12)


def test_qudit_storage_is_parallel():
    ss = to_state_space(qudit_config(MemorySpec(2), 2))
    assert ss.n == 4 and ss.m == 4
    assert np.abs(ss.A[:2, 2:]).max() == 0 and np.abs(ss.A[2:, :2]).max() == 0


def test_module_rotation_and_indices():
    U = module_rotation(3)
    np.testing.assert_allclose(U.conj().T @ U, np.eye(6), atol=1e-14)
    assert dfs_mode_indices(3) == [1, 3, 5]


def test_storage_state_formula():
    st = storage_state(0.6, [0.8])
    np.testing.assert_allclose(st.coefficients, [0.6, 0.8 / np.sqrt(2), -0.8 / np.sqrt(2)])
    assert st.labels == ["vac", "1.p", "1.c"]
    assert set(st.as_dict()) == {"vac", "1.p", "1.c"}
    with pytest.raises(ValueError):
        storage_state(0.6, [0.6])


def test_storage_state_from_modes_renormalizes():
    st = storage_state_from_modes(0.6, [0.4, -0.4])
    assert abs(np.linalg.norm(st.coefficients) - 1) < 1e-14
    assert st.leaked == pytest.approx(1 - 0.36 - 0.32)
    with pytest.raises(ValueError):
        storage_state_from_modes(0, [0, 0])


def test_no_warning_for_nominal_build():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        qudit_config(MemorySpec(3), 1)


def test_cavity_state_space_examples():
    for k in [(0.5, 0.5), (0.3, 0.7)]:
        ss = to_state_space(make_cavity(*k))
        np.testing.assert_allclose(ss.A, [[-0.5]], atol=1e-15)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_qudit_write_config_is_hurwitz(n):
    assert is_hurwitz(to_state_space(qudit_config(MemorySpec(n), 1)))


def test_single_module_qudit_is_qubit():
    assert qudit_config(MemorySpec(1), 1).allclose(qubit_config(MemorySpec(), 1))


def test_mismatch_removes_zero_eigenvalue():
    ss = to_state_space(qubit_config(MemorySpec(kappa_overrides={"c1": 0.55}), 2))
    assert ss.eigenvalues().real.max() < 0


def test_two_module_storage_state():
    st = storage_state(0, [1 / np.sqrt(2), 1 / np.sqrt(2)])
    nz = np.abs(st.coefficients[1:])
    np.testing.assert_allclose(nz, 0.5 * np.ones(4))
    assert storage_state(1, [0]).coefficients.tolist() == [1, 0, 0]
