import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wvfield.exceptions import DimensionCapError, DimensionError, NotHermitianError
from wvfield.linalg import (Constants, OperatorMatrix, StateVector, basis_state,
                            coherent_state, evolve, identity, inner,
                            matrix_exponential, pauli, tensor,
                            truncated_fock_operators)

from conftest import SQ, expm_taylor, rand_herm, rand_ket


def test_constants_positive():
    Constants(hbar=2.0, mass=0.5)
    for bad in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(ValueError):
            Constants(hbar=bad)


def test_state_vector_basics():
    s = StateVector([3, 4j], "spin")
    assert s.dim == 2
    assert s.norm() == pytest.approx(5.0)
    assert abs(s.normalize().norm() - 1) < 1e-12
    with pytest.raises(ValueError):
        s.amplitudes[0] = 1
    with pytest.raises(DimensionError):
        StateVector([])
    with pytest.raises(ValueError):
        StateVector([0, 0]).normalize()


def test_inner_examples():
    zero, one = basis_state(2, 0), basis_state(2, 1)
    assert inner(zero, zero) == 1
    assert inner(zero, one) == 0
    assert abs(inner([SQ, SQ], [SQ, -SQ])) < 1e-15
    assert inner([1j, 0], [1, 0]) == -1j
    with pytest.raises(DimensionError):
        inner([1, 0], [1, 0, 0])


@given(st.integers(1, 8), st.integers(0, 2 ** 31 - 1))
@settings(max_examples=30, deadline=None)
def test_inner_cauchy_schwarz(dim, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    b = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    assert abs(inner(a, b)) <= np.linalg.norm(a) * np.linalg.norm(b) * (1 + 1e-12)
    assert inner(a, b) == pytest.approx(np.conj(inner(b, a)))


def test_tensor_examples():
    s = tensor(basis_state(2, 0), basis_state(2, 1))
    assert s.dim == 4
    np.testing.assert_array_equal(s.amplitudes, [0, 1, 0, 0])
    assert np.array_equal(tensor(identity(2), identity(2)).entries, np.eye(4))
    zz = tensor(pauli("z"), pauli("z"))
    np.testing.assert_allclose((zz @ s).amplitudes, -s.amplitudes)


def test_tensor_associative(rng):
    a, b, c = (rand_ket(rng, d) for d in (2, 3, 2))
    left = tensor(tensor(a, b), c).amplitudes
    right = tensor(a, tensor(b, c)).amplitudes
    assert left.size == 12
    np.testing.assert_allclose(left, right, atol=1e-15)


def test_operator_flags():
    assert pauli("x").hermitian_flag and pauli("x").unitary_flag
    m = OperatorMatrix([[1, 2], [0, 1]])
    assert not m.hermitian_flag and not m.unitary_flag
    assert OperatorMatrix(np.diag([1, 1j])).unitary_flag
    with pytest.raises(DimensionError):
        OperatorMatrix([[1, 2, 3]])
    with pytest.raises(NotHermitianError):
        m.eigh


def test_hermitian_flag_threshold():
    h = np.array([[1, 1e-13j], [0, 1]])
    assert OperatorMatrix(h).hermitian_flag
    h = np.array([[1, 1e-11j], [0, 1]])
    assert not OperatorMatrix(h).hermitian_flag


def test_evolve_examples():
    psi = np.array([0.6, 0.8j])
    H = pauli("y")
    np.testing.assert_allclose(evolve(psi, H, 0.0).amplitudes, psi)
    out = evolve(basis_state(2, 0), pauli("x"), math.pi / 2)
    np.testing.assert_allclose(out.amplitudes, [0, -1j], atol=1e-15)
    with pytest.raises(NotHermitianError):
        evolve(psi, [[0, 1], [0, 0]], 1.0)


def test_evolve_against_taylor_oracle(rng):
    H = rand_herm(rng, 5)
    psi = rand_ket(rng, 5)
    k = Constants(hbar=0.7)
    expect = expm_taylor(-1j * H * 1.3 / 0.7) @ psi
    np.testing.assert_allclose(evolve(psi, H, 1.3, k).amplitudes, expect, atol=1e-12)


@given(st.integers(1, 64), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2 ** 31 - 1))
@settings(max_examples=25, deadline=None)
def test_evolve_composes_and_preserves_norm(dim, t1, t2, seed):
    rng = np.random.default_rng(seed)
    H = rand_herm(rng, dim)
    psi = rand_ket(rng, dim)
    two = evolve(evolve(psi, H, t1), H, t2).amplitudes
    one = evolve(psi, H, t1 + t2).amplitudes
    assert np.max(np.abs(two - one)) < 1e-9
    assert abs(np.linalg.norm(one) - 1) < 1e-10


def test_matrix_exponential_examples(rng):
    M = rand_herm(rng, 3)
    np.testing.assert_array_equal(matrix_exponential(M, 0).entries, np.eye(3))
    out = matrix_exponential(pauli("z"), 1j * math.pi / 2).entries
    np.testing.assert_allclose(out, np.diag([1j, -1j]), atol=1e-15)
    A = rand_herm(rng, 8)
    prod = matrix_exponential(A).entries @ matrix_exponential(A, -1).entries
    assert np.max(np.abs(prod - np.eye(8))) < 1e-8


def test_matrix_exponential_non_hermitian(rng):
    M = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    out = matrix_exponential(M, 0.3).entries
    np.testing.assert_allclose(out, expm_taylor(0.3 * M), atol=1e-11)
    prod = out @ matrix_exponential(M, -0.3).entries
    assert np.max(np.abs(prod - np.eye(6))) < 1e-8


def test_matrix_exponential_cap():
    with pytest.raises(DimensionCapError):
        matrix_exponential(np.eye(5), dim_cap=4)


def test_fock_operators():
    k = Constants(hbar=0.5, mass=2.0)
    ops = truncated_fock_operators(10, k, omega=1.5)
    vac = basis_state(10, 0).amplitudes
    assert np.all(ops.a.entries @ vac == 0)
    three = basis_state(10, 3).amplitudes
    np.testing.assert_allclose(ops.n.entries @ three, 3 * three)
    comm = ops.x.entries @ ops.p.entries - ops.p.entries @ ops.x.entries
    for j in range(9):
        assert comm[j, j] == pytest.approx(1j * k.hbar, abs=1e-14)
    assert comm[9, 9] != pytest.approx(1j * k.hbar)
    assert ops.x.hermitian_flag and ops.p.hermitian_flag
    with pytest.raises(ValueError):
        truncated_fock_operators(1)


def test_coherent_state_is_eigenvector():
    alpha = 0.8 - 0.3j
    psi = coherent_state(alpha, 40)
    a = truncated_fock_operators(40).a.entries
    np.testing.assert_allclose(a @ psi.amplitudes, alpha * psi.amplitudes, atol=1e-12)
    assert abs(psi.norm() - 1) < 1e-12
