import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from dualframes.operators import (I2, X, Y, Z, check_density_matrix, check_hermitian, devectorize,
                                  haar_random_state, haar_random_unitary, hermitian_basis, hs_inner,
                                  make_rng, pauli_string, random_observable, tensor, vectorize)

seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


def test_vectorize_examples():
    e01 = np.array([[0, 1], [0, 0]], dtype=complex)
    assert_array_equal(vectorize(e01), [0, 1, 0, 0])
    assert_array_equal(vectorize(I2), [1, 0, 0, 1])
    assert_array_equal(vectorize(Y), [0, -1j, 1j, 0])


def test_hs_inner_examples(rng):
    assert hs_inner(Z, Z) == pytest.approx(2)
    assert hs_inner(X, Z) == pytest.approx(0)
    assert hs_inner(I2, haar_random_state(2, rng)) == pytest.approx(1)


def test_tensor_examples():
    assert_allclose(tensor([Z, I2]), np.diag([1, 1, -1, -1]))
    assert_allclose(tensor([I2]), I2)
    assert_allclose(tensor([X, X]), np.fliplr(np.eye(4)))
    with pytest.raises(ValueError):
        tensor([])


def test_pauli_string():
    assert_allclose(pauli_string("ZI"), tensor([Z, I2]))
    with pytest.raises(ValueError):
        pauli_string("ZQ")


def test_hermitian_checks():
    with pytest.raises(ValueError):
        check_hermitian(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        check_density_matrix(np.diag([1.2, -0.2]))
    with pytest.raises(ValueError):
        check_density_matrix(np.diag([0.6, 0.6]))


@given(seeds)
def test_vectorize_roundtrip_and_linearity(seed):
    rng = make_rng(seed)
    a, b = random_observable(3, rng), random_observable(3, rng)
    assert np.max(np.abs(devectorize(vectorize(a)) - a)) < 1e-14
    al, be = rng.normal(size=2)
    assert_allclose(vectorize(al * a + be * b), al * vectorize(a) + be * vectorize(b), atol=1e-12)


@given(seeds)
def test_hs_inner_symmetric(seed):
    rng = make_rng(seed)
    a, b = random_observable(4, rng), random_observable(4, rng)
    assert abs(hs_inner(a, b) - hs_inner(b, a)) < 1e-12
    assert_allclose(hs_inner(a, b), np.real(np.vdot(vectorize(a), vectorize(b))), atol=1e-12)


@given(seeds)
def test_tensor_associative(seed):
    rng = make_rng(seed)
    a, b, c = (random_observable(2, rng) for _ in range(3))
    flat = tensor([a, b, c])
    # a few ulp of the largest entry
    assert np.max(np.abs(tensor([a, tensor([b, c])]) - flat)) <= 8 * np.finfo(float).eps * np.max(np.abs(flat))


def test_haar_states_are_pure_density_matrices():
    rng = make_rng(7)
    for _ in range(1000):
        rho = haar_random_state(2, rng)
        check_density_matrix(rho)
        assert np.trace(rho @ rho).real == pytest.approx(1, abs=1e-12)


def test_haar_state_determinism_and_mean():
    assert_array_equal(haar_random_state(2, make_rng(42, 0)), haar_random_state(2, make_rng(42, 0)))
    assert not np.array_equal(haar_random_state(2, make_rng(42, 0)), haar_random_state(2, make_rng(42, 1)))
    rng = make_rng(3)
    g = rng.standard_normal((100000, 2)) + 1j * rng.standard_normal((100000, 2))
    # same construction, vectorized: <Z> = |a|^2 - |b|^2 over normalized amplitudes
    z = (np.abs(g[:, 0]) ** 2 - np.abs(g[:, 1]) ** 2) / np.sum(np.abs(g) ** 2, axis=1)
    assert abs(z.mean()) < 3 / np.sqrt(1e5)
    zs = [np.real(np.trace(haar_random_state(2, rng) @ Z)) for _ in range(20000)]
    assert abs(np.mean(zs)) < 3 / np.sqrt(2e4)


@given(seeds, st.integers(2, 6))
def test_haar_unitary(seed, d):
    u = haar_random_unitary(d, make_rng(seed))
    assert np.max(np.abs(u.conj().T @ u - np.eye(d))) < 1e-12
    assert_allclose(np.linalg.norm(u, axis=0), 1, atol=1e-12)
    assert_array_equal(u, haar_random_unitary(d, make_rng(seed)))


def test_haar_unitary_phase_distribution():
    # Haar measure: E|U_00|^2 = 1/d and the eigenphases are not biased toward 1
    rng = make_rng(11)
    us = [haar_random_unitary(3, rng) for _ in range(4000)]
    assert np.mean([abs(u[0, 0]) ** 2 for u in us]) == pytest.approx(1 / 3, abs=0.02)
    assert abs(np.mean([np.trace(u) for u in us])) < 0.06


@given(seeds)
def test_random_observable_spectrum(seed):
    rng = make_rng(seed)
    op = random_observable(4, rng)
    ev = np.linalg.eigvalsh(op)
    assert ev.min() >= -5 and ev.max() <= 5
    lam = make_rng(seed).uniform(-5, 5, size=4)
    assert_allclose(np.sort(lam), ev, atol=1e-10)


def test_random_observable_degenerate_limit(rng):
    eps = 1e-9
    op = random_observable(3, rng, lo=2.0, hi=2.0 + eps)
    assert np.max(np.abs(op - 2.0 * np.eye(3))) < 10 * eps
    with pytest.raises(ValueError):
        random_observable(3, rng, lo=1.0, hi=1.0)


def test_rng_streams():
    a = make_rng(5, (1, 2)).random(3)
    assert_array_equal(a, make_rng(5, (1, 2)).random(3))
    assert not np.array_equal(a, make_rng(5, (2, 1)).random(3))
    with pytest.raises(ValueError):
        make_rng(-1)


def test_hermitian_basis_orthonormal():
    for d in (2, 3, 4):
        b = hermitian_basis(d)
        gram = np.einsum("aij,bji->ab", b, b)
        assert_allclose(gram, np.eye(d * d), atol=1e-12)
