"""Dense operator algebra on small qubit registers.

Operators are plain complex ``numpy`` arrays. Vectorization is row-major,
so the entry ``(i, j)`` of a ``d x d`` operator lands at flat index
``i * d + j`` (the ``|i> (x) |j>`` ordering). With this convention the
Hilbert-Schmidt product ``Tr[A^dag B]`` is ``vdot(vec(A), vec(B))``.
"""

from __future__ import annotations

from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from .constants import ATOL_ALGEBRAIC, ATOL_SPECTRAL

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}


def make_rng(seed: int, stream_id=0) -> np.random.Generator:
    """Independent, reproducible generator for ``(seed, stream_id)``.

    Streams for different ``stream_id`` values are statistically independent,
    which is how repetitions of an experiment get their own randomness.
    ``stream_id`` may be an integer or a tuple of integers (a nested stream).
    """
    key = tuple(int(s) for s in np.atleast_1d(stream_id))
    if seed < 0 or any(s < 0 for s in key):
        raise ValueError("seed and stream_id must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def is_hermitian(op, atol=ATOL_ALGEBRAIC) -> bool:
    op = np.asarray(op)
    return op.ndim == 2 and op.shape[0] == op.shape[1] and np.max(np.abs(op - op.conj().T)) <= atol


def check_hermitian(op, atol=ATOL_ALGEBRAIC) -> np.ndarray:
    op = np.asarray(op, dtype=complex)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {op.shape}")
    if not is_hermitian(op, atol):
        raise ValueError("operator is not Hermitian")
    return op


def check_density_matrix(rho, atol=ATOL_SPECTRAL) -> np.ndarray:
    rho = check_hermitian(rho)
    if abs(np.trace(rho).real - 1) > atol:
        raise ValueError(f"density matrix trace is {np.trace(rho).real}, expected 1")
    if np.linalg.eigvalsh(rho).min() < -atol:
        raise ValueError("density matrix has negative eigenvalues")
    return rho


def vectorize(op) -> np.ndarray:
    """Double-ket ``|op>>`` of a square operator (row-major)."""
    op = np.asarray(op, dtype=complex)
    return op.reshape(-1).copy()


def devectorize(vec) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    d = int(round(np.sqrt(vec.shape[-1])))
    if d * d != vec.shape[-1]:
        raise ValueError(f"length {vec.shape[-1]} is not a perfect square")
    return vec.reshape(vec.shape[:-1] + (d, d))


def hs_inner(a, b) -> float:
    """Hilbert-Schmidt inner product ``Tr[a^dag b]`` of two Hermitian operators."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    val = np.vdot(a.reshape(-1), b.reshape(-1))
    assert abs(val.imag) < ATOL_ALGEBRAIC * max(1.0, abs(val.real)), "non-Hermitian input"
    return float(val.real)


def tensor(ops: Sequence) -> np.ndarray:
    """Kronecker product of ``ops`` in list order."""
    ops = list(ops)
    if not ops:
        raise ValueError("tensor of an empty list")
    return reduce(np.kron, (np.asarray(o, dtype=complex) for o in ops))


def pauli_string(label: str) -> np.ndarray:
    """Dense matrix of a Pauli string such as ``"XZI"`` (leftmost = qubit 0)."""
    if not label or any(c not in PAULIS for c in label):
        raise ValueError(f"invalid Pauli string {label!r}")
    return tensor([PAULIS[c] for c in label])


def pauli_sum(terms: Iterable[tuple[float, str]]) -> np.ndarray:
    terms = list(terms)
    if not terms:
        raise ValueError("empty Pauli sum")
    return sum(float(c) * pauli_string(s) for c, s in terms)


def projector(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def haar_random_state(d: int, rng: np.random.Generator) -> np.ndarray:
    """Density matrix of a Haar-random pure state in dimension ``d``."""
    if d < 2:
        raise ValueError("dimension must be at least 2")
    g = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return projector(g / np.linalg.norm(g))


def haar_random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random ``d x d`` unitary (QR of a Ginibre matrix, phases fixed)."""
    if d < 2:
        raise ValueError("dimension must be at least 2")
    g = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(g)
    diag = np.diag(r)
    return q * (diag / np.abs(diag))


def random_observable(d: int, rng: np.random.Generator, lo: float = -5.0, hi: float = 5.0) -> np.ndarray:
    """``U diag(lambda) U^dag`` with eigenvalues uniform in ``[lo, hi]`` and Haar ``U``.

    The eigenvalues are drawn before the unitary, from the same generator.
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    lam = rng.uniform(lo, hi, size=d)
    u = haar_random_unitary(d, rng)
    op = (u * lam) @ u.conj().T
    return (op + op.conj().T) / 2


def expectation(op, rho) -> float:
    return float(np.real(np.trace(np.asarray(rho) @ np.asarray(op))))


def hermitian_basis(d: int) -> np.ndarray:
    """Orthonormal (Hilbert-Schmidt) basis of ``Herm(C^d)``, shape ``(d*d, d, d)``.

    Diagonal units first, then for each ``i < j`` the symmetric and
    antisymmetric off-diagonal pairs. Coordinates of a Hermitian operator in
    this basis are real.
    """
    basis = []
    for i in range(d):
        e = np.zeros((d, d), dtype=complex)
        e[i, i] = 1
        basis.append(e)
    for i in range(d):
        for j in range(i + 1, d):
            s = np.zeros((d, d), dtype=complex)
            s[i, j] = s[j, i] = 1 / np.sqrt(2)
            a = np.zeros((d, d), dtype=complex)
            a[i, j] = -1j / np.sqrt(2)
            a[j, i] = 1j / np.sqrt(2)
            basis.extend([s, a])
    return np.array(basis)
