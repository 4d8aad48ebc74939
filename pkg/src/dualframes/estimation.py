"""Observable coefficients, Monte-Carlo estimators and single-shot variances."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .constants import ATOL_LINSOLVE
from .frames import DualFrame
from .operators import PAULIS, check_hermitian, pauli_sum
from .povm import AnyPovm, Povm, ProductPovm, as_density_matrix, born_probabilities
from .products import traces_against_products
from .records import OutcomeRecord


@dataclass(frozen=True)
class PauliObservable:
    """Weighted sum of Pauli strings, e.g. ``[(0.5, "ZZ"), (-1.0, "XI")]``."""

    terms: tuple

    def __post_init__(self):
        terms = tuple((float(c), str(s)) for c, s in self.terms)
        if not terms:
            raise ValueError("empty Pauli observable")
        lengths = {len(s) for _, s in terms}
        if len(lengths) != 1:
            raise ValueError("all Pauli strings must have the same length")
        object.__setattr__(self, "terms", terms)

    @property
    def n_qubits(self) -> int:
        return len(self.terms[0][1])

    def matrix(self) -> np.ndarray:
        return pauli_sum(self.terms)


Observable = Union[np.ndarray, PauliObservable]


def as_matrix(observable: Observable) -> np.ndarray:
    if isinstance(observable, PauliObservable):
        return observable.matrix()
    return check_hermitian(observable)


@dataclass(frozen=True, eq=False)
class OmegaTable:
    """Coefficients ``omega_k = Tr[O D_k]`` over all outcomes.

    ``values`` has the POVM's outcome shape. For a single product observable
    and product-form duals, ``factors`` keeps the per-group vectors whose
    outer product gives ``values``.
    """

    values: np.ndarray
    factors: Optional[tuple] = None
    groups: Optional[tuple] = None

    def value(self, k) -> float:
        if self.factors is not None:
            k = tuple(np.atleast_1d(k))
            shape = self.values.shape
            out = 1.0
            for g, vec in zip(self.groups, self.factors):
                out *= vec[np.ravel_multi_index([k[q] for q in g], [shape[q] for q in g])]
            return float(out)
        return float(self.values[tuple(np.atleast_1d(k))])

    def on(self, record: OutcomeRecord) -> np.ndarray:
        """The coefficient of every shot in ``record``."""
        return self.values.reshape(-1)[record.flat_indices()]


def _pauli_group_vectors(label, groups, duals: DualFrame):
    vecs = []
    for g, tab in zip(groups, duals.group_duals):
        sub = PAULIS[label[g[0]]]
        for q in g[1:]:
            sub = np.kron(sub, PAULIS[label[q]])
        vecs.append(np.real(np.einsum("ij,kji->k", sub, tab)))
    return vecs


def _outer(vecs, groups, outcome_shape):
    t = vecs[0]
    for v in vecs[1:]:
        t = np.multiply.outer(t, v)
    order = [q for g in groups for q in g]
    t = t.reshape([outcome_shape[q] for q in order])
    return t.transpose(np.argsort(order))


def omega_coefficients(observable: Observable, duals: DualFrame) -> OmegaTable:
    """``omega_k = Tr[O D_k]`` for every outcome."""
    shape = duals.outcome_shape
    if duals.is_product:
        groups = duals.groups
        if isinstance(observable, PauliObservable):
            if observable.n_qubits != duals.n_qubits:
                raise ValueError("observable and duals act on different numbers of qubits")
            total = np.zeros(shape)
            for coef, label in observable.terms:
                total += coef * _outer(_pauli_group_vectors(label, groups, duals), groups, shape)
            factors = None
            if len(observable.terms) == 1:
                coef, label = observable.terms[0]
                vecs = _pauli_group_vectors(label, groups, duals)
                vecs[0] = coef * vecs[0]
                factors = tuple(vecs)
            return OmegaTable(total, factors, groups if factors else None)
        op = as_matrix(observable)
        if op.shape != (2 ** duals.n_qubits,) * 2:
            raise ValueError(f"observable shape {op.shape} does not match the duals")
        vals = traces_against_products(op, groups, duals.group_duals, shape)
        return OmegaTable(np.real(vals))
    op = as_matrix(observable)
    if op.shape != duals.duals.shape[1:]:
        raise ValueError(f"observable shape {op.shape} does not match the duals")
    vals = np.einsum("ij,kji->k", op, duals.duals)
    if np.max(np.abs(vals.imag), initial=0) > 1e-10 * max(1.0, np.max(np.abs(vals.real))):
        raise ValueError("complex coefficients; are the duals Hermitian?")
    return OmegaTable(np.real(vals).reshape(shape))


def reconstruct(povm: AnyPovm, omega: OmegaTable) -> np.ndarray:
    """``sum_k omega_k M_k``."""
    effects = povm.materialize().effects if isinstance(povm, ProductPovm) else povm.effects
    return np.einsum("k,kij->ij", omega.values.reshape(-1), effects)


def estimate_expectation(record: OutcomeRecord, omega: OmegaTable) -> float:
    """Sample mean of ``omega`` over the recorded outcomes."""
    if record.shots == 0:
        raise ValueError("empty record")
    return float(np.mean(omega.on(record)))


def exact_expectation(povm: AnyPovm, omega: OmegaTable, rho) -> float:
    p = born_probabilities(povm, rho)
    return float(np.sum(p * omega.values))


def _state_expectation(observable, rho) -> float:
    rho = as_density_matrix(rho)
    return float(np.real(np.trace(rho @ as_matrix(observable))))


def exact_ssv(povm: AnyPovm, duals: DualFrame, observable: Observable, rho,
              omega: Optional[OmegaTable] = None) -> float:
    """``sum_k p_k omega_k^2 - <O>^2`` by exact summation over outcomes."""
    if tuple(povm.outcome_shape) != tuple(duals.outcome_shape):
        raise ValueError("duals do not belong to this POVM")
    if isinstance(povm, ProductPovm) and povm.n_qubits > 6:
        raise ValueError("exact single-shot variance limited to 6 qubits; use sample_ssv")
    omega = omega if omega is not None else omega_coefficients(observable, duals)
    p = born_probabilities(povm, rho)
    mean = _state_expectation(observable, rho)
    val = float(np.sum(p * omega.values ** 2) - mean ** 2)
    if -ATOL_LINSOLVE < val < 0:
        val = 0.0
    return val


def sample_ssv(record: OutcomeRecord, omega: OmegaTable) -> float:
    """Bessel-corrected sample variance of ``omega`` over the record."""
    if record.shots < 2:
        raise ValueError("need at least two shots")
    return float(np.var(omega.on(record), ddof=1))


def eigenbasis_lower_bound(observable: Observable, rho) -> float:
    """``<O^2> - <O>^2``: the variance of measuring ``O`` in its eigenbasis."""
    op = as_matrix(observable)
    rho = as_density_matrix(rho)
    if op.shape != rho.shape:
        raise ValueError("observable and state have different dimensions")
    m1 = np.real(np.trace(rho @ op))
    m2 = np.real(np.trace(rho @ op @ op))
    return max(float(m2 - m1 ** 2), 0.0)


def estimator_variance(ssv: float, shots: int) -> float:
    if shots < 1:
        raise ValueError("shots must be positive")
    return ssv / shots


def eigenbasis_povm(observable: Observable) -> Povm:
    """Projective measurement in the eigenbasis of ``observable``."""
    _, vecs = np.linalg.eigh(as_matrix(observable))
    return Povm(np.einsum("ik,jk->kij", vecs, vecs.conj()), name="eigenbasis")


def observable_from_json(obj) -> Observable:
    """``{"pauli": [[coef, "ZI"], ...]}`` or ``{"real": [[...]], "imag": [[...]]}``."""
    if "pauli" in obj:
        return PauliObservable(tuple((c, s) for c, s in obj["pauli"]))
    if "matrix" in obj:
        obj = obj["matrix"]
    if "real" not in obj:
        raise ValueError("observable needs 'pauli' or 'real'/'imag' entries")
    re = np.asarray(obj["real"], dtype=float)
    im = np.asarray(obj.get("imag", np.zeros_like(re)), dtype=float)
    return check_hermitian(re + 1j * im, atol=1e-9)


def observable_to_json(observable: Observable) -> dict:
    if isinstance(observable, PauliObservable):
        return {"pauli": [[c, s] for c, s in observable.terms]}
    op = np.asarray(observable)
    return {"real": np.real(op).tolist(), "imag": np.imag(op).tolist()}


def n_qubits_of(observable: Observable) -> int:
    if isinstance(observable, PauliObservable):
        return observable.n_qubits
    return int(round(np.log2(np.asarray(observable).shape[0])))

