"""POVM construction, validation, Born rule and outcome sampling.

Single-qubit classes, each a parameter slice of the next one where possible:

* classical shadows: ``1/3 P_X + 1/3 P_Y + 1/3 P_Z`` (6 outcomes)
* LBCS: ``q_X P_X + q_Y P_Y + q_Z P_Z`` with ``q_Z = 1 - q_X - q_Y``
* MUB: LBCS effects conjugated by one unitary ``U(theta, phi, lam)``
* general PM-simulable: a separate unitary per Pauli basis
* 4-outcome dilation: rank-one minimal IC POVM from a Naimark isometry

Outcome order for the 6-outcome classes is ``X+, X-, Y+, Y-, Z+, Z-``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product as iproduct
from typing import Sequence, Union

import numpy as np

from .constants import ATOL_SPECTRAL, RANK_RTOL
from .operators import projector, tensor
from .products import traces_against_products

SIX_LABELS = ("X+", "X-", "Y+", "Y-", "Z+", "Z-")

_S2 = 1 / np.sqrt(2)
PAULI_EIGENSTATES = np.array(
    [
        [_S2, _S2],
        [_S2, -_S2],
        [_S2, 1j * _S2],
        [_S2, -1j * _S2],
        [1, 0],
        [0, 1],
    ],
    dtype=complex,
)


@dataclass(frozen=True, eq=False)
class Povm:
    """Effects ``M_k`` stacked as an ``(n, d, d)`` array."""

    effects: np.ndarray
    labels: tuple = None
    name: str = "custom"

    def __post_init__(self):
        eff = np.asarray(self.effects, dtype=complex)
        if eff.ndim != 3 or eff.shape[1] != eff.shape[2]:
            raise ValueError(f"effects must have shape (n, d, d), got {eff.shape}")
        eff = (eff + eff.conj().transpose(0, 2, 1)) / 2
        object.__setattr__(self, "effects", eff)
        labels = self.labels
        if labels is None:
            labels = tuple(str(i) for i in range(eff.shape[0]))
        labels = tuple(labels)
        if len(labels) != eff.shape[0]:
            raise ValueError("one label per effect required")
        object.__setattr__(self, "labels", labels)
        low = np.linalg.eigvalsh(eff)[:, 0]
        if low.min() < -ATOL_SPECTRAL:
            k = int(np.argmin(low))
            raise ValueError(f"effect {labels[k]} is not positive semi-definite")
        dev = np.max(np.abs(eff.sum(axis=0) - np.eye(eff.shape[1])))
        if dev > ATOL_SPECTRAL:
            raise ValueError(f"effects do not sum to the identity (deviation {dev:.2e})")

    @property
    def n(self) -> int:
        return self.effects.shape[0]

    @property
    def dim(self) -> int:
        return self.effects.shape[1]

    @property
    def n_qubits(self) -> int:
        return int(round(np.log2(self.dim)))

    @property
    def outcome_shape(self) -> tuple:
        return (self.n,)

    def frame_matrix(self) -> np.ndarray:
        """Columns are the double-kets ``|M_k>>``; shape ``(d^2, n)``."""
        return self.effects.reshape(self.n, -1).T

    def traces(self) -> np.ndarray:
        return np.real(np.einsum("kii->k", self.effects))


@dataclass(frozen=True, eq=False)
class ProductPovm:
    """Tensor product of single-qubit POVMs; global effects built on demand."""

    factors: tuple

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise ValueError("product of an empty factor list")
        for f in factors:
            if f.dim != 2:
                raise ValueError("product factors must be single-qubit POVMs")
        object.__setattr__(self, "factors", factors)

    @property
    def n_qubits(self) -> int:
        return len(self.factors)

    @property
    def dim(self) -> int:
        return 2 ** self.n_qubits

    @property
    def outcome_shape(self) -> tuple:
        return tuple(f.n for f in self.factors)

    @property
    def n(self) -> int:
        return int(np.prod(self.outcome_shape))

    def materialize_effect(self, k: Sequence[int]) -> np.ndarray:
        if len(k) != self.n_qubits:
            raise ValueError("multi-index length must equal the number of qubits")
        return tensor([f.effects[ki] for f, ki in zip(self.factors, k)])

    def group_povm(self, qubits: Sequence[int]) -> Povm:
        """Materialized POVM on a subset of qubits (in the given order)."""
        sub = [self.factors[q] for q in qubits]
        effects = _kron_stack([f.effects for f in sub])
        labels = [",".join(map(str, k)) for k in iproduct(*(range(f.n) for f in sub))]
        return Povm(effects, tuple(labels), name="group")

    @cached_property
    def _materialized(self) -> Povm:
        if self.n_qubits > 4:
            raise ValueError("refusing to materialize a POVM on more than 4 qubits")
        return self.group_povm(range(self.n_qubits))

    def materialize(self) -> Povm:
        """Global POVM, outcomes in row-major multi-index order."""
        return self._materialized


AnyPovm = Union[Povm, ProductPovm]


def _kron_stack(stacks):
    out = stacks[0]
    for s in stacks[1:]:
        a, b = out, s
        out = np.einsum("aij,bkl->abikjl", a, b).reshape(
            a.shape[0] * b.shape[0], a.shape[1] * b.shape[1], a.shape[2] * b.shape[2]
        )
    return out


# --- single-qubit classes -------------------------------------------------


def euler_unitary(theta: float, phi: float, lam: float) -> np.ndarray:
    """``U(theta, phi, lam)`` in the usual u3 convention."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array(
        [[c, -np.exp(1j * lam) * s], [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c]],
        dtype=complex,
    )


def _check_simplex(q_x, q_y):
    if not (q_x > 0 and q_y > 0 and q_x + q_y < 1):
        raise ValueError(f"(q_x, q_y) = ({q_x}, {q_y}) is not in the open probability simplex")
    return np.array([q_x, q_x, q_y, q_y, 1 - q_x - q_y, 1 - q_x - q_y])


def _pauli_projectors():
    return np.array([projector(v) for v in PAULI_EIGENSTATES])


def classical_shadows_povm() -> Povm:
    return Povm(_pauli_projectors() / 3, SIX_LABELS, name="classical_shadows")


def lbcs_povm(q_x: float, q_y: float) -> Povm:
    q = _check_simplex(q_x, q_y)
    return Povm(q[:, None, None] * _pauli_projectors(), SIX_LABELS, name="lbcs")


def mub_povm(q_x, q_y, theta, phi, lam) -> Povm:
    q = _check_simplex(q_x, q_y)
    u = euler_unitary(theta, phi, lam)
    eff = np.array([u.conj().T @ p @ u for p in _pauli_projectors()])
    return Povm(q[:, None, None] * eff, SIX_LABELS, name="mub")


def general_pm_simulable_povm(q_x, q_y, angles) -> Povm:
    """Separate rotation per basis; ``angles`` = ``(theta, phi, lam)`` for X, Y, Z."""
    q = _check_simplex(q_x, q_y)
    angles = np.asarray(angles, dtype=float)
    if angles.shape != (9,):
        raise ValueError("need 9 angles")
    projs = _pauli_projectors()
    eff = []
    for b in range(3):
        u = euler_unitary(*angles[3 * b: 3 * b + 3])
        eff.extend(u.conj().T @ projs[2 * b + s] @ u for s in range(2))
    return Povm(q[:, None, None] * np.array(eff), SIX_LABELS, name="general_pm")


def _givens(a, b, t):
    g = np.eye(4, dtype=complex)
    c, s = np.cos(t), np.sin(t)
    g[a, a] = g[b, b] = c
    g[b, a] = s
    g[a, b] = -s
    return g


def dilation_unitary(params) -> np.ndarray:
    """4x4 unitary ``W`` whose first two columns form the Naimark isometry.

    With ``params = (t1, t2, t3, t4, t5, p0, p1, p2)``::

        W = R34(t3) R23(t2) R12(t1) . diag(1, e^{i p0}, e^{i(p0+p1)}, e^{i(p0+p2)}) . R34(t5) R23(t4)

    where ``Rab(t)`` is the real Givens rotation taking ``e_a`` to
    ``cos t e_a + sin t e_b``. The first column ``W e1`` is a real unit
    vector in hyperspherical angles ``t1..t3``; the second ``W e2`` ranges
    over all unit vectors orthogonal to it. Row phases of the isometry do not
    change the effects, so this covers every rank-one 4-outcome POVM.
    """
    p = np.asarray(params, dtype=float)
    if p.shape != (8,):
        raise ValueError("dilation POVM takes 8 real parameters")
    t1, t2, t3, t4, t5, p0, p1, p2 = p
    g1 = _givens(2, 3, t3) @ _givens(1, 2, t2) @ _givens(0, 1, t1)
    ph = np.diag(np.exp(1j * np.array([0.0, p0, p0 + p1, p0 + p2])))
    return g1 @ ph @ _givens(2, 3, t5) @ _givens(1, 2, t4)


def dilation4_povm(params) -> Povm:
    a = dilation_unitary(params)[:, :2]
    # outcome k: p_k = |A_k psi|^2, i.e. M_k = A_k^dag A_k
    eff = np.einsum("ki,kj->kij", a.conj(), a)
    return Povm(eff, ("0", "1", "2", "3"), name="dilation4")


def dilation_params_from_isometry(a) -> np.ndarray:
    """Inverse of the dilation parametrization for a 4x2 isometry ``a``."""
    a = np.array(a, dtype=complex)
    phases = np.exp(-1j * np.angle(a[:, 0]))
    a = a * phases[:, None]
    col1 = np.real(a[:, 0])
    t1 = np.arctan2(np.linalg.norm(col1[1:]), col1[0])
    t2 = np.arctan2(np.linalg.norm(col1[2:]), col1[1])
    t3 = np.arctan2(col1[3], col1[2])
    g1 = _givens(2, 3, t3) @ _givens(1, 2, t2) @ _givens(0, 1, t1)
    u = g1.conj().T @ a[:, 1]
    p0 = np.angle(u[1])
    v = u * np.exp(-1j * p0)
    p1, p2 = np.angle(v[2]), np.angle(v[3])
    t4 = np.arctan2(np.hypot(abs(v[2]), abs(v[3])), v[1].real)
    t5 = np.arctan2(abs(v[3]), abs(v[2]))
    return np.array([t1, t2, t3, t4, t5, p0, p1, p2])


def dilation_reference_params() -> np.ndarray:
    """Parameters of the tetrahedral SIC POVM ``M_k = |psi_k><psi_k| / 2``."""
    w = np.exp(2j * np.pi / 3)
    psi = [np.array([1, 0])] + [np.array([1 / np.sqrt(3), np.sqrt(2 / 3) * w ** k]) for k in range(3)]
    a = np.array([v.conj() for v in psi]) / np.sqrt(2)
    return dilation_params_from_isometry(a)


# --- class specs and unconstrained parametrization -------------------------


CLASS_IDS = ("classical_shadows", "lbcs", "mub", "general_pm", "dilation4")
_N_PARAMS = {"classical_shadows": 0, "lbcs": 2, "mub": 5, "general_pm": 11, "dilation4": 8}
_ALIASES = {
    "cs": "classical_shadows",
    "classicalshadows": "classical_shadows",
    "generalpmsimulable": "general_pm",
    "general_pm_simulable": "general_pm",
    "pm": "general_pm",
    "dilation": "dilation4",
}


def canonical_class_id(name: str) -> str:
    key = name.lower().replace("-", "_")
    key = _ALIASES.get(key, _ALIASES.get(key.replace("_", ""), key))
    if key not in CLASS_IDS:
        raise ValueError(f"unknown POVM class {name!r}")
    return key


@dataclass(frozen=True)
class PovmClassSpec:
    """A POVM class with its natural parameters (probabilities and angles)."""

    class_id: str
    params: tuple = field(default_factory=tuple)

    def __post_init__(self):
        cid = canonical_class_id(self.class_id)
        object.__setattr__(self, "class_id", cid)
        params = tuple(float(p) for p in self.params)
        if len(params) != _N_PARAMS[cid]:
            raise ValueError(f"class {cid} takes {_N_PARAMS[cid]} parameters, got {len(params)}")
        object.__setattr__(self, "params", params)

    def build(self) -> Povm:
        p = self.params
        if self.class_id == "classical_shadows":
            return classical_shadows_povm()
        if self.class_id == "lbcs":
            return lbcs_povm(*p)
        if self.class_id == "mub":
            return mub_povm(*p)
        if self.class_id == "general_pm":
            return general_pm_simulable_povm(p[0], p[1], p[2:])
        return dilation4_povm(p)

    def to_dict(self) -> dict:
        return {"class": self.class_id, "params": list(self.params)}


def n_raw_params(class_id: str) -> int:
    return _N_PARAMS[canonical_class_id(class_id)]


def simplex_from_logits(a_x, a_y):
    """``(q_X, q_Y)`` from unconstrained logits, the Z logit pinned at 0."""
    z = np.array([a_x, a_y, 0.0])
    z = np.maximum(np.exp(z - z.max()), 1e-300)
    z /= z.sum()
    return float(z[0]), float(z[1])


def spec_from_raw(class_id: str, raw) -> PovmClassSpec:
    """Natural class parameters from an unconstrained vector."""
    cid = canonical_class_id(class_id)
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (_N_PARAMS[cid],):
        raise ValueError(f"class {cid} takes {_N_PARAMS[cid]} raw parameters")
    if cid in ("classical_shadows", "dilation4"):
        return PovmClassSpec(cid, tuple(raw))
    q = simplex_from_logits(raw[0], raw[1])
    return PovmClassSpec(cid, q + tuple(raw[2:]))


def default_raw(class_id: str) -> np.ndarray:
    """Starting point of a class: the classical-shadows point, or the SIC for dilations."""
    cid = canonical_class_id(class_id)
    if cid == "dilation4":
        return dilation_reference_params()
    return np.zeros(_N_PARAMS[cid])


def random_raw(class_id: str, rng: np.random.Generator) -> np.ndarray:
    cid = canonical_class_id(class_id)
    n = _N_PARAMS[cid]
    if cid == "dilation4":
        return rng.uniform(-np.pi, np.pi, n)
    if n == 0:
        return np.zeros(0)
    return np.concatenate([rng.normal(0.0, 1.0, 2), rng.uniform(-np.pi, np.pi, n - 2)])


def class_product_povm(class_id: str, raw, n_qubits: int) -> AnyPovm:
    """Per-qubit class POVMs with independent parameters; ``raw`` is concatenated per qubit."""
    k = n_raw_params(class_id)
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (k * n_qubits,):
        raise ValueError(f"expected {k * n_qubits} raw parameters")
    factors = [spec_from_raw(class_id, raw[q * k:(q + 1) * k]).build() for q in range(n_qubits)]
    if n_qubits == 1:
        return factors[0]
    return ProductPovm(tuple(factors))


def product_povm(factors: Sequence[Povm]) -> ProductPovm:
    return ProductPovm(tuple(factors))


def pm_povm(basis) -> Povm:
    """Projective measurement onto the columns of ``basis``."""
    basis = np.asarray(basis, dtype=complex)
    return Povm(np.array([projector(basis[:, k]) for k in range(basis.shape[1])]), name="projective")


# --- Born rule, sampling, informational completeness -----------------------


def _product_state_factors(rho):
    if isinstance(rho, (list, tuple)):
        return [np.asarray(r, dtype=complex) for r in rho]
    return None


def as_density_matrix(rho) -> np.ndarray:
    parts = _product_state_factors(rho)
    if parts is not None:
        return tensor(parts)
    return np.asarray(rho, dtype=complex)


def born_probabilities(povm: AnyPovm, rho) -> np.ndarray:
    """Outcome probabilities ``Tr[rho M_k]``.

    ``rho`` is a density matrix or, for a product POVM, optionally a list of
    single-qubit density matrices (a product state). The result has shape
    ``povm.outcome_shape``.
    """
    parts = _product_state_factors(rho)
    if isinstance(povm, ProductPovm):
        if parts is not None:
            if len(parts) != povm.n_qubits:
                raise ValueError("one single-qubit state per factor required")
            probs = [born_probabilities(f, r) for f, r in zip(povm.factors, parts)]
            out = probs[0]
            for p in probs[1:]:
                out = np.multiply.outer(out, p)
            return out
        rho = np.asarray(rho, dtype=complex)
        if rho.shape != (povm.dim, povm.dim):
            raise ValueError(f"state shape {rho.shape} does not match POVM dimension {povm.dim}")
        groups = [(q,) for q in range(povm.n_qubits)]
        p = traces_against_products(rho, groups, [f.effects for f in povm.factors], povm.outcome_shape).real
    else:
        rho = as_density_matrix(rho)
        if rho.shape != (povm.dim, povm.dim):
            raise ValueError(f"state shape {rho.shape} does not match POVM dimension {povm.dim}")
        p = np.einsum("ij,kji->k", rho, povm.effects).real
    p = np.where(np.abs(p) < 1e-12, np.abs(p), p)
    if p.min() < 0:
        raise ValueError("negative outcome probability; is rho a density matrix?")
    return p


def sample_outcomes(povm: AnyPovm, rho, shots: int, rng: np.random.Generator):
    """Draw ``shots`` i.i.d. outcomes; returns an :class:`OutcomeRecord`."""
    from .records import OutcomeRecord

    if shots < 1:
        raise ValueError("need at least one shot")
    parts = _product_state_factors(rho)
    if isinstance(povm, ProductPovm) and parts is not None:
        cols = []
        for f, r in zip(povm.factors, parts):
            p = born_probabilities(f, r)
            cols.append(rng.choice(f.n, size=shots, p=p / p.sum()))
        outcomes = np.stack(cols, axis=1)
    else:
        p = born_probabilities(povm, rho).reshape(-1)
        flat = rng.choice(p.size, size=shots, p=p / p.sum())
        outcomes = np.stack(np.unravel_index(flat, povm.outcome_shape), axis=1)
    return OutcomeRecord(outcomes.astype(np.int64), povm.outcome_shape)


def counts_table(record, shape=None) -> np.ndarray:
    shape = tuple(shape or record.outcome_shape)
    flat = np.ravel_multi_index(tuple(record.outcomes.T), shape)
    return np.bincount(flat, minlength=int(np.prod(shape))).reshape(shape)


def is_informationally_complete(povm: AnyPovm) -> tuple[bool, int]:
    """``(is_ic, rank)`` of the span of the effects inside ``Herm(C^d)``."""
    if isinstance(povm, ProductPovm):
        ranks = [is_informationally_complete(f)[1] for f in povm.factors]
        rank = int(np.prod(ranks))
    else:
        s = np.linalg.svd(povm.frame_matrix(), compute_uv=False)
        rank = int(np.sum(s > RANK_RTOL * s[0]))
    return rank == povm.dim ** 2, rank


# --- JSON description files ------------------------------------------------


def normalize_description(desc: dict) -> dict:
    """Canonical ``{"product": [{"class", "params"}, ...]}`` form of a description."""
    if "product" in desc:
        items = desc["product"]
        if not isinstance(items, list) or not items:
            raise ValueError("'product' must be a non-empty list")
        specs = []
        for item in items:
            specs.extend(normalize_description(item)["product"])
        return {"product": specs}
    if "class" not in desc:
        raise ValueError("POVM description needs 'class' or 'product'")
    spec = PovmClassSpec(desc["class"], tuple(desc.get("params", ())))
    reps = int(desc.get("n_qubits", 1))
    if reps < 1:
        raise ValueError("n_qubits must be positive")
    return {"product": [spec.to_dict() for _ in range(reps)]}


def povm_from_description(desc: dict) -> AnyPovm:
    norm = normalize_description(desc)
    factors = [PovmClassSpec(d["class"], tuple(d["params"])).build() for d in norm["product"]]
    return factors[0] if len(factors) == 1 else ProductPovm(tuple(factors))


def description_hash(desc: dict) -> str:
    blob = json.dumps(normalize_description(desc), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
