"""Frame superoperators and dual frames of informationally complete POVMs.

Everything is expressed through the frame matrix ``M`` whose columns are the
vectorized effects ``|M_k>>``; the weighted frame superoperator is
``F_a = M diag(a) M^dag`` and the weighted duals are ``|D_k>> = a_k F_a^{-1} |M_k>>``.

Product POVMs get product-form duals when the weights factorize over a
partition of the qubits: each group is then handled as a small global
problem of size ``4^m x 4^m``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .constants import ATOL_LINSOLVE, MAX_CONDITION, PROBABILITY_FLOOR, RANK_RTOL
from .errors import ICFailureError
from .operators import hermitian_basis
from .povm import AnyPovm, Povm, ProductPovm, born_probabilities
from .products import embed_product

PROVENANCES = ("canonical", "weighted", "optimal", "average_optimal", "empirical", "svd")


def _operators(frame) -> np.ndarray:
    if isinstance(frame, Povm):
        return frame.effects
    if isinstance(frame, ProductPovm):
        return frame.materialize().effects
    ops = np.asarray(frame, dtype=complex)
    if ops.ndim != 3:
        raise ValueError("expected a POVM or an (n, d, d) stack of operators")
    return ops


def _frame_matrix(frame) -> np.ndarray:
    ops = _operators(frame)
    return ops.reshape(ops.shape[0], -1).T


@dataclass(frozen=True, eq=False)
class FrameSuperoperator:
    matrix: np.ndarray
    weights: Optional[np.ndarray] = None

    @property
    def dim_op(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def apply(self, op) -> np.ndarray:
        op = np.asarray(op, dtype=complex)
        d = op.shape[0]
        return (self.matrix @ op.reshape(-1)).reshape(d, d)


@dataclass(frozen=True, eq=False)
class DualFrame:
    """Dual operators ``D_k``, either global or as per-group tables.

    Global form: ``duals`` has shape ``(n, d, d)``. Product form: ``groups``
    partitions the qubits and ``group_duals[g]`` has shape
    ``(n_g, 2^m, 2^m)``; the dual for multi-index ``k`` is the tensor product
    of ``group_duals[g][k_g]``.
    """

    provenance: str
    outcome_shape: tuple
    duals: Optional[np.ndarray] = None
    groups: Optional[tuple] = None
    group_duals: Optional[tuple] = None
    weights: object = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if (self.duals is None) == (self.group_duals is None):
            raise ValueError("give either global duals or group duals")

    @property
    def is_product(self) -> bool:
        return self.group_duals is not None

    @property
    def n_qubits(self) -> int:
        return len(self.outcome_shape)

    @property
    def n(self) -> int:
        return int(np.prod(self.outcome_shape))

    def dual(self, k) -> np.ndarray:
        """Dual operator for outcome ``k`` (an int for global frames, or a multi-index)."""
        if not self.is_product:
            if not np.isscalar(k):
                k = int(np.ravel_multi_index(tuple(k), self.outcome_shape))
            return self.duals[k]
        k = tuple(k)
        ops = []
        for g, tab in zip(self.groups, self.group_duals):
            idx = np.ravel_multi_index([k[q] for q in g], [self.outcome_shape[q] for q in g])
            ops.append(tab[idx])
        return embed_product(ops, self.groups, self.n_qubits)

    def materialize(self) -> np.ndarray:
        """All duals as an ``(n, d, d)`` stack in row-major outcome order."""
        if not self.is_product:
            return self.duals
        if self.n_qubits > 4:
            raise ValueError("refusing to materialize duals on more than 4 qubits")
        return np.array([self.dual(k) for k in np.ndindex(*self.outcome_shape)])

    def to_json(self) -> dict:
        def mat(a):
            return {"real": np.real(a).tolist(), "imag": np.imag(a).tolist()}

        out = {"provenance": self.provenance, "outcome_shape": list(self.outcome_shape)}
        if self.weights is not None:
            if isinstance(self.weights, (list, tuple)):
                out["weights"] = [np.asarray(w).ravel().tolist() for w in self.weights]
            else:
                out["weights"] = np.asarray(self.weights).ravel().tolist()
        if self.is_product:
            out["groups"] = [list(g) for g in self.groups]
            out["group_duals"] = [[mat(d) for d in tab] for tab in self.group_duals]
        else:
            out["groups"] = [list(range(self.n_qubits))]
            out["group_duals"] = [[mat(d) for d in self.duals]]
        return out


def _normalize_weights(w, n=None) -> np.ndarray:
    w = np.asarray(w, dtype=float).ravel()
    total = w.sum()
    if total > 0:
        w = w * ((n or w.size) / total)
    return w


def frame_superoperator(frame, weights=None) -> FrameSuperoperator:
    """``sum_k a_k |M_k>><<M_k|`` (unit weights by default)."""
    m = _frame_matrix(frame)
    n = m.shape[1]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float).ravel()
    if w.shape != (n,):
        raise ValueError(f"expected {n} weights, got {w.size}")
    mat = (m * w) @ m.conj().T
    return FrameSuperoperator((mat + mat.conj().T) / 2, None if weights is None else w)


def _solve_duals(m, w, allow_singular=False) -> np.ndarray:
    """Columns ``w_k F_w^{-1} |M_k>>`` of the weighted dual frame.

    For positive weights this is ``pinv(M sqrt(w))^dag sqrt(w)``, computed
    from the SVD of the frame matrix so errors grow with ``sqrt(cond F)``
    rather than ``cond F``. Other weights go through ``F`` itself.
    """
    if np.all(w > 0):
        r = np.sqrt(w)
        u, sv, vh = np.linalg.svd(m * r, full_matrices=False)
        evals = sv ** 2
        top = evals[0]
        if top == 0:
            raise ICFailureError("frame superoperator vanishes")
        keep = evals > RANK_RTOL * top
        if not allow_singular and (sv.size < m.shape[0] or evals[-1] * MAX_CONDITION < top):
            cond = np.inf if sv.size < m.shape[0] or evals[-1] == 0 else top / evals[-1]
            raise ICFailureError(f"frame superoperator is singular or ill-conditioned (cond {cond:.3g})")
        inv = np.where(keep, 1 / np.where(keep, sv, 1), 0)
        return (u * inv) @ vh * r
    mw = m * w
    f = mw @ m.conj().T
    f = (f + f.conj().T) / 2
    evals, evecs = np.linalg.eigh(f)
    mags = np.abs(evals)
    top = mags.max()
    if top == 0:
        raise ICFailureError("frame superoperator vanishes")
    if allow_singular:
        inv = np.where(mags > RANK_RTOL * top, 1 / np.where(mags > 0, evals, 1), 0)
    else:
        if mags.min() * MAX_CONDITION < top:
            cond = np.inf if mags.min() == 0 else top / mags.min()
            raise ICFailureError(f"frame superoperator is singular or ill-conditioned (cond {cond:.3g})")
        inv = 1 / evals
    return (evecs * inv) @ (evecs.conj().T @ mw)


def _dual_stack(frame, w, allow_singular=False):
    ops = _operators(frame)
    d = ops.shape[1]
    cols = _solve_duals(ops.reshape(ops.shape[0], -1).T, w, allow_singular)
    duals = cols.T.reshape(-1, d, d)
    return (duals + duals.conj().transpose(0, 2, 1)) / 2


def _shape(frame):
    if isinstance(frame, (Povm, ProductPovm)):
        return frame.outcome_shape
    return (np.asarray(frame).shape[0],)


def weighted_duals(povm, weights, provenance="weighted", allow_singular=False) -> DualFrame:
    """Duals ``|D_k>> = a_k F_a^{-1} |M_k>>``; invariant under rescaling the weights."""
    w = np.asarray(weights, dtype=float).ravel()
    n = int(np.prod(_shape(povm)))
    if w.shape != (n,):
        raise ValueError(f"expected {n} weights, got {w.size}")
    w = _normalize_weights(w)
    duals = _dual_stack(povm, w, allow_singular)
    return DualFrame(provenance, _shape(povm), duals=duals, weights=w)


def canonical_duals(povm: AnyPovm) -> DualFrame:
    """``|D_k>> = F^{-1}|M_k>>``; product form for product POVMs."""
    if isinstance(povm, ProductPovm):
        groups = [(q,) for q in range(povm.n_qubits)]
        weights = [np.ones(f.n) for f in povm.factors]
        return product_weighted_duals(povm, groups, weights, provenance="canonical")
    return weighted_duals(povm, np.ones(povm.n), provenance="canonical")


def average_optimal_duals(povm: AnyPovm) -> DualFrame:
    """Weights ``1/Tr[M_k]``; the classical-shadow inverse channel."""
    if isinstance(povm, ProductPovm):
        groups = [(q,) for q in range(povm.n_qubits)]
        weights = []
        for f in povm.factors:
            tr = f.traces()
            if np.any(tr <= 0):
                raise ValueError("zero-trace effect")
            weights.append(1 / tr)
        return product_weighted_duals(povm, groups, weights, provenance="average_optimal")
    tr = povm.traces()
    if np.any(tr <= 0):
        raise ValueError("zero-trace effect")
    return weighted_duals(povm, 1 / tr, provenance="average_optimal")


def optimal_weights(povm: AnyPovm, rho, floor: float = PROBABILITY_FLOOR) -> np.ndarray:
    if floor <= 0:
        raise ValueError("floor must be positive")
    p = born_probabilities(povm, rho).ravel()
    return 1 / np.maximum(p, floor)


def optimal_duals(povm: AnyPovm, rho, floor: float = PROBABILITY_FLOOR) -> DualFrame:
    """State-optimal duals, weights ``1/max(Tr[rho M_k], floor)``."""
    return weighted_duals(povm, optimal_weights(povm, rho, floor), provenance="optimal")


def product_weighted_duals(ppovm: AnyPovm, groups: Sequence[Sequence[int]], group_weights,
                           provenance="weighted") -> DualFrame:
    """Product-form duals for weights ``a_k = prod_g a^g_{k_g}``.

    ``group_weights[g]`` is indexed row-major by the outcomes of the qubits in
    ``groups[g]`` (in that order).
    """
    if isinstance(ppovm, Povm):
        ppovm = ProductPovm((ppovm,))
    groups = tuple(tuple(int(q) for q in g) for g in groups)
    flat = sorted(q for g in groups for q in g)
    if flat != list(range(ppovm.n_qubits)):
        raise ValueError(f"groups {groups} do not partition {ppovm.n_qubits} qubits")
    if len(group_weights) != len(groups):
        raise ValueError("one weight table per group required")
    tables, weights = [], []
    for g, w in zip(groups, group_weights):
        if len(g) > 6:
            raise ValueError("group too large")
        sub = ppovm.group_povm(g)
        w = np.asarray(w, dtype=float).ravel()
        if w.shape != (sub.n,):
            raise ValueError(f"group {g} needs {sub.n} weights, got {w.size}")
        w = _normalize_weights(w)
        tables.append(_dual_stack(sub, w))
        weights.append(w)
    return DualFrame(provenance, ppovm.outcome_shape, groups=groups, group_duals=tuple(tables),
                     weights=tuple(weights))


def duality_residual(povm: AnyPovm, duals: DualFrame) -> float:
    """Frobenius norm of ``sum_k |D_k>><<M_k| - I``."""
    if duals.is_product and duals.n_qubits > 4:
        worst = 0.0
        for g, tab in zip(duals.groups, duals.group_duals):
            sub = povm.group_povm(g)
            worst = max(worst, _stack_residual(sub.effects, tab))
        return worst
    return _stack_residual(_operators(povm), duals.materialize())


def _stack_residual(effects, dual_ops) -> float:
    n, d, _ = effects.shape
    mv = effects.reshape(n, -1).T
    dv = np.asarray(dual_ops).reshape(n, -1).T
    return float(np.linalg.norm(dv @ mv.conj().T - np.eye(d * d)))


def is_dual_frame(povm, duals: DualFrame, atol=ATOL_LINSOLVE) -> bool:
    return duality_residual(povm, duals) <= atol


def frame_bounds(frame) -> tuple[float, float]:
    """Smallest and largest eigenvalue of the canonical frame superoperator."""
    if isinstance(frame, ProductPovm):
        bounds = [frame_bounds(f) for f in frame.factors]
        return float(np.prod([b[0] for b in bounds])), float(np.prod([b[1] for b in bounds]))
    evals = frame_superoperator(frame).eigenvalues()
    lo, hi = float(evals[0]), float(evals[-1])
    if lo <= RANK_RTOL * hi:
        raise ICFailureError("operators do not span the operator space (lower frame bound ~ 0)")
    return lo, hi


# --- SVD parametrization of all duals ---------------------------------------


@dataclass(frozen=True)
class SvdBasis:
    """Real SVD ``R = U S V^T`` of the frame in an orthonormal Hermitian basis."""

    basis: np.ndarray
    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    @property
    def dim_op(self) -> int:
        return self.u.shape[0]

    @property
    def n_free(self) -> int:
        return self.v.shape[0] - self.u.shape[0]


def svd_basis(frame) -> SvdBasis:
    ops = _operators(frame)
    n, d, _ = ops.shape
    basis = hermitian_basis(d)
    real = np.real(np.einsum("aij,kji->ak", basis, ops))
    u, s, vt = np.linalg.svd(real, full_matrices=True)
    if s[-1] <= RANK_RTOL * s[0] or s.size < d * d:
        raise ICFailureError("frame does not span the operator space")
    # largest-magnitude entry of each left singular vector made positive
    for i in range(u.shape[1]):
        j = np.argmax(np.abs(u[:, i]))
        if u[j, i] < 0:
            u[:, i] *= -1
            vt[i] *= -1
    return SvdBasis(basis, u, s, vt.T)


def svd_duals(frame, free=None, svd: Optional[SvdBasis] = None) -> DualFrame:
    """Duals ``U [diag(1/s) | free] V^T``; ``free`` has shape ``(d^2, n - d^2)``.

    ``free = 0`` reproduces the canonical duals.
    """
    svd = svd or svd_basis(frame)
    dop, nf = svd.dim_op, svd.n_free
    free = np.zeros((dop, nf)) if free is None else np.asarray(free, dtype=float)
    if free.shape != (dop, nf):
        raise ValueError(f"free block must have shape {(dop, nf)}")
    lam = np.hstack([np.diag(1 / svd.s), free])
    coords = svd.u @ lam @ svd.v.T
    duals = np.einsum("ak,aij->kij", coords, svd.basis)
    return DualFrame("svd", _shape(frame), duals=duals, meta={"free": free})


def svd_free_params(frame, duals: DualFrame, svd: Optional[SvdBasis] = None) -> np.ndarray:
    """Free block reproducing a given dual frame (projection onto the SVD basis)."""
    svd = svd or svd_basis(frame)
    ops = duals.materialize()
    coords = np.real(np.einsum("aij,kji->ak", svd.basis, ops))
    lam = svd.u.T @ coords @ svd.v
    return lam[:, svd.dim_op:]
