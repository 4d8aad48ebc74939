"""Single-shot-variance minimization over dual weights and POVM parameters.

Dual weights are searched in log space, ``a = exp(r)``, optionally
factorized over a partition of the qubits (``r`` is then one table per
group and the duals come out in product form). The SSV of the weighted
duals and its gradient have closed forms: with ``c = M^dag F_a^{-1} |O>>``,
``omega = a * c`` and ``K = M^dag F_a^{-1} M``,

    d SSV / d a = 2 c * (q * omega - K (q * omega * a))

for outcome distribution ``q`` (plus a mean term for sample variances).

POVM parameters are searched with BFGS on central finite differences.
When dual weights are free as well, the inner weight problem is solved to
convergence for each POVM point, and the outer gradient differentiates the
objective at the inner optimum with the weights held fixed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .constants import BARRIER_CONDITION, PROBABILITY_FLOOR
from .empirical import Partition, frequency_table
from .errors import ICFailureError
from .estimation import as_matrix, eigenbasis_lower_bound
from .povm import (AnyPovm, ProductPovm, as_density_matrix, born_probabilities, class_product_povm,
                   default_raw, is_informationally_complete, n_raw_params, random_raw)
from .records import OutcomeRecord

MAX_ITER = 500
GTOL = 1e-8
FD_STEP = 1e-6
DEFAULT_RESTARTS = 5


# --- dual schemes --------------------------------------------------------


@dataclass(frozen=True)
class DualScheme:
    """``canonical``, ``average_optimal``, ``optimal`` or ``free``.

    ``free`` optimizes the weights, factorized over ``partition`` (``None``
    means one global table). ``shared`` uses a single weight vector for all
    observables instead of one per observable.
    """

    kind: str
    partition: Optional[Partition] = None
    shared: bool = False

    def __post_init__(self):
        if self.kind not in ("canonical", "average_optimal", "optimal", "free"):
            raise ValueError(f"unknown dual scheme {self.kind!r}")

    @classmethod
    def parse(cls, text: str, n_qubits: int) -> "DualScheme":
        """``canonical | avg-optimal | optimal | free-local | free-global | free-local-shared ...``."""
        t = text.lower().replace("_", "-")
        if t in ("canonical", "fixed-canonical"):
            return cls("canonical")
        if t in ("avg-optimal", "average-optimal", "fixed-average-optimal"):
            return cls("average_optimal")
        if t == "optimal":
            return cls("optimal")
        if t.startswith("free"):
            parts = t.split("-")[1:]
            shared = "shared" in parts
            parts = [p for p in parts if p != "shared"]
            where = parts[0] if parts else "global"
            if where == "local":
                return cls("free", Partition.singletons(n_qubits), shared)
            if where == "global":
                return cls("free", None, shared)
        raise ValueError(f"unknown dual scheme {text!r}")

    @property
    def name(self) -> str:
        if self.kind == "average_optimal":
            return "avg-optimal"
        if self.kind != "free":
            return self.kind
        where = "global" if self.partition is None or len(self.partition.groups) == 1 else "local"
        return f"free-{where}" + ("-shared" if self.shared else "")


# --- the weighted SSV objective ------------------------------------------


class WeightedSsv:
    """SSV of weighted duals as a function of log-weights.

    ``target`` is a density matrix (exact variance) or an OutcomeRecord
    (Bessel-corrected sample variance over its shots). Several observables
    may be given; the objective is then the sum of their variances under one
    shared weight vector.
    """

    def __init__(self, povm: AnyPovm, observables, target, partition: Optional[Partition] = None):
        if isinstance(povm, ProductPovm) and povm.n_qubits > 4:
            raise ValueError("weight optimization limited to 4 qubits")
        if not is_informationally_complete(povm)[0]:
            raise ICFailureError("POVM is not informationally complete")
        glob = povm.materialize() if isinstance(povm, ProductPovm) else povm
        self.shape = tuple(povm.outcome_shape)
        self.mv = glob.frame_matrix()
        if isinstance(observables, np.ndarray) and observables.ndim == 2:
            observables = [observables]
        ops = [as_matrix(o) for o in observables]
        self.omat = np.stack([o.reshape(-1) for o in ops], axis=1)
        if isinstance(target, OutcomeRecord):
            if target.shots < 2:
                raise ValueError("need at least two shots")
            self.q = frequency_table(target).reshape(-1)
            self.sample = True
            self.bessel = target.shots / (target.shots - 1)
            self.means = None
        else:
            rho = as_density_matrix(target)
            self.q = born_probabilities(povm, rho).reshape(-1)
            self.sample = False
            self.bessel = 1.0
            self.means = np.array([np.real(np.trace(rho @ o)) for o in ops])
        n_q = len(self.shape)
        self.partition = partition or Partition.whole(n_q)
        self._group_axes = []
        for g in self.partition.groups:
            others = tuple(q for q in range(n_q) if q not in g)
            self._group_axes.append((g, others))
        self.sizes = [int(np.prod([self.shape[q] for q in g])) for g in self.partition.groups]

    @property
    def n_params(self) -> int:
        return int(sum(self.sizes))

    def weights(self, raw) -> np.ndarray:
        """Global weights ``a_k = exp(sum_g r^g_{k_g})`` (flattened)."""
        raw = np.asarray(raw, dtype=float)
        total = np.zeros(self.shape)
        start = 0
        for (g, _), size in zip(self._group_axes, self.sizes):
            tab = raw[start:start + size].reshape([self.shape[q] for q in g])
            start += size
            ordered = sorted(g)
            tab = np.moveaxis(tab, list(range(len(g))), [ordered.index(q) for q in g])
            full = np.expand_dims(tab, [q for q in range(len(self.shape)) if q not in g])
            total = total + full
        total = total - total.max()
        return np.exp(total).reshape(-1)

    def group_tables(self, raw) -> list:
        raw = np.asarray(raw, dtype=float)
        out, start = [], 0
        for size in self.sizes:
            out.append(np.exp(raw[start:start + size]))
            start += size
        return out

    def value_and_grad_weights(self, alpha):
        """SSV and its gradient with respect to the global weights."""
        mv, q = self.mv, self.q
        mw = mv * alpha
        f = mw @ mv.conj().T
        f = (f + f.conj().T) / 2
        evals, evecs = np.linalg.eigh(f)
        if evals[0] <= 0 or evals[-1] > BARRIER_CONDITION * evals[0]:
            return np.inf, None
        inv = (evecs / evals) @ evecs.conj().T
        c = np.real(mv.conj().T @ (inv @ self.omat))  # (n, n_obs)
        kmat = np.real(mv.conj().T @ inv @ mv)
        omega = alpha[:, None] * c
        qo = q[:, None] * omega
        second = np.sum(qo * omega, axis=0)
        grad = 2 * c * (qo - kmat @ (qo * alpha[:, None]))
        if self.sample:
            m = np.sum(qo, axis=0)
            gm = c * (q[:, None] - kmat @ (q * alpha)[:, None])
            val = self.bessel * np.sum(second - m ** 2)
            grad = self.bessel * np.sum(grad - 2 * m * gm, axis=1)
        else:
            val = np.sum(second - self.means ** 2)
            grad = np.sum(grad, axis=1)
        return float(val), grad

    def value(self, raw) -> float:
        return self.value_and_grad(raw)[0]

    def value_and_grad(self, raw):
        alpha = self.weights(raw)
        val, g_alpha = self.value_and_grad_weights(alpha)
        if g_alpha is None:
            return np.inf, np.zeros(len(raw))
        ga = (g_alpha * alpha).reshape(self.shape)
        parts = []
        for g, others in self._group_axes:
            m = ga.sum(axis=others) if others else ga
            ordered = sorted(g)
            m = np.moveaxis(m, [ordered.index(q) for q in g], list(range(len(g))))
            parts.append(m.reshape(-1))
        return val, np.concatenate(parts)

    def value_at_weights(self, alpha) -> float:
        return self.value_and_grad_weights(np.asarray(alpha, dtype=float))[0]


def _bfgs(fun, x0, jac=True):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return minimize(fun, x0, jac=jac, method="BFGS", options={"maxiter": MAX_ITER, "gtol": GTOL})


def minimize_ssv_over_weights(povm: AnyPovm, observable, state_or_record, partition: Optional[Partition] = None,
                              restarts: int = 1, rng: Optional[np.random.Generator] = None,
                              objective: Optional[WeightedSsv] = None):
    """Positive dual weights minimizing the SSV; returns ``(weights, ssv)``.

    Starts from uniform weights (the canonical duals) and ``restarts - 1``
    random log-weight vectors. ``weights`` are global and normalized to sum n.
    """
    obj = objective or WeightedSsv(povm, observable, state_or_record, partition)
    x0 = np.zeros(obj.n_params)
    best_x, best_val = x0, obj.value(x0)
    if not np.isfinite(best_val):
        raise ICFailureError("canonical frame superoperator is ill-conditioned")
    starts = [x0]
    for _ in range(max(restarts, 1) - 1):
        if rng is None:
            raise ValueError("random restarts need an rng")
        starts.append(rng.normal(0.0, 1.0, obj.n_params))
    for s in starts:
        res = _bfgs(obj.value_and_grad, s)
        val = obj.value(res.x)
        if val < best_val:
            best_x, best_val = res.x, val
    alpha = obj.weights(best_x)
    alpha = alpha * (alpha.size / alpha.sum())
    return alpha, float(best_val)


# --- dual-scheme SSVs for a fixed POVM ------------------------------------


def scheme_ssvs(povm: AnyPovm, observables: Sequence, rho, scheme: DualScheme, restarts=1, rng=None,
                return_weights=False):
    """Exact SSV of each observable under ``scheme``."""
    obs = [as_matrix(o) for o in observables]
    if scheme.kind == "free":
        if scheme.shared:
            obj = WeightedSsv(povm, obs, rho, scheme.partition)
            alpha, _ = minimize_ssv_over_weights(povm, obs, rho, scheme.partition, restarts, rng, obj)
            ssvs = [WeightedSsv(povm, [o], rho).value_at_weights(alpha) for o in obs]
            weights = [alpha] * len(obs)
        else:
            ssvs, weights = [], []
            for o in obs:
                alpha, v = minimize_ssv_over_weights(povm, [o], rho, scheme.partition, restarts, rng)
                ssvs.append(v)
                weights.append(alpha)
        return (ssvs, weights) if return_weights else ssvs
    alpha = fixed_scheme_weights(povm, rho, scheme)
    obj = WeightedSsv(povm, obs, rho)
    ssvs = [WeightedSsv.value_at_weights(_single(obj, i), alpha) for i in range(len(obs))]
    return (ssvs, [alpha] * len(obs)) if return_weights else ssvs


def _single(obj: WeightedSsv, i: int) -> WeightedSsv:
    clone = object.__new__(WeightedSsv)
    clone.__dict__.update(obj.__dict__)
    clone.omat = obj.omat[:, i:i + 1]
    clone.means = obj.means[i:i + 1]
    return clone


def fixed_scheme_weights(povm: AnyPovm, rho, scheme: DualScheme) -> np.ndarray:
    n = int(np.prod(povm.outcome_shape))
    if scheme.kind == "canonical":
        return np.ones(n)
    if scheme.kind == "average_optimal":
        glob = povm.materialize() if isinstance(povm, ProductPovm) else povm
        return 1 / glob.traces()
    if scheme.kind == "optimal":
        p = born_probabilities(povm, as_density_matrix(rho)).reshape(-1)
        return 1 / np.maximum(p, PROBABILITY_FLOOR)
    raise ValueError("free weights are not fixed")


# --- POVM parameter search -------------------------------------------------


@dataclass
class OptimizationResult:
    best_params: np.ndarray
    objective_value: float
    iterations: int
    converged: bool
    best_weights: list = field(default_factory=list)
    n_evaluations: int = 0


def central_difference_gradient(fun: Callable, x, step: float = FD_STEP) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (fun(xp) - fun(xm)) / (2 * h)
    return grad


def minimize_povm_params(class_id: str, objective: Callable, restarts: int = DEFAULT_RESTARTS,
                         rng: Optional[np.random.Generator] = None, n_qubits: int = 1,
                         gradient: Optional[Callable] = None, starts: Sequence = ()) -> OptimizationResult:
    """Multi-start BFGS over the unconstrained parameters of a POVM class.

    Starts: the class default point (classical shadows, or the SIC for
    dilations), any explicit ``starts``, then random points up to
    ``restarts`` in total. Objective values of ``inf``/``nan`` act as a barrier.
    """
    k = n_raw_params(class_id) * n_qubits
    evals = 0

    def safe(x):
        nonlocal evals
        evals += 1
        try:
            v = float(objective(x))
        except (ICFailureError, ValueError, np.linalg.LinAlgError):
            return np.inf
        return v if np.isfinite(v) else np.inf

    if k == 0:
        x = np.zeros(0)
        return OptimizationResult(x, safe(x), 0, True, n_evaluations=evals)

    grad = gradient or (lambda x: central_difference_gradient(safe, x))
    inits = [np.tile(default_raw(class_id), n_qubits)] + [np.asarray(s, dtype=float) for s in starts]
    while len(inits) < max(restarts, 1):
        if rng is None:
            raise ValueError("random restarts need an rng")
        inits.append(np.concatenate([random_raw(class_id, rng) for _ in range(n_qubits)]))

    best = None
    total_iter = 0
    for x0 in inits:
        f0 = safe(x0)
        if not np.isfinite(f0):
            continue

        def fun(x):
            v = safe(x)
            if not np.isfinite(v):
                return np.inf, np.zeros_like(x)
            return v, grad(x)

        res = _bfgs(fun, x0)
        total_iter += int(res.nit)
        val = safe(res.x)
        cand = (val, res.x, bool(res.success)) if val <= f0 else (f0, x0, False)
        if best is None or cand[0] < best[0]:
            best = cand
    if best is None:
        raise ValueError("objective is not finite at any starting point")
    return OptimizationResult(np.asarray(best[1]), float(best[0]), total_iter, best[2], n_evaluations=evals)


def _denominators(observables, rho):
    den = np.array([eigenbasis_lower_bound(o, rho) for o in observables])
    if den.sum() <= 1e-12:
        raise ValueError("state is (close to) an eigenstate of the observables; F undefined")
    return den


def cumulative_class_performance(class_id: str, observables: Sequence, rho, scheme: DualScheme,
                                 restarts: int = DEFAULT_RESTARTS, rng=None, inner_restarts: int = 1,
                                 starts: Sequence = ()) -> OptimizationResult:
    """Minimum over the class of ``sum_i SSV_i / sum_i (<O_i^2> - <O_i>^2)``.

    One POVM (per-qubit parameters) is shared by all observables; with free
    duals the weights are re-optimized per observable unless ``scheme.shared``.
    """
    obs = [as_matrix(o) for o in observables]
    rho = as_density_matrix(rho)
    n_qubits = int(round(np.log2(rho.shape[0])))
    den = _denominators(obs, rho).sum()

    def povm_at(raw):
        return class_product_povm(class_id, raw, n_qubits)

    if scheme.kind != "free":
        def objective(raw):
            return sum(scheme_ssvs(povm_at(raw), obs, rho, scheme)) / den
        gradient = None
    else:
        groups = [obs] if scheme.shared else [[o] for o in obs]
        cache = {}

        def inner(raw):
            key = np.asarray(raw).tobytes()
            if key not in cache:
                povm = povm_at(raw)
                out = []
                for grp in groups:
                    obj = WeightedSsv(povm, grp, rho, scheme.partition)
                    alpha, val = minimize_ssv_over_weights(povm, grp, rho, scheme.partition, inner_restarts,
                                                           rng, obj)
                    out.append((alpha, val))
                cache.clear()
                cache[key] = out
            return cache[key]

        def objective(raw):
            return sum(v for _, v in inner(raw)) / den

        def at_fixed_weights(raw, weights):
            try:
                povm = povm_at(raw)
            except ValueError:
                return np.inf
            total = 0.0
            for grp, alpha in zip(groups, weights):
                total += WeightedSsv(povm, grp, rho).value_at_weights(alpha)
            return total / den

        def gradient(raw):
            weights = [a for a, _ in inner(raw)]
            return central_difference_gradient(lambda x: at_fixed_weights(x, weights), raw)

    res = minimize_povm_params(class_id, objective, restarts, rng, n_qubits, gradient, starts)
    povm = povm_at(res.best_params)
    _, weights = scheme_ssvs(povm, obs, rho, scheme, inner_restarts, rng, return_weights=True)
    res.best_weights = weights
    return res


def class_performance(class_id: str, observable, rho, scheme: DualScheme, restarts: int = DEFAULT_RESTARTS,
                      rng=None, inner_restarts: int = 1, starts: Sequence = ()) -> OptimizationResult:
    """``min SSV / (<O^2> - <O>^2)`` over the POVM class (and free dual weights)."""
    return cumulative_class_performance(class_id, [observable], rho, scheme, restarts, rng, inner_restarts, starts)


def fixed_povm_performance(povm: AnyPovm, observables, rho, scheme: DualScheme, rng=None) -> float:
    obs = [as_matrix(o) for o in observables]
    den = _denominators(obs, rho).sum()
    return sum(scheme_ssvs(povm, obs, rho, scheme, 1, rng)) / den
