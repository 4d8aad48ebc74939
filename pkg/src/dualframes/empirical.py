"""Empirical-frequency dual frames.

Outcome frequencies (optionally biased toward the maximally mixed state) are
approximated by a product of marginals over a partition of the qubits. The
inverse of that product is used as the weight vector of a weighted frame
superoperator, which yields product-form duals with one factor per group.
Partitions are chosen by maximizing the pairwise mutual information kept
inside groups.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterator, Sequence

import numpy as np

from .constants import ATOL_SPECTRAL
from .errors import ConfigError
from .frames import DualFrame, product_weighted_duals
from .povm import AnyPovm, Povm, ProductPovm
from .records import OutcomeRecord


@dataclass(frozen=True)
class Partition:
    """Disjoint groups of (0-based) qubit indices covering ``0..N-1``."""

    groups: tuple
    m_max: int = None

    def __post_init__(self):
        groups = tuple(tuple(sorted(int(q) for q in g)) for g in self.groups)
        if not groups or any(not g for g in groups):
            raise ValueError("partition groups must be non-empty")
        groups = tuple(sorted(groups, key=lambda g: g[0]))
        flat = sorted(q for g in groups for q in g)
        if flat != list(range(len(flat))):
            raise ValueError(f"groups {groups} are not a partition of 0..N-1")
        m_max = self.m_max if self.m_max is not None else max(len(g) for g in groups)
        if max(len(g) for g in groups) > m_max:
            raise ValueError(f"group larger than m_max = {m_max}")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "m_max", int(m_max))

    @property
    def n_qubits(self) -> int:
        return sum(len(g) for g in self.groups)

    @classmethod
    def singletons(cls, n_qubits: int) -> "Partition":
        return cls(tuple((q,) for q in range(n_qubits)), 1)

    @classmethod
    def whole(cls, n_qubits: int) -> "Partition":
        return cls((tuple(range(n_qubits)),), n_qubits)

    def shape(self) -> tuple:
        return tuple(sorted((len(g) for g in self.groups), reverse=True))


@dataclass(frozen=True, eq=False)
class FrequencyModel:
    """Per-group outcome tables whose product models the global distribution."""

    partition: Partition
    tables: tuple
    outcome_shape: tuple
    s_bias: float = 0.0
    shots_used: int = 0

    def __post_init__(self):
        for g, t in zip(self.partition.groups, self.tables):
            size = int(np.prod([self.outcome_shape[q] for q in g]))
            if np.asarray(t).shape != (size,):
                raise ValueError(f"table for group {g} must have {size} entries")
            if np.min(t) < -1e-12 or abs(np.sum(t) - 1) > ATOL_SPECTRAL:
                raise ValueError(f"table for group {g} is not a probability distribution")

    def probability(self, k) -> float:
        out = 1.0
        for g, t in zip(self.partition.groups, self.tables):
            out *= t[np.ravel_multi_index([k[q] for q in g], [self.outcome_shape[q] for q in g])]
        return float(out)

    def distribution(self) -> np.ndarray:
        """Dense product distribution over all outcomes."""
        groups = self.partition.groups
        t = np.asarray(self.tables[0])
        for tab in self.tables[1:]:
            t = np.multiply.outer(t, tab)
        order = [q for g in groups for q in g]
        t = t.reshape([self.outcome_shape[q] for q in order])
        return t.transpose(np.argsort(order))

    def to_json(self) -> dict:
        return {
            "partition": [list(g) for g in self.partition.groups],
            "m_max": self.partition.m_max,
            "s_bias": float(self.s_bias),
            "shots_used": int(self.shots_used),
            "outcome_shape": list(self.outcome_shape),
            "tables": [np.asarray(t).tolist() for t in self.tables],
        }

    @classmethod
    def from_json(cls, obj) -> "FrequencyModel":
        part = Partition(tuple(tuple(g) for g in obj["partition"]), obj.get("m_max"))
        return cls(part, tuple(np.asarray(t, dtype=float) for t in obj["tables"]),
                   tuple(obj["outcome_shape"]), obj.get("s_bias", 0.0), obj.get("shots_used", 0))


def _factors(povm: AnyPovm):
    return povm.factors if isinstance(povm, ProductPovm) else (povm,)


def _mixed_state_probabilities(povm: AnyPovm, group) -> np.ndarray:
    """``Tr[M_k / d]`` for the group's outcomes (the bias prior)."""
    factors = _factors(povm)
    t = np.ones(1)
    for q in group:
        t = np.multiply.outer(t, factors[q].traces() / 2).ravel()
    return t


def empirical_frequencies(record: OutcomeRecord) -> dict:
    """Observed outcome tuples mapped to ``#k / S``."""
    if record.shots == 0:
        raise ValueError("empty record")
    keys, counts = np.unique(record.outcomes, axis=0, return_counts=True)
    return {tuple(int(x) for x in k): c / record.shots for k, c in zip(keys, counts)}


def frequency_table(record: OutcomeRecord) -> np.ndarray:
    """Dense ``#k / S`` table with the record's outcome shape."""
    if record.shots == 0:
        raise ValueError("empty record")
    counts = np.bincount(record.flat_indices(), minlength=int(np.prod(record.outcome_shape)))
    return (counts / record.shots).reshape(record.outcome_shape)


def group_counts(record: OutcomeRecord, group: Sequence[int]) -> np.ndarray:
    shape = [record.outcome_shape[q] for q in group]
    if record.shots == 0:
        return np.zeros(int(np.prod(shape)))
    idx = np.ravel_multi_index(tuple(record.outcomes[:, list(group)].T), shape)
    return np.bincount(idx, minlength=int(np.prod(shape))).astype(float)


def biased_frequencies(record: OutcomeRecord, povm: AnyPovm, s_bias: float,
                       require_positive: bool = True) -> np.ndarray:
    """``(#k + Tr[M_k / d] S_bias) / (S + S_bias)`` over all outcomes."""
    if s_bias < 0:
        raise ValueError("s_bias must be non-negative")
    group = tuple(range(len(povm.outcome_shape)))
    counts = group_counts(record, group)
    total = record.shots + s_bias
    if total == 0:
        raise ValueError("no shots and no bias")
    f = (counts + _mixed_state_probabilities(povm, group) * s_bias) / total
    if require_positive and np.any(f <= 0):
        raise ValueError("unobserved outcome with zero bias; pass s_bias > 0")
    return f.reshape(povm.outcome_shape)


def marginal_table(table: np.ndarray, group: Sequence[int]) -> np.ndarray:
    """Marginal of a dense table onto ``group`` (axes in group order), flattened."""
    others = tuple(q for q in range(table.ndim) if q not in group)
    m = table.sum(axis=others) if others else table
    kept = sorted(group)
    m = np.moveaxis(m, [kept.index(q) for q in group], list(range(len(group))))
    return m.reshape(-1)


def marginalize(frequencies: np.ndarray, partition: Partition, s_bias: float = 0.0, shots: int = 0) -> FrequencyModel:
    """Exact per-group marginals of a dense global distribution."""
    table = np.asarray(frequencies, dtype=float)
    if partition.n_qubits != table.ndim:
        raise ValueError("partition does not match the table's number of qubits")
    tables = tuple(marginal_table(table, g) for g in partition.groups)
    return FrequencyModel(partition, tables, table.shape, s_bias, shots)


def default_s_bias(partition: Partition, outcome_shape) -> float:
    """Degrees of freedom of the marginal model: ``sum_g (n^|g| - 1)``."""
    return float(sum(np.prod([outcome_shape[q] for q in g]) - 1 for g in partition.groups))


def frequency_model(record: OutcomeRecord, povm: AnyPovm, partition: Partition, s_bias="auto") -> FrequencyModel:
    """Biased marginal model built from per-group counts.

    The bias is applied per group, ``(#k_g + Tr[M_g / d_g] S_bias) / (S + S_bias)``;
    for product priors this equals marginalizing the globally biased table.
    """
    if s_bias == "auto":
        s_bias = default_s_bias(partition, povm.outcome_shape)
    s_bias = float(s_bias)
    total = record.shots + s_bias
    if total <= 0:
        raise ValueError("no shots and no bias")
    tables = []
    for g in partition.groups:
        c = group_counts(record, g)
        tables.append((c + _mixed_state_probabilities(povm, g) * s_bias) / total)
    return FrequencyModel(partition, tuple(tables), tuple(povm.outcome_shape), s_bias, record.shots)


def _pair_joint(freq, i, j):
    if isinstance(freq, OutcomeRecord):
        c = group_counts(freq, (i, j))
        return (c / c.sum()).reshape(freq.outcome_shape[i], freq.outcome_shape[j])
    table = np.asarray(freq, dtype=float)
    return marginal_table(table, (i, j)).reshape(table.shape[i], table.shape[j])


def mutual_information(frequencies, i: int, j: int) -> float:
    """Empirical mutual information (natural log) between the outcomes of qubits ``i`` and ``j``.

    ``frequencies`` is a dense table over all outcomes or an OutcomeRecord.
    """
    if i == j:
        raise ValueError("mutual information needs two distinct qubits")
    joint = _pair_joint(frequencies, i, j)
    pi, pj = joint.sum(axis=1), joint.sum(axis=0)
    prod = np.outer(pi, pj)
    mask = joint > 0
    val = float(np.sum(joint[mask] * np.log(joint[mask] / prod[mask])))
    return max(val, 0.0) if val > -1e-12 else val


def mutual_information_matrix(frequencies) -> np.ndarray:
    n = len(frequencies.outcome_shape) if isinstance(frequencies, OutcomeRecord) else np.ndim(frequencies)
    mi = np.zeros((n, n))
    for i, j in combinations(range(n), 2):
        mi[i, j] = mi[j, i] = mutual_information(frequencies, i, j)
    return mi


def partition_cost(partition: Partition, mi: np.ndarray) -> float:
    """Sum of ``I(j, k)`` over ordered pairs ``j != k`` sharing a group."""
    mi = np.asarray(mi)
    total = 0.0
    for g in partition.groups:
        for a in g:
            for b in g:
                if a != b:
                    total += mi[a, b]
    return float(total)


def set_partitions(n: int, m_max: int) -> Iterator[tuple]:
    """All partitions of ``0..n-1`` with group sizes at most ``m_max``."""

    def rec(i, groups):
        if i == n:
            yield tuple(tuple(g) for g in groups)
            return
        for g in groups:
            if len(g) < m_max:
                g.append(i)
                yield from rec(i + 1, groups)
                g.pop()
        groups.append([i])
        yield from rec(i + 1, groups)
        groups.pop()

    yield from rec(0, [])


def local_sizes(n: int, m: int) -> tuple:
    """Group sizes of an ``m``-local partition of ``n`` qubits: ``(m, ..., m, n mod m)``."""
    m = min(m, n)
    return tuple(sorted([m] * (n // m) + ([n % m] if n % m else []), reverse=True))


def best_partition(mi: np.ndarray, m_max: int, mode: str = "exhaustive", exact_sizes: bool = False) -> Partition:
    """Partition maximizing :func:`partition_cost` under a group-size cap.

    ``exhaustive`` enumerates all partitions (N <= 8); ``greedy`` merges
    groups along pairs of decreasing mutual information whenever the merged
    group fits, ties going to the lower qubit indices. With ``exact_sizes``
    (exhaustive only) the group sizes are fixed to :func:`local_sizes`, e.g.
    ``(3, 1)`` for three-local models of four qubits.
    """
    mi = np.asarray(mi, dtype=float)
    n = mi.shape[0]
    if m_max < 1:
        raise ValueError("m_max must be at least 1")
    m_max = min(m_max, n)
    if mode == "exhaustive":
        if n > 8:
            raise ValueError("exhaustive partition search limited to 8 qubits")
        sizes = local_sizes(n, m_max) if exact_sizes else None
        best, best_cost = None, -np.inf
        for groups in set_partitions(n, m_max):
            if sizes is not None and tuple(sorted(map(len, groups), reverse=True)) != sizes:
                continue
            part = Partition(groups, m_max)
            cost = partition_cost(part, mi)
            if cost > best_cost + 1e-15:
                best, best_cost = part, cost
        return best
    if mode != "greedy":
        raise ValueError(f"unknown mode {mode!r}")
    if exact_sizes:
        raise ValueError("exact group sizes need the exhaustive search")
    owner = list(range(n))
    members = {q: [q] for q in range(n)}
    pairs = sorted(combinations(range(n), 2), key=lambda p: (-mi[p], p))
    for i, j in pairs:
        a, b = owner[i], owner[j]
        if a == b or len(members[a]) + len(members[b]) > m_max:
            continue
        members[a].extend(members.pop(b))
        for q in members[a]:
            owner[q] = a
    return Partition(tuple(tuple(g) for g in members.values()), m_max)


def empirical_dual_frame(povm: AnyPovm, model: FrequencyModel) -> DualFrame:
    """Product-form duals with weights ``1 / model`` factorized per group."""
    if tuple(model.outcome_shape) != tuple(povm.outcome_shape):
        raise ValueError("model and POVM have different outcome shapes")
    if any(np.min(t) <= 0 for t in model.tables):
        raise ValueError("model has zero-probability outcomes; use s_bias > 0")
    weights = [1 / np.asarray(t) for t in model.tables]
    pp = povm if isinstance(povm, ProductPovm) else ProductPovm((povm,))
    frame = product_weighted_duals(pp, model.partition.groups, weights, provenance="empirical")
    if isinstance(povm, Povm):
        return DualFrame("empirical", povm.outcome_shape, duals=frame.group_duals[0],
                         weights=frame.weights[0])
    return frame


def resolve_s_bias(value, partition: Partition, outcome_shape) -> float:
    if value == "auto" or value is None:
        return default_s_bias(partition, outcome_shape)
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid s_bias {value!r}") from None
    if value < 0:
        raise ConfigError("s_bias must be non-negative")
    return value
