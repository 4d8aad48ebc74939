"""Contractions against tensor products of small per-group operators.

A partition of ``N`` qubits into groups (tuples of qubit indices) together
with one operator table per group defines the family of global operators
``X_k = (x)_g X^g_{k_g}``. The helpers here evaluate ``Tr[A X_k]`` for every
multi-index ``k`` at once, and embed group operators into the full register,
without ever forming the ``2^N x 2^N`` operators ``X_k``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


def _check_groups(groups, n_qubits):
    flat = sorted(q for g in groups for q in g)
    if flat != list(range(n_qubits)):
        raise ValueError(f"groups {groups} do not partition {n_qubits} qubits")


def traces_against_products(op, groups: Sequence[Sequence[int]], tables: Sequence[np.ndarray],
                            outcome_shape: Sequence[int]) -> np.ndarray:
    """``Tr[op X_k]`` for all ``k``; returned array has shape ``outcome_shape``.

    ``tables[g]`` has shape ``(prod(outcome_shape[q] for q in groups[g]), 2^m, 2^m)``,
    its leading index being the row-major multi-index over the group's qubits
    in the order they appear in ``groups[g]``.
    """
    n = len(outcome_shape)
    _check_groups(groups, n)
    op = np.asarray(op, dtype=complex)
    perm = []
    for g in groups:
        perm.extend(g)
        perm.extend(n + q for q in g)
    t = op.reshape((2,) * (2 * n)).transpose(perm).reshape([4 ** len(g) for g in groups])
    for g, tab in zip(groups, tables):
        tab = np.asarray(tab, dtype=complex)
        # Tr[A X] = sum_ij A_ij X_ji
        flat = tab.transpose(0, 2, 1).reshape(tab.shape[0], -1)
        t = np.tensordot(t, flat, axes=([0], [1]))
    order = [q for g in groups for q in g]
    t = t.reshape([outcome_shape[q] for q in order])
    return t.transpose(np.argsort(order))


def embed_product(ops_by_group: Sequence[np.ndarray], groups: Sequence[Sequence[int]], n_qubits: int) -> np.ndarray:
    """Global operator ``(x)_g ops_by_group[g]`` with qubits restored to natural order."""
    _check_groups(groups, n_qubits)
    full = ops_by_group[0]
    for o in ops_by_group[1:]:
        full = np.kron(full, o)
    order = [q for g in groups for q in g]
    inv = list(np.argsort(order))
    n = n_qubits
    t = full.reshape((2,) * (2 * n)).transpose(inv + [n + i for i in inv])
    return t.reshape(2 ** n, 2 ** n)


def group_index(k: Sequence[int], group: Sequence[int], outcome_shape: Sequence[int]) -> int:
    """Row-major index of the sub-tuple ``k[group]``."""
    return int(np.ravel_multi_index([k[q] for q in group], [outcome_shape[q] for q in group]))
