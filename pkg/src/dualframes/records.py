"""Shot records and their JSON-lines file format.

A shot file starts with a header object and then holds one JSON array of
per-qubit outcome indices per line::

    {"povm_hash": "<sha256 of the POVM description>", "n_qubits": 2, "shots": 3}
    [4, 0]
    [5, 5]
    [0, 2]
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ShotFileError


@dataclass(frozen=True, eq=False)
class OutcomeRecord:
    """``S`` outcomes as an ``(S, N)`` integer array of per-qubit indices."""

    outcomes: np.ndarray
    outcome_shape: tuple
    povm_ref: str = ""

    def __post_init__(self):
        out = np.asarray(self.outcomes, dtype=np.int64)
        if out.ndim == 1:
            out = out[:, None]
        shape = tuple(int(s) for s in self.outcome_shape)
        if out.ndim != 2 or out.shape[1] != len(shape):
            raise ValueError(f"outcomes of shape {out.shape} do not match outcome shape {shape}")
        if out.size and (out.min() < 0 or np.any(out.max(axis=0) >= np.array(shape))):
            raise ValueError("outcome index out of range")
        out.setflags(write=False)
        object.__setattr__(self, "outcomes", out)
        object.__setattr__(self, "outcome_shape", shape)

    @property
    def shots(self) -> int:
        return self.outcomes.shape[0]

    @property
    def n_qubits(self) -> int:
        return len(self.outcome_shape)

    def flat_indices(self) -> np.ndarray:
        return np.ravel_multi_index(tuple(self.outcomes.T), self.outcome_shape)

    def head(self, shots: int) -> "OutcomeRecord":
        return OutcomeRecord(self.outcomes[:shots], self.outcome_shape, self.povm_ref)


def write_shot_file(path, record: OutcomeRecord, povm_hash: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        header = {"povm_hash": povm_hash, "n_qubits": record.n_qubits, "shots": record.shots}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for row in record.outcomes:
            fh.write("[" + ", ".join(str(int(k)) for k in row) + "]\n")


def read_shot_header(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline()
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as exc:
        raise ShotFileError(f"header is not valid JSON ({exc.msg})", line=1) from None
    if not isinstance(header, dict) or "povm_hash" not in header or "n_qubits" not in header:
        raise ShotFileError("header must contain 'povm_hash' and 'n_qubits'", line=1)
    return header


def read_shot_file(path, outcome_shape) -> tuple[OutcomeRecord, dict]:
    """Parse a shot file; errors name the offending line (1-based)."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise ShotFileError("missing header", line=1)
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise ShotFileError(f"header is not valid JSON ({exc.msg})", line=1) from None
        if not isinstance(header, dict) or "povm_hash" not in header or "n_qubits" not in header:
            raise ShotFileError("header must contain 'povm_hash' and 'n_qubits'", line=1)
        n = int(header["n_qubits"])
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ShotFileError(f"malformed shot ({exc.msg})", line=lineno) from None
            if not isinstance(row, list) or len(row) != n or not all(isinstance(k, int) for k in row):
                raise ShotFileError(f"expected a list of {n} integers", line=lineno)
            if any(k < 0 or k >= s for k, s in zip(row, outcome_shape)):
                raise ShotFileError("outcome index out of range", line=lineno)
            rows.append(row)
    if not rows:
        raise ShotFileError("no shots in file")
    if len(outcome_shape) != n:
        raise ShotFileError(f"file has {n} qubits, POVM has {len(outcome_shape)}")
    return OutcomeRecord(np.array(rows), tuple(outcome_shape), header["povm_hash"]), header
