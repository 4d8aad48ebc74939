"""Benchmark experiments: class performance, marginal scaling, shot convergence.

Every experiment is a loop over repetitions. Repetition ``r`` draws all of
its randomness from ``make_rng(seed, (r, ...))`` so rows do not depend on the
number of workers or on which other rows were requested. Rows are written as
CSV and summarized (5/25/50/75/95 % quantiles per distribution) in a JSON
file next to the CSV.
"""

from __future__ import annotations

import csv
import io
import json
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from itertools import groupby
from typing import Optional

import numpy as np

from .empirical import (Partition, best_partition, empirical_dual_frame, frequency_model, marginalize,
                        mutual_information_matrix, resolve_s_bias)
from .errors import ConfigError, ICFailureError
from .estimation import (as_matrix, estimate_expectation, exact_ssv, observable_from_json, omega_coefficients,
                         sample_ssv)
from .frames import average_optimal_duals, canonical_duals, optimal_duals
from .operators import haar_random_state, make_rng, random_observable
from .optimizer import DualScheme, cumulative_class_performance
from .povm import (CLASS_IDS, ProductPovm, born_probabilities, canonical_class_id, classical_shadows_povm,
                   description_hash, is_informationally_complete, povm_from_description, sample_outcomes)
from .records import OutcomeRecord, read_shot_file, read_shot_header

EXPERIMENTS = ("class_performance", "marginal_scaling", "shot_convergence", "estimate")

QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


@dataclass
class ExperimentConfig:
    """Settings of one benchmark run (loaded from JSON, overridable on the CLI).

    ``runs`` optionally lists explicit ``[povm_class, dual_scheme]`` pairs for
    class-performance runs instead of the full ``povm_classes x dual_schemes`` grid.
    """

    experiment: str = "class_performance"
    n_qubits: int = 1
    n_repetitions: int = 50
    n_observables: int = 1
    shot_grid: list = field(default_factory=lambda: [0, 100, 1000, 10000, 100000])
    s_bias: list = field(default_factory=lambda: [128.0, 1296.0])
    povm_classes: list = field(default_factory=lambda: ["classical_shadows", "lbcs", "mub", "general_pm",
                                                        "dilation4"])
    dual_schemes: list = field(default_factory=lambda: ["canonical", "avg-optimal", "optimal", "free-local"])
    runs: Optional[list] = None
    locality: list = field(default_factory=lambda: [1, 2, 3])
    restarts: int = 2
    inner_restarts: int = 1
    partition_mode: str = "exhaustive"
    seed: int = 0
    output_path: str = "results.csv"
    workers: int = 1
    timing: bool = False

    def __post_init__(self):
        self.experiment = str(self.experiment).replace("-", "_")
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        for name in ("n_qubits", "n_repetitions", "n_observables", "restarts", "inner_restarts", "workers"):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, (int, np.integer)) or val < 1:
                raise ConfigError(f"{name} must be a positive integer, got {val!r}")
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool) \
                or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.n_qubits > 6:
            raise ConfigError("exact-probability experiments are limited to 6 qubits")
        grid = list(self.shot_grid)
        if any(not isinstance(s, (int, np.integer)) or s < 0 for s in grid) or grid != sorted(grid):
            raise ConfigError("shot_grid must be ascending non-negative integers")
        if not isinstance(self.s_bias, (list, tuple)):
            self.s_bias = [self.s_bias]
        for b in self.s_bias:
            if b != "auto" and (not isinstance(b, (int, float)) or b < 0):
                raise ConfigError(f"invalid s_bias {b!r}")
        try:
            self.povm_classes = [canonical_class_id(c) for c in self.povm_classes]
            if self.runs is not None:
                self.runs = [[canonical_class_id(c), str(s)] for c, s in self.runs]
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        for _, scheme in self.class_runs():
            try:
                DualScheme.parse(scheme, self.n_qubits)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if self.partition_mode not in ("exhaustive", "greedy"):
            raise ConfigError("partition_mode must be 'exhaustive' or 'greedy'")

    def class_runs(self) -> list:
        if self.runs is not None:
            return [tuple(r) for r in self.runs]
        return [(c, s) for c in self.povm_classes for s in self.dual_schemes]

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg}, line {exc.lineno})") from None
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        obj.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(obj)


@dataclass
class ResultRow:
    """One CSV line. ``shots`` and ``s_bias`` are empty where they do not apply."""

    experiment: str
    repetition: int
    n_qubits: int
    povm_class: str
    dual_scheme: str
    observable_index: int
    shots: object
    s_bias: object
    metric: str
    value: float
    wall_time_ms: float
    seed: int


COLUMNS = tuple(f.name for f in fields(ResultRow))


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        d = asdict(row)
        writer.writerow([_fmt(d[c]) for c in COLUMNS])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def summarize(rows) -> list:
    """Quantiles of ``value`` per (povm class, dual scheme, metric, N, S, S_bias)."""
    def key(r):
        return (r.experiment, r.povm_class, r.dual_scheme, r.metric, r.n_qubits,
                -1 if r.shots is None else r.shots, -1.0 if r.s_bias is None else float(r.s_bias),
                r.observable_index)
    out = []
    for k, grp in groupby(sorted(rows, key=key), key=key):
        vals = np.array([r.value for r in grp])
        out.append({
            "experiment": k[0], "povm_class": k[1], "dual_scheme": k[2], "metric": k[3], "n_qubits": k[4],
            "shots": None if k[5] == -1 else k[5], "s_bias": None if k[6] == -1.0 else k[6],
            "observable_index": k[7], "count": int(vals.size),
            "mean": float(vals.mean()), "std": float(vals.std()),
            "quantiles": {f"{int(q * 100)}": float(np.quantile(vals, q)) for q in QUANTILES},
        })
    return out


def write_outputs(rows, path) -> str:
    """Write the CSV to ``path`` and the quantile summary to ``<path stem>.summary.json``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(rows_to_csv(rows))
    summary_path = str(path)
    summary_path = (summary_path[:-4] if summary_path.endswith(".csv") else summary_path) + ".summary.json"
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summarize(rows), fh, sort_keys=True, indent=1)
        fh.write("\n")
    return summary_path


class _Clock:
    def __init__(self, enabled):
        self.enabled = enabled
        self.t = time.perf_counter()

    def lap(self) -> float:
        if not self.enabled:
            return 0.0
        now = time.perf_counter()
        ms, self.t = round((now - self.t) * 1000, 3), now
        return ms


def _run_repetitions(config: ExperimentConfig, task):
    reps = range(config.n_repetitions)
    if config.workers == 1:
        chunks = [task(config, r) for r in reps]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(task, [config] * len(reps), reps))
    return [row for chunk in chunks for row in chunk]


# --- class performance -------------------------------------------------------


def _class_performance_rep(config: ExperimentConfig, rep: int):
    n = config.n_qubits
    rng = make_rng(config.seed, (rep,))
    rho = haar_random_state(2 ** n, rng)
    observables = [random_observable(2 ** n, rng) for _ in range(config.n_observables)]
    metric = "F" if config.n_observables == 1 else "F_C"
    rows, fixed_optima = [], {}
    clock = _Clock(config.timing)
    for i, (cid, scheme_text) in enumerate(config.class_runs()):
        scheme = DualScheme.parse(scheme_text, n)
        run_rng = make_rng(config.seed, (rep, 1 + CLASS_IDS.index(cid), zlib.crc32(scheme_text.encode())))
        starts = fixed_optima.get(cid, []) if scheme.kind == "free" else []
        res = cumulative_class_performance(cid, observables, rho, scheme, config.restarts, run_rng,
                                           config.inner_restarts, starts)
        if scheme.kind != "free":
            fixed_optima.setdefault(cid, []).append(res.best_params)
        rows.append(ResultRow("class_performance", rep, n, cid, scheme.name, -1, None, None, metric,
                              float(res.objective_value), clock.lap(), config.seed))
    return rows


def run_class_performance(config: ExperimentConfig):
    """Class performance F (one observable) or F_C (several) per repetition."""
    if config.n_qubits not in (1, 2):
        raise ConfigError("class performance runs on 1 or 2 qubits")
    return _run_repetitions(config, _class_performance_rep)


# --- marginal scaling --------------------------------------------------------


def _m_local(mi, m, config):
    exhaustive = config.partition_mode == "exhaustive"
    return best_partition(mi, m, config.partition_mode, exact_sizes=exhaustive)


def _lexicographic_partition(n: int, m: int) -> Partition:
    return Partition(tuple(tuple(range(i, min(i + m, n))) for i in range(0, n, m)), m)


def _marginal_scaling_rep(config: ExperimentConfig, rep: int):
    rows = []
    clock = _Clock(config.timing)
    for n in range(1, config.n_qubits + 1):
        rng = make_rng(config.seed, (rep, n))
        rho = haar_random_state(2 ** n, rng)
        obs = random_observable(2 ** n, rng)
        povm = classical_shadows_povm() if n == 1 else ProductPovm((classical_shadows_povm(),) * n)
        p = born_probabilities(povm, rho)
        canonical = exact_ssv(povm, canonical_duals(povm), obs, rho)
        rows.append(ResultRow("marginal_scaling", rep, n, "classical_shadows", "canonical", 0, None, None,
                              "ssv", canonical, clock.lap(), config.seed))
        mi = mutual_information_matrix(p) if n > 1 else np.zeros((1, 1))
        schemes = []
        for m in sorted(set(config.locality)):
            if m < n or (m == 1 and n == 1):
                part = Partition.singletons(1) if n == 1 else _m_local(mi, m, config)
                schemes.append((f"{m}-local", part))
        for name, part in schemes:
            duals = empirical_dual_frame(povm, marginalize(p, part))
            val = exact_ssv(povm, duals, obs, rho)
            rows.append(ResultRow("marginal_scaling", rep, n, "classical_shadows", name, 0, None, None,
                                  "ssv", val, clock.lap(), config.seed))
            rows.append(ResultRow("marginal_scaling", rep, n, "classical_shadows", name, 0, None, None,
                                  "ratio", val / canonical, 0.0, config.seed))
        val = exact_ssv(povm, optimal_duals(povm, rho), obs, rho)
        rows.append(ResultRow("marginal_scaling", rep, n, "classical_shadows", "global", 0, None, None,
                              "ssv", val, clock.lap(), config.seed))
        rows.append(ResultRow("marginal_scaling", rep, n, "classical_shadows", "global", 0, None, None,
                              "ratio", val / canonical, 0.0, config.seed))
    return rows


def run_marginal_scaling(config: ExperimentConfig):
    """Exact SSV of marginal-model duals relative to canonical duals, N = 1..n_qubits."""
    if config.n_qubits > 4:
        raise ConfigError("marginal scaling runs on at most 4 qubits")
    return _run_repetitions(config, _marginal_scaling_rep)


# --- shot convergence --------------------------------------------------------


def _shot_convergence_instance(config: ExperimentConfig):
    n = config.n_qubits
    rng = make_rng(config.seed, (0,))
    return haar_random_state(2 ** n, rng), random_observable(2 ** n, rng)


def _shot_convergence_rep(config: ExperimentConfig, rep: int):
    n = config.n_qubits
    rho, obs = _shot_convergence_instance(config)
    rng = make_rng(config.seed, (1, rep))
    povm = classical_shadows_povm() if n == 1 else ProductPovm((classical_shadows_povm(),) * n)
    clock = _Clock(config.timing)
    shots_max = max(config.shot_grid)
    full = sample_outcomes(povm, rho, shots_max, rng) if shots_max else None
    refs = {"canonical": exact_ssv(povm, canonical_duals(povm), obs, rho),
            "avg-optimal": exact_ssv(povm, average_optimal_duals(povm), obs, rho),
            "optimal": exact_ssv(povm, optimal_duals(povm, rho), obs, rho)}
    rows = []
    for name, val in refs.items():
        rows.append(ResultRow("shot_convergence", rep, n, "classical_shadows", name, 0, None, None, "ssv",
                              val, clock.lap(), config.seed))
    localities = sorted({m for m in config.locality if m < n}) + [n]
    for shots in config.shot_grid:
        if full is not None:
            record = full.head(shots)
        else:
            record = OutcomeRecord(np.zeros((0, n), int), povm.outcome_shape)
        mi = mutual_information_matrix(record) if shots >= 1 and n > 1 else None
        for m in localities:
            if m == n:
                part, name = Partition.whole(n), "global"
            elif mi is None:
                part, name = _lexicographic_partition(n, m), f"{m}-local"
            else:
                part, name = _m_local(mi, m, config), f"{m}-local"
            for bias in config.s_bias:
                s_bias = resolve_s_bias(bias, part, povm.outcome_shape)
                model = frequency_model(record, povm, part, s_bias)
                val = exact_ssv(povm, empirical_dual_frame(povm, model), obs, rho)
                rows.append(ResultRow("shot_convergence", rep, n, "classical_shadows", name, 0, shots, s_bias,
                                      "ssv", val, clock.lap(), config.seed))
    return rows


def run_shot_convergence(config: ExperimentConfig):
    """True SSV of empirical-frequency duals as the number of shots grows.

    One random (state, observable) instance is drawn from the seed; the
    repetitions resample the shots from that instance.
    """
    if config.n_qubits > 4:
        raise ConfigError("shot convergence runs on at most 4 qubits")
    return _run_repetitions(config, _shot_convergence_rep)


RUNNERS = {
    "class_performance": run_class_performance,
    "marginal_scaling": run_marginal_scaling,
    "shot_convergence": run_shot_convergence,
}


# --- post-processing shot files -------------------------------------------------


def parse_dual_flag(text: str):
    """``canonical | avg-optimal | empirical:<m>[:<bias>]`` -> (kind, m, bias)."""
    parts = text.split(":")
    kind = parts[0].lower().replace("_", "-")
    if kind in ("canonical", "avg-optimal", "average-optimal") and len(parts) == 1:
        return ("canonical" if kind == "canonical" else "avg-optimal"), None, None
    if kind == "empirical" and len(parts) in (2, 3):
        try:
            m = int(parts[1])
        except ValueError:
            raise ConfigError(f"invalid locality in {text!r}") from None
        if m < 1:
            raise ConfigError("locality must be positive")
        bias = "auto" if len(parts) == 2 else parts[2]
        return "empirical", m, bias
    raise ConfigError(f"unknown dual scheme {text!r}")


def _load_json(path, what):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{what} file {path}: invalid JSON ({exc.msg}, line {exc.lineno})") from None


def estimate_from_files(shot_file, povm_file, observable_file, duals: str = "canonical") -> dict:
    """Expectation estimate, sample SSV and standard error from recorded shots."""
    kind, m, bias = parse_dual_flag(duals)
    desc = _load_json(povm_file, "POVM")
    try:
        povm = povm_from_description(desc)
        observable = observable_from_json(_load_json(observable_file, "observable"))
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from None
    if read_shot_header(shot_file)["povm_hash"] != description_hash(desc):
        raise ConfigError("shot file was recorded with a different POVM (hash mismatch)")
    record, _ = read_shot_file(shot_file, povm.outcome_shape)
    ok, rank = is_informationally_complete(povm)
    if not ok:
        raise ICFailureError(f"POVM is not informationally complete (rank {rank})")
    n = record.n_qubits
    if kind == "canonical":
        frame = canonical_duals(povm)
    elif kind == "avg-optimal":
        frame = average_optimal_duals(povm)
    else:
        m = min(m, n)
        if m == n:
            part = Partition.whole(n)
        else:
            mode = "exhaustive" if n <= 8 else "greedy"
            mi = mutual_information_matrix(record)
            part = best_partition(mi, m, mode, exact_sizes=mode == "exhaustive")
        frame = empirical_dual_frame(povm, frequency_model(record, povm, part,
                                                           resolve_s_bias(bias, part, povm.outcome_shape)))
    if not hasattr(observable, "terms"):
        observable = as_matrix(observable)
        if observable.shape[0] != 2 ** n:
            raise ConfigError("observable dimension does not match the shot file")
    omega = omega_coefficients(observable, frame)
    est = estimate_expectation(record, omega)
    ssv = sample_ssv(record, omega) if record.shots > 1 else 0.0
    out = {"estimate": est, "sample_ssv": ssv, "std_error": float(np.sqrt(ssv / record.shots)),
           "duals_provenance": frame.provenance, "shots": record.shots}
    if frame.groups is not None:
        out["partition"] = [list(g) for g in frame.groups]
    return out
