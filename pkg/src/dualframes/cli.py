"""``bench`` command line.

Exit codes: 0 success, 2 configuration error, 3 numerical failure
(IC failure or ill-conditioning), 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .bench import RUNNERS, ExperimentConfig, estimate_from_files, write_outputs
from .errors import ConfigError, ICFailureError, ShotFileError
from .operators import check_density_matrix, make_rng, projector, tensor
from .povm import description_hash, povm_from_description, sample_outcomes
from .records import write_shot_file

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

_KETS = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) / np.sqrt(2),
    "-": np.array([1, -1], dtype=complex) / np.sqrt(2),
    "r": np.array([1, 1j], dtype=complex) / np.sqrt(2),
    "l": np.array([1, -1j], dtype=complex) / np.sqrt(2),
}


def _u64(text: str) -> int:
    val = int(text)
    if not 0 <= val < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return val


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description="Dual-frame estimation benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name.replace("_", "-"), help=f"run the {name.replace('_', ' ')} experiment")
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", required=True, help="output CSV path")
        p.add_argument("--seed", type=_u64, default=None, help="overrides the config seed")
        p.add_argument("--workers", type=int, default=None, help="worker processes")
        p.add_argument("--timing", action="store_true",
                       help="record wall-clock times (output is then not byte-reproducible)")
    p = sub.add_parser("estimate", help="estimate an expectation value from a shot file")
    p.add_argument("--shots", required=True)
    p.add_argument("--povm", required=True)
    p.add_argument("--observable", required=True)
    p.add_argument("--duals", default="canonical", help="canonical | avg-optimal | empirical:<m>[:<bias>]")
    p = sub.add_parser("sample", help="simulate a shot file")
    p.add_argument("--povm", required=True)
    p.add_argument("--state", required=True,
                   help="product of single-qubit kets such as '0+1r' or a JSON density-matrix file")
    p.add_argument("--shots", type=int, required=True)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--out", required=True)
    return parser


def _state_from_arg(text: str):
    if set(text) <= set(_KETS):
        return [projector(_KETS[c]) for c in text]
    with open(text, encoding="utf-8") as fh:
        obj = json.load(fh)
    re = np.asarray(obj["real"], dtype=float)
    im = np.asarray(obj.get("imag", np.zeros_like(re)), dtype=float)
    return check_density_matrix(re + 1j * im)


def _run(args) -> int:
    if args.command == "estimate":
        out = estimate_from_files(args.shots, args.povm, args.observable, args.duals)
        print(json.dumps(out, sort_keys=True))
        return EXIT_OK
    if args.command == "sample":
        if args.shots < 1:
            raise ConfigError("shots must be positive")
        with open(args.povm, encoding="utf-8") as fh:
            desc = json.load(fh)
        try:
            povm = povm_from_description(desc)
            state = _state_from_arg(args.state)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        n_qubits = len(getattr(povm, "outcome_shape", (1,)))
        if isinstance(state, list) and len(state) != n_qubits:
            raise ConfigError(f"state has {len(state)} qubits, POVM has {n_qubits}")
        if n_qubits == 1 and isinstance(state, list):
            state = tensor(state)
        record = sample_outcomes(povm, state, args.shots, make_rng(args.seed, 0))
        write_shot_file(args.out, record, description_hash(desc))
        return EXIT_OK
    experiment = args.command.replace("-", "_")
    config = ExperimentConfig.load(args.config, seed=args.seed, workers=args.workers,
                                   timing=args.timing or None, output_path=args.out)
    if config.experiment != experiment:
        raise ConfigError(f"config is for {config.experiment!r}, command is {experiment!r}")
    rows = RUNNERS[experiment](config)
    write_outputs(rows, args.out)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (ConfigError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ICFailureError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ShotFileError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def estimate_main(argv=None) -> int:
    """``estimate ...`` as a standalone command (same as ``bench estimate ...``)."""
    return main(["estimate"] + list(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    sys.exit(main())
