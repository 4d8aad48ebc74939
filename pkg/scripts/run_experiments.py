"""Run the benchmark experiments and print median tables.

    python3 scripts/run_experiments.py --out results/ [--only marginal_scaling] [--seed 0] [--workers 1]

Each experiment writes ``<out>/<name>.csv`` and ``<out>/<name>.summary.json``.
"""

import argparse
import json
import pathlib
import sys
import time

from dualframes import cli

HERE = pathlib.Path(__file__).resolve().parent
EXPERIMENTS = {
    "class_performance_1q": "class-performance",
    "class_performance_2q": "class-performance",
    "marginal_scaling": "marginal-scaling",
    "shot_convergence": "shot-convergence",
}


def print_medians(summary_path):
    with open(summary_path) as fh:
        summary = json.load(fh)
    for s in summary:
        keys = [s["povm_class"], s["dual_scheme"], s["metric"], f"N={s['n_qubits']}"]
        if s["shots"] is not None:
            keys += [f"S={s['shots']}", f"S_bias={s['s_bias']:g}"]
        print(f"  {' '.join(keys):60s} median {s['quantiles']['50']:.4g}  (n={s['count']})")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--out", default="results")
    parser.add_argument("--only", choices=sorted(EXPERIMENTS), action="append")
    parser.add_argument("--seed", default=None)
    parser.add_argument("--workers", default=None)
    args = parser.parse_args(argv)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.only or EXPERIMENTS:
        cmd = [EXPERIMENTS[name], "--config", str(HERE / "configs" / f"{name}.json"), "--out", str(out / f"{name}.csv")]
        if args.seed is not None:
            cmd += ["--seed", args.seed]
        if args.workers is not None:
            cmd += ["--workers", args.workers]
        t0 = time.perf_counter()
        code = cli.main(cmd)
        if code:
            return code
        print(f"{name}: {time.perf_counter() - t0:.0f}s")
        print_medians(out / f"{name}.summary.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
