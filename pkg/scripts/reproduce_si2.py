"""Reproduction runs on Si2 (769x769, SuiteSparse collection, group PARSEC).

Download ``Si2.mtx`` manually (this script does not fetch anything) and run::

    python3 scripts/reproduce_si2.py path/to/Si2.mtx --out runs/si2

Interval 1 brackets the lowest 20 eigenvalues, Interval 2 the middle 20.
Each bound sits 10% of the way from the outermost wanted eigenvalue to its
unwanted neighbour (see ``bracket_interval``); the lower bound of Interval 1
sits 10% of the cluster width below the lowest eigenvalue. The endpoints are
recorded in each run's ``manifest.json``. Every run writes ``trace.csv`` and
``result.json`` into its own directory, and a summary line is printed.
"""

import argparse
import csv
import json
from pathlib import Path

from ifeast.analysis import bracket_interval
from ifeast.cli import RunManifest, run_solve
from ifeast.feast import IFEASTConfig
from ifeast.linalg import dense_eig
from ifeast.mmio import read_matrix_market

RUNS = [
    ("headline", (1, 2), {"m0": 30, "nc_up": 4, "alpha": 0.1}),
    ("alpha_half", (1, 2), {"m0": 20, "nc_up": 4, "alpha": 0.5}),
    ("nc4", (2,), {"m0": 25, "nc_up": 4, "alpha": 0.5}),
    ("nc10", (2,), {"m0": 25, "nc_up": 10, "alpha": 0.5}),
    ("nc24", (2,), {"m0": 25, "nc_up": 24, "alpha": 0.5}),
]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("matrix")
    p.add_argument("--out", default="runs/si2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args(argv)

    op = read_matrix_market(args.matrix)
    lam, _ = dense_eig(op)
    intervals = {1: bracket_interval(lam, 0, 20), 2: bracket_interval(lam, op.n // 2 - 10, 20)}
    out = Path(args.out)
    for name, which, kw in RUNS:
        for i in which:
            lo, hi = intervals[i]
            cfg = IFEASTConfig(solver="minres", seed=args.seed, threads=args.threads, **kw)
            man = RunManifest(str(Path(args.matrix).resolve()), lo, hi, cfg, str(out / f"{name}_int{i}"))
            code = run_solve(man)
            rows = list(csv.DictReader(open(man.trace_path)))
            res = json.loads(open(man.result_path).read())
            print(f"{name:10s} interval {i}: exit={code} iterations={len(rows)} "
                  f"final_rf={rows[-1]['rf']} matvec_seq_cum={rows[-1]['matvec_seq_cum']} "
                  f"found={len(res['eigenvalues'])}")


if __name__ == "__main__":
    main()
