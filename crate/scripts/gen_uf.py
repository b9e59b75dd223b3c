#!/usr/bin/env python3
"""Generate satisfiable uniform random 3-SAT instances in SATLIB layout.

These are stand-ins with the same variable/clause counts as the SATLIB
uf20-91, uf50-218, uf100-430 and uf250-1065 families. Use
fetch_satlib.sh to get the original files when network access allows.

Requires python-sat (pip install python-sat).
"""

import argparse
import random
from pathlib import Path

from pysat.solvers import Minisat22

SIZES = {20: 91, 50: 218, 100: 430, 250: 1065}


def random_formula(rng, v, c):
    clauses = []
    for _ in range(c):
        chosen = rng.sample(range(1, v + 1), 3)
        clauses.append([x if rng.random() < 0.5 else -x for x in chosen])
    return clauses


def generate(rng, v, c):
    while True:
        clauses = random_formula(rng, v, c)
        if len({abs(l) for cl in clauses for l in cl}) != v:
            continue
        with Minisat22(bootstrap_with=clauses) as solver:
            if solver.solve():
                return clauses


def write(path, name, v, clauses, seed):
    lines = [
        f"c {name}: synthetic satisfiable uniform random 3-SAT",
        f"c generated by scripts/gen_uf.py with seed {seed}",
        f"p cnf {v}  {len(clauses)} ",
    ]
    lines += [" " + " ".join(str(l) for l in cl) + " 0" for cl in clauses]
    lines += ["%", "0", ""]
    path.write_text("\n".join(lines))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path(__file__).parent.parent / "data" / "cnf")
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--count", type=int, nargs=2, action="append", metavar=("V", "N"),
                    help="variables and number of instances (repeatable)")
    args = ap.parse_args()
    counts = args.count or [[20, 10], [50, 10], [100, 1], [250, 1]]
    args.out.mkdir(parents=True, exist_ok=True)
    for v, n in counts:
        c = SIZES[v]
        for i in range(1, n + 1):
            seed = args.seed * 1000 + v * 10 + i
            clauses = generate(random.Random(seed), v, c)
            name = f"uf{v}-{i:02d}.cnf"
            write(args.out / name, name, v, clauses, seed)
            print(name)


if __name__ == "__main__":
    main()
