#!/usr/bin/env python3
"""Timing sweep over training sizes for all five methods.

Defaults use 100 repeats per cell, which takes
a while for the dense GP at n=8000; use --repeats for a quick look.
"""

import argparse
from pathlib import Path

from factgp.bench import METHODS, REFERENCE_TIMES, timing_table


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", default="100,1000,2500,5000,8000")
    p.add_argument("--repeats", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("results/timing"))
    args = p.parse_args()

    sizes = [int(s) for s in args.sizes.split(",")]
    tab = timing_table(sizes, METHODS, args.repeats, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "timing.csv").write_text(tab.to_csv())
    (args.out / "timing.txt").write_text(tab.to_text())
    print(tab.to_text())
    print("reference timings (other hardware):")
    for n in sizes:
        if n in REFERENCE_TIMES:
            row = REFERENCE_TIMES[n]
            print(f"{n:>5} | " + " | ".join(f"{row[m]:.3f}" for m in METHODS))
    return 1 if tab.any_failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
