#!/usr/bin/env python3
"""Print per-level off-diagonal ranks of the toy kernel matrix at several tolerances."""

import argparse

from factgp.bench import gen_toy
from factgp.hodlr import hodlr_assemble
from factgp.kernel import HyperParams, KernelSpec


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=4096)
    p.add_argument("--leaf-size", type=int, default=64)
    p.add_argument("--lengthscale", type=float, default=1.0)
    args = p.parse_args()

    data, _, _ = gen_toy(args.n, 0)
    spec = KernelSpec(HyperParams.from_natural(args.lengthscale, 1.0, 0.2))
    for tol in (1e-4, 1e-6, 1e-8, 1e-10):
        M = hodlr_assemble(data.X, spec, spec.noise_variance, tol=tol, leaf_size=args.leaf_size)
        d = M.diagnostics()
        levels = "  ".join(f"L{lv['level']}:{lv['max_rank']}" for lv in d["levels"])
        ratio = sum(lv["compression_ratio"] for lv in d["levels"]) / len(d["levels"])
        print(f"tol {tol:.0e}  max rank per level  {levels}  mean compression {ratio:.3f}")


if __name__ == "__main__":
    main()
