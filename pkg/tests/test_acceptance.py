"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``. Criterion 7 measures wall
clock and should be run on an otherwise idle machine.
"""

import subprocess
import sys
import time

import numpy as np
import pytest
import scipy.linalg as sla

from factgp.bench import ExperimentConfig, band_coverage, figure_runs, gen_toy, run_method
from factgp.dense import Dataset, exact_fit, exact_nlml, exact_nlml_grad, exact_predict
from factgp.hodlr import hodlr_assemble, hodlr_factorize, hodlr_logdet, hodlr_solve
from factgp.inducing import fitc_fit, fitc_nlml, fitc_predict, vfe_elbo, vfe_fit
from factgp.kernel import HyperParams, KernelSpec, kern_cross
from factgp.structured import (
    KronOp,
    RegularGrid,
    ToeplitzOp,
    grid_kernel,
    kron_mvm,
    ski_apply,
    ski_weights,
    toeplitz_mvm,
)
from factgp.trainer import finite_diff_grad

from conftest import make_spec, random_data, rel_err


def report(capsys, number, title, ok, detail):
    with capsys.disabled():
        print(f"\n[acceptance] criterion {number} ({title}): {'PASS' if ok else 'FAIL'}; {detail}")
    assert ok, detail


def test_criterion_1_hodlr_oracle(capsys):
    rng = np.random.default_rng(1)
    spec = make_spec(1.0, 1.0, 0.1)
    t0 = time.perf_counter()
    worst_res, worst_ld = 0.0, 0.0
    for n in (128, 512, 1024):
        X = rng.uniform(-10, 10, n)
        M = hodlr_assemble(X, spec, 0.1, tol=1e-8)
        chain = hodlr_factorize(M)
        Xp = X[M.perm.perm][:, None]
        K = kern_cross(spec, Xp, Xp) + 0.1 * np.eye(n)
        b = rng.normal(size=n)
        x = hodlr_solve(chain, b)
        worst_res = max(worst_res, rel_err(K @ x, b))
        ref = 2.0 * np.sum(np.log(np.diag(sla.cholesky(K, lower=True))))
        worst_ld = max(worst_ld, abs(hodlr_logdet(chain) - ref) / abs(ref))
    elapsed = time.perf_counter() - t0
    ok = worst_res <= 1e-6 and worst_ld <= 1e-6 and elapsed < 30
    report(capsys, 1, "HODLR solve and log-det vs dense Cholesky", ok,
           f"max residual {worst_res:.2e}, max log-det rel err {worst_ld:.2e}, {elapsed:.2f}s")


def test_criterion_2_exact_recovery(capsys):
    rng = np.random.default_rng(2)
    worst = {"mean": 0.0, "var": 0.0, "nlml": 0.0}
    for _ in range(10):
        spec = make_spec(rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), 0.1)
        data = random_data(rng, 60, lo=-10, hi=10)
        Xs = np.linspace(data.X.min(), data.X.max(), 200)
        ref = exact_predict(exact_fit(data, spec), Xs, full_cov=False)
        ref_nlml = exact_nlml(data, spec)
        for fit in (fitc_fit, vfe_fit):
            pred = fitc_predict(fit(data, data.X, spec), Xs)
            worst["mean"] = max(worst["mean"], rel_err(pred.mean, ref.mean))
            worst["var"] = max(worst["var"], rel_err(pred.var, ref.var))
        worst["nlml"] = max(worst["nlml"],
                            abs(fitc_nlml(data, data.X, spec) / ref_nlml - 1),
                            abs(-vfe_elbo(data, data.X, spec) / ref_nlml - 1))
    ok = max(worst.values()) <= 1e-8
    report(capsys, 2, "FITC/VFE with Z = X recover the exact GP", ok,
           ", ".join(f"max {k} rel err {v:.2e}" for k, v in worst.items()))


def test_criterion_3_elbo_bound(capsys):
    rng = np.random.default_rng(3)
    violations, worst_gap, count = 0, -np.inf, 0
    for _ in range(5):
        spec = make_spec(rng.uniform(0.3, 3.0), rng.uniform(0.5, 2.0), rng.uniform(0.01, 0.5))
        data = random_data(rng, 50)
        evidence = -exact_nlml(data, spec)
        for _ in range(100):
            m = int(rng.integers(1, 31))
            Z = rng.uniform(-7, 7, size=(m, 1))
            gap = vfe_elbo(data, Z, spec) - evidence
            violations += gap > 1e-8
            worst_gap = max(worst_gap, gap)
            count += 1
    report(capsys, 3, "VFE bound below the exact evidence", violations == 0,
           f"{violations} violations in {count} inducing sets, max(elbo - evidence) {worst_gap:.2e}")


def test_criterion_4_figure_reproduction(capsys):
    cfg = ExperimentConfig(n=100, m=10, seed=0, train_hypers=True, optimize_steps=100, tol=1e-8)
    _, _, full, results = figure_runs(cfg, ("vfe", "hcfgp"))
    by = {r.method: r for r in results}
    assert not any(r.failed for r in results), [r.error for r in results]
    cov_vfe = band_coverage(by["vfe"], full)
    cov_hc = band_coverage(by["hcfgp"], full)
    rmse = by["hcfgp"].rmse_vs_full
    moved = np.abs(np.array(by["vfe"].meta["z_final"]) - by["vfe"].meta["z_init"]).max()
    ok = cov_vfe >= 0.9 and cov_hc >= 0.9 and rmse <= 1e-3 and moved > 0
    report(capsys, 4, "toy figure: VFE and HCFGP inside the full-GP band", ok,
           f"coverage vfe {cov_vfe:.3f}, hcfgp {cov_hc:.3f}; hcfgp rmse vs full {rmse:.2e}; "
           f"inducing points moved up to {moved:.3f}")


def test_criterion_5_structured_exactness(capsys):
    rng = np.random.default_rng(5)
    worst_t, worst_k, worst_sym = 0.0, 0.0, 0.0
    for m in list(range(1, 40)) + [63, 64, 65, 127, 128, 255, 256, 257, 400, 511, 512]:
        col = rng.normal(size=m)
        v = rng.normal(size=m)
        worst_t = max(worst_t, rel_err(toeplitz_mvm(ToeplitzOp(col), v), sla.toeplitz(col) @ v))
    for dims in [(2, 2), (3, 5), (8, 8, 8), (16, 32), (2, 256), (7, 9, 4), (512,)]:
        op = KronOp(tuple(rng.normal(size=(d, d)) for d in dims))
        v = rng.normal(size=op.size)
        worst_k = max(worst_k, rel_err(kron_mvm(op, v), op.dense() @ v))
    for dim, m in [(1, 64), (1, 300), (2, 12), (3, 6)]:
        spec = make_spec([0.8] * dim, 1.0, 0.05)
        X = rng.uniform(-3, 3, size=(150, dim))
        grid = RegularGrid.covering(X, m=m)
        W, K = ski_weights(X, grid), grid_kernel(grid, spec)
        u, v = rng.normal(size=150), rng.normal(size=150)
        a, b = u @ ski_apply(W, K, 0.05, v), ski_apply(W, K, 0.05, u) @ v
        worst_sym = max(worst_sym, abs(a - b) / max(abs(a), 1.0))
    ok = worst_t <= 1e-10 and worst_k <= 1e-10 and worst_sym <= 1e-10
    report(capsys, 5, "Toeplitz/Kronecker MVMs and SKI symmetry", ok,
           f"toeplitz {worst_t:.2e}, kronecker {worst_k:.2e}, SKI asymmetry {worst_sym:.2e}")


def test_criterion_6_gradient_check(capsys):
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(20):
        data = random_data(rng, 30)
        theta = HyperParams.from_natural(rng.uniform(0.3, 3.0), rng.uniform(0.3, 3.0), rng.uniform(0.02, 1.0))
        g = exact_nlml_grad(data, KernelSpec(theta))
        fd = finite_diff_grad(lambda v: exact_nlml(data, KernelSpec(HyperParams.from_vector(v))),
                              theta.to_vector())
        worst = max(worst, rel_err(g, fd))
    report(capsys, 6, "analytic NLML gradient vs central differences", worst <= 1e-5,
           f"max rel err {worst:.2e} over 20 pairs")


def _median_times(n, methods, repeats, key="total_seconds"):
    """Median seconds per method; repeat i uses seed i and every method sees the same data."""
    times = {m: [] for m in methods}
    for i in range(repeats):
        data, x_test, truth = gen_toy(n, i)
        for m in methods:
            r = run_method(ExperimentConfig(method=m, n=n, seed=i), data, x_test, truth,
                           compute_oracle=False)
            assert not r.failed, r.error
            times[m].append(getattr(r, key))
    return {m: float(np.median(t)) for m, t in times.items()}


@pytest.mark.slow
def test_criterion_7_timing_shape(capsys):
    repeats = 10
    fit_2500 = _median_times(2500, ["full"], repeats, "fit_seconds")["full"]
    fit_5000 = _median_times(5000, ["full"], repeats, "fit_seconds")["full"]
    ratio_a = fit_5000 / fit_2500
    med = _median_times(8000, ["full", "fitc", "vfe", "ski", "hcfgp"], repeats)
    ok_b = (med["vfe"] <= med["fitc"] <= med["full"]
            and med["ski"] < med["full"] and med["hcfgp"] < med["full"])
    hc_4096 = _median_times(4096, ["hcfgp"], repeats)["hcfgp"]
    hc_8192 = _median_times(8192, ["hcfgp"], repeats)["hcfgp"]
    ratio_c = hc_8192 / hc_4096
    ok = ratio_a >= 4 and ok_b and ratio_c <= 3
    row = ", ".join(f"{m} {t:.4f}s" for m, t in med.items())
    report(capsys, 7, "timing shape", ok,
           f"(a) full fit 5000/2500 = {ratio_a:.2f}; (b) n=8000 medians {row}; "
           f"(c) hcfgp 8192/4096 = {ratio_c:.2f}")


def test_criterion_8_cli_determinism(capsys, tmp_path):
    identical = []
    for method in ("full", "fitc", "vfe", "ski", "hcfgp"):
        outs = []
        for k in range(2):
            out = tmp_path / f"{method}{k}"
            args = [sys.executable, "-m", "factgp", "run", "--method", method, "--n", "300",
                    "--m", "20", "--seed", "11", "--optimize-steps", "5", "--out", str(out)]
            proc = subprocess.run(args, capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            outs.append((out / f"run_{method}_n300_seed11.csv").read_bytes())
        identical.append(outs[0] == outs[1])
    report(capsys, 8, "bench run determinism", all(identical),
           f"{sum(identical)}/5 methods produced byte-identical CSV data")
