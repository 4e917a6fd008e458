"""Toy-data experiments: accuracy runs, figure data and timing sweeps."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .dense import Dataset, exact_fit, exact_nlml, exact_nlml_grad, exact_predict
from .errors import AlignmentError, ConfigError, FactGPError
from .hodlr import hcfgp_fit, hcfgp_predict
from .inducing import InducingSet, fitc_fit, fitc_predict, optimize_inducing, vfe_elbo, vfe_fit
from .inducing import _sparse_predict as sparse_predict
from .kernel import HyperParams, KernelSpec
from .structured import RegularGrid, ski_fit, ski_nlml_approx, ski_predict
from .trainer import OptimizeConfig, minimize_nlml

log = logging.getLogger(__name__)

METHODS = ("full", "fitc", "vfe", "ski", "hcfgp")
TOY_RANGE = (-10.0, 10.0)
TOY_NOISE_VARIANCE = 0.2
TEST_POINTS = 400

#: seconds per method at each training size on reference hardware; shape only, not a target
REFERENCE_TIMES = {
    100: {"full": 0.018, "fitc": 0.086, "vfe": 0.019, "ski": 0.126, "hcfgp": 0.049},
    1000: {"full": 0.119, "fitc": 0.099, "vfe": 0.030, "ski": 0.188, "hcfgp": 0.124},
    2500: {"full": 0.875, "fitc": 0.106, "vfe": 0.042, "ski": 0.580, "hcfgp": 0.753},
    5000: {"full": 4.976, "fitc": 0.126, "vfe": 0.051, "ski": 1.424, "hcfgp": 2.999},
    8000: {"full": 17.805, "fitc": 0.319, "vfe": 0.120, "ski": 3.066, "hcfgp": 7.556},
}


def toy_truth(x):
    """0.02 x + sin(pi x) / (pi x), continuous at 0."""
    x = np.asarray(x, dtype=float)
    return 0.02 * x + np.sinc(x)


def gen_toy(n, seed):
    """Noisy toy data on [-10, 10] plus the noise-free truth on a 400-point test grid."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.uniform(*TOY_RANGE, size=n)
    y = toy_truth(x) + rng.normal(0.0, np.sqrt(TOY_NOISE_VARIANCE), size=n)
    x_test = np.linspace(*TOY_RANGE, TEST_POINTS)
    return Dataset(x, y), x_test, toy_truth(x_test)


@dataclass
class ExperimentConfig:
    method: str = "full"
    n: int = 100
    m: int = 10
    seed: int = 0
    repeats: int = 1
    lengthscale: float = 1.0
    signal_variance: float = 1.0
    noise_variance: float = TOY_NOISE_VARIANCE
    train_hypers: bool = False
    train_iters: int = 300
    optimize_steps: int = 0
    tol: float = 1e-8
    leaf_size: int = 64
    max_rank: int = 50
    hcfgp_solver: str = "cholesky"
    cg_tol: float = 1e-6
    cg_maxit: int = 1000
    oracle_cap: int = 8000

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.n < 1 or self.repeats < 1:
            raise ConfigError("n and repeats must be >= 1")
        if self.method in ("fitc", "vfe") and self.m < 1:
            raise ConfigError("inducing methods need m >= 1")
        if self.method == "ski" and self.m < 2:
            raise ConfigError("SKI needs a grid of at least 2 points")
        if self.method == "hcfgp" and self.leaf_size < 8:
            raise ConfigError("leaf_size must be >= 8")
        if min(self.lengthscale, self.signal_variance, self.noise_variance, self.tol, self.cg_tol) <= 0:
            raise ConfigError("hyperparameters and tolerances must be positive")
        if self.hcfgp_solver not in ("cholesky", "smw"):
            raise ConfigError("hcfgp_solver must be 'cholesky' or 'smw'")

    @property
    def hyper(self):
        return HyperParams.from_natural(self.lengthscale, self.signal_variance, self.noise_variance)

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        return ExperimentConfig(**d)

    def to_json(self):
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass
class RunResult:
    method: str
    n: int
    seed: int
    x_test: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    fit_seconds: float = 0.0
    predict_seconds: float = 0.0
    rmse_vs_full: float | None = None
    rmse_vs_truth: float | None = None
    nlml: float | None = None
    meta: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def failed(self):
        return self.error is not None

    @property
    def total_seconds(self):
        return self.fit_seconds + self.predict_seconds

    def band(self, z=1.96):
        sd = np.sqrt(np.maximum(self.var, 0.0))
        return self.mean - z * sd, self.mean + z * sd

    def metadata(self):
        keys = ("method", "n", "seed", "fit_seconds", "predict_seconds", "rmse_vs_full",
                "rmse_vs_truth", "nlml", "error")
        d = {k: getattr(self, k) for k in keys}
        d["meta"] = self.meta
        return d

    def to_csv(self, truth=None):
        lo, hi = self.band()
        cols = {"x": self.x_test, "mean": self.mean, "var": self.var, "lo95": lo, "hi95": hi}
        if truth is not None:
            cols["truth"] = truth
        return _columns_to_csv(cols)

    def to_json(self, truth=None):
        d = self.metadata()
        d.update(x=self.x_test.tolist(), mean=self.mean.tolist(), var=self.var.tolist())
        if truth is not None:
            d["truth"] = np.asarray(truth).tolist()
        return json.dumps(d)


def _fmt(v):
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else repr(float(v))


def _columns_to_csv(cols):
    """CSV with one column per key; shorter columns are padded with blanks."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(list(cols))
    arrays = [np.asarray(c, dtype=float).ravel() for c in cols.values()]
    rows = max(a.size for a in arrays)
    for i in range(rows):
        w.writerow([_fmt(a[i]) if i < a.size else "" for a in arrays])
    return out.getvalue()


def read_csv_columns(text):
    """Inverse of the CSV writers: dict of column name -> float array (blanks dropped)."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    cols = {h: [] for h in header}
    for row in reader:
        for h, v in zip(header, row):
            if v != "":
                cols[h].append(float(v))
    return {h: np.array(v) for h, v in cols.items()}


def _rmse(a, b):
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


def train_hypers(data, hyper, iters=300):
    """Maximum-likelihood hyperparameters of the exact GP."""
    res = minimize_nlml(
        lambda h: exact_nlml(data, KernelSpec(h)),
        lambda h: exact_nlml_grad(data, KernelSpec(h)),
        hyper,
        OptimizeConfig(max_iters=iters, grad_tol=1e-5),
    )
    return res.theta


def _fit_predict(cfg, data, spec, x_test, meta):
    """Run one backend; returns (prediction, nlml, fit seconds, predict seconds)."""
    method = cfg.method
    clock = time.perf_counter
    if method == "full":
        t0 = clock()
        post = exact_fit(data, spec)
        t1 = clock()
        pred = exact_predict(post, x_test, full_cov=False)
        t2 = clock()
        nlml = lambda: exact_nlml(data, spec)  # noqa: E731
    elif method in ("fitc", "vfe"):
        # m >= n degenerates to Z = X, the exact-recovery configuration
        Z0 = data.X if cfg.m >= data.n else InducingSet.evenly_spaced(data.X, cfg.m).Z
        Z = Z0
        if cfg.optimize_steps > 0:
            Z, trace = optimize_inducing(data, Z0, spec, method, cfg.optimize_steps)
            meta["inducing_objective"] = [trace[0], trace[-1]]
        meta["z_init"] = Z0.ravel().tolist()
        meta["z_final"] = np.asarray(Z).ravel().tolist()
        fit = fitc_fit if method == "fitc" else vfe_fit
        t0 = clock()
        post = fit(data, Z, spec)
        t1 = clock()
        pred = fitc_predict(post, x_test) if method == "fitc" else sparse_predict(post, x_test)
        t2 = clock()
        if method == "fitc":
            nlml = lambda: float(post.neg_log_gaussian())  # noqa: E731
        else:
            nlml = lambda: -vfe_elbo(data, Z, spec)  # noqa: E731
    elif method == "ski":
        t0 = clock()
        grid = RegularGrid.covering(data.X, x_test, m=cfg.m)
        model = ski_fit(data, grid, spec, cfg.cg_tol, cfg.cg_maxit)
        t1 = clock()
        pred = ski_predict(data, grid, spec, x_test, cfg.cg_tol, cfg.cg_maxit, model=model)
        t2 = clock()
        meta["grid"] = [float(grid.axes[0][0]), float(grid.axes[0][-1]), grid.size]
        meta["cg_iterations"] = model.cg.iterations
        nlml = lambda: ski_nlml_approx(data, grid, spec, model=model)  # noqa: E731
    elif method == "hcfgp":
        t0 = clock()
        post = hcfgp_fit(data, spec, cfg.tol, cfg.leaf_size, cfg.max_rank, cfg.hcfgp_solver)
        t1 = clock()
        pred = hcfgp_predict(post, x_test)
        t2 = clock()
        meta["hodlr"] = post.M.diagnostics()
        nlml = lambda: post.nlml  # noqa: E731
    else:
        raise ConfigError(f"unknown method {method!r}")
    return pred, nlml, t1 - t0, t2 - t1


def run_method(cfg, data=None, x_test=None, truth=None, compute_oracle=True, hyper=None):
    """Fit and predict with one backend, timing both phases; never raises on backend errors."""
    if data is None:
        data, x_test, truth = gen_toy(cfg.n, cfg.seed)
    x_test = np.asarray(x_test, dtype=float)
    meta = {"config": asdict(cfg)}
    empty = np.full(x_test.shape[0], np.nan)
    try:
        if hyper is None:
            hyper = train_hypers(data, cfg.hyper, cfg.train_iters) if cfg.train_hypers else cfg.hyper
        spec = KernelSpec(hyper)
        meta["hyper"] = hyper.to_dict()
        pred, nlml, fit_s, pred_s = _fit_predict(cfg, data, spec, x_test, meta)
        var = np.maximum(pred.var, 0.0)
        res = RunResult(cfg.method, data.n, cfg.seed, x_test, pred.mean, var, fit_s, pred_s, meta=meta)
        res.nlml = float(nlml())
        if truth is not None:
            res.rmse_vs_truth = _rmse(pred.mean, truth)
        if cfg.method == "full":
            res.rmse_vs_full = 0.0
        elif compute_oracle and data.n <= cfg.oracle_cap:
            ref = exact_predict(exact_fit(data, spec), x_test, full_cov=False)
            res.rmse_vs_full = _rmse(pred.mean, ref.mean)
        return res
    except (FactGPError, np.linalg.LinAlgError, ArithmeticError, ValueError) as e:
        log.warning("%s run failed: %s", cfg.method, e)
        return RunResult(cfg.method, data.n, cfg.seed, x_test, empty, empty, meta=meta,
                         error=f"{type(e).__name__}: {e}")


def band_coverage(result, full):
    """Fraction of test points where `result`'s mean lies inside full's 95% band."""
    _check_aligned([result], full)
    lo, hi = full.band()
    return float(np.mean((result.mean >= lo) & (result.mean <= hi)))


def _check_aligned(results, full):
    for r in results:
        if r.x_test.shape != full.x_test.shape or not np.array_equal(r.x_test, full.x_test):
            raise AlignmentError(f"{r.method} result does not share the full GP's test grid")


def export_fig_data(results, full_result, truth=None, data=None):
    """CSV with the full-GP band, each method's mean and band, training data and inducing inputs."""
    _check_aligned(results, full_result)
    lo, hi = full_result.band()
    cols = {"x": full_result.x_test}
    cols["truth"] = truth if truth is not None else np.full(full_result.x_test.shape, np.nan)
    cols.update(full_mean=full_result.mean, full_lo95=lo, full_hi95=hi)
    for r in results:
        rlo, rhi = r.band()
        cols[f"{r.method}_mean"] = r.mean
        cols[f"{r.method}_lo95"] = rlo
        cols[f"{r.method}_hi95"] = rhi
    if data is not None:
        cols["train_x"] = data.X[:, 0]
        cols["train_y"] = data.y
    for r in results:
        if "z_init" in r.meta:
            cols[f"{r.method}_z_init"] = np.array(r.meta["z_init"])
            cols[f"{r.method}_z_final"] = np.array(r.meta["z_final"])
    return _columns_to_csv(cols)


def figure_runs(cfg, methods=("fitc", "vfe", "ski", "hcfgp")):
    """Full GP plus each method on one toy dataset, sharing the learned hyperparameters."""
    data, x_test, truth = gen_toy(cfg.n, cfg.seed)
    hyper = train_hypers(data, cfg.hyper, cfg.train_iters) if cfg.train_hypers else cfg.hyper
    full = run_method(cfg.replace(method="full"), data, x_test, truth, hyper=hyper)
    results = [run_method(cfg.replace(method=m), data, x_test, truth, hyper=hyper) for m in methods]
    return data, truth, full, results


@dataclass
class TimingTable:
    sizes: list
    methods: list
    repeats: int
    cells: dict  # (size, method) -> list of seconds (None for failures)

    def stats(self, size, method):
        times = self.cells[(size, method)]
        ok = [t for t in times if t is not None]
        if len(ok) < len(times) or not ok:
            return None
        q1, med, q3 = np.percentile(ok, [25, 50, 75])
        return float(med), float(q3 - q1)

    def median(self, size, method):
        s = self.stats(size, method)
        return None if s is None else s[0]

    @property
    def any_failed(self):
        return any(self.stats(s, m) is None for s in self.sizes for m in self.methods)

    def to_text(self):
        head = ["n"] + [m.upper() if m != "full" else "Full GP" for m in self.methods]
        rows = []
        for s in self.sizes:
            row = [str(s)]
            for m in self.methods:
                st = self.stats(s, m)
                row.append("FAIL*" if st is None else f"{st[0]:.4f} ({st[1]:.4f})")
            rows.append(row)
        widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
        lines = [" | ".join(h.rjust(w) for h, w in zip(head, widths))]
        lines.append("-+-".join("-" * w for w in widths))
        lines += [" | ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows]
        lines.append(f"median seconds (IQR) of fit+predict over {self.repeats} repeats")
        if self.any_failed:
            lines.append("* at least one repeat of this cell failed")
        return "\n".join(lines) + "\n"

    def to_csv(self):
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["n"] + [f"{m}_{k}" for m in self.methods for k in ("median", "iqr")])
        for s in self.sizes:
            row = [s]
            for m in self.methods:
                st = self.stats(s, m)
                row += ["FAIL", "FAIL"] if st is None else [repr(st[0]), repr(st[1])]
            w.writerow(row)
        return out.getvalue()


def timing_table(sizes, methods=METHODS, repeats=100, seed=0, base=None):
    """Fit+predict wall time per (size, method); repeat i uses data seed seed + i."""
    base = base or ExperimentConfig()
    cells = {}
    for s in sizes:
        for m in methods:
            cells[(s, m)] = []
        for i in range(repeats):
            data, x_test, truth = gen_toy(s, seed + i)
            for m in methods:
                cfg = base.replace(method=m, n=s, seed=seed + i, train_hypers=False,
                                   optimize_steps=0)
                r = run_method(cfg, data, x_test, truth, compute_oracle=False)
                cells[(s, m)].append(None if r.failed else r.total_seconds)
                log.info("n=%d %s repeat %d: %s", s, m, i,
                         "FAIL" if r.failed else f"{r.total_seconds:.4f}s")
    return TimingTable(list(sizes), list(methods), repeats, cells)
