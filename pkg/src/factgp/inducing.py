"""FITC and VFE sparse GPs built on a set of inducing inputs.

Both approximations share the Nystrom factor V = K_XZ P with P P^T the
pseudo-inverse of K_ZZ, so Q_XX = V V^T is never formed. They differ only in the diagonal
"noise" Lambda: FITC uses diag(K_XX - Q_XX) + sigma^2, VFE uses sigma^2
plus a trace penalty in the bound.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .dense import LOG_2PI, Dataset, Prediction
from .errors import DegenerateInducingSetError, InputShapeError, OptimizationDivergedError
from .kernel import as_inputs, kern_cross, kern_diag
from .trainer import OptimizeConfig, finite_diff_grad, gradient_descent

log = logging.getLogger(__name__)

#: eigenvalues of K_ZZ below this fraction of the largest are discarded
EIG_RTOL = 1e-15


@dataclass(frozen=True)
class InducingSet:
    Z: np.ndarray

    def __post_init__(self):
        Z = as_inputs(self.Z)
        if Z.shape[0] < 1:
            raise InputShapeError("an inducing set needs at least one point")
        if np.unique(Z, axis=0).shape[0] != Z.shape[0]:
            raise DegenerateInducingSetError("inducing set contains duplicate points")
        object.__setattr__(self, "Z", Z)

    @property
    def m(self):
        return self.Z.shape[0]

    def to_json(self):
        return json.dumps(self.Z.tolist())

    @classmethod
    def from_json(cls, text):
        return cls(np.array(json.loads(text), dtype=float))

    @classmethod
    def evenly_spaced(cls, X, m):
        """m points spread uniformly over the bounding box of X (per dimension)."""
        X = as_inputs(X)
        lo, hi = X.min(axis=0), X.max(axis=0)
        if X.shape[1] == 1:
            return cls(np.linspace(lo[0], hi[0], m)[:, None])
        per_dim = max(2, int(round(m ** (1.0 / X.shape[1]))))
        axes = [np.linspace(a, b, per_dim) for a, b in zip(lo, hi)]
        return cls(np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1))


@dataclass(frozen=True)
class NystromFactor:
    K_XZ: np.ndarray
    whiten: np.ndarray  # m x r, whiten @ whiten.T = pinv(K_ZZ)
    V: np.ndarray  # n x r, Q_XX = V V^T


def _as_Z(Z, dim):
    if isinstance(Z, InducingSet):
        Z = Z.Z
    return as_inputs(Z, dim)


def nystrom(X, Z, spec, rtol=EIG_RTOL):
    """Symmetric square root of the Nystrom approximation through Z.

    K_ZZ is whitened by its truncated eigendecomposition rather than a
    jittered Cholesky: with Z = X the product V V^T then reproduces K_XX
    to rounding error even when K_ZZ is numerically singular.
    """
    Z = _as_Z(Z, spec.dim)
    if np.unique(Z, axis=0).shape[0] != Z.shape[0]:
        raise DegenerateInducingSetError("inducing set contains duplicate points")
    lam, U = np.linalg.eigh(kern_cross(spec, Z, Z))
    keep = lam > rtol * lam[-1]
    if not np.all(np.isfinite(lam)) or not keep.any():
        raise DegenerateInducingSetError(
            f"K_ZZ has no usable spectrum for m={Z.shape[0]} inducing points"
        )
    P = U[:, keep] / np.sqrt(lam[keep])
    Kxz = kern_cross(spec, X, Z)
    return NystromFactor(Kxz, P, Kxz @ P)


@dataclass(frozen=True)
class SparsePosterior:
    """Shared posterior state of FITC and VFE.

    `lam` is the per-point diagonal Lambda; `chol_B` factors the r x r core
    I + V^T Lambda^{-1} V and `gamma` = chol_B^{-1} V^T Lambda^{-1} y.
    """

    method: str
    data: Dataset
    Z: np.ndarray
    spec: object
    nys: NystromFactor
    lam: np.ndarray
    chol_B: np.ndarray
    gamma: np.ndarray
    qdiag: np.ndarray | None  # diag(Q_XX); VFE fills it on first use

    def nystrom_diag(self):
        if self.qdiag is None:
            object.__setattr__(self, "qdiag", np.einsum("ij,ij->i", self.nys.V, self.nys.V))
        return self.qdiag

    def neg_log_gaussian(self):
        """-log N(y | 0, V V^T + diag(lam)) via the m x m Woodbury core."""
        y = self.data.y
        n = y.shape[0]
        quad = y @ (y / self.lam) - self.gamma @ self.gamma
        logdet = np.sum(np.log(self.lam)) + 2.0 * np.sum(np.log(np.diag(self.chol_B)))
        return 0.5 * quad + 0.5 * logdet + 0.5 * n * LOG_2PI

    def trace_gap(self):
        """tr(K_XX - Q_XX)."""
        return float(np.sum(kern_diag(self.spec, self.data.X) - self.nystrom_diag()))


def _sparse_fit(method, data, Z, spec, rtol):
    Z = _as_Z(Z, data.dim)
    nys = nystrom(data.X, Z, spec, rtol)
    V = nys.V
    s2 = spec.noise_variance
    if method == "fitc":
        qdiag = np.einsum("ij,ij->i", V, V)
        lam = np.maximum(kern_diag(spec, data.X) - qdiag, 0.0) + s2
        Vs = V / np.sqrt(lam)[:, None]
        B = Vs.T @ Vs
        rhs = V.T @ (data.y / lam)
    else:
        # homoscedastic Lambda = sigma^2 I: scale the small products instead of V
        qdiag = None
        lam = np.full(data.n, s2)
        B = (V.T @ V) / s2
        rhs = (V.T @ data.y) / s2
    B[np.diag_indices_from(B)] += 1.0
    LB = sla.cholesky(B, lower=True, check_finite=False)
    gamma = sla.solve_triangular(LB, rhs, lower=True, check_finite=False)
    return SparsePosterior(method, data, Z, spec, nys, lam, LB, gamma, qdiag)


def _sparse_predict(post, Xstar):
    spec = post.spec
    Xstar = as_inputs(Xstar, spec.dim)
    Ksz = kern_cross(spec, Xstar, post.Z)
    t1 = post.nys.whiten.T @ Ksz.T
    t2 = sla.solve_triangular(post.chol_B, t1, lower=True, check_finite=False)
    mean = t2.T @ post.gamma
    var = kern_diag(spec, Xstar) - np.sum(t1 * t1, axis=0) + np.sum(t2 * t2, axis=0)
    return Prediction(mean, var)


def fitc_fit(data, Z, spec, rtol=EIG_RTOL):
    return _sparse_fit("fitc", data, Z, spec, rtol)


def fitc_predict(post, Xstar):
    return _sparse_predict(post, Xstar)


def fitc_nlml(data, Z, spec, rtol=EIG_RTOL):
    return float(fitc_fit(data, Z, spec, rtol).neg_log_gaussian())


def vfe_fit(data, Z, spec, rtol=EIG_RTOL):
    return _sparse_fit("vfe", data, Z, spec, rtol)


def vfe_elbo(data, Z, spec, rtol=EIG_RTOL):
    """log N(y | 0, Q_XX + sigma^2 I) - tr(K_XX - Q_XX) / (2 sigma^2)."""
    post = vfe_fit(data, Z, spec, rtol)
    return float(-post.neg_log_gaussian() - 0.5 * post.trace_gap() / spec.noise_variance)


def vfe_predict(data, Z, spec, Xstar, rtol=EIG_RTOL):
    """Prediction under the optimal variational distribution q(f_Z)."""
    return _sparse_predict(vfe_fit(data, Z, spec, rtol), Xstar)


def optimize_inducing(data, Z0, spec, objective="vfe", steps=100, cfg=None):
    """Move inducing inputs uphill on the VFE bound or the FITC log likelihood.

    Gradients are central differences over all coordinates of Z; each
    coordinate is clamped to [min X - ell, max X + ell].
    Returns (Z_opt, trace) where trace lists objective values (to maximize).
    """
    if objective == "vfe":
        score = vfe_elbo
    elif objective == "fitc":
        def score(d, Z, s):
            return -fitc_nlml(d, Z, s)
    else:
        raise ValueError(f"unknown objective {objective!r}")

    Z0 = _as_Z(Z0, data.dim)
    shape = Z0.shape
    ell = spec.hyper.lengthscale
    lo = np.broadcast_to(data.X.min(axis=0) - ell, shape).ravel()
    hi = np.broadcast_to(data.X.max(axis=0) + ell, shape).ravel()

    def neg(z):
        try:
            return -score(data, z.reshape(shape), spec)
        except DegenerateInducingSetError:
            return np.inf

    cfg = cfg or OptimizeConfig(max_iters=steps, grad_tol=1e-6, step_tol=1e-10)
    z0 = np.clip(Z0.ravel(), lo, hi)
    if not np.isfinite(neg(z0)):
        raise OptimizationDivergedError("objective is not finite at the initial inducing set")
    res = gradient_descent(
        neg,
        z0,
        grad=lambda z: finite_diff_grad(neg, z, cfg.fd_step),
        cfg=cfg,
        project=lambda z: np.clip(z, lo, hi),
    )
    trace = [-t.objective for t in res.trace]
    log.info("inducing %s objective %.6g -> %.6g", objective, trace[0], trace[-1])
    return res.x.reshape(shape), trace
