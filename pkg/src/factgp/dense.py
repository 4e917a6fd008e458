"""Exact GP regression with a dense Cholesky factor.

This backend is the reference every approximate backend is checked
against, so it favours clarity over speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import IllConditionedKernelError, InputShapeError
from .kernel import as_inputs, kern_cross, kern_diag, kern_grad

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = as_inputs(self.X)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.shape[0] < 1:
            raise InputShapeError("a dataset needs at least one point")
        if X.shape[0] != y.shape[0]:
            raise InputShapeError(f"{X.shape[0]} inputs but {y.shape[0]} targets")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InputShapeError("dataset contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class Prediction:
    """Predictive marginals; `cov` is only filled when the full covariance was asked for."""

    mean: np.ndarray
    var: np.ndarray
    cov: np.ndarray | None = None


@dataclass(frozen=True)
class ExactPosterior:
    chol: np.ndarray
    alpha: np.ndarray
    data: Dataset
    spec: object
    prior_mean: float = 0.0


def noisy_cholesky(K, what="K + sigma^2 I"):
    """Lower Cholesky factor with a single jitter retry."""
    try:
        return sla.cholesky(K, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-8 * float(np.mean(np.diag(K)))
    try:
        return sla.cholesky(K + jitter * np.eye(K.shape[0]), lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        raise IllConditionedKernelError(
            f"Cholesky of {what} failed, also with jitter {jitter:.3g}", jitter=jitter
        ) from None


def _check_dims(data, spec):
    if data.dim != spec.dim:
        raise InputShapeError(f"data has {data.dim} dimensions, kernel has {spec.dim}")


def exact_fit(data, spec, prior_mean=0.0):
    _check_dims(data, spec)
    K = kern_cross(spec, data.X, data.X)
    K[np.diag_indices_from(K)] += spec.noise_variance
    L = noisy_cholesky(K)
    alpha = sla.cho_solve((L, True), data.y - prior_mean, check_finite=False)
    return ExactPosterior(L, alpha, data, spec, prior_mean)


def exact_predict(post, Xstar, full_cov=True):
    spec = post.spec
    Xstar = as_inputs(Xstar, spec.dim)
    Ks = kern_cross(spec, Xstar, post.data.X)
    mean = post.prior_mean + Ks @ post.alpha
    A = sla.solve_triangular(post.chol, Ks.T, lower=True, check_finite=False)
    if full_cov:
        cov = kern_cross(spec, Xstar, Xstar) - A.T @ A
        cov = 0.5 * (cov + cov.T)
        return Prediction(mean, np.diag(cov).copy(), cov)
    var = kern_diag(spec, Xstar) - np.einsum("ij,ij->j", A, A)
    return Prediction(mean, var)


def _nlml_from_posterior(post):
    y = post.data.y - post.prior_mean
    n = y.shape[0]
    return (
        0.5 * y @ post.alpha
        + np.sum(np.log(np.diag(post.chol)))
        + 0.5 * n * LOG_2PI
    )


def exact_nlml(data, spec):
    """Full negative log marginal likelihood, 2*pi constant included."""
    return float(_nlml_from_posterior(exact_fit(data, spec)))


def exact_nlml_and_grad(data, spec):
    post = exact_fit(data, spec)
    Kinv = sla.cho_solve((post.chol, True), np.eye(data.n), check_finite=False)
    W = Kinv - np.outer(post.alpha, post.alpha)
    grad = np.array([0.5 * np.sum(W * dK) for dK in kern_grad(spec, data.X)])
    return float(_nlml_from_posterior(post)), grad


def exact_nlml_grad(data, spec):
    """Gradient of :func:`exact_nlml` in log-hyperparameter space."""
    return exact_nlml_and_grad(data, spec)[1]
