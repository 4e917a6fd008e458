"""Squared-exponential covariance function and its hyperparameters.

Hyperparameters live in log space; everything that leaves this module
(JSON, natural-space accessors) is exponentiated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InputShapeError

#: relative jitter (times the signal variance) used for PSD checks
PSD_JITTER = 1e-10


def as_inputs(X, dim=None):
    """Coerce `X` to a 2-D float array of shape (n, D).

    A 1-D array is read as n scalar inputs.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InputShapeError(f"inputs must be 1-D or 2-D, got shape {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise InputShapeError(f"expected {dim} input dimensions, got {X.shape[1]}")
    return X


@dataclass(frozen=True)
class HyperParams:
    log_lengthscale: np.ndarray
    log_signal_variance: float
    log_noise_variance: float

    def __post_init__(self):
        ll = np.atleast_1d(np.asarray(self.log_lengthscale, dtype=float)).copy()
        ll.setflags(write=False)
        object.__setattr__(self, "log_lengthscale", ll)
        object.__setattr__(self, "log_signal_variance", float(self.log_signal_variance))
        object.__setattr__(self, "log_noise_variance", float(self.log_noise_variance))

    @classmethod
    def from_natural(cls, lengthscale, signal_variance=1.0, noise_variance=0.1):
        return cls(
            np.log(np.atleast_1d(np.asarray(lengthscale, dtype=float))),
            np.log(signal_variance),
            np.log(noise_variance),
        )

    @property
    def dim(self):
        return self.log_lengthscale.shape[0]

    @property
    def lengthscale(self):
        return np.exp(self.log_lengthscale)

    @property
    def signal_variance(self):
        return float(np.exp(self.log_signal_variance))

    @property
    def noise_variance(self):
        return float(np.exp(self.log_noise_variance))

    # flat vector in the fixed order (lengthscales, signal variance, noise variance)
    def to_vector(self):
        return np.concatenate(
            [self.log_lengthscale, [self.log_signal_variance, self.log_noise_variance]]
        )

    @classmethod
    def from_vector(cls, theta):
        theta = np.asarray(theta, dtype=float)
        return cls(theta[:-2], theta[-2], theta[-1])

    def to_dict(self):
        return {
            "lengthscale": self.lengthscale.tolist(),
            "signal_variance": self.signal_variance,
            "noise_variance": self.noise_variance,
        }

    @classmethod
    def from_dict(cls, d):
        return cls.from_natural(d["lengthscale"], d["signal_variance"], d["noise_variance"])

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def replace(self, **kw):
        """Return a copy with some natural-space values replaced."""
        d = self.to_dict()
        d.update(kw)
        return HyperParams.from_dict(d)


@dataclass(frozen=True)
class KernelSpec:
    hyper: HyperParams
    family: str = field(default="squared-exponential")

    def __post_init__(self):
        if self.family != "squared-exponential":
            raise ValueError(f"unsupported kernel family {self.family!r}")

    @property
    def dim(self):
        return self.hyper.dim

    @property
    def signal_variance(self):
        return self.hyper.signal_variance

    @property
    def noise_variance(self):
        return self.hyper.noise_variance

    def with_hyper(self, hyper):
        return KernelSpec(hyper, self.family)


def kern_eval(spec, x, xp):
    """k(x, x') for two single D-dimensional points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(xp, dtype=float))
    if x.shape != (spec.dim,) or xp.shape != (spec.dim,):
        raise InputShapeError(
            f"points must have {spec.dim} coordinates, got {x.shape} and {xp.shape}"
        )
    r = (x - xp) / spec.hyper.lengthscale
    return spec.signal_variance * float(np.prod(np.exp(-0.5 * r * r)))


def scaled_sqdist(spec, A, B):
    ell = spec.hyper.lengthscale
    A = as_inputs(A, spec.dim) / ell
    B = as_inputs(B, spec.dim) / ell
    if A.shape[1] == 1:
        return (A - B.T) ** 2
    return cdist(A, B, "sqeuclidean")


def kern_cross(spec, A, B):
    """Cross-covariance matrix with entries k(A_i, B_j)."""
    return spec.signal_variance * np.exp(-0.5 * scaled_sqdist(spec, A, B))


def kern_diag(spec, A):
    """diag k(A, A); constant for a stationary kernel."""
    A = as_inputs(A, spec.dim)
    return np.full(A.shape[0], spec.signal_variance)


def kern_grad(spec, A):
    """Derivatives of K_AA + sigma^2 I with respect to every log-hyperparameter.

    Returned in the order of :meth:`HyperParams.to_vector`: one matrix per
    log-lengthscale, then log signal variance, then log noise variance.
    """
    A = as_inputs(A, spec.dim)
    if A.shape[0] == 0:
        raise InputShapeError("kern_grad needs at least one input")
    K = kern_cross(spec, A, A)
    ell = spec.hyper.lengthscale
    grads = []
    for d in range(spec.dim):
        diff = (A[:, d, None] - A[None, :, d]) / ell[d]
        grads.append(K * diff**2)
    grads.append(K)
    grads.append(spec.noise_variance * np.eye(A.shape[0]))
    return grads
