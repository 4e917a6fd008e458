"""Exact, sparse, structured and hierarchical Gaussian process regression.

Five backends share one kernel and one NLML convention:

* ``full``  - dense Cholesky (:mod:`factgp.dense`)
* ``fitc`` / ``vfe`` - inducing-point approximations (:mod:`factgp.inducing`)
* ``ski``   - grid interpolation with Toeplitz/Kronecker algebra (:mod:`factgp.structured`)
* ``hcfgp`` - HODLR compression with a hierarchical Cholesky (:mod:`factgp.hodlr`)
"""

from .dense import Dataset, Prediction, exact_fit, exact_nlml, exact_nlml_grad, exact_predict
from .errors import FactGPError
from .hodlr import (
    hcfgp_fit,
    hcfgp_predict,
    hodlr_assemble,
    hodlr_cholesky,
    hodlr_factorize,
    hodlr_logdet,
    hodlr_mvm,
    hodlr_solve,
)
from .inducing import (
    InducingSet,
    fitc_fit,
    fitc_nlml,
    fitc_predict,
    optimize_inducing,
    vfe_elbo,
    vfe_fit,
    vfe_predict,
)
from .kernel import HyperParams, KernelSpec, kern_eval, kern_grad
from .structured import RegularGrid, cg_solve, kron_mvm, ski_predict, toeplitz_mvm
from .trainer import OptimizeConfig, gradient_descent, minimize_nlml

__version__ = "0.1.0"

__all__ = [
    "Dataset", "Prediction", "exact_fit", "exact_nlml", "exact_nlml_grad", "exact_predict",
    "FactGPError",
    "hcfgp_fit", "hcfgp_predict", "hodlr_assemble", "hodlr_cholesky", "hodlr_factorize",
    "hodlr_logdet", "hodlr_mvm", "hodlr_solve",
    "InducingSet", "fitc_fit", "fitc_nlml", "fitc_predict", "optimize_inducing",
    "vfe_elbo", "vfe_fit", "vfe_predict",
    "HyperParams", "KernelSpec", "kern_eval", "kern_grad",
    "RegularGrid", "cg_solve", "kron_mvm", "ski_predict", "toeplitz_mvm",
    "OptimizeConfig", "gradient_descent", "minimize_nlml",
]
