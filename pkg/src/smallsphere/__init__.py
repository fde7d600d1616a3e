"""Small-sphere distributions on products of unit spheres.

Densities, samplers, approximate maximum-likelihood estimators and
likelihood-ratio tests for the first-kind (S1, iMS1) and second-kind
(S2, iMS2, MS2) small-sphere families, with the von Mises-Fisher and
Bingham-Mardia distributions as special cases.
"""

from .densities import BM, IMS1, IMS2, MS2, S1, S2, VMF, log_density, log_likelihood, log_norm_const
from .estimation import FitOptions, FitResult, fit_model
from .inference import Hypothesis, TestResult, degrees_of_freedom, lr_test, restricted_fit
from .samplers import make_rng, sample_model
from .sphere import SmallSphere, angular_product_error

__all__ = [
    "BM",
    "IMS1",
    "IMS2",
    "MS2",
    "S1",
    "S2",
    "VMF",
    "FitOptions",
    "FitResult",
    "Hypothesis",
    "SmallSphere",
    "TestResult",
    "angular_product_error",
    "degrees_of_freedom",
    "fit_model",
    "log_density",
    "log_likelihood",
    "log_norm_const",
    "lr_test",
    "make_rng",
    "restricted_fit",
    "sample_model",
]
