"""Function-on-function regression through predictive factors."""

from ffreg.errors import (
    DegenerateFactorError,
    FFRError,
    InvalidArgumentError,
    MulticollinearityError,
    NearDegenerateSpectrumError,
    SingularFitError,
)
from ffreg.factor_select import EDResult, cross_validate_gamma, estimate_num_factors
from ffreg.grid import Curve, CurvePanel, Grid, Kernel, make_uniform_grid
from ffreg.inference import InferenceResult, covariance_surface, infer
from ffreg.primitives import FactorModel, fit_factor_model
from ffreg.regression import FFRFit, ModelSpec, coefficient_surface, fit_ffr, predict

__version__ = "0.1.0"

__all__ = [
    "Curve",
    "CurvePanel",
    "DegenerateFactorError",
    "EDResult",
    "FFRError",
    "FFRFit",
    "FactorModel",
    "Grid",
    "InferenceResult",
    "InvalidArgumentError",
    "Kernel",
    "ModelSpec",
    "MulticollinearityError",
    "NearDegenerateSpectrumError",
    "SingularFitError",
    "coefficient_surface",
    "covariance_surface",
    "cross_validate_gamma",
    "estimate_num_factors",
    "fit_factor_model",
    "fit_ffr",
    "infer",
    "make_uniform_grid",
    "predict",
]
