"""Robust extrinsic location estimation and regression on manifolds."""

from .estimators import extrinsic_mean, extrinsic_median
from .geometry import FocalPointError, Manifold
from .relr import KernelSpec, RegressionDataset, elr_fit, relr_fit, relr_fit_fast
from .shape import PlanarShape
from .spd import SPD
from .sphere import Sphere
from .weiszfeld import FermatWeberProblem, WeiszfeldConfig, fermat_weber_solve

__version__ = "0.1.0"

__all__ = [
    "FermatWeberProblem",
    "FocalPointError",
    "KernelSpec",
    "Manifold",
    "PlanarShape",
    "RegressionDataset",
    "SPD",
    "Sphere",
    "WeiszfeldConfig",
    "elr_fit",
    "extrinsic_mean",
    "extrinsic_median",
    "fermat_weber_solve",
    "relr_fit",
    "relr_fit_fast",
]
