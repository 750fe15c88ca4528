"""Dislocation chain dynamics, homogenized flow rules, and level-set fronts."""

from ._kernels import available_backends, get_backend
from .material import MaterialParams, Scales, mu_bar_of, normalize
from .strain import StrainField1D, density_from_strain, plastic_strain_1d

__version__ = "0.1.0"

__all__ = [
    "MaterialParams",
    "Scales",
    "StrainField1D",
    "available_backends",
    "density_from_strain",
    "get_backend",
    "mu_bar_of",
    "normalize",
    "plastic_strain_1d",
    "__version__",
]
