"""Quadrature compound distributions.

A continuous mixture ``p(x) = int p(x|z) p(z) dz`` is replaced by the finite
mixture ``q_N(x) = sum_n w_n p(x|z_n)`` over a quadrature grid. The grid
weights do not depend on the mixing parameters, so densities, samples and
pathwise gradients are all exact for ``q_N``.
"""

from .distributions import (
    CategoricalIndex,
    MixtureWeightLaw,
    PoissonLogNormalQC,
    QuadratureCompound,
    UnsupportedError,
    VectorDiffeomixture,
    mixture_weight_grid,
    plqc_grad,
    prob_component_larger,
    vdm_density,
    vdm_sample,
)
from .numerics import DomainError, Dual, hermite_rule, std_normal_cdf, std_normal_quantile
from .schemes import QuadratureGrid, QuantileFunction, ResourceError

__version__ = "0.1.0"

__all__ = [
    "CategoricalIndex",
    "DomainError",
    "Dual",
    "MixtureWeightLaw",
    "PoissonLogNormalQC",
    "QuadratureCompound",
    "QuadratureGrid",
    "QuantileFunction",
    "ResourceError",
    "UnsupportedError",
    "VectorDiffeomixture",
    "hermite_rule",
    "mixture_weight_grid",
    "plqc_grad",
    "prob_component_larger",
    "std_normal_cdf",
    "std_normal_quantile",
    "vdm_density",
    "vdm_sample",
]
