"""Context-aware service derivation over attributed feature models."""

from ctxspl.errors import SplError
from ctxspl.model import (
    Configuration,
    CrossTreeConstraint,
    Feature,
    FeatureModel,
    ModelError,
    PropertyTriple,
    RequirementTriple,
    complete_configuration,
    count_products,
    enumerate_products,
    is_valid_configuration,
    resolve_requirements,
    validate_model,
)

__all__ = [
    "Configuration",
    "CrossTreeConstraint",
    "Feature",
    "FeatureModel",
    "ModelError",
    "PropertyTriple",
    "RequirementTriple",
    "SplError",
    "complete_configuration",
    "count_products",
    "enumerate_products",
    "is_valid_configuration",
    "resolve_requirements",
    "validate_model",
]

__version__ = "0.1.0"
