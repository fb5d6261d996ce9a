"""Monte Carlo Bismut-type estimators for Feynman-Kac semigroups on model manifolds."""

from .paths import kernel_available

__version__ = "0.1.0"

__all__ = ["kernel_available", "__version__"]
