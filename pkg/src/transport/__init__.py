"""Transport coefficients from Langevin-type dynamics: models, integrators, forcings and estimators."""

from .models import ContractError

__all__ = ["ContractError"]
__version__ = "0.1.0"
