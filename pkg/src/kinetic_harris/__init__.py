"""Stochastic simulation of linear kinetic relaxation and scattering
equations with explicit minorisation/drift convergence certificates."""

from ._backend import HAVE_COMPILED, active_backend_name

__version__ = "0.1.0"

__all__ = ["HAVE_COMPILED", "active_backend_name", "__version__"]
