"""Simulation kernel backends.

Two interchangeable implementations of the per-particle jump-process loops:

* ``kernels_cy`` -- Cython extension, compiled at install time (preferred);
* ``kernels_py`` -- vectorised NumPy fallback, always available.

Both consume identical per-particle counter-based RNG streams (splitmix64,
keyed by ``hash(seed_base, particle_index)``) and draw in the same order, so
ensembles are reproducible and independent of worker count within a backend.
Across backends the integer streams are bit-identical while float
trajectories agree to transcendental-function rounding (numpy's vectorised
log/exp differ from libm by <= 1 ulp).

Selection: ``KINETIC_HARRIS_BACKEND`` = ``compiled`` | ``python`` | ``auto``
(default auto = compiled when importable).
"""

import os

from . import kernels_py

try:
    from . import kernels_cy

    HAVE_COMPILED = True
except ImportError:  # extension not built on this install
    kernels_cy = None
    HAVE_COMPILED = False


def get_backend(name=None):
    """Resolve a backend module by name or the environment default."""
    if name is None:
        name = os.environ.get("KINETIC_HARRIS_BACKEND", "auto")
    if name == "auto":
        name = "compiled" if HAVE_COMPILED else "python"
    if name == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError(
                "compiled backend requested but the extension is not built"
            )
        return kernels_cy
    if name == "python":
        return kernels_py
    raise ValueError(f"unknown backend {name!r}")


def active_backend_name(name=None):
    mod = get_backend(name)
    return "compiled" if mod is kernels_cy else "python"
