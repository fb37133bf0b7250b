"""Adaptive quadrature helpers with spherical reduction for radial integrands.

All integrals over R^d in this package reduce to 1-D radial integrals
(every built-in potential is radial and the Maxwellian is isotropic), so the
workhorses here are thin wrappers around Gauss-Kronrod adaptive quadrature
with an explicit failure mode instead of silent warnings.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import integrate

from .errors import NonConvergedQuadrature


@dataclass(frozen=True)
class QuadratureConfig:
    tol: float = 1e-10
    limit: int = 200


def sphere_area(d):
    """Surface measure of the unit sphere S^{d-1} (two points for d=1)."""
    if d == 1:
        return 2.0
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def ball_volume(d, r):
    return sphere_area(d) / d * r**d


def quad(f, a, b, config=QuadratureConfig(), points=None):
    """scipy.integrate.quad with the package error contract."""
    val, err = integrate.quad(
        f, a, b, epsabs=config.tol, epsrel=config.tol, limit=config.limit,
        points=points,
    )
    scale = max(1.0, abs(val))
    if not math.isfinite(val) or err > 100.0 * config.tol * scale:
        raise NonConvergedQuadrature(
            f"quad on [{a}, {b}]: value={val}, err={err}, tol={config.tol}"
        )
    return val


def radial_integral(f, d, config=QuadratureConfig(), upper=np.inf):
    """Integral over R^d of a radial function f(r), r = |x|."""
    return sphere_area(d) * quad(lambda r: f(r) * r ** (d - 1), 0.0, upper, config)


_LEGGAUSS_CACHE = {}


def gauss_legendre_nodes(n, a, b):
    """Fixed-order Gauss-Legendre rule on [a, b] (vectorisable table builds)."""
    if n not in _LEGGAUSS_CACHE:
        _LEGGAUSS_CACHE[n] = np.polynomial.legendre.leggauss(n)
    x, w = _LEGGAUSS_CACHE[n]
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w
