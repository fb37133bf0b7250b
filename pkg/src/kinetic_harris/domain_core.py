"""Phase-space geometry, equilibria, Maxwellian sampling, potentials, kernels.

Everything downstream (flow integration, jump processes, drift certificates)
consumes the types defined here.  All types are immutable after construction
and safe to share across workers; every sampling routine takes an explicit
``numpy.random.Generator`` so parallel callers own disjoint streams.
"""

from dataclasses import dataclass, field
import math
from typing import Callable, Optional

import numpy as np

from .errors import DriftParamsMissing, EnvelopeRejected, NonConvergedQuadrature
from .quadrature import QuadratureConfig, quad, sphere_area

__all__ = [
    "PhasePoint",
    "DomainSpec",
    "PotentialSpec",
    "DriftParams",
    "CollisionKernelSpec",
    "EquilibriumSpec",
    "maxwellian_density",
    "sample_maxwellian",
    "wrap_torus",
    "equilibrium_normalizer",
    "equilibrium_spec",
    "sample_equilibrium",
    "radial_position_expectation",
    "quadratic_potential",
    "quartic_potential",
    "subquadratic_potential",
    "sublinear_potential",
    "potential_by_name",
]


# ---------------------------------------------------------------------------
# basic types


@dataclass(frozen=True)
class PhasePoint:
    """A position-velocity pair; x and v always share one dimension."""

    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, float)))
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, float)))
        if self.x.shape != self.v.shape:
            raise ValueError("x and v must have the same dimension")

    @property
    def d(self):
        return self.x.shape[-1]


@dataclass(frozen=True)
class DriftParams:
    """Constants of the confinement inequality x.grad(Phi) >= g1*rho_p + g2*Phi - A.

    The radial weight is rho_p(x) = |x|^2 when p == 2 and <x>^p otherwise,
    where <x> = sqrt(1 + |x|^2).  This matches how the two forms are consumed
    by the quadratic-growth and weak-growth certificates respectively.
    """

    gamma1: float
    gamma2: float
    A: float
    p: float

    def weight(self, r):
        r = np.asarray(r, float)
        if self.p == 2.0:
            return r * r
        return (1.0 + r * r) ** (self.p / 2.0)


@dataclass(frozen=True)
class PotentialSpec:
    """A confining potential with the bounds the certificates need.

    ``value``/``gradient``/``hessian`` must accept (..., d) arrays and be
    vectorised over the leading axes.  ``grad_sup_bound(R)`` and
    ``hess_sup_bound(R)`` dominate |grad Phi| and the Hessian operator norm on
    the ball |x| <= R and are monotone in R.  Non-built-in potentials are
    sanity-checked by sampling in ``validate``.
    """

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    grad_sup_bound: Callable[[float], float]
    hess_sup_bound: Callable[[float], float]
    lower_bound: float
    radial: bool = True
    # closed-form drift constants per growth exponent p; see DriftParams
    _drift_table: dict = field(default_factory=dict, repr=False)
    # optional (gamma3, 1+delta) with Phi <= gamma3 * <x>^(1+delta)
    upper_growth: Optional[tuple] = None
    # (kernel_id, params) when the compiled simulation core knows this family
    kernel_repr: Optional[tuple] = None

    def shifted_value(self, x):
        """Phi - inf Phi, the nonnegative version used inside Lyapunov weights."""
        return self.value(x) - self.lower_bound

    def drift(self, p):
        key = round(float(p), 12)
        if key not in self._drift_table:
            raise DriftParamsMissing(
                f"potential {self.name!r} has no drift constants for growth p={p}"
            )
        return self._drift_table[key]

    def drift_exponents(self):
        return sorted(self._drift_table)

    def radial_value(self, r):
        r = np.asarray(r, float)
        x = np.zeros(r.shape + (1,))
        # radial potentials only; evaluate along the first axis direction
        x[..., 0] = r
        return self.value(x)

    def radial_gradient_norm(self, r):
        r = np.asarray(r, float)
        x = np.zeros(r.shape + (1,))
        x[..., 0] = r
        g = self.gradient(x)
        return np.abs(g[..., 0])


def _radial_family(name, phi, dphi, d2phi, lower_bound, drift, upper_growth=None,
                   kernel_repr=None):
    """Assemble a PotentialSpec from scalar radial profiles.

    phi, dphi, d2phi take r2 = |x|^2 and return Phi, Phi'(r)/r, and the pair
    needed for the Hessian  D2Phi = (dphi) I + (curv) x x^T.
    """

    def value(x):
        x = np.asarray(x, float)
        return phi(np.sum(x * x, axis=-1))

    def gradient(x):
        x = np.asarray(x, float)
        return dphi(np.sum(x * x, axis=-1))[..., None] * x

    def hessian(x):
        x = np.asarray(x, float)
        r2 = np.sum(x * x, axis=-1)
        a = dphi(r2)
        b = d2phi(r2)
        d = x.shape[-1]
        eye = np.eye(d)
        return a[..., None, None] * eye + b[..., None, None] * (
            x[..., :, None] * x[..., None, :]
        )

    def radial_grad(r):
        r = np.asarray(r, float)
        return np.abs(dphi(r * r) * r)

    def radial_hess_norm(r):
        r = np.asarray(r, float)
        r2 = r * r
        return np.maximum(np.abs(dphi(r2)), np.abs(dphi(r2) + d2phi(r2) * r2))

    def grad_sup_bound(R):
        if R <= 0.0:
            return 0.0
        grid = np.linspace(0.0, R, 4097)
        return 1.0001 * float(np.max(radial_grad(grid)))

    def hess_sup_bound(R):
        grid = np.linspace(0.0, max(R, 0.0), 4097)
        return 1.0001 * float(np.max(radial_hess_norm(grid)))

    return PotentialSpec(
        name=name,
        value=value,
        gradient=gradient,
        hessian=hessian,
        grad_sup_bound=grad_sup_bound,
        hess_sup_bound=hess_sup_bound,
        lower_bound=lower_bound,
        radial=True,
        _drift_table={round(float(p), 12): dp for p, dp in drift.items()},
        upper_growth=upper_growth,
        kernel_repr=kernel_repr,
    )


def _numeric_A(phi, dphi, gamma1, gamma2, p, r_hi=200.0):
    """Smallest padded A with  r phi'(r) >= gamma1 rho_p + gamma2 phi - A on a grid."""
    r = np.linspace(0.0, r_hi, 200001)
    r2 = r * r
    rho = r2 if p == 2.0 else (1.0 + r2) ** (p / 2.0)
    gap = gamma1 * rho + gamma2 * phi(r2) - dphi(r2) * r2
    a = float(np.max(gap))
    return max(a, 0.0) * 1.0001 + 1e-12


def quadratic_potential(c=1.0):
    """Phi = c |x|^2 / 2."""
    phi = lambda r2: 0.5 * c * r2
    dphi = lambda r2: c * np.ones_like(np.asarray(r2, float))
    d2phi = lambda r2: np.zeros_like(np.asarray(r2, float))
    drift = {
        2.0: DriftParams(0.5 * c, 1.0, 0.0, 2.0),
        # <x>^p with p < 2 is dominated by <x>^2 = 1 + |x|^2
        1.0: DriftParams(0.5 * c, 1.0, 0.5 * c, 1.0),
    }
    return _radial_family(
        f"quadratic(c={c:g})", phi, dphi, d2phi, 0.0, drift,
        kernel_repr=(1, (float(c), 0.0)),
    )


def quartic_potential(c=1.0):
    """Phi = c |x|^4 / 4."""
    phi = lambda r2: 0.25 * c * np.asarray(r2, float) ** 2
    dphi = lambda r2: c * np.asarray(r2, float)
    d2phi = lambda r2: 2.0 * c * np.ones_like(np.asarray(r2, float))
    drift = {}
    for p in (2.0, 3.0):
        A = _numeric_A(phi, dphi, 0.5 * c, 2.0, p)
        drift[p] = DriftParams(0.5 * c, 2.0, A, p)
    return _radial_family(
        f"quartic(c={c:g})", phi, dphi, d2phi, 0.0, drift,
        kernel_repr=(2, (float(c), 0.0)),
    )


def subquadratic_potential(c=1.0, beta=0.5):
    """Phi = c <x>^(2 beta) with beta in (0, 1); weak confinement family."""
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    phi = lambda r2: c * (1.0 + np.asarray(r2, float)) ** beta
    dphi = lambda r2: 2.0 * beta * c * (1.0 + np.asarray(r2, float)) ** (beta - 1.0)
    d2phi = lambda r2: (
        4.0 * beta * (beta - 1.0) * c
        * (1.0 + np.asarray(r2, float)) ** (beta - 2.0)
    )
    # r phi' = 2 beta c (<x>^(2b) - <x>^(2b-2)) >= b c <x>^(2b) + b Phi - 2 b c
    drift = {2.0 * beta: DriftParams(beta * c, beta, 2.0 * beta * c, 2.0 * beta)}
    return _radial_family(
        f"subquadratic(c={c:g},beta={beta:g})", phi, dphi, d2phi, c, drift,
        upper_growth=(c, 2.0 * beta),
        kernel_repr=(3, (float(c), float(beta))),
    )


def sublinear_potential(c=1.0, delta=0.0):
    """Phi = c <x>^(1+delta), delta >= 0; the weakest built-in confinement."""
    if delta < 0.0:
        raise ValueError("delta must be >= 0")
    e = 0.5 * (1.0 + delta)
    phi = lambda r2: c * (1.0 + np.asarray(r2, float)) ** e
    dphi = lambda r2: 2.0 * e * c * (1.0 + np.asarray(r2, float)) ** (e - 1.0)
    d2phi = lambda r2: (
        4.0 * e * (e - 1.0) * c * (1.0 + np.asarray(r2, float)) ** (e - 2.0)
    )
    g = 0.5 * (1.0 + delta)
    drift = {
        1.0 + delta: DriftParams(g * c, g, (1.0 + delta) * c, 1.0 + delta)
    }
    return _radial_family(
        f"sublinear(c={c:g},delta={delta:g})", phi, dphi, d2phi, c, drift,
        upper_growth=(c, 1.0 + delta),
        kernel_repr=(4, (float(c), float(delta))),
    )


_POTENTIALS = {
    "quadratic": quadratic_potential,
    "quartic": quartic_potential,
    "subquadratic": subquadratic_potential,
    "sublinear": sublinear_potential,
}


def potential_by_name(name, **params):
    if name not in _POTENTIALS:
        raise KeyError(f"unknown potential family {name!r}")
    return _POTENTIALS[name](**params)


@dataclass(frozen=True)
class DomainSpec:
    """Torus of side 1, or the whole space with a confining potential."""

    d: int
    geometry: str  # "torus" | "whole_space"
    potential: Optional[PotentialSpec] = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be a positive integer")
        if self.geometry not in ("torus", "whole_space"):
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if self.geometry == "whole_space" and self.potential is None:
            raise ValueError("whole-space domain requires a potential")

    @property
    def is_torus(self):
        return self.geometry == "torus"


@dataclass(frozen=True)
class CollisionKernelSpec:
    """Hard collision kernel  B = |v - v*|^gamma * b(cos theta),  gamma >= 0.

    ``angular_form`` is "uniform" (b constant; hard spheres) or "tabulated"
    (an even, uniformly positive b given as a callable on [-1, 1]).
    """

    gamma: float
    b_lower: float
    angular_form: str = "uniform"
    b0: float = 1.0
    b_func: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.gamma < 0.0:
            raise ValueError("gamma must be >= 0 (hard kernels only)")
        if self.b_lower <= 0.0:
            raise ValueError("b must be uniformly positive")
        if self.angular_form not in ("uniform", "tabulated"):
            raise ValueError(f"unknown angular form {self.angular_form!r}")
        if self.angular_form == "tabulated" and self.b_func is None:
            raise ValueError("tabulated form needs b_func")

    def b(self, z):
        z = np.asarray(z, float)
        if self.angular_form == "uniform":
            return np.full_like(z, self.b0)
        return np.asarray(self.b_func(z), float)

    def angular_mass(self, d):
        """Integral of b(sigma . u_hat) over the sphere S^{d-1}."""
        if d == 1:
            return float(self.b(1.0) + self.b(-1.0))
        if self.angular_form == "uniform":
            return self.b0 * sphere_area(d)
        w = (d - 3.0) / 2.0
        val = quad(
            lambda z: float(self.b(z)) * (1.0 - z * z) ** w, -1.0, 1.0,
            QuadratureConfig(1e-12),
        )
        return sphere_area(d - 1) * val

    def mean_cosine(self, d):
        """E[sigma . u_hat] under the normalised angular density (0 if b even)."""
        if d == 1:
            b1, bm = float(self.b(1.0)), float(self.b(-1.0))
            return (b1 - bm) / (b1 + bm)
        if self.angular_form == "uniform":
            return 0.0
        w = (d - 3.0) / 2.0
        num = quad(lambda z: z * float(self.b(z)) * (1.0 - z * z) ** w, -1.0, 1.0)
        den = quad(lambda z: float(self.b(z)) * (1.0 - z * z) ** w, -1.0, 1.0)
        return num / den

    def validate_positivity(self, n=4001):
        z = np.linspace(-1.0, 1.0, n)
        return bool(np.all(self.b(z) >= self.b_lower - 1e-12))


def hard_spheres(gamma=1.0, d=3, unit_mass=True):
    """Uniform angular kernel; b0 chosen so the angular mass is 1 if requested."""
    b0 = 1.0 / sphere_area(d) if unit_mass else 1.0
    return CollisionKernelSpec(gamma=gamma, b_lower=b0, angular_form="uniform", b0=b0)


# ---------------------------------------------------------------------------
# Maxwellian and torus primitives


def maxwellian_density(v):
    """Standard Maxwellian (2 pi)^(-d/2) exp(-|v|^2/2); d from the last axis."""
    v = np.atleast_1d(np.asarray(v, float))
    d = v.shape[-1]
    out = (2.0 * math.pi) ** (-d / 2.0) * np.exp(-0.5 * np.sum(v * v, axis=-1))
    return float(out) if out.ndim == 0 else out


def sample_maxwellian(rng, d, n=None):
    """Standard-normal velocity draw(s): (d,) or (n, d)."""
    size = (d,) if n is None else (n, d)
    return rng.standard_normal(size)


def wrap_torus(x):
    """Fold each coordinate into [0, 1); idempotent, preserves x mod 1.

    x - floor(x) rounds to 1.0 for tiny negative x, so that boundary case is
    folded back to 0.0 (the same point on the torus).
    """
    x = np.asarray(x, float)
    out = x - np.floor(x)
    return np.where(out >= 1.0, 0.0, out)


# ---------------------------------------------------------------------------
# equilibrium


@dataclass(frozen=True)
class EquilibriumSpec:
    """The stationary law: M(v) dv dx on the torus, M(v) e^{-Phi} / Z else."""

    domain: DomainSpec
    Z: float = 1.0


def equilibrium_normalizer(potential, d, config=QuadratureConfig()):
    """Z = integral of exp(-Phi) over R^d, by radial reduction."""
    if not potential.radial and d > 1:
        raise NonConvergedQuadrature(
            "normalisation of non-radial potentials is only supported in d=1"
        )
    phi = potential.radial_value
    val = quad(
        lambda r: math.exp(-float(phi(r))) * r ** (d - 1), 0.0, np.inf, config
    )
    return sphere_area(d) * val


def equilibrium_spec(domain, config=QuadratureConfig()):
    if domain.is_torus:
        return EquilibriumSpec(domain=domain, Z=1.0)
    Z = equilibrium_normalizer(domain.potential, domain.d, config)
    return EquilibriumSpec(domain=domain, Z=Z)


def radial_position_expectation(eq, f, config=QuadratureConfig()):
    """E[f(|x|)] under the equilibrium position marginal (whole space)."""
    domain = eq.domain
    pot = domain.potential
    val = quad(
        lambda r: f(r) * math.exp(-float(pot.radial_value(r))) * r ** (domain.d - 1),
        0.0,
        np.inf,
        config,
    )
    return sphere_area(domain.d) * val / eq.Z


def _position_tail_radius(potential, d, tail=1e-12):
    """Radius containing all but `tail` of the e^{-Phi} position mass."""
    total = equilibrium_normalizer(potential, d)
    r = 1.0
    while r < 1e6:
        outer = sphere_area(d) * quad(
            lambda s: math.exp(-float(potential.radial_value(s))) * s ** (d - 1),
            r,
            np.inf,
        )
        if outer <= tail * total:
            return r
        r *= 1.5
    raise NonConvergedQuadrature("position marginal tail does not decay")


class _RadialPositionSampler:
    """Inverse-CDF sampler for the radial position density r^{d-1} e^{-phi(r)}.

    Used for subquadratic potentials, where no Gaussian envelope can dominate
    the tail of e^{-Phi}.
    """

    def __init__(self, potential, d, n=200001):
        r_hi = _position_tail_radius(potential, d, tail=1e-13)
        r = np.linspace(0.0, r_hi, n)
        dens = r ** (d - 1) * np.exp(-(potential.radial_value(r)))
        cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5)])
        cdf *= np.diff(r)[0] if n > 1 else 1.0
        self._r = r
        self._cdf = cdf / cdf[-1]
        self._d = d

    def sample(self, rng, n):
        u = rng.uniform(size=n)
        r = np.interp(u, self._cdf, self._r)
        if self._d == 1:
            sign = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
            return (r * sign)[:, None]
        g = rng.standard_normal((n, self._d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return r[:, None] * g


class _GaussianEnvelopeSampler:
    """Rejection sampler for e^{-Phi}/Z against a fitted isotropic Gaussian.

    Valid whenever Phi grows at least quadratically; the envelope variance is
    fitted from the potential profile and the constant from a padded grid sup.
    """

    def __init__(self, potential, d, acceptance_floor=0.01):
        self._pot = potential
        self._d = d
        self._floor = acceptance_floor
        probe = np.linspace(0.5, 100.0, 2000)
        phi = potential.radial_value(probe) - potential.lower_bound
        s2 = 1.5 * float(np.max(probe**2 / (2.0 * np.maximum(phi, 1e-12) + 2.0)))
        self._s2 = s2
        grid = np.linspace(0.0, 200.0 * math.sqrt(s2), 400001)
        log_ratio = (
            -(potential.radial_value(grid) - potential.lower_bound)
            + grid**2 / (2.0 * s2)
        )
        self._log_m = float(np.max(log_ratio)) + math.log(1.01)

    def sample(self, rng, n):
        out = np.empty((n, self._d))
        got = 0
        proposed = 0
        s = math.sqrt(self._s2)
        while got < n:
            m = max(int((n - got) * 1.5) + 64, 64)
            x = s * rng.standard_normal((m, self._d))
            r = np.linalg.norm(x, axis=1)
            log_acc = (
                -(self._pot.radial_value(r) - self._pot.lower_bound)
                + r**2 / (2.0 * self._s2)
                - self._log_m
            )
            keep = np.log(rng.uniform(size=m)) < log_acc
            k = int(np.sum(keep))
            take = min(k, n - got)
            out[got : got + take] = x[keep][:take]
            got += take
            proposed += m
            if proposed > 2000 and got / proposed < self._floor:
                raise EnvelopeRejected(
                    f"equilibrium rejection acceptance {got / proposed:.3%} "
                    f"below floor {self._floor:.0%}"
                )
        return out


def position_sampler(potential, d, acceptance_floor=0.01):
    """Pick the sampler for the e^{-Phi} position marginal.

    Gaussian-envelope rejection for (super)quadratic growth; a tabulated
    inverse CDF for weaker growth, where a Gaussian envelope cannot dominate.
    """
    ps = potential.drift_exponents()
    if ps and max(ps) >= 2.0:
        return _GaussianEnvelopeSampler(potential, d, acceptance_floor)
    return _RadialPositionSampler(potential, d)


def sample_equilibrium(rng, eq, n, acceptance_floor=0.01, _sampler_cache={}):
    """n i.i.d. phase-space samples from the equilibrium law."""
    domain = eq.domain
    v = sample_maxwellian(rng, domain.d, n)
    if domain.is_torus:
        x = rng.uniform(size=(n, domain.d))
        return x, v
    key = (id(domain.potential), domain.d)
    entry = _sampler_cache.get(key)
    if entry is None:
        sampler = position_sampler(domain.potential, domain.d, acceptance_floor)
        # keep the potential referenced so its id cannot be recycled
        _sampler_cache[key] = entry = (domain.potential, sampler)
    return entry[1].sample(rng, n), v
