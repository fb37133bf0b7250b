"""Named experiment scenarios and their validated configuration.

A scenario bundles the process (relaxation or scattering), the geometry
(torus or confining potential), the collision kernel, and the Monte Carlo
run parameters.  The six named kinds mirror the three convergence regimes
(torus, quadratic-or-stronger confinement, weak confinement), one per
process.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .domain_core import (
    CollisionKernelSpec,
    DomainSpec,
    PotentialSpec,
    equilibrium_spec,
    potential_by_name,
    sphere_area,
)
from .errors import ConfigError
from .hamiltonian_flow import FlowConfig
from .jump_samplers import Ensemble, ProcessSpec

SCENARIO_KINDS = (
    "torus-bgk",
    "torus-boltzmann",
    "confined-bgk",
    "confined-boltzmann",
    "subgeometric-bgk",
    "subgeometric-boltzmann",
)


@dataclass(frozen=True)
class ScenarioConfig:
    """A fully resolved experiment: process, constants, and run parameters."""

    kind: str
    d: int = 1
    potential: Optional[PotentialSpec] = None
    kernel: Optional[CollisionKernelSpec] = None
    n_particles: int = 100_000
    t_final: float = 20.0
    n_snapshots: int = 20
    snapshot_times: Optional[tuple] = None
    seed: int = 7
    bins_per_axis: int = 32
    dt: float = 1e-2
    t_star: Optional[float] = None
    start: str = "dirac"  # dirac | maxwellian_at | equilibrium
    start_x: float = 0.5
    start_v: float = 5.0
    output_dir: str = "."
    workers: Optional[int] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ConfigError(f"unknown scenario {self.kind!r}")
        if self.d < 1:
            raise ConfigError("d must be a positive integer")
        if self.n_particles < 1:
            raise ConfigError("n must be positive")
        if self.t_final <= 0.0:
            raise ConfigError("t_final must be positive")
        if self.bins_per_axis < 2:
            raise ConfigError("bins_per_axis must be at least 2")
        if self.is_torus and self.potential is not None:
            pass  # tolerated; validate() emits a warning for the ignored field
        if not self.is_torus and self.potential is None:
            raise ConfigError(f"{self.kind} needs a potential")
        if self.is_boltzmann and self.kernel is None:
            raise ConfigError(f"{self.kind} needs a collision kernel")
        if self.kind == "subgeometric-bgk":
            ps = [p for p in self.potential.drift_exponents() if p < 2.0]
            if not ps:
                raise ConfigError(
                    "subgeometric-bgk needs a potential with growth exponent "
                    "2*beta, beta in (0, 1)"
                )
        if self.snapshot_times is not None:
            ts = np.asarray(self.snapshot_times, float)
            if np.any(np.diff(ts) <= 0.0) or ts[0] < 0.0 or ts[-1] > self.t_final:
                raise ConfigError(
                    "snapshot_times must be sorted within [0, t_final]"
                )

    @property
    def is_torus(self):
        return self.kind.startswith("torus")

    @property
    def is_boltzmann(self):
        return self.kind.endswith("boltzmann")

    def domain(self):
        if self.is_torus:
            return DomainSpec(d=self.d, geometry="torus")
        return DomainSpec(d=self.d, geometry="whole_space",
                          potential=self.potential)

    def process(self):
        return ProcessSpec(
            kind="boltzmann" if self.is_boltzmann else "bgk",
            domain=self.domain(),
            flow=FlowConfig(dt=self.dt),
            kernel=self.kernel,
        )

    def equilibrium(self):
        return equilibrium_spec(self.domain())

    def snapshots(self):
        """Geometric snapshot spacing by default (log-scale rate fits)."""
        if self.snapshot_times is not None:
            return np.asarray(self.snapshot_times, float)
        lo = min(0.25, self.t_final / self.n_snapshots)
        return np.geomspace(lo, self.t_final, self.n_snapshots)

    def initial_ensemble(self):
        dom = self.domain()
        x0 = np.full(self.d, self.start_x)
        if dom.is_torus:
            x0 = x0 - np.floor(x0)
        v0 = np.zeros(self.d)
        v0[0] = self.start_v
        if self.start == "dirac":
            return Ensemble.dirac(dom, self.n_particles, x0, v0, self.seed)
        if self.start == "maxwellian_at":
            return Ensemble.from_maxwellian_at(dom, self.n_particles, x0,
                                               self.seed)
        if self.start == "equilibrium":
            return Ensemble.from_equilibrium(self.equilibrium(),
                                             self.n_particles, self.seed)
        if self.start == "power_tail":
            # radius density ~ r^-2 on [4, start_x]: mass arrives from ever
            # larger distances at algebraically spread times (the weak-
            # confinement signature); velocities start at rest
            rng = np.random.default_rng(self.seed)
            a, b = 4.0, max(float(self.start_x), 8.0)
            u = rng.uniform(size=self.n_particles)
            r = 1.0 / (1.0 / a - u * (1.0 / a - 1.0 / b))
            sign = np.where(rng.uniform(size=self.n_particles) < 0.5, -1.0, 1.0)
            x = np.zeros((self.n_particles, self.d))
            x[:, 0] = r * sign
            return Ensemble.from_points(
                x, np.zeros_like(x), dom, self.seed
            )
        raise ConfigError(f"unknown start {self.start!r}")


def _default_kernel(kind, d, gamma=1.0, b0=None):
    if b0 is None:
        b0 = 1.0 / sphere_area(d)
    return CollisionKernelSpec(gamma=gamma, b_lower=b0, angular_form="uniform",
                               b0=b0)


def make_scenario(kind, d=1, **overrides):
    """Scenario with the documented defaults for each named kind."""
    params = dict(kind=kind, d=d)
    if kind == "torus-bgk":
        params.update(start="dirac", start_x=0.5, start_v=5.0)
    elif kind == "torus-boltzmann":
        params.update(start="dirac", start_x=0.5, start_v=3.0,
                      kernel=_default_kernel(kind, d))
    elif kind == "confined-bgk":
        params.update(potential=potential_by_name("quadratic", c=1.0),
                      start="dirac", start_x=2.0, start_v=2.0)
    elif kind == "confined-boltzmann":
        params.update(potential=potential_by_name("quartic", c=1.0),
                      kernel=_default_kernel(kind, d),
                      start="dirac", start_x=1.5, start_v=1.5, dt=5e-3)
    elif kind == "subgeometric-bgk":
        params.update(potential=potential_by_name("sublinear", c=1.0, delta=0.0),
                      start="power_tail", start_x=400.0, start_v=0.0,
                      t_final=200.0, n_particles=200_000, bins_per_axis=16,
                      dt=5e-2)
    elif kind == "subgeometric-boltzmann":
        params.update(potential=potential_by_name("sublinear", c=1.0, delta=0.5),
                      kernel=_default_kernel(kind, d),
                      start="dirac", start_x=20.0, start_v=0.0,
                      t_final=100.0, n_particles=100_000, bins_per_axis=16,
                      dt=2e-2)
    else:
        raise ConfigError(f"unknown scenario {kind!r}")
    params.update(overrides)
    return ScenarioConfig(**params)


def potential_from_config(name, params):
    """Potential families addressable from config files."""
    return potential_by_name(name, **params)


_W_DOC = "1 + |v|^2/2 + Phi(x) + |x|^2"


def confined_weight(potential):
    """The weighted-norm weight 1 + |v|^2/2 + Phi~(x) + |x|^2."""

    def w(x, v):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        return (
            1.0
            + 0.5 * np.sum(v * v, axis=-1)
            + potential.shifted_value(x)
            + np.sum(x * x, axis=-1)
        )

    w.__doc__ = _W_DOC
    return w


def torus_weight():
    """The torus scattering weight 1 + |v|^2."""

    def w(x, v):
        v = np.asarray(v, float)
        return 1.0 + np.sum(v * v, axis=-1)

    return w
