"""Explicit minorisation constants and convergence-rate certificates.

Every certificate is assembled from named constants with an audit trail:
each entry records the constant, its value, and a tag naming the
construction it comes from, so a reviewer can replay the chain

    jump floor -> transport spreading -> two-jump lower bound -> contraction.

All mass lower bounds are tracked in log space: confined certificates are
astronomically small (they scale like exp(-R2^2) with R2 the shooting speed)
and are reported honestly rather than clamped.
"""

from dataclasses import dataclass, field
import math
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import i0e, logsumexp

from .errors import (
    ConstraintViolated,
    PreconditionViolated,
    ShootingHorizonExceeded,
)
from .hamiltonian_flow import (
    FlowConfig,
    shooting_time_bound,
    transport_minorisation_constants,
)
from .jump_samplers import kappa_table_for
from .lyapunov_drift import LyapunovSpec, lyapunov_for
from .quadrature import ball_volume, gauss_legendre_nodes, quad

__all__ = [
    "AuditTrail",
    "MinorisationCertificate",
    "HarrisCertificate",
    "DoeblinCertificate",
    "SubgeometricCertificate",
    "doeblin_rate",
    "doeblin_alpha_torus_bgk",
    "optimize_doeblin_torus_bgk",
    "doeblin_alpha_torus_boltzmann",
    "doeblin_alpha_confined",
    "carleman_lower_bound",
    "harris_alpha_bar",
    "subgeometric_rate",
    "assemble_certificate",
    "lyapunov_sublevel_box",
    "norm_conversion",
]


# ---------------------------------------------------------------------------
# audit trail


@dataclass
class AuditTrail:
    entries: list = field(default_factory=list)

    def add(self, name, value, tag):
        self.entries.append((name, float(value), tag))
        return value

    def extend(self, other):
        self.entries.extend(other.entries)

    def render(self):
        width = max((len(n) for n, _, _ in self.entries), default=0)
        return "\n".join(
            f"{n.ljust(width)} = {v:.17g}  # {t}" for n, v, t in self.entries
        )


# ---------------------------------------------------------------------------
# certificates


@dataclass(frozen=True)
class MinorisationCertificate:
    """P_{t*} delta_z >= alpha * nu for all z in the stated region."""

    t_star: float
    alpha: float
    log_alpha: float
    density_floor_log: float  # log of the pointwise density lower bound
    nu: str
    region: str
    x_radius: Optional[float] = None  # nu support radii (None on the torus)
    v_radius: Optional[float] = None
    trail: AuditTrail = field(default_factory=AuditTrail)

    def __post_init__(self):
        if not (self.log_alpha < 0.0):
            raise ConstraintViolated("minorisation mass must lie in (0, 1)")


@dataclass(frozen=True)
class DoeblinCertificate:
    minorisation: MinorisationCertificate
    lam_rate: float
    prefactor: float
    trail: AuditTrail

    def bound_tv(self, t, d0=2.0):
        t = np.asarray(t, float)
        return self.prefactor * d0 * np.exp(-self.lam_rate * t)


@dataclass(frozen=True)
class HarrisCertificate:
    minorisation: MinorisationCertificate
    lyapunov: LyapunovSpec
    t_star: float
    alpha_D: float
    D: float
    R: float
    beta0: float
    alpha0: float
    abar: float
    abar_gap: float  # 1 - abar, kept separately (abar may round to 1.0)
    a_weight: float
    lam_rate: float
    trail: AuditTrail

    def bound_weighted(self, t, d0):
        """Upper bound on the (1 + a V)-weighted distance started at d0."""
        t = np.asarray(t, float)
        if self.a_weight <= 0.0:
            return np.full_like(t, np.inf)  # gap below double resolution
        conv = max(1.0, self.a_weight) / min(1.0, self.a_weight)
        steps = np.floor(t / self.t_star)
        log_abar = math.log1p(-self.abar_gap) if self.abar_gap > 1e-15 else (
            -self.abar_gap
        )
        return conv * d0 * np.exp(steps * log_abar)


@dataclass(frozen=True)
class SubgeometricRateCurve:
    """Two-term bound  C mu(V)/Hinv(lam t) + C/(lam phi(Hinv(lam t)))  with
    phi(s) = 1 + s^q (the drift UV <= -lam V^q + K rescales into
    UV <= K' - lam phi(V))."""

    q: float
    mu_V: float
    C: float
    lam: float = 1.0

    def H(self, u):
        """H_phi(u) = int_1^u ds/(1 + s^q), adaptive quadrature (cached)."""
        u = float(u)
        if u < 1.0:
            raise ValueError("H_phi is defined on [1, inf)")
        return _hphi_cached(self.q, u)

    def H_inv(self, t):
        t = float(t)
        if t <= 0.0:
            return 1.0
        hi = 10.0
        while self.H(hi) < t:
            hi *= 8.0
            if hi > 1e300:
                raise ValueError("H_phi inverse out of range")
        return brentq(lambda u: self.H(u) - t, 1.0, hi, xtol=1e-12, rtol=1e-14)

    def bound(self, t):
        t = np.atleast_1d(np.asarray(t, float))
        out = np.empty_like(t)
        for i, ti in enumerate(t):
            u = self.H_inv(self.lam * ti)
            phi = 1.0 + u**self.q
            out[i] = self.C * self.mu_V / u + self.C / (self.lam * phi)
        return out if out.size > 1 else float(out[0])

    @property
    def asymptotic_exponent(self):
        return self.q / (1.0 - self.q)


_HPHI_CACHE = {}


def _hphi_cached(q, u):
    key = (q, round(math.log(u), 12))
    if key not in _HPHI_CACHE:
        _HPHI_CACHE[key] = quad(lambda s: 1.0 / (1.0 + s**q), 1.0, u)
    return _HPHI_CACHE[key]


def subgeometric_rate(beta_or_q, mu_V, C=2.0, lam=1.0):
    """Two-term weak-drift rate curve for phi(s) = 1 + s^q."""
    q = float(beta_or_q)
    if not 0.0 < q < 1.0:
        raise ValueError("the subgeometric exponent must lie in (0, 1)")
    return SubgeometricRateCurve(q=q, mu_V=float(mu_V), C=float(C), lam=float(lam))


@dataclass(frozen=True)
class SubgeometricCertificate:
    minorisation: MinorisationCertificate
    lyapunov: LyapunovSpec
    rate: SubgeometricRateCurve
    trail: AuditTrail

    def bound_tv(self, t, mu_V=None, d0=2.0):
        curve = self.rate if mu_V is None else subgeometric_rate(
            self.rate.q, mu_V, self.rate.C, self.rate.lam
        )
        return np.minimum(d0, curve.bound(t))


# ---------------------------------------------------------------------------
# Doeblin rate


def doeblin_rate(t_star, alpha, log_alpha=None):
    """(lam, prefactor) of the TV decay prefactor * exp(-lam t).

    lam = -log(1 - alpha)/t_star (the positive rate consistent with the
    (1-alpha)^n per-step contraction), prefactor = 1/(1 - alpha).
    """
    if t_star <= 0.0:
        raise ValueError("t_star must be positive")
    if log_alpha is None:
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        log_alpha = math.log(alpha)
    if alpha >= 1.0:
        raise ValueError("alpha must lie strictly below 1")
    if alpha > 1e-15:
        lam = -math.log1p(-alpha) / t_star
        prefactor = 1.0 / (1.0 - alpha)
    else:
        alpha_eff = math.exp(log_alpha)
        lam = alpha_eff / t_star
        prefactor = 1.0
    return lam, prefactor


# ---------------------------------------------------------------------------
# torus relaxation minorisation


def doeblin_alpha_torus_bgk(t_star, d, delta_L=None):
    """Uniform minorisation of the torus relaxation process at time t_star.

    Two jump events (rate-1 clock, Maxwellian refresh) separated by a
    transport stretch longer than t_star/3 put every start below a uniform
    density on T^d x B(delta_L):

        f(t_star) >= (1/9) e^{-t_star} t_star^{2-d} alpha_L^2
                     on {|v| <= delta_L},

    with alpha_L the Maxwellian value at speed delta_L.  delta_L must exceed
    2R/t0 = 6R/t_star with R slightly above sqrt(d).
    """
    trail = AuditTrail()
    if t_star <= 0.0:
        raise ValueError("t_star must be positive")
    R = 1.01 * math.sqrt(d)
    t0 = t_star / 3.0
    delta_min = 2.0 * R / t0
    if delta_L is None:
        delta_L = max(1.01 * delta_min, math.sqrt(0.5 * d))
    if delta_L <= delta_min:
        raise ConstraintViolated(
            f"delta_L = {delta_L:g} must exceed 2R/t0 = {delta_min:g} "
            f"for t_star = {t_star:g}"
        )
    trail.add("t_star", t_star, "minorisation time")
    trail.add("R", R, "torus reachability radius > sqrt(d)")
    trail.add("delta_L", delta_L, "velocity floor radius")
    log_alpha_L = -0.5 * d * math.log(2.0 * math.pi) - 0.5 * delta_L**2
    trail.add("alpha_L", math.exp(log_alpha_L), "maxwellian jump floor")
    log_c = (
        math.log(1.0 / 9.0)
        - t_star
        + (2.0 - d) * math.log(t_star)
        + 2.0 * log_alpha_L
    )
    trail.add("density_floor", math.exp(log_c), "two-jump duhamel floor")
    log_alpha = log_c + math.log(ball_volume(d, delta_L))
    alpha = math.exp(log_alpha)
    if alpha >= 1.0:
        raise ConstraintViolated("computed minorisation mass exceeds 1")
    trail.add("alpha", alpha, "minorisation mass")
    return MinorisationCertificate(
        t_star=t_star,
        alpha=alpha,
        log_alpha=log_alpha,
        density_floor_log=log_c,
        nu=f"uniform on T^{d} x B({delta_L:g})",
        region="everywhere",
        v_radius=delta_L,
        trail=trail,
    )


def optimize_doeblin_torus_bgk(d, t_lo=0.5, t_hi=16.0, n_grid=200):
    """Maximise the Doeblin rate -log(1-alpha)/t_star over (t_star, delta_L)."""

    def rate(ts):
        R = 1.01 * math.sqrt(d)
        delta_min = 6.0 * R / ts
        delta = max(1.01 * delta_min, math.sqrt(0.5 * d))
        cert = doeblin_alpha_torus_bgk(ts, d, delta)
        return -math.log1p(-cert.alpha) / ts

    grid = np.linspace(t_lo, t_hi, n_grid)
    vals = [rate(ts) for ts in grid]
    i = int(np.argmax(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, n_grid - 1)]
    # golden-section refinement
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    e = a + invphi * (b - a)
    fc, fe = rate(c), rate(e)
    for _ in range(60):
        if fc > fe:
            b, e, fe = e, c, fc
            c = b - invphi * (b - a)
            fc = rate(c)
        else:
            a, c, fc = c, e, fe
            e = a + invphi * (b - a)
            fe = rate(e)
    ts = 0.5 * (a + b)
    R = 1.01 * math.sqrt(d)
    delta = max(1.01 * 6.0 * R / ts, math.sqrt(0.5 * d))
    return doeblin_alpha_torus_bgk(ts, d, delta)


# ---------------------------------------------------------------------------
# Carleman gain lower bound (hard spheres)


def _carleman_log_density(sv, sw, u, gamma, d, b0):
    """log of the gain kernel density k(w -> v), stable for large radii.

    k(w -> v) = 2^{d-1} b0 / rho * int_{plane normal to v-w through v}
                M(y) L^{gamma+2-d} dS(y),   L^2 = rho^2 + |y - v|^2,

    reduced to closed form (d=1), a 1-D line integral (d=2), or a radial
    Bessel integral (d=3); the quadratures are summed in log space.
    """
    sv, sw, u = np.broadcast_arrays(
        np.asarray(sv, float), np.asarray(sw, float), np.asarray(u, float)
    )
    rho2 = np.maximum(sv * sv + sw * sw - 2.0 * sv * sw * u, 1e-24)
    rho = np.sqrt(rho2)
    vpar = (sv * sv - sv * sw * u) / rho
    vt2 = np.maximum(sv * sv - vpar * vpar, 0.0)
    vt = np.sqrt(vt2)
    if d == 1:
        return (
            math.log(b0)
            + gamma * np.log(rho)
            - 0.5 * math.log(2.0 * math.pi)
            - 0.5 * sv * sv
        )
    r_hi = float(np.max(vt)) + 12.0
    r, w = gauss_legendre_nodes(240, 1e-12, r_hi)
    logw = np.log(w)
    if d == 2:
        terms = []
        for sgn in (1.0, -1.0):
            lg = (
                logw
                + 0.5 * gamma * np.log(rho2[..., None] + r**2)
                - 0.5 * (vpar[..., None] ** 2 + (vt[..., None] + sgn * r) ** 2)
            )
            terms.append(lg)
        lse = logsumexp(np.concatenate(terms, axis=-1), axis=-1)
        return math.log(2.0 * b0 / (2.0 * math.pi)) - np.log(rho) + lse
    # d == 3: azimuthal integral gives 2 pi I0(r vt); i0e is the scaled I0
    lg = (
        logw
        + np.log(r)
        + 0.5 * (gamma - 1.0) * np.log(rho2[..., None] + r**2)
        - 0.5 * (r - vt[..., None]) ** 2
        + np.log(i0e(r * vt[..., None]))
    )
    lse = logsumexp(lg, axis=-1)
    return (
        math.log(4.0 * b0 * 2.0 * math.pi)
        - 1.5 * math.log(2.0 * math.pi)
        - np.log(rho)
        - 0.5 * vpar**2
        + lse
    )


def carleman_lower_bound_log(R_L, r_L, kernel, d, n_grid=21, pad=0.95):
    """log of the gain-density lower bound from B(R_L) into B(r_L)."""
    if kernel.angular_form != "uniform":
        raise ValueError("the gain lower bound is implemented for hard spheres")
    sv = np.linspace(0.0, r_L, n_grid)
    sw = np.linspace(0.0, R_L, n_grid)
    uu = np.linspace(-1.0, 1.0, n_grid)
    SV, SW, U = np.meshgrid(sv, sw, uu, indexing="ij")
    k = _carleman_log_density(SV, SW, U, kernel.gamma, d, kernel.b0)
    i = np.unravel_index(np.argmin(k), k.shape)
    # local refinement around the coarse minimiser
    dv, dw, du = r_L / n_grid, R_L / n_grid, 2.0 / n_grid
    sv2 = np.clip(np.linspace(SV[i] - dv, SV[i] + dv, 9), 0.0, r_L)
    sw2 = np.clip(np.linspace(SW[i] - dw, SW[i] + dw, 9), 0.0, R_L)
    uu2 = np.clip(np.linspace(U[i] - du, U[i] + du, 9), -1.0, 1.0)
    SV2, SW2, U2 = np.meshgrid(sv2, sw2, uu2, indexing="ij")
    k2 = _carleman_log_density(SV2, SW2, U2, kernel.gamma, d, kernel.b0)
    return math.log(pad) + float(min(k.min(), k2.min()))


def carleman_lower_bound(R_L, r_L, kernel, d, n_grid=21, pad=0.95):
    """Gain-density lower bound (may underflow to 0; see the log variant)."""
    return math.exp(carleman_lower_bound_log(R_L, r_L, kernel, d, n_grid, pad))


def _log_carleman_surrogate(R_L, r_L):
    """Scaling of the gain floor, used only to rank window candidates."""
    return -2.0 * R_L**2 - 3.0 * r_L**2


# ---------------------------------------------------------------------------
# confined minorisation (both processes) and the torus scattering variant


def _phi_radial_max(potential, R):
    grid = np.linspace(0.0, R, 2049)
    return float(np.max(potential.radial_value(grid)))


def _sublevel_radius(potential, level, lo):
    """Largest |x| with Phi(x) <= level (radial confining potential)."""
    f = lambda r: float(potential.radial_value(r)) - level
    hi = max(lo, 1.0)
    while f(hi) <= 0.0:
        hi *= 1.5
        if hi > 1e9:
            raise ValueError("potential level set is unbounded")
    return brentq(f, lo if f(lo) < 0 else 0.0, hi, xtol=1e-10)


def doeblin_alpha_confined(process_kind, potential, kernel, t, K_support, d,
                           flow_config=FlowConfig(dt=1e-3), kappa_table=None):
    """Minorisation for starts in B(K) x B(K) under a confining potential.

    Pipeline: energy sublevel radius R; shooting time bound t1; a flight
    window [a, b] inside (0, min(t1, t - eps)) chosen to maximise the final
    mass; the jump floor alpha_L (Maxwellian value for the relaxation
    process, Carleman gain bound for scattering); the transport Jacobian
    constant 1/M; and the final-drift window factor eps (b - a).
    """
    trail = AuditTrail()
    if t <= 0.0:
        raise ValueError("t must be positive")
    h_max = _phi_radial_max(potential, K_support) + 0.5 * K_support**2
    trail.add("H_max", h_max, "energy cap of the start box")
    R = max(_sublevel_radius(potential, h_max, K_support), K_support)
    trail.add("R", R, "position sublevel radius")
    t1 = shooting_time_bound(R, potential)
    trail.add("t1", t1, "shooting time bound")
    b_hard = min(0.99 * t1, t)
    if not np.isfinite(b_hard) or b_hard <= 0.0:
        raise ShootingHorizonExceeded("no feasible flight window")
    c_R = potential.grad_sup_bound(R)

    def window(a):
        R2 = 4.0 * R / a
        eps = min(R / (2.0 * R2), math.sqrt(R) / (2.0 * math.sqrt(c_R))
                  if c_R > 0 else math.inf, R2 / (2.0 * R))
        b = min(0.99 * t1, t - eps)
        return R2, eps, b

    def objective(a):
        R2, eps, b = window(a)
        if b <= a or eps <= 0.0:
            return -math.inf
        if process_kind == "bgk":
            log_al = -0.5 * d * math.log(2.0 * math.pi) - 0.5 * R2 * R2
        else:
            E0 = _phi_radial_max(potential, R) + 0.5 * R2 * R2
            R_prime = 1.01 * math.sqrt(2.0 * E0)
            log_al = _log_carleman_surrogate(max(R, R_prime), R2)
        return 2.0 * log_al + math.log(eps * (b - a)) + (d + 1) * math.log(R2)

    a_grid = np.linspace(0.02 * b_hard, 0.98 * b_hard, 120)
    vals = [objective(a) for a in a_grid]
    i = int(np.argmax(vals))
    if not np.isfinite(vals[i]):
        raise ShootingHorizonExceeded(
            f"t = {t:g} leaves no window below the shooting bound {t1:g}"
        )
    a = float(a_grid[i])
    R2, eps, b = window(a)
    trail.add("a", a, "window start")
    trail.add("b", b, "window end")
    trail.add("R2", R2, "shooting speed bound 4R/a")
    trail.add("eps", eps, "final-drift persistence time")

    # uniform transport constant over the window
    Ms = [
        transport_minorisation_constants(R, s, potential, d, flow_config).M
        for s in (a, 0.5 * (a + b), b)
    ]
    M = max(Ms)
    trail.add("M", M, "transport jacobian sup (padded)")

    if process_kind == "bgk":
        log_alpha_L = -0.5 * d * math.log(2.0 * math.pi) - 0.5 * R2 * R2
        trail.add("alpha_L", math.exp(log_alpha_L), "maxwellian jump floor")
        log_rate_factor = -t
        trail.add("loss_rate", 1.0, "unit relaxation clock")
    else:
        E0 = _phi_radial_max(potential, R) + 0.5 * R2 * R2
        R_prime = 1.01 * math.sqrt(2.0 * E0)
        R_L = max(R, R_prime)
        trail.add("E0", E0, "transport energy cap")
        trail.add("R_prime", R_prime, "post-transport velocity radius")
        log_alpha_L = carleman_lower_bound_log(R_L, R2, kernel, d)
        trail.add("log_alpha_L", log_alpha_L, "carleman gain floor (log)")
        if kappa_table is None:
            kappa_table = kappa_table_for(kernel, d)
        E_red = _phi_radial_max(potential, R) + 0.5 * max(R_L, R2) ** 2
        vmax = math.sqrt(2.0 * max(E_red - potential.lower_bound, 0.0))
        C1 = kappa_table.eval(vmax) * 1.01
        trail.add("C1", C1, "energy-cutoff loss rate")
        log_rate_factor = -t * C1

    log_c = log_rate_factor + 2.0 * log_alpha_L + math.log(eps * (b - a) / M)
    trail.add("density_floor_log", log_c, "two-jump duhamel floor (log)")
    log_alpha = (
        log_c
        + math.log(ball_volume(d, R / 2.0))
        + math.log(ball_volume(d, R2 / 2.0))
    )
    trail.add("log_alpha", log_alpha, "minorisation mass (log)")
    alpha = math.exp(log_alpha)
    return MinorisationCertificate(
        t_star=t,
        alpha=min(alpha, 0.5),  # never vacuous; exp underflow may give 0
        log_alpha=min(log_alpha, math.log(0.5)),
        density_floor_log=log_c,
        nu=f"uniform on B({R / 2.0:g}) x B({R2 / 2.0:g})",
        region=f"starts in B({K_support:g}) x B({K_support:g})",
        x_radius=R / 2.0,
        v_radius=R2 / 2.0,
        trail=trail,
    )


def doeblin_alpha_torus_boltzmann(t_star, d, v_support, kernel,
                                  kappa_table=None):
    """Torus scattering minorisation for starts with |v0| <= v_support.

    Same two-jump chain as the relaxation case with the Maxwellian floor
    replaced by the Carleman gain bound and the unit clock replaced by the
    energy-cutoff rate bound.
    """
    trail = AuditTrail()
    R = 1.01 * math.sqrt(d)
    t0 = t_star / 3.0
    delta_min = 2.0 * R / t0
    delta_L = max(1.01 * delta_min, math.sqrt(0.5 * d))
    trail.add("t_star", t_star, "minorisation time")
    trail.add("delta_L", delta_L, "velocity floor radius")
    R_prime = delta_L
    R_L = max(v_support, R_prime)
    log_alpha_L = carleman_lower_bound_log(R_L, delta_L, kernel, d)
    trail.add("log_alpha_L", log_alpha_L, "carleman gain floor (log)")
    if kappa_table is None:
        kappa_table = kappa_table_for(kernel, d)
    C1 = kappa_table.eval(max(v_support, delta_L)) * 1.01
    trail.add("C1", C1, "energy-cutoff loss rate")
    log_c = (
        math.log(1.0 / 9.0)
        - t_star * C1
        + (2.0 - d) * math.log(t_star)
        + 2.0 * log_alpha_L
    )
    trail.add("density_floor_log", log_c, "two-jump duhamel floor (log)")
    log_alpha = log_c + math.log(ball_volume(d, delta_L))
    trail.add("log_alpha", log_alpha, "minorisation mass (log)")
    return MinorisationCertificate(
        t_star=t_star,
        alpha=min(math.exp(log_alpha), 0.5),
        log_alpha=min(log_alpha, math.log(0.5)),
        density_floor_log=log_c,
        nu=f"uniform on T^{d} x B({delta_L:g})",
        region=f"starts with |v| <= {v_support:g}",
        v_radius=delta_L,
        trail=trail,
    )


# ---------------------------------------------------------------------------
# Harris contraction


def harris_alpha_bar(minorisation, alpha_D, D, R, beta0=None, alpha0=None,
                     lyapunov=None, trail=None):
    """Contraction factor of the weighted-norm step map.

    With gamma = beta0 / D,
        abar = max{ 1 - (beta - beta0), (2 + R gamma alpha0)/(2 + R gamma) },
    requiring R > 2D/(1 - alpha_D), beta0 in (0, beta) and
    alpha0 in (alpha_D + 2D/R, 1).  The gap 1 - abar is tracked in log space
    because confined minorisation masses routinely underflow doubles.
    """
    beta = minorisation.alpha
    log_beta = minorisation.log_alpha
    if trail is None:
        trail = AuditTrail()
    if not 0.0 < alpha_D < 1.0:
        raise PreconditionViolated(f"alpha_D = {alpha_D:g} must lie in (0, 1)")
    if R <= 2.0 * D / (1.0 - alpha_D):
        raise PreconditionViolated(
            f"R = {R:g} violates R > 2D/(1-alpha_D) = "
            f"{2.0 * D / (1.0 - alpha_D):g}"
        )
    if beta0 is None:
        log_beta0 = log_beta - math.log(2.0)
        beta0 = math.exp(log_beta0)
        log_gap1 = log_beta0  # beta - beta/2
    else:
        if not 0.0 < beta0 < beta:
            raise PreconditionViolated(
                f"beta0 = {beta0:g} must lie in (0, beta = {beta:g})"
            )
        log_beta0 = math.log(beta0)
        log_gap1 = log_beta + math.log1p(-math.exp(log_beta0 - log_beta))
    lo = alpha_D + 2.0 * D / R
    if alpha0 is None:
        alpha0 = 0.5 * (lo + 1.0)
    if not lo < alpha0 < 1.0:
        raise PreconditionViolated(
            f"alpha0 = {alpha0:g} must lie in ({lo:g}, 1)"
        )
    log_gamma_w = log_beta0 - math.log(D)
    gamma_w = math.exp(log_gamma_w)
    log_rg = math.log(R) + log_gamma_w
    log_gap2 = (
        log_rg + math.log1p(-alpha0) - np.logaddexp(math.log(2.0), log_rg)
    )
    log_gap = min(log_gap1, log_gap2)
    gap = math.exp(log_gap)
    abar = 1.0 - gap
    if not log_gap < 0.0:
        raise PreconditionViolated("contraction gap is not in (0, 1)")
    trail.add("alpha_D", alpha_D, "one-step drift factor exp(-lam t*)")
    trail.add("D", D, "one-step drift offset K/lam")
    trail.add("R", R, "small-set level")
    trail.add("log_beta0", log_beta0, "minorisation share (log)")
    trail.add("alpha0", alpha0, "drift share")
    trail.add("log_a_weight", log_gamma_w, "weighted-norm coefficient (log)")
    trail.add("log_abar_gap", log_gap, "contraction gap 1 - abar (log)")
    lam_rate = (-math.log1p(-gap) if gap > 1e-15 else gap) / minorisation.t_star
    trail.add("lam_rate", lam_rate, "weighted-norm decay rate")
    return HarrisCertificate(
        minorisation=minorisation,
        lyapunov=lyapunov,
        t_star=minorisation.t_star,
        alpha_D=alpha_D,
        D=D,
        R=R,
        beta0=beta0,
        alpha0=alpha0,
        abar=abar,
        abar_gap=gap,
        a_weight=gamma_w,
        lam_rate=lam_rate,
        trail=trail,
    )


def optimize_harris(minor_builder, lam, K, t_grid=(0.5, 1.0, 2.0, 4.0),
                    r_factors=(1.2, 2.2, 5.0), beta0_shares=(0.25, 0.5, 0.75),
                    alpha0_shares=(0.25, 0.5, 0.75), lyapunov=None):
    """Grid search over (t*, R, beta0, alpha0) maximising the decay rate.

    ``minor_builder(t_star, R)`` returns the MinorisationCertificate whose
    small set is the V-sublevel set at R.  Gaps are compared in log space
    (the rates themselves typically underflow).
    """
    best = None
    best_key = -math.inf
    for t_star in t_grid:
        alpha_D = math.exp(-lam * t_star)
        D = K / lam
        for rf in r_factors:
            R = rf * 2.0 * D / (1.0 - alpha_D)
            minor = minor_builder(t_star, R)
            for bs in beta0_shares:
                beta0 = None if bs == 0.5 else math.exp(
                    minor.log_alpha + math.log(bs)
                )
                for as_ in alpha0_shares:
                    lo = alpha_D + 2.0 * D / R
                    alpha0 = lo + as_ * (1.0 - lo)
                    try:
                        cert = harris_alpha_bar(
                            minor, alpha_D, D, R,
                            beta0=beta0 if beta0 and beta0 > 0.0 else None,
                            alpha0=alpha0, lyapunov=lyapunov,
                        )
                    except PreconditionViolated:
                        continue
                    trail_gap = [v for n, v, _ in cert.trail.entries
                                 if n == "log_abar_gap"]
                    key = (trail_gap[-1] if trail_gap else
                           math.log(max(cert.abar_gap, 1e-300))) / t_star
                    if key > best_key:
                        best_key = key
                        best = cert
    if best is None:
        raise PreconditionViolated("no feasible Harris tuning on the grid")
    return best


# ---------------------------------------------------------------------------
# sublevel boxes and norm conversions


def lyapunov_sublevel_box(spec, R_level):
    """(x_max, v_max) bounding the sublevel set {V <= R_level}."""
    if spec.form == "torus_boltzmann_v2":
        return None, math.sqrt(R_level)
    if spec.form in ("confined_bgk", "subgeometric_bgk", "confined_boltzmann"):
        a, b = spec.a, spec.b
        # min over v at fixed x of the velocity part: -(a x)^2 / 2
        c0 = 1.0 if spec.form != "confined_boltzmann" else 0.0
        pot = spec.potential

        def vmin_given_x(r):
            return c0 + pot.radial_value(r) - pot.lower_bound + (
                b - 0.5 * a * a
            ) * r * r

        x_max = _box_solve(vmin_given_x, R_level)
        # min over x at fixed v: quadratic in |x| with the potential >= 0
        def vmin_given_v(s):
            return c0 + 0.5 * s * s - a * a * s * s / (4.0 * b)

        v_max = _box_solve(vmin_given_v, R_level)
        return x_max, v_max
    if spec.form == "subgeometric_boltzmann":
        a, b = spec.a, spec.b
        pot = spec.potential

        def vx(r):
            return pot.radial_value(r) - pot.lower_bound + (
                b - 4.0 * a * a
            ) * math.sqrt(1.0 + r * r)

        def vv(s):
            return 0.25 * s * s

        return _box_solve(vx, R_level), _box_solve(vv, R_level)
    raise ValueError(f"no sublevel box for form {spec.form!r}")


def _box_solve(f, level, hi0=1.0):
    if f(0.0) >= level:
        return 0.0
    hi = hi0
    while f(hi) < level:
        hi *= 2.0
        if hi > 1e12:
            raise ValueError("sublevel set appears unbounded")
    return brentq(lambda r: f(r) - level, 0.0, hi, xtol=1e-9)


def norm_conversion(weight_fn, spec, a_weight, r_hi=500.0, n=1001):
    """(k1, k2) with  w <= k1 (1 + aV)  and  (1 + aV) <= k2 w  on a grid.

    Both weights are radial up to the sign of x.v, so the grid ranges over
    (|x|, |v|, sign) with a 1% pad.
    """
    r = np.linspace(0.0, r_hi, n)
    s = np.linspace(0.0, r_hi, n)
    R, S = np.meshgrid(r, s, indexing="ij")
    k1 = 0.0
    k2 = 0.0
    for sign in (1.0, -1.0):
        x = R.reshape(-1, 1)
        v = (sign * S).reshape(-1, 1)
        w = weight_fn(x, v)
        av = 1.0 + a_weight * spec.V(x, v)
        k1 = max(k1, float(np.max(w / av)))
        k2 = max(k2, float(np.max(av / w)))
    return 1.01 * k1, 1.01 * k2


# ---------------------------------------------------------------------------
# top-level assembly


@dataclass(frozen=True)
class ScenarioCertificate:
    scenario: str
    flavor: str  # doeblin | harris | subgeometric
    certificate: object
    lyapunov: Optional[LyapunovSpec]
    trail: AuditTrail

    def audit_text(self):
        head = [
            f"# certificate audit: {self.scenario}",
            f"# flavor: {self.flavor}",
        ]
        return "\n".join(head) + "\n" + self.trail.render() + "\n"


def assemble_certificate(scenario):
    """End-to-end certificate for a named scenario (see scenarios module)."""
    kind = scenario.kind
    d = scenario.d
    trail = AuditTrail()
    if kind == "torus-bgk":
        minor = optimize_doeblin_torus_bgk(d)
        lam, pref = doeblin_rate(minor.t_star, minor.alpha, minor.log_alpha)
        trail.extend(minor.trail)
        trail.add("lam_rate", lam, "doeblin decay rate")
        trail.add("prefactor", pref, "doeblin prefactor 1/(1-alpha)")
        cert = DoeblinCertificate(minorisation=minor, lam_rate=lam,
                                  prefactor=pref, trail=trail)
        return ScenarioCertificate(kind, "doeblin", cert, None, trail)

    if kind == "torus-boltzmann":
        lyap = lyapunov_for("torus_boltzmann_v2", kernel=scenario.kernel, d=d)
        lam, K, _ = lyap.drift()
        trail.add("lam_drift", lam, "velocity-moment drift rate")
        trail.add("K_drift", K, "velocity-moment drift offset")

        def build(t_star, R):
            _, v_sup = lyapunov_sublevel_box(lyap, R)
            return doeblin_alpha_torus_boltzmann(t_star, d, v_sup,
                                                 scenario.kernel)

        t_grid = (scenario.t_star,) if scenario.t_star else (1.5, 3.0)
        cert = optimize_harris(build, lam, K, t_grid=t_grid,
                               r_factors=(1.5, 3.0), beta0_shares=(0.5,),
                               lyapunov=lyap)
        trail.extend(cert.minorisation.trail)
        trail.extend(cert.trail)
        return ScenarioCertificate(kind, "harris", cert, lyap, trail)

    if kind in ("confined-bgk", "confined-boltzmann"):
        if kind == "confined-bgk":
            lyap = lyapunov_for("confined_bgk", potential=scenario.potential, d=d)
        else:
            lyap = lyapunov_for("confined_boltzmann",
                                potential=scenario.potential,
                                kernel=scenario.kernel, d=d)
        lam, K, _ = lyap.drift()
        trail.add("lam_drift", lam, "lyapunov drift rate")
        trail.add("K_drift", K, "lyapunov drift offset")
        process_kind = "bgk" if kind == "confined-bgk" else "boltzmann"

        def build(t_star, R):
            x_sup, v_sup = lyapunov_sublevel_box(lyap, R)
            return doeblin_alpha_confined(
                process_kind, scenario.potential, scenario.kernel, t_star,
                max(x_sup, v_sup), d,
            )

        t_grid = (scenario.t_star,) if scenario.t_star else (0.5, 1.0)
        cert = optimize_harris(build, lam, K, t_grid=t_grid,
                               r_factors=(1.5, 2.2), beta0_shares=(0.5,),
                               lyapunov=lyap)
        trail.extend(cert.minorisation.trail)
        trail.extend(cert.trail)
        return ScenarioCertificate(kind, "harris", cert, lyap, trail)

    if kind in ("subgeometric-bgk", "subgeometric-boltzmann"):
        if kind == "subgeometric-bgk":
            lyap = lyapunov_for("subgeometric_bgk",
                                potential=scenario.potential, d=d)
        else:
            lyap = lyapunov_for("subgeometric_boltzmann",
                                potential=scenario.potential,
                                kernel=scenario.kernel, d=d)
        lam, K, q = lyap.drift()
        trail.add("lam_drift", lam, "weak drift rate")
        trail.add("K_drift", K, "weak drift offset")
        trail.add("q_drift", q, "weak drift exponent")
        t_star = scenario.t_star or 1.0
        level = max(4.0 * K / lam, 16.0) ** (1.0 / q)
        x_sup, v_sup = lyapunov_sublevel_box(lyap, level)
        K_support = max(x_sup, v_sup)
        trail.add("K_support", K_support, "start box from the sublevel set")
        minor = doeblin_alpha_confined(
            "bgk" if kind == "subgeometric-bgk" else "boltzmann",
            scenario.potential, scenario.kernel, t_star, K_support, d,
        )
        trail.extend(minor.trail)
        rate = subgeometric_rate(q, mu_V=1.0, C=2.0, lam=lam)
        trail.add("C_rate", rate.C, "two-term bound constant")
        trail.add("asymptotic_exponent", rate.asymptotic_exponent,
                  "algebraic decay exponent q/(1-q)")
        cert = SubgeometricCertificate(minorisation=minor, lyapunov=lyap,
                                       rate=rate, trail=trail)
        return ScenarioCertificate(kind, "subgeometric", cert, lyap, trail)

    raise ValueError(f"unknown scenario kind {kind!r}")
