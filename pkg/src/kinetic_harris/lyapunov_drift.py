"""Generator action on Lyapunov weights and certified drift constants.

For the relaxation process the generator acts on the weight families in
closed form, via the identities

    L*(|v|^2) = d - |v|^2,   L*(x.v) = -x.v,   L*(Phi) = L*(|x|^2) = 0,
    T*(H) = 0,  T*(x.v) = |v|^2 - x.grad Phi,  T*(|x|^2) = 2 x.v.

For the scattering process the velocity moments of the collision operator
reduce to radial quadratures through the even angular law:  writing
g_b = (1 - mean cosine)/2  (= 1/2 for any even b),

    L*(|v|^2)  = -g_b m_b ( s^2 T0(s) - T2(s) ),
    L*(x.v)    = -g_b m_b (x.v) ( T0(s) - TH(s)/s ),

with T0, T2, TH the Maxwellian moments of |v - v*|^gamma weighted by
1, |v*|^2 and (v_hat . v*) respectively, s = |v|.

Where the constructions say "for some constant", a valid constant is
computed by maximising the explicit residual over phase space (completion of
squares where closed-form, padded grid search otherwise) so every certified
pair (lambda, K) is checkable pointwise.
"""

from dataclasses import dataclass
import math
from typing import Optional

import numpy as np

from .domain_core import PotentialSpec
from .errors import DriftParamsMissing
from .quadrature import gauss_legendre_nodes

__all__ = [
    "LyapunovSpec",
    "boltzmann_moments",
    "generator_apply_bgk",
    "generator_apply_boltzmann",
    "drift_constants_confined_bgk",
    "drift_constants_torus_boltzmann",
    "drift_constants_confined_boltzmann",
    "drift_constants_subgeometric",
    "empirical_drift_check",
]

FORMS = (
    "torus_bgk_trivial",
    "torus_boltzmann_v2",
    "confined_bgk",
    "confined_boltzmann",
    "subgeometric_bgk",
    "subgeometric_boltzmann",
)


@dataclass(frozen=True)
class LyapunovSpec:
    """A weight function V with its certified drift  UV <= -lam V^q + K.

    ``a``/``b`` are the cross-term and position coefficients of the form; the
    exponent q is 1 for geometric drifts.  The potential enters through its
    shifted (nonnegative) value.
    """

    form: str
    a: float = 0.0
    b: float = 0.0
    lam: Optional[float] = None
    K: Optional[float] = None
    q: float = 1.0
    potential: Optional[PotentialSpec] = None

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"unknown Lyapunov form {self.form!r}")
        if self.form == "confined_bgk" and not self.a**2 < 2.0 * self.b:
            raise ValueError("confined form needs a^2 < 2 b for positivity")
        if self.form == "subgeometric_boltzmann" and not 4.0 * self.a**2 < self.b:
            raise ValueError("subgeometric scattering form needs 4 a^2 < b")
        if self.lam is not None and self.lam <= 0.0:
            raise ValueError("certified lambda must be positive")
        if self.K is not None and self.K < 0.0:
            raise ValueError("certified K must be nonnegative")

    def V(self, x, v):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        v2 = np.sum(v * v, axis=-1)
        if self.form == "torus_bgk_trivial":
            return np.ones_like(v2)
        if self.form == "torus_boltzmann_v2":
            return v2
        xv = np.sum(x * v, axis=-1)
        x2 = np.sum(x * x, axis=-1)
        phi = self.potential.shifted_value(x)
        if self.form in ("confined_bgk", "subgeometric_bgk"):
            return 1.0 + phi + 0.5 * v2 + self.a * xv + self.b * x2
        if self.form == "confined_boltzmann":
            return phi + 0.5 * v2 + self.a * xv + self.b * x2
        bx = np.sqrt(1.0 + x2)
        return phi + 0.5 * v2 + self.a * xv / bx + self.b * bx

    def drift(self):
        if self.lam is None:
            raise DriftParamsMissing(f"form {self.form!r} carries no drift")
        return self.lam, self.K, self.q


# ---------------------------------------------------------------------------
# scattering moment tables


_MOMENT_CACHE = {}


def _kernel_key(kernel, d):
    return (kernel.gamma, kernel.angular_form, kernel.b0, id(kernel.b_func), d)


def boltzmann_moments(kernel, d, s):
    """(T0, T1, T2, TH)(s): Maxwellian moments of |v-v*|^gamma at speed s.

    T0 = E|u|^g, T1 = E|v*||u|^g, T2 = E|v*|^2|u|^g, TH = E (v_hat.v*) |u|^g,
    computed on fixed-order product rules (radial x angular), vectorised.
    """
    s = np.atleast_1d(np.asarray(s, float))
    gamma = kernel.gamma
    r_hi = float(s.max()) + 14.0
    r, rw = gauss_legendre_nodes(320, 0.0, r_hi)
    chi_norm = 2.0 ** (1.0 - d / 2.0) / math.gamma(d / 2.0)
    wr = rw * chi_norm * r ** (d - 1) * np.exp(-0.5 * r * r)
    if d == 1:
        c = np.array([-1.0, 1.0])
        cw = np.array([0.5, 0.5])
    elif d == 2:
        k = np.arange(1, 257)
        c = np.cos((2 * k - 1) * math.pi / 512.0)
        cw = np.full_like(c, 1.0 / 256.0)
    else:
        c, cw = gauss_legendre_nodes(256, -1.0, 1.0)
        if d > 3:
            wf = (1.0 - c * c) ** ((d - 3.0) / 2.0)
            cw = cw * wf / np.sum(cw * wf)
        else:
            cw = cw / 2.0
    T0 = np.empty_like(s)
    T1 = np.empty_like(s)
    T2 = np.empty_like(s)
    TH = np.empty_like(s)
    for i0 in range(0, len(s), 64):
        sc = s[i0 : i0 + 64, None, None]
        rr = r[None, :, None]
        cc = c[None, None, :]
        base = (sc * sc + rr * rr - 2.0 * sc * rr * cc)
        if gamma == 1.0:
            ug = np.sqrt(base)
        else:
            ug = base ** (gamma / 2.0)
        m0 = ug @ cw
        mh = (ug * cc) @ cw
        T0[i0 : i0 + 64] = m0 @ wr
        T1[i0 : i0 + 64] = (m0 * r) @ wr
        T2[i0 : i0 + 64] = (m0 * r * r) @ wr
        TH[i0 : i0 + 64] = (mh * r) @ wr
    return T0, T1, T2, TH


def _gamma_b(kernel, d):
    """Angular dissipation factor (1 - mean cosine)/2 of the sigma law."""
    return 0.5 * (1.0 - kernel.mean_cosine(d))


def scattering_v2_generator(kernel, d, s):
    """L*(|v|^2) at speeds s, by quadrature."""
    s = np.atleast_1d(np.asarray(s, float))
    g_b = _gamma_b(kernel, d)
    m_b = kernel.angular_mass(d)
    T0, _, T2, _ = boltzmann_moments(kernel, d, s)
    return -g_b * m_b * (s * s * T0 - T2)


def scattering_xv_coefficient(kernel, d, s):
    """c(s) with L*(x.v) = -c(s) (x.v), by quadrature (limit handled at 0)."""
    s = np.atleast_1d(np.asarray(s, float))
    g_b = _gamma_b(kernel, d)
    m_b = kernel.angular_mass(d)
    T0, _, _, TH = boltzmann_moments(kernel, d, s)
    out = np.empty_like(s)
    pos = s > 1e-8
    out[pos] = g_b * m_b * (T0[pos] - TH[pos] / s[pos])
    if np.any(~pos):
        T0z = boltzmann_moments(kernel, d, np.array([0.0]))[0][0]
        out[~pos] = g_b * m_b * T0z * (1.0 + kernel.gamma / d)
    return out


# ---------------------------------------------------------------------------
# generator action


def generator_apply_bgk(spec, x, v, potential=None):
    """UV(x, v) for the relaxation process, assembled from closed forms."""
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    d = v.shape[-1]
    v2 = np.sum(v * v, axis=-1)
    if spec.form == "torus_bgk_trivial":
        return np.zeros_like(v2)
    if spec.form == "torus_boltzmann_v2":
        return d - v2
    pot = potential if potential is not None else spec.potential
    xv = np.sum(x * v, axis=-1)
    xgrad = np.sum(x * pot.gradient(x), axis=-1)
    a, b = spec.a, spec.b
    if spec.form in ("confined_bgk", "subgeometric_bgk", "confined_boltzmann"):
        return (
            0.5 * d
            - (0.5 - a) * v2
            + (2.0 * b - a) * xv
            - a * xgrad
        )
    raise ValueError(f"closed-form relaxation generator undefined for {spec.form}")


def generator_apply_boltzmann(spec, x, v, potential, kernel):
    """UV(x, v) for the scattering process; velocity moments by quadrature."""
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    d = v.shape[-1]
    s = np.sqrt(np.sum(v * v, axis=-1))
    shape = s.shape
    lv2 = scattering_v2_generator(kernel, d, s.ravel()).reshape(shape)
    cxv = scattering_xv_coefficient(kernel, d, s.ravel()).reshape(shape)
    v2 = s * s
    xv = np.sum(x * v, axis=-1)
    x2 = np.sum(x * x, axis=-1)
    xgrad = np.sum(x * potential.gradient(x), axis=-1)
    a, b = spec.a, spec.b
    if spec.form == "torus_boltzmann_v2":
        return lv2
    if spec.form == "confined_boltzmann":
        # V = Phi~ + |v|^2/2 + a x.v + b |x|^2
        return 0.5 * lv2 - a * cxv * xv + a * (v2 - xgrad) + 2.0 * b * xv
    if spec.form == "subgeometric_boltzmann":
        bx = np.sqrt(1.0 + x2)
        return (
            0.5 * lv2
            - a * cxv * xv / bx
            + a * (v2 / bx - (xv / bx) ** 2 / bx - xgrad / bx)
            + b * xv / bx
        )
    raise ValueError(f"scattering generator undefined for {spec.form}")


# ---------------------------------------------------------------------------
# certified constants


def drift_constants_confined_bgk(potential, d):
    """(lambda, K) for V = 1 + Phi~ + |v|^2/2 + x.v/4 + |x|^2/8, p = 2 growth.

    lambda = min(gamma1, gamma2, 1)/4; K from completing the square on the
    residual UV + lambda V (exact when the quadratic form is semidefinite).
    """
    dp = potential.drift(2.0)
    g1, g2, A = dp.gamma1, dp.gamma2, dp.A
    # shift Phi by its lower bound: A absorbs gamma2 * lower_bound
    A = A - dp.gamma2 * potential.lower_bound
    lam = min(g1, g2, 1.0) / 4.0
    # UV + lam V <= d/2 + lam + A/4 + Q(x, v) - (g2/4 - lam) Phi~ with
    # Q = -(1/4 - lam/2)|v|^2 + (lam/4) x.v - (g1/4 - lam/8)|x|^2
    alpha = 0.25 - 0.5 * lam
    beta = 0.25 * lam
    delta = 0.25 * g1 - 0.125 * lam
    if beta * beta > 4.0 * alpha * delta:
        # the residual quadratic form would be unbounded above
        raise ValueError("drift residual is indefinite; declared gamma1 too large")
    K = 0.5 * d + lam + 0.25 * A
    return lam, K


@dataclass(frozen=True)
class TorusScatteringDrift:
    lam: float
    K: float
    A0: float
    C1: float
    C2: float
    gamma_b: float
    epsilon: float


def drift_constants_torus_boltzmann(kernel, d, n_grid=801, s_hi=60.0):
    """(lambda, K) for V = |v|^2 under the scattering process on the torus.

    Sharp moment-ratio constants A0, C1, C2 are computed by quadrature plus
    scalar optimisation; epsilon fixed at 0.9 of its critical value.
    """
    s = np.linspace(0.0, s_hi, n_grid)
    T0, T1, T2, _ = boltzmann_moments(kernel, d, s)
    m_b = kernel.angular_mass(d)
    g_b = _gamma_b(kernel, d)
    ratio = 1.0 + s**kernel.gamma
    A0 = float(np.min(T0 / ratio))
    C1 = float(np.max(T1 / ratio))
    C2 = float(np.max(T2 / ratio))
    eps_crit = A0 * g_b / (C1 * (1.0 + 0.5 * g_b))
    eps = 0.9 * eps_crit
    lam = m_b * (A0 * g_b - eps * C1 * (1.0 + 0.5 * g_b))
    resid = (C2 + C1 * (1.0 + 0.5 * g_b) / eps
             + (eps * C1 * (1.0 + 0.5 * g_b) - A0 * g_b) * s**2) * ratio
    K = m_b * float(np.max(resid)) * 1.0001
    if lam <= 0.0:
        raise ValueError("torus scattering drift rate is not positive")
    return TorusScatteringDrift(lam=lam, K=K, A0=A0, C1=C1, C2=C2,
                                gamma_b=g_b, epsilon=eps)


@dataclass(frozen=True)
class ConfinedScatteringDrift:
    lam: float
    K: float
    a: float
    b: float
    alpha1: float
    alpha2: float
    c3: float
    epsilon: float


def _scattering_v2_bounds(kernel, d, n_grid=1601, s_hi=60.0):
    """alpha1, alpha2 with L*(|v|^2) <= -alpha1 <v>^(g+2) + alpha2, and the
    cross-moment constant c3 with |L*(x.v)| <= c3 |x| <v>^(g+1)."""
    s = np.linspace(0.0, s_hi, n_grid)
    g = kernel.gamma
    m_b = kernel.angular_mass(d)
    g_b = _gamma_b(kernel, d)
    f = -scattering_v2_generator(kernel, d, s)  # = g_b m_b (s^2 T0 - T2) >= eventually
    bracket = (1.0 + s * s) ** (0.5 * (g + 2.0))
    alpha1 = 0.5 * g_b * m_b  # half the asymptotic coefficient of <s>^(g+2)
    alpha2 = float(np.max(alpha1 * bracket - f)) * 1.0001 + 1e-12
    cxv = scattering_xv_coefficient(kernel, d, s)
    c3 = float(np.max(np.abs(cxv) * s / (1.0 + s * s) ** (0.5 * (g + 1.0))))
    c3 = max(c3 * 1.0001, 1e-12)
    return alpha1, alpha2, c3


def drift_constants_confined_boltzmann(potential, kernel, d):
    """(lambda, K) for V = Phi~ + |v|^2/2 + a x.v + a |x|^2, p = gamma + 2.

    Follows the Young-inequality assembly: epsilon is set from the position
    smallness condition (0.9 margin), then the cross coefficient a from the
    velocity condition.
    """
    g = kernel.gamma
    p = g + 2.0
    dp = potential.drift(p)
    g1, g2, A = dp.gamma1, dp.gamma2, dp.A
    A = A - g2 * potential.lower_bound
    if p == 2.0:
        # convert |x|^2 form to <x>^2: gamma1 |x|^2 = gamma1 <x>^2 - gamma1
        A = A + g1
    alpha1, alpha2, c3 = _scattering_v2_bounds(kernel, d)
    S = c3 + 2.0
    q_y = (g + 2.0) / (g + 1.0)
    # position condition: S / ((g+2) eps^(g+2)) < gamma1
    eps = (S / (g1 * (g + 2.0))) ** (1.0 / (g + 2.0)) / 0.9
    ycoef = 1.0 + S * eps**q_y * (g + 1.0) / (g + 2.0)
    a = 0.9 * (0.5 * alpha1) / ycoef
    a = min(a, 0.45)  # quadratic-form equivalence needs a < 1/2
    cv = 0.5 * alpha1 - a * ycoef
    cx = a * (g1 - S / ((g + 2.0) * eps ** (g + 2.0)))
    if cv <= 0.0 or cx <= 0.0:
        raise ValueError("scattering drift assembly failed (nonpositive margin)")
    m = min(cv, cx)
    cq = max(0.5 + 0.5 * a, 1.5 * a)
    lam = min(m / cq, a * g2)
    K = 0.5 * alpha2 + a * A + lam  # + lam: V lacks the constant 1
    return ConfinedScatteringDrift(lam=lam, K=K, a=a, b=a, alpha1=alpha1,
                                   alpha2=alpha2, c3=c3, epsilon=eps)


def drift_constants_subgeometric(kind, potential, d, kernel=None):
    """Subgeometric drift UV <= -lam V^q + K.

    Relaxation: q = beta from the <x>^(2 beta) confinement; scattering:
    q = delta/(1+delta) with growth <x>^(1+delta) and the upper bound
    Phi <= gamma3 <x>^(1+delta).
    """
    if kind == "bgk":
        ps = [p for p in potential.drift_exponents() if p < 2.0]
        if not ps:
            raise DriftParamsMissing("no subquadratic drift exponent declared")
        p = max(ps)
        beta = 0.5 * p
        dp = potential.drift(p)
        A = dp.A - dp.gamma2 * potential.lower_bound
        lam = min(dp.gamma1, dp.gamma2, 1.0) / 4.0
        K = 0.5 * d + 0.25 * (A + 1.0 + dp.gamma2)
        return lam, K, beta

    if kernel is None:
        raise ValueError("scattering subgeometric drift needs the kernel")
    if potential.upper_growth is None:
        raise DriftParamsMissing("potential lacks the upper growth bound gamma3")
    gamma3, growth = potential.upper_growth
    delta = growth - 1.0
    if delta <= 0.0:
        raise DriftParamsMissing("scattering subgeometric drift needs delta > 0")
    dp = potential.drift(growth)
    g1, g2, A = dp.gamma1, dp.gamma2, dp.A
    A = A - g2 * potential.lower_bound
    gamma3 = gamma3 - min(potential.lower_bound, 0.0)
    q = delta / (1.0 + delta)
    alpha1, alpha2, c3 = _scattering_v2_bounds(kernel, d)
    b = 0.45 * alpha1
    a = min(0.9 * (0.5 * alpha1 - b) / (1.0 + c3), 0.45 * math.sqrt(b))
    cv = 0.5 * alpha1 - a * (1.0 + c3) - b
    if cv <= 0.0 or not 4.0 * a * a < b:
        raise ValueError("subgeometric scattering coefficients infeasible")
    lam = min(
        cv / (0.5 + a) ** q,
        0.5 * a * g1 / b**q,
        0.5 * a * g1 / gamma3**q,
    )
    K = 0.5 * alpha2 + a * A + lam
    return lam, K, q, a, b


# ---------------------------------------------------------------------------
# builders and the empirical check


def lyapunov_for(form, potential=None, kernel=None, d=1):
    """Construct the LyapunovSpec with certified constants for a scenario."""
    if form == "torus_bgk_trivial":
        return LyapunovSpec(form=form)
    if form == "torus_boltzmann_v2":
        td = drift_constants_torus_boltzmann(kernel, d)
        return LyapunovSpec(form=form, lam=td.lam, K=td.K)
    if form == "confined_bgk":
        lam, K = drift_constants_confined_bgk(potential, d)
        return LyapunovSpec(form=form, a=0.25, b=0.125, lam=lam, K=K,
                            potential=potential)
    if form == "confined_boltzmann":
        cd = drift_constants_confined_boltzmann(potential, kernel, d)
        return LyapunovSpec(form=form, a=cd.a, b=cd.b, lam=cd.lam, K=cd.K,
                            potential=potential)
    if form == "subgeometric_bgk":
        lam, K, q = drift_constants_subgeometric("bgk", potential, d)
        return LyapunovSpec(form=form, a=0.25, b=0.125, lam=lam, K=K, q=q,
                            potential=potential)
    if form == "subgeometric_boltzmann":
        lam, K, q, a, b = drift_constants_subgeometric(
            "boltzmann", potential, d, kernel
        )
        return LyapunovSpec(form=form, a=a, b=b, lam=lam, K=K, q=q,
                            potential=potential)
    raise ValueError(f"unknown Lyapunov form {form!r}")


@dataclass(frozen=True)
class DriftCheckReport:
    times: np.ndarray
    mean_V: np.ndarray
    stderr: np.ndarray
    envelope: np.ndarray
    passed: bool


def empirical_drift_check(process, spec, ensemble, horizon, n_times=10):
    """Simulate and test E[V(Z_t)] against the certified envelope.

    The geometric drift implies E V_t <= e^{-lam t} E V_0 + K/lam; each grid
    time is checked within 3 Monte Carlo standard errors.
    """
    from .jump_samplers import simulate

    lam, K, q = spec.drift()
    if q != 1.0:
        raise ValueError("empirical envelope check covers geometric drifts")
    times = np.linspace(0.0, horizon, n_times + 1)[1:]
    v0 = spec.V(ensemble.x, ensemble.v)
    ev0 = float(np.mean(v0))
    means, errs, env = [], [], []
    ens = ensemble
    for t in times:
        ens = simulate(ens, process, float(t))
        val = spec.V(ens.x, ens.v)
        means.append(float(np.mean(val)))
        errs.append(float(np.std(val, ddof=1) / math.sqrt(len(val))))
        env.append(math.exp(-lam * t) * ev0 + K / lam)
    means = np.array(means)
    errs = np.array(errs)
    env = np.array(env)
    passed = bool(np.all(means <= env + 3.0 * errs))
    return DriftCheckReport(times=times, mean_V=means, stderr=errs,
                            envelope=env, passed=passed)
