"""Total-variation and weighted-TV estimation against equilibrium.

The estimator is the binned L1 distance  sum_bins |phat - mu(bin)|  (the
paper-convention TV norm: mass 2 between mutually singular probabilities).
Equilibrium bin masses come from quadrature on an extended grid whose
out-of-box cells are folded onto the boundary bins, exactly matching how
particle tails are folded by coordinate clipping.

Monte Carlo error bars use 10-fold ensemble splitting; decay fits are
weighted least squares on log distance with the fit window cut at the noise
floor (points below 5x their own standard error are binning bias, not
signal).
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import ndtr

from .errors import BoxCoverageInsufficient, InsufficientSignal
from .quadrature import gauss_legendre_nodes, quad

__all__ = [
    "BinningSpec",
    "DecayFit",
    "default_binning",
    "estimate_tv",
    "estimate_weighted_tv",
    "equilibrium_bin_masses",
    "fit_decay",
]

N_FOLDS = 10
NOISE_FLOOR_FACTOR = 5.0


@dataclass(frozen=True)
class BinningSpec:
    """Axis-aligned phase-space binning; tails fold into the boundary bins."""

    x_lo: np.ndarray
    x_hi: np.ndarray
    v_lo: np.ndarray
    v_hi: np.ndarray
    bins_per_axis: int

    def __post_init__(self):
        if self.bins_per_axis < 2:
            raise ValueError("bins_per_axis must be at least 2")

    @property
    def d(self):
        return len(self.x_lo)

    def x_edges(self, axis):
        return np.linspace(self.x_lo[axis], self.x_hi[axis],
                           self.bins_per_axis + 1)

    def v_edges(self, axis):
        return np.linspace(self.v_lo[axis], self.v_hi[axis],
                           self.bins_per_axis + 1)

    def centers(self):
        xc = [0.5 * (self.x_edges(a)[1:] + self.x_edges(a)[:-1])
              for a in range(self.d)]
        vc = [0.5 * (self.v_edges(a)[1:] + self.v_edges(a)[:-1])
              for a in range(self.d)]
        return xc, vc


def default_binning(eq, bins_per_axis=64, coverage=0.999):
    """Box holding at least `coverage` equilibrium mass, uniform bins."""
    domain = eq.domain
    d = domain.d
    n_unbounded = d if domain.is_torus else 2 * d
    per_axis = coverage ** (1.0 / n_unbounded)
    zq = _norm_quantile(0.5 * (1.0 + per_axis))
    v_lo = np.full(d, -zq)
    v_hi = np.full(d, zq)
    if domain.is_torus:
        x_lo = np.zeros(d)
        x_hi = np.ones(d)
    else:
        r = _position_quantile_radius(domain.potential, d, eq.Z, per_axis)
        x_lo = np.full(d, -r)
        x_hi = np.full(d, r)
    return BinningSpec(x_lo=x_lo, x_hi=x_hi, v_lo=v_lo, v_hi=v_hi,
                       bins_per_axis=bins_per_axis)


def _norm_quantile(p):
    from scipy.special import ndtri

    return float(ndtri(p))


def _position_quantile_radius(potential, d, Z, p):
    from .quadrature import sphere_area

    def mass_within(r):
        val = quad(
            lambda s: math.exp(-float(potential.radial_value(s))) * s ** (d - 1),
            0.0, r,
        )
        return sphere_area(d) * val / Z

    r = 1.0
    while mass_within(r) < p:
        r *= 1.5
        if r > 1e6:
            raise BoxCoverageInsufficient("equilibrium mass does not concentrate")
    return r


# ---------------------------------------------------------------------------
# equilibrium bin masses


_MASS_CACHE = {}


def _binning_key(eq, binning):
    return (
        id(eq.domain.potential),
        eq.domain.geometry,
        eq.domain.d,
        binning.bins_per_axis,
        binning.x_lo.tobytes(),
        binning.x_hi.tobytes(),
        binning.v_lo.tobytes(),
        binning.v_hi.tobytes(),
    )


def _gaussian_axis_masses(edges):
    """Standard-normal masses per bin with the tails folded inward."""
    cdf = ndtr(edges)
    m = np.diff(cdf)
    m[0] += cdf[0]
    m[-1] += 1.0 - cdf[-1]
    return m


def _position_masses(eq, binning):
    domain = eq.domain
    d = domain.d
    B = binning.bins_per_axis
    if domain.is_torus:
        m = np.full(B, 1.0 / B)
        out = m
        for _ in range(d - 1):
            out = np.multiply.outer(out, m)
        return out
    if d == 1:
        pot = domain.potential
        edges = binning.x_edges(0)
        # extend the grid so folded tail mass lands on the boundary bins
        width = edges[-1] - edges[0]
        lo_ext = edges[0] - 6.0 * width
        hi_ext = edges[-1] + 6.0 * width
        masses = np.empty(B)
        for i in range(B):
            a, b = edges[i], edges[i + 1]
            if i == 0:
                a = lo_ext
            if i == B - 1:
                b = hi_ext
            masses[i] = quad(
                lambda s: math.exp(-float(pot.value(np.array([s])))), a, b
            )
        return masses / eq.Z
    if d == 2:
        pot = domain.potential
        return _position_masses_2d(pot, binning, eq.Z)
    raise NotImplementedError(
        "whole-space TV binning is implemented for d <= 2 (phase-space "
        "histograms in higher dimension are memory-bound)"
    )


def _position_masses_2d(pot, binning, Z, order=8, ext=6.0):
    B = binning.bins_per_axis
    e0 = binning.x_edges(0)
    e1 = binning.x_edges(1)
    w0 = e0[-1] - e0[0]
    w1 = e1[-1] - e1[0]
    ext0 = np.concatenate([[e0[0] - ext * w0], e0[1:-1], [e0[-1] + ext * w0]])
    ext1 = np.concatenate([[e1[0] - ext * w1], e1[1:-1], [e1[-1] + ext * w1]])
    masses = np.empty((B, B))
    for i in range(B):
        # boundary cells are ext x wider; scale the rule order with them
        oi = order * 8 if i in (0, B - 1) else order
        xs, wx = gauss_legendre_nodes(oi, ext0[i], ext0[i + 1])
        for j in range(B):
            oj = order * 8 if j in (0, B - 1) else order
            ys, wy = gauss_legendre_nodes(oj, ext1[j], ext1[j + 1])
            X, Y = np.meshgrid(xs, ys, indexing="ij")
            pts = np.stack([X, Y], axis=-1)
            vals = np.exp(-pot.value(pts))
            masses[i, j] = float(wx @ vals @ wy)
    return masses / Z


def _box_coverage(eq, binning):
    """Equilibrium mass strictly inside the box (before tail folding)."""
    domain = eq.domain
    d = domain.d
    cov = 1.0
    for a in range(d):
        e = binning.v_edges(a)
        cov *= float(ndtr(e[-1]) - ndtr(e[0]))
    if domain.is_torus:
        return cov
    if d == 1:
        pot = domain.potential
        e = binning.x_edges(0)
        inside = quad(
            lambda s: math.exp(-float(pot.value(np.array([s])))), e[0], e[-1]
        )
        return cov * inside / eq.Z
    # d == 2 whole space: the folded grid integral minus its extension cells
    return cov  # position coverage enforced by default_binning's quantiles


def equilibrium_bin_masses(eq, binning):
    """Joint equilibrium masses on the (folded) phase-space bins, cached.

    Out-of-box mass is folded onto boundary bins (matching how particle
    coordinates are clipped), but the box itself must hold at least 99.9%
    of the equilibrium mass for the estimator to be meaningful.
    """
    key = _binning_key(eq, binning)
    if key not in _MASS_CACHE:
        coverage = _box_coverage(eq, binning)
        if coverage < 0.999 - 1e-6:
            raise BoxCoverageInsufficient(
                f"binning box holds {coverage:.4%} of equilibrium mass (< 99.9%)"
            )
        d = eq.domain.d
        pos = _position_masses(eq, binning)
        vel = _gaussian_axis_masses(binning.v_edges(0))
        for a in range(1, d):
            vel = np.multiply.outer(vel, _gaussian_axis_masses(binning.v_edges(a)))
        joint = np.multiply.outer(pos, vel)
        # the potential is kept referenced so the id key cannot be recycled
        _MASS_CACHE[key] = (eq.domain.potential, joint)
    return _MASS_CACHE[key][1]


# ---------------------------------------------------------------------------
# estimators


def _histogram(ens, binning):
    d = ens.d
    B = binning.bins_per_axis
    cols = []
    edges = []
    for a in range(d):
        cols.append(ens.x[:, a])
        edges.append(binning.x_edges(a))
    for a in range(d):
        cols.append(ens.v[:, a])
        edges.append(binning.v_edges(a))
    idx = np.zeros(ens.n, dtype=np.int64)
    for c, e in zip(cols, edges):
        k = np.clip(np.searchsorted(e, c, side="right") - 1, 0, B - 1)
        idx = idx * B + k
    counts = np.bincount(idx, minlength=B ** (2 * d))
    return counts.reshape((B,) * (2 * d))


def _tv_from_counts(counts, masses, n):
    return float(np.sum(np.abs(counts / n - masses)))


def _weighted_tv_from_counts(counts, masses, weights, n):
    return float(np.sum(weights * np.abs(counts / n - masses)))


def _fold_stderr(ens, binning, masses, weights=None):
    n = ens.n
    bounds = np.linspace(0, n, N_FOLDS + 1, dtype=int)
    vals = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        sub = ens.x[a:b], ens.v[a:b]
        counts = _histogram(_SubEnsemble(sub[0], sub[1]), binning)
        if weights is None:
            vals.append(_tv_from_counts(counts, masses, b - a))
        else:
            vals.append(_weighted_tv_from_counts(counts, masses, weights, b - a))
    return float(np.std(vals, ddof=1) / math.sqrt(N_FOLDS))


class _SubEnsemble:
    def __init__(self, x, v):
        self.x = x
        self.v = v
        self.n = x.shape[0]
        self.d = x.shape[1]


def estimate_tv(ensemble, eq, binning):
    """(TV estimate, stderr): binned L1 distance to equilibrium.

    The estimate carries a positive binning/Monte-Carlo bias floor of order
    sqrt(bins / n); treat values near the floor as 'indistinguishable'.
    """
    masses = equilibrium_bin_masses(eq, binning)
    counts = _histogram(ensemble, binning)
    tv = _tv_from_counts(counts, masses, ensemble.n)
    err = _fold_stderr(ensemble, binning, masses)
    return tv, err


def estimate_weighted_tv(ensemble, eq, weight, binning, a=1.0):
    """Weighted binned L1 distance; per-bin weight at the bin centre.

    ``weight`` is a LyapunovSpec (weight 1 + a V) or a callable giving the
    full weight w(x, v) directly.
    """
    masses = equilibrium_bin_masses(eq, binning)
    xc, vc = binning.centers()
    d = ensemble.d
    grids = np.meshgrid(*(xc + vc), indexing="ij")
    pts_x = np.stack(grids[:d], axis=-1)
    pts_v = np.stack(grids[d:], axis=-1)
    if callable(weight):
        w = weight(pts_x, pts_v)
    else:
        w = 1.0 + a * weight.V(pts_x, pts_v)
    counts = _histogram(ensemble, binning)
    wtv = _weighted_tv_from_counts(counts, masses, w, ensemble.n)
    err = _fold_stderr(ensemble, binning, masses, weights=w)
    return wtv, err


# ---------------------------------------------------------------------------
# decay fits


@dataclass(frozen=True)
class DecayFit:
    model: str  # "exponential" | "algebraic"
    rate: float  # lambda-hat or p-hat
    amplitude: float
    r_squared: float
    window: tuple
    n_used: int

    def predict(self, t):
        t = np.asarray(t, float)
        if self.model == "exponential":
            return self.amplitude * np.exp(-self.rate * t)
        return self.amplitude * (1.0 + t) ** (-self.rate)


def estimate_bias_floor(eq, binning, n, seed=0):
    """Measured binning/MC bias floor: TV of a fresh n-sample of mu itself.

    The 10-fold stderr tracks fold-to-fold fluctuation, not the systematic
    binning bias, so the fit window is cut against this directly measured
    floor as well.
    """
    from .jump_samplers import Ensemble

    ens = Ensemble.from_equilibrium(eq, n, seed_base=seed)
    tv, _ = estimate_tv(ens, eq, binning)
    return tv


def fit_decay(times, distances, stderrs, model="exponential", floor=0.0):
    """Weighted least squares on log distance vs t or log(1+t).

    Points below the noise floor (distance < 5 x stderr, or < 1.5 x the
    measured bias floor if one is supplied) are excluded; fewer than 5
    usable points raises InsufficientSignal.
    """
    t = np.asarray(times, float)
    d = np.asarray(distances, float)
    s = np.asarray(stderrs, float)
    keep = (d > 0.0) & (d >= NOISE_FLOOR_FACTOR * s) & (d >= 1.5 * floor)
    if int(keep.sum()) < 5:
        raise InsufficientSignal(
            f"only {int(keep.sum())} points above the noise floor"
        )
    t, d, s = t[keep], d[keep], s[keep]
    y = np.log(d)
    sigma = np.where(s > 0.0, s / d, np.min(s[s > 0.0]) / np.max(d) if
                     np.any(s > 0.0) else 1.0)
    wgt = 1.0 / sigma**2
    if model == "exponential":
        reg = t
    elif model == "algebraic":
        reg = np.log1p(t)
    else:
        raise ValueError(f"unknown decay model {model!r}")
    W = np.sum(wgt)
    xm = np.sum(wgt * reg) / W
    ym = np.sum(wgt * y) / W
    sxx = np.sum(wgt * (reg - xm) ** 2)
    sxy = np.sum(wgt * (reg - xm) * (y - ym))
    slope = sxy / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * reg)
    ss_res = np.sum(wgt * resid**2)
    ss_tot = np.sum(wgt * (y - ym) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(
        model=model,
        rate=-slope,
        amplitude=math.exp(intercept),
        r_squared=float(r2),
        window=(float(t[0]), float(t[-1])),
        n_used=int(len(t)),
    )
