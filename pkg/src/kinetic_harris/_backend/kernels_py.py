"""Vectorised NumPy implementation of the jump-process kernels.

This is the always-available fallback for the compiled core.  It runs the
same per-particle algorithm with the same splitmix64 streams and the same
draw order, vectorised over the set of particles that are at the same stage
of their trajectory (particles never share randomness, so regrouping them is
free).  See ``kinetic_harris._backend`` for the cross-backend contract.
"""

import numpy as np

from ..errors import EnvelopeRejected, ThinningBoundViolated

U64 = np.uint64
_GOLD = U64(0x9E3779B97F4A7C15)
_M1 = U64(0xBF58476D1CE4E5B9)
_M2 = U64(0x94D049BB133111EB)
_TWO53 = float(2.0**-53)
TWO_PI = 2.0 * np.pi

# collision proposal envelope: v* ~ Maxwellian restricted to |v*| <= CD with
# weight (|v-v*|/(|v|+CD))^gamma; the |v*|-truncation deficit is < 5e-8 of
# the Maxwellian mass for d <= 3, below every tolerance used in this package
CD = 6.0
MAX_TRIES = 100_000


def _mix(z):
    z = z ^ (z >> U64(30))
    z = z * _M1
    z = z ^ (z >> U64(27))
    z = z * _M2
    return z ^ (z >> U64(31))


def stream_init(seed_base, n):
    """Independent splitmix64 states for particles 0..n-1."""
    i = np.arange(1, n + 1, dtype=np.uint64)
    z = U64(seed_base & 0xFFFFFFFFFFFFFFFF) + _GOLD * i
    return _mix(_mix(z) + _GOLD)


def _next(state, idx):
    s = state[idx] + _GOLD
    state[idx] = s
    return _mix(s)


def _unif(state, idx):
    z = _next(state, idx)
    return ((z >> U64(11)).astype(np.float64) + 0.5) * _TWO53


def _expo(state, idx):
    return -np.log(_unif(state, idx))


def _gauss(state, idx, d):
    """Standard-normal (m, d) block, Box-Muller pairs per particle."""
    m = idx.size
    out = np.empty((m, d))
    for k in range((d + 1) // 2):
        u1 = _unif(state, idx)
        u2 = _unif(state, idx)
        r = np.sqrt(-2.0 * np.log(u1))
        a = TWO_PI * u2
        out[:, 2 * k] = r * np.cos(a)
        if 2 * k + 1 < d:
            out[:, 2 * k + 1] = r * np.sin(a)
    return out


def _sphere(state, idx, d):
    """Uniform directions on S^{d-1}, one per particle in idx."""
    m = idx.size
    if d == 1:
        return np.where(_unif(state, idx) < 0.5, -1.0, 1.0)[:, None]
    if d == 2:
        a = TWO_PI * _unif(state, idx)
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    if d == 3:
        z = 1.0 - 2.0 * _unif(state, idx)
        rho = np.sqrt(np.maximum(1.0 - z * z, 0.0))
        a = TWO_PI * _unif(state, idx)
        return np.stack([rho * np.cos(a), rho * np.sin(a), z], axis=1)
    g = _gauss(state, idx, d)
    return g / np.linalg.norm(g, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# potentials (mirrors the compiled table; id 0 is the free flow)


def _grad_fn(pot_id, params, user_grad=None):
    c, extra = params
    if pot_id == 0:
        return lambda x: np.zeros_like(x)
    if pot_id == 1:
        return lambda x: c * x
    if pot_id == 2:
        return lambda x: (c * np.sum(x * x, axis=-1))[..., None] * x
    if pot_id == 3:
        beta = extra
        return lambda x: (
            2.0 * beta * c * (1.0 + np.sum(x * x, axis=-1)) ** (beta - 1.0)
        )[..., None] * x
    if pot_id == 4:
        e = 0.5 * (1.0 + extra)
        return lambda x: (
             2.0 * e * c * (1.0 + np.sum(x * x, axis=-1)) ** (e - 1.0)
        )[..., None] * x
    if pot_id == -1:
        return user_grad
    raise ValueError(f"unknown potential id {pot_id}")


def _value_fn(pot_id, params, user_value=None):
    c, extra = params
    if pot_id == 0:
        return lambda x: np.zeros(x.shape[:-1])
    if pot_id == 1:
        return lambda x: 0.5 * c * np.sum(x * x, axis=-1)
    if pot_id == 2:
        return lambda x: 0.25 * c * np.sum(x * x, axis=-1) ** 2
    if pot_id == 3:
        return lambda x: c * (1.0 + np.sum(x * x, axis=-1)) ** extra
    if pot_id == 4:
        e = 0.5 * (1.0 + extra)
        return lambda x: c * (1.0 + np.sum(x * x, axis=-1)) ** e
    if pot_id == -1:
        return user_value
    raise ValueError(f"unknown potential id {pot_id}")


def _kappa_eval(s, kt):
    """Piecewise-linear kappa table with the power-law tail."""
    s = np.asarray(s, float)
    gamma, m_b = kt["gamma"], kt["m_b"]
    if gamma == 0.0:
        return np.full_like(s, m_b)
    vals, slopes, ds, s_max, d = (
        kt["vals"], kt["slopes"], kt["ds"], kt["s_max"], kt["d"],
    )
    i = np.minimum((s / ds).astype(np.int64), len(slopes) - 1)
    out = vals[i] + (s - i * ds) * slopes[i]
    tail = s > s_max
    if np.any(tail):
        st = s[tail]
        if gamma == 1.0:
            lead = st
        elif gamma == 2.0:
            lead = st * st
        else:
            lead = st**gamma
        out[tail] = m_b * lead * (1.0 + gamma * (d + gamma - 2.0) / (2.0 * st * st))
    return out


def _collide(v, state, idx, d, kt, ang):
    """Post-collision velocities for the particles in idx (their own streams)."""
    gamma = kt["gamma"]
    m = idx.size
    w = np.empty((m, d))
    pend = np.arange(m)
    tries = 0
    while pend.size:
        gidx = idx[pend]
        prop = _gauss(state, gidx, d)
        ua = _unif(state, gidx)
        vd = v[pend]
        dv = np.linalg.norm(vd - prop, axis=1)
        in_ball = np.linalg.norm(prop, axis=1) <= CD
        if gamma == 0.0:
            acc = in_ball
        else:
            ratio = dv / (np.linalg.norm(vd, axis=1) + CD)
            wgt = ratio if gamma == 1.0 else ratio**gamma
            acc = in_ball & (ua < wgt)
        w[pend[acc]] = prop[acc]
        pend = pend[~acc]
        tries += 1
        if tries > MAX_TRIES:
            raise EnvelopeRejected("collision proposal acceptance collapsed")

    dvec = v - w
    dv = np.linalg.norm(dvec, axis=1)
    if ang["form"] == "uniform":
        sig = _sphere(state, idx, d)
    else:
        sig = _tabulated_sigma(v, w, dvec, dv, state, idx, d, ang)
    return 0.5 * (v + w) + 0.5 * dv[:, None] * sig


def _tabulated_sigma(v, w, dvec, dv, state, idx, d, ang):
    """sigma from the tabulated even angular law, in the frame of v - v*."""
    u = _unif(state, idx)
    zg, zs, du = ang["z_grid"], ang["z_slope"], ang["du"]
    i = np.minimum((u / du).astype(np.int64), len(zs) - 1)
    z = zg[i] + (u - i * du) * zs[i]
    safe = np.where(dv > 0.0, dv, 1.0)
    uhat = dvec / safe[:, None]
    uhat[dv == 0.0] = 0.0
    if d == 1:
        base = np.where(uhat == 0.0, 1.0, uhat)
        return np.where(z >= 0.0, 1.0, -1.0)[:, None] * base
    if d == 2:
        s = np.where(_unif(state, idx) < 0.5, -1.0, 1.0)
        perp = np.stack([-uhat[:, 1], uhat[:, 0]], axis=1)
        return z[:, None] * uhat + (s * np.sqrt(np.maximum(1 - z * z, 0)))[:, None] * perp
    a = TWO_PI * _unif(state, idx)
    # orthonormal frame (e1, e2) of the plane normal to uhat
    h = np.zeros_like(uhat)
    h[np.arange(idx.size), np.argmin(np.abs(uhat), axis=1)] = 1.0
    e1 = h - np.sum(h * uhat, axis=1, keepdims=True) * uhat
    n1 = np.linalg.norm(e1, axis=1, keepdims=True)
    e1 = np.divide(e1, n1, out=np.zeros_like(e1), where=n1 > 0)
    e2 = np.cross(uhat, e1)
    rho = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    return (
        z[:, None] * uhat
        + (rho * np.cos(a))[:, None] * e1
        + (rho * np.sin(a))[:, None] * e2
    )


# ---------------------------------------------------------------------------
# jump-process kernels


def torus_bgk(x, v, state, jumps, duration, i0=0, i1=None):
    n = x.shape[0] if i1 is None else i1 - i0
    d = x.shape[1]
    sl = slice(i0, i0 + n)
    xs, vs, st, jp = x[sl], v[sl], state[sl], jumps[sl]
    rem = np.full(n, float(duration))
    act = np.nonzero(rem > 0.0)[0]
    while act.size:
        tau = _expo(st, act)
        fly = np.minimum(tau, rem[act])
        xs[act] += vs[act] * fly[:, None]
        w = xs[act] - np.floor(xs[act])
        xs[act] = np.where(w >= 1.0, 0.0, w)
        jump = tau < rem[act]
        rem[act] = np.where(jump, rem[act] - tau, 0.0)
        jact = act[jump]
        if jact.size:
            vs[jact] = _gauss(st, jact, d)
            jp[jact] += 1
        act = jact
    return 0


def torus_lb(x, v, state, jumps, duration, kt, ang, i0=0, i1=None):
    n = x.shape[0] if i1 is None else i1 - i0
    d = x.shape[1]
    sl = slice(i0, i0 + n)
    xs, vs, st, jp = x[sl], v[sl], state[sl], jumps[sl]
    rem = np.full(n, float(duration))
    act = np.nonzero(rem > 0.0)[0]
    while act.size:
        kap = _kappa_eval(np.linalg.norm(vs[act], axis=1), kt)
        tau = _expo(st, act) / kap
        fly = np.minimum(tau, rem[act])
        xs[act] += vs[act] * fly[:, None]
        w = xs[act] - np.floor(xs[act])
        xs[act] = np.where(w >= 1.0, 0.0, w)
        jump = tau < rem[act]
        rem[act] = np.where(jump, rem[act] - tau, 0.0)
        jact = act[jump]
        if jact.size:
            vs[jact] = _collide(vs[jact], st, jact, d, kt, ang)
            jp[jact] += 1
        act = jact
    return 0


def _verlet_advance(xs, vs, g, act, fly, dt, grad):
    """Advance each particle in act by its own duration fly (cached gradient)."""
    left = fly.copy()
    live = np.arange(act.size)
    while live.size:
        ids = act[live]
        h = np.minimum(left[live], dt)
        hh = h[:, None]
        vs[ids] -= 0.5 * hh * g[ids]
        xs[ids] += hh * vs[ids]
        gn = grad(xs[ids])
        g[ids] = gn
        vs[ids] -= 0.5 * hh * gn
        left[live] -= h
        live = live[left[live] > 0.0]


def confined_bgk(x, v, state, jumps, duration, dt, pot_id, pot_params,
                 user_grad=None, i0=0, i1=None):
    n = x.shape[0] if i1 is None else i1 - i0
    d = x.shape[1]
    sl = slice(i0, i0 + n)
    xs, vs, st, jp = x[sl], v[sl], state[sl], jumps[sl]
    grad = _grad_fn(pot_id, pot_params, user_grad)
    g = grad(xs)
    rem = np.full(n, float(duration))
    act = np.nonzero(rem > 0.0)[0]
    while act.size:
        tau = _expo(st, act)
        fly = np.minimum(tau, rem[act])
        _verlet_advance(xs, vs, g, act, fly, dt, grad)
        jump = tau < rem[act]
        rem[act] = np.where(jump, rem[act] - tau, 0.0)
        jact = act[jump]
        if jact.size:
            vs[jact] = _gauss(st, jact, d)
            jp[jact] += 1
        act = jact
    return 0


def confined_lb(x, v, state, jumps, duration, dt, pot_id, pot_params, kt, ang,
                phi_min, pad=0.01, instr=None, user_grad=None, user_value=None,
                i0=0, i1=None):
    n = x.shape[0] if i1 is None else i1 - i0
    d = x.shape[1]
    sl = slice(i0, i0 + n)
    xs, vs, st, jp = x[sl], v[sl], state[sl], jumps[sl]
    grad = _grad_fn(pot_id, pot_params, user_grad)
    value = _value_fn(pot_id, pot_params, user_value)
    gamma = kt["gamma"]
    g = grad(xs)
    rem = np.full(n, float(duration))
    act = np.nonzero(rem > 0.0)[0]
    while act.size:
        # per-segment dominating rate from the conserved flight energy
        if gamma == 0.0:
            kbar = np.full(act.size, kt["m_b"])
        else:
            energy = 0.5 * np.sum(vs[act] ** 2, axis=1) + value(xs[act])
            vmax = np.sqrt(2.0 * np.maximum(energy - phi_min, 0.0))
            kbar = _kappa_eval(vmax, kt) * (1.0 + pad)
        tau = _expo(st, act) / kbar
        fly = np.minimum(tau, rem[act])
        if instr is None:
            _verlet_advance(xs, vs, g, act, fly, dt, grad)
        else:
            _verlet_advance_instr(xs, vs, g, act, fly, dt, grad, instr)
        proposal = tau < rem[act]
        rem[act] = np.where(proposal, rem[act] - tau, 0.0)
        jact = act[proposal]
        if jact.size:
            kap = _kappa_eval(np.linalg.norm(vs[jact], axis=1), kt)
            kb = kbar[proposal]
            if np.any(kap > kb):
                raise ThinningBoundViolated(
                    "kappa exceeded the per-segment bound "
                    f"(max excess {(np.max(kap / kb) - 1.0):.2e})"
                )
            ua = _unif(st, jact)
            accept = ua < kap / kb
            cid = jact[accept]
            if cid.size:
                if instr is not None:
                    sb = np.minimum(
                        (np.linalg.norm(vs[cid], axis=1) / instr["dv"]).astype(int),
                        instr["events"].size - 1,
                    )
                    np.add.at(instr["events"], sb, 1)
                vs[cid] = _collide(vs[cid], st, cid, d, kt, ang)
                jp[cid] += 1
        act = jact
    return 0


def _verlet_advance_instr(xs, vs, g, act, fly, dt, grad, instr):
    """Verlet advance that also accumulates |v|-binned occupation time."""
    occ, dv_bin = instr["occupation"], instr["dv"]
    nb = occ.size
    left = fly.copy()
    live = np.arange(act.size)
    while live.size:
        ids = act[live]
        h = np.minimum(left[live], dt)
        sb = np.minimum(
            (np.linalg.norm(vs[ids], axis=1) / dv_bin).astype(int), nb - 1
        )
        np.add.at(occ, sb, h)
        hh = h[:, None]
        vs[ids] -= 0.5 * hh * g[ids]
        xs[ids] += hh * vs[ids]
        gn = grad(xs[ids])
        g[ids] = gn
        vs[ids] -= 0.5 * hh * gn
        left[live] -= h
        live = live[left[live] > 0.0]
