# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled jump-process kernels.

Scalar per-particle mirror of ``kernels_py``: identical splitmix64 streams,
identical draw order, libm transcendentals.  The particle loop runs without
the GIL so chunked calls can execute on a thread pool.

Status codes: 0 ok, 1 thinning bound violated, 2 collision envelope collapse,
3 unsupported dimension.
"""

from libc.math cimport cos, floor, log, pow, sin, sqrt

ctypedef unsigned long long u64

cdef double TWO_PI = 6.283185307179586476925287
cdef double TWO53 = 1.1102230246251565404236316680908203125e-16  # 2^-53
cdef u64 GOLD = 0x9E3779B97F4A7C15ULL
cdef u64 M1 = 0xBF58476D1CE4E5B9ULL
cdef u64 M2 = 0x94D049BB133111EBULL
cdef double CD = 6.0
cdef long MAX_TRIES = 100000
cdef int DMAX = 8


cdef inline u64 _mix(u64 z) noexcept nogil:
    z ^= z >> 30
    z *= M1
    z ^= z >> 27
    z *= M2
    return z ^ (z >> 31)


cdef inline double _unif(u64 *s) noexcept nogil:
    s[0] += GOLD
    return (<double> (_mix(s[0]) >> 11) + 0.5) * TWO53


cdef inline double _expo(u64 *s) noexcept nogil:
    return -log(_unif(s))


cdef inline void _gauss(u64 *s, double *out, int d) noexcept nogil:
    cdef int k
    cdef double u1, u2, r, a
    for k in range((d + 1) // 2):
        u1 = _unif(s)
        u2 = _unif(s)
        r = sqrt(-2.0 * log(u1))
        a = TWO_PI * u2
        out[2 * k] = r * cos(a)
        if 2 * k + 1 < d:
            out[2 * k + 1] = r * sin(a)


cdef inline void _sphere(u64 *s, double *out, int d) noexcept nogil:
    cdef double a, z, rho, nrm
    cdef int j
    if d == 1:
        out[0] = -1.0 if _unif(s) < 0.5 else 1.0
        return
    if d == 2:
        a = TWO_PI * _unif(s)
        out[0] = cos(a)
        out[1] = sin(a)
        return
    if d == 3:
        z = 1.0 - 2.0 * _unif(s)
        rho = 1.0 - z * z
        rho = sqrt(rho if rho > 0.0 else 0.0)
        a = TWO_PI * _unif(s)
        out[0] = rho * cos(a)
        out[1] = rho * sin(a)
        out[2] = z
        return
    _gauss(s, out, d)
    nrm = 0.0
    for j in range(d):
        nrm += out[j] * out[j]
    nrm = sqrt(nrm)
    for j in range(d):
        out[j] /= nrm


# -- potentials: grad Phi = coef(r2) * x ------------------------------------

cdef inline double _gcoef(int pid, double c, double e, double r2) noexcept nogil:
    if pid == 0:
        return 0.0
    if pid == 1:
        return c
    if pid == 2:
        return c * r2
    if pid == 3:
        return 2.0 * e * c * pow(1.0 + r2, e - 1.0)
    # pid 4: Phi = c <x>^(1+e), stored exponent is delta
    return (1.0 + e) * c * pow(1.0 + r2, 0.5 * (1.0 + e) - 1.0)


cdef inline double _phi(int pid, double c, double e, double r2) noexcept nogil:
    if pid == 0:
        return 0.0
    if pid == 1:
        return 0.5 * c * r2
    if pid == 2:
        return 0.25 * c * r2 * r2
    if pid == 3:
        return c * pow(1.0 + r2, e)
    return c * pow(1.0 + r2, 0.5 * (1.0 + e))


cdef inline double _r2(double *y, int d) noexcept nogil:
    cdef double acc = 0.0
    cdef int j
    for j in range(d):
        acc += y[j] * y[j]
    return acc


cdef inline void _verlet(double *x, double *v, double *g, int d, double fly,
                         double dt, int pid, double c, double e) noexcept nogil:
    """Advance one particle by `fly` with cached gradient g (updated)."""
    cdef double left = fly
    cdef double h, coef
    cdef int j
    while left > 0.0:
        h = dt if left > dt else left
        for j in range(d):
            v[j] -= 0.5 * h * g[j]
            x[j] += h * v[j]
        coef = _gcoef(pid, c, e, _r2(x, d))
        for j in range(d):
            g[j] = coef * x[j]
            v[j] -= 0.5 * h * g[j]
        left -= h


# -- kappa table -------------------------------------------------------------

cdef inline double _kappa(double s, double gamma, double m_b,
                          const double *vals, const double *slopes,
                          long nseg, double ds, double s_max, int dim) noexcept nogil:
    cdef long i
    cdef double lead
    if gamma == 0.0:
        return m_b
    if s > s_max:
        if gamma == 1.0:
            lead = s
        elif gamma == 2.0:
            lead = s * s
        else:
            lead = pow(s, gamma)
        return m_b * lead * (1.0 + gamma * (dim + gamma - 2.0) / (2.0 * s * s))
    i = <long> (s / ds)
    if i > nseg - 1:
        i = nseg - 1
    return vals[i] + (s - i * ds) * slopes[i]


# -- collision ---------------------------------------------------------------

cdef inline int _collide(u64 *s, double *v, int d, double gamma,
                         int ang_uniform, const double *zg, const double *zslope,
                         long nzseg, double du) noexcept nogil:
    """Replace v by the post-collision velocity; 0 ok, 2 envelope collapse."""
    cdef double w[8]
    cdef double sig[8]
    cdef double e1[8]
    cdef double e2[8]
    cdef double ua, dv, sv, ratio, wgt, z, rho, a, half, nrm, sgn
    cdef long tries = 0
    cdef int j, accepted = 0, jmin
    cdef long iz
    while tries < MAX_TRIES:
        _gauss(s, w, d)
        ua = _unif(s)
        dv = 0.0
        sv = 0.0
        nrm = 0.0
        for j in range(d):
            dv += (v[j] - w[j]) * (v[j] - w[j])
            sv += v[j] * v[j]
            nrm += w[j] * w[j]
        dv = sqrt(dv)
        if sqrt(nrm) <= CD:
            if gamma == 0.0:
                accepted = 1
            else:
                ratio = dv / (sqrt(sv) + CD)
                wgt = ratio if gamma == 1.0 else pow(ratio, gamma)
                if ua < wgt:
                    accepted = 1
        if accepted:
            break
        tries += 1
    if not accepted:
        return 2

    if ang_uniform:
        _sphere(s, sig, d)
    else:
        # tabulated even angular law: z = cos(theta) from a uniform-u table
        ua = _unif(s)
        iz = <long> (ua / du)
        if iz > nzseg - 1:
            iz = nzseg - 1
        z = zg[iz] + (ua - iz * du) * zslope[iz]
        if dv > 0.0:
            for j in range(d):
                e1[j] = (v[j] - w[j]) / dv
        else:
            for j in range(d):
                e1[j] = 0.0
            e1[0] = 1.0
        if d == 1:
            sig[0] = e1[0] if z >= 0.0 else -e1[0]
        elif d == 2:
            sgn = -1.0 if _unif(s) < 0.5 else 1.0
            rho = 1.0 - z * z
            rho = sqrt(rho if rho > 0.0 else 0.0)
            sig[0] = z * e1[0] - sgn * rho * e1[1]
            sig[1] = z * e1[1] + sgn * rho * e1[0]
        else:
            a = TWO_PI * _unif(s)
            jmin = 0
            for j in range(1, d):
                if e1[j] * e1[j] < e1[jmin] * e1[jmin]:
                    jmin = j
            for j in range(d):
                e2[j] = -e1[jmin] * e1[j]
            e2[jmin] += 1.0
            nrm = sqrt(_r2(e2, d))
            for j in range(d):
                e2[j] /= nrm
            # third frame vector e1 x e2 (d == 3 only)
            sig[0] = e1[1] * e2[2] - e1[2] * e2[1]
            sig[1] = e1[2] * e2[0] - e1[0] * e2[2]
            sig[2] = e1[0] * e2[1] - e1[1] * e2[0]
            rho = 1.0 - z * z
            rho = sqrt(rho if rho > 0.0 else 0.0)
            for j in range(d):
                sig[j] = z * e1[j] + rho * (cos(a) * e2[j] + sin(a) * sig[j])
    half = 0.5 * dv
    for j in range(d):
        v[j] = 0.5 * (v[j] + w[j]) + half * sig[j]
    return 0


# ---------------------------------------------------------------------------
# public kernels


def torus_bgk(double[:, ::1] x, double[:, ::1] v, u64[::1] state,
              long long[::1] jumps, double duration,
              Py_ssize_t i0=0, Py_ssize_t i1=-1):
    cdef Py_ssize_t n = x.shape[0]
    cdef int d = <int> x.shape[1]
    cdef Py_ssize_t i
    cdef int j
    cdef double rem, tau, fly
    cdef u64 s
    cdef double vb[8]
    if i1 < 0:
        i1 = n
    if d > DMAX:
        return 3
    with nogil:
        for i in range(i0, i1):
            s = state[i]
            rem = duration
            while rem > 0.0:
                s += GOLD
                tau = -log((<double> (_mix(s) >> 11) + 0.5) * TWO53)
                fly = tau if tau < rem else rem
                for j in range(d):
                    x[i, j] += v[i, j] * fly
                    x[i, j] -= floor(x[i, j])
                    if x[i, j] >= 1.0:
                        x[i, j] = 0.0
                if tau >= rem:
                    break
                rem -= tau
                _gauss(&s, vb, d)
                for j in range(d):
                    v[i, j] = vb[j]
                jumps[i] += 1
            state[i] = s
    return 0


def torus_lb(double[:, ::1] x, double[:, ::1] v, u64[::1] state,
             long long[::1] jumps, double duration,
             double gamma, double m_b,
             double[::1] kvals, double[::1] kslopes, double kds, double ksmax,
             int kdim, int ang_uniform,
             double[::1] zgrid, double[::1] zslope, double zdu,
             Py_ssize_t i0=0, Py_ssize_t i1=-1):
    cdef Py_ssize_t n = x.shape[0]
    cdef int d = <int> x.shape[1]
    cdef Py_ssize_t i
    cdef int j, rc
    cdef double rem, tau, fly, kap, sv
    cdef u64 s
    cdef long nseg = kvals.shape[0] - 1
    cdef long nzseg = zgrid.shape[0] - 1
    cdef int status = 0
    if i1 < 0:
        i1 = n
    if d > DMAX:
        return 3
    with nogil:
        for i in range(i0, i1):
            s = state[i]
            rem = duration
            while rem > 0.0:
                sv = 0.0
                for j in range(d):
                    sv += v[i, j] * v[i, j]
                kap = _kappa(sqrt(sv), gamma, m_b, &kvals[0], &kslopes[0],
                             nseg, kds, ksmax, kdim)
                tau = _expo(&s) / kap
                fly = tau if tau < rem else rem
                for j in range(d):
                    x[i, j] += v[i, j] * fly
                    x[i, j] -= floor(x[i, j])
                    if x[i, j] >= 1.0:
                        x[i, j] = 0.0
                if tau >= rem:
                    break
                rem -= tau
                rc = _collide(&s, &v[i, 0], d, gamma, ang_uniform,
                              &zgrid[0], &zslope[0], nzseg, zdu)
                if rc != 0:
                    status = rc
                    break
                jumps[i] += 1
            state[i] = s
            if status != 0:
                break
    return status


def confined_bgk(double[:, ::1] x, double[:, ::1] v, u64[::1] state,
                 long long[::1] jumps, double duration, double dt,
                 int pid, double c, double e,
                 Py_ssize_t i0=0, Py_ssize_t i1=-1):
    cdef Py_ssize_t n = x.shape[0]
    cdef int d = <int> x.shape[1]
    cdef Py_ssize_t i
    cdef int j
    cdef double rem, tau, fly, coef
    cdef u64 s
    cdef double vb[8]
    cdef double g[8]
    if i1 < 0:
        i1 = n
    if d > DMAX:
        return 3
    with nogil:
        for i in range(i0, i1):
            s = state[i]
            rem = duration
            coef = _gcoef(pid, c, e, _r2(&x[i, 0], d))
            for j in range(d):
                g[j] = coef * x[i, j]
            while rem > 0.0:
                tau = _expo(&s)
                fly = tau if tau < rem else rem
                _verlet(&x[i, 0], &v[i, 0], g, d, fly, dt, pid, c, e)
                if tau >= rem:
                    break
                rem -= tau
                _gauss(&s, vb, d)
                for j in range(d):
                    v[i, j] = vb[j]
                jumps[i] += 1
            state[i] = s
    return 0


def confined_lb(double[:, ::1] x, double[:, ::1] v, u64[::1] state,
                long long[::1] jumps, double duration, double dt,
                int pid, double c, double e,
                double gamma, double m_b,
                double[::1] kvals, double[::1] kslopes, double kds,
                double ksmax, int kdim, int ang_uniform,
                double[::1] zgrid, double[::1] zslope, double zdu,
                double phi_min, double pad,
                double[::1] occupation, long long[::1] events, double dv_bin,
                int instrument,
                Py_ssize_t i0=0, Py_ssize_t i1=-1):
    cdef Py_ssize_t n = x.shape[0]
    cdef int d = <int> x.shape[1]
    cdef Py_ssize_t i
    cdef int j, rc
    cdef double rem, tau, fly, kap, kbar, energy, vmax, sv, left, h, coef
    cdef u64 s
    cdef double g[8]
    cdef long nseg = kvals.shape[0] - 1
    cdef long nzseg = zgrid.shape[0] - 1
    cdef long nb = occupation.shape[0] if instrument else 0
    cdef long bi
    cdef int status = 0
    if i1 < 0:
        i1 = n
    if d > DMAX:
        return 3
    with nogil:
        for i in range(i0, i1):
            s = state[i]
            rem = duration
            coef = _gcoef(pid, c, e, _r2(&x[i, 0], d))
            for j in range(d):
                g[j] = coef * x[i, j]
            while rem > 0.0:
                if gamma == 0.0:
                    kbar = m_b
                else:
                    energy = 0.5 * _r2(&v[i, 0], d) + _phi(pid, c, e, _r2(&x[i, 0], d))
                    energy -= phi_min
                    vmax = sqrt(2.0 * (energy if energy > 0.0 else 0.0))
                    kbar = _kappa(vmax, gamma, m_b, &kvals[0], &kslopes[0],
                                  nseg, kds, ksmax, kdim) * (1.0 + pad)
                tau = _expo(&s) / kbar
                fly = tau if tau < rem else rem
                # inline verlet so occupation can be accumulated per step
                left = fly
                while left > 0.0:
                    h = dt if left > dt else left
                    if instrument:
                        bi = <long> (sqrt(_r2(&v[i, 0], d)) / dv_bin)
                        if bi > nb - 1:
                            bi = nb - 1
                        occupation[bi] += h
                    for j in range(d):
                        v[i, j] -= 0.5 * h * g[j]
                        x[i, j] += h * v[i, j]
                    coef = _gcoef(pid, c, e, _r2(&x[i, 0], d))
                    for j in range(d):
                        g[j] = coef * x[i, j]
                        v[i, j] -= 0.5 * h * g[j]
                    left -= h
                if tau >= rem:
                    break
                rem -= tau
                sv = sqrt(_r2(&v[i, 0], d))
                kap = _kappa(sv, gamma, m_b, &kvals[0], &kslopes[0],
                             nseg, kds, ksmax, kdim)
                if kap > kbar:
                    status = 1
                    break
                if _unif(&s) < kap / kbar:
                    if instrument:
                        bi = <long> (sv / dv_bin)
                        if bi > nb - 1:
                            bi = nb - 1
                        events[bi] += 1
                    rc = _collide(&s, &v[i, 0], d, gamma, ang_uniform,
                                  &zgrid[0], &zslope[0], nzseg, zdu)
                    if rc != 0:
                        status = rc
                        break
                    jumps[i] += 1
            state[i] = s
            if status != 0:
                break
    return status
