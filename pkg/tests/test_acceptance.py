"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with  pytest tests/test_acceptance.py -v -s  to see the per-criterion
lines and the measured-vs-certified rate reports.  Stated runtime budgets
are enforced when the compiled backend is active (the NumPy fallback runs
the same checks without the budget assertion).
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest
from scipy import stats

from kinetic_harris import _backend
from kinetic_harris.distance_metrics import (
    default_binning,
    estimate_bias_floor,
    estimate_tv,
    estimate_weighted_tv,
    fit_decay,
)
from kinetic_harris.domain_core import (
    DomainSpec,
    equilibrium_spec,
    hard_spheres,
    quadratic_potential,
    quartic_potential,
)
from kinetic_harris.hamiltonian_flow import (
    FlowConfig,
    flow,
    shoot,
    shooting_time_bound,
)
from kinetic_harris.harris_certificates import (
    doeblin_rate,
    optimize_doeblin_torus_bgk,
    subgeometric_rate,
)
from kinetic_harris.jump_samplers import (
    Ensemble,
    ProcessSpec,
    collision_rate_kappa,
    kappa_table_for,
    sample_collision,
    simulate,
)
from kinetic_harris.lyapunov_drift import generator_apply_bgk, lyapunov_for
from kinetic_harris.scenarios import confined_weight, make_scenario

COMPILED = _backend.active_backend_name() == "compiled"


@contextmanager
def budget(seconds, label):
    """Time a criterion; enforce the stated budget on the compiled backend."""
    t0 = time.perf_counter()
    yield
    elapsed = time.perf_counter() - t0
    note = f"{label}: PASS  ({elapsed:.1f}s"
    if seconds is None:
        note += ")"
    elif COMPILED:
        assert elapsed < seconds, f"{label} exceeded {seconds}s budget"
        note += f" < {seconds:g}s budget)"
    else:
        note += f"; budget {seconds:g}s waived on the python fallback)"
    print("\n" + note)


def test_01_flow_oracle():
    with budget(1.0, "ACCEPTANCE 1 [flow oracle]"):
        pot = quadratic_potential(1.0)
        errs = []
        for dt in (1e-3, 5e-4):
            x, v = flow((np.array([1.0]), np.array([0.0])), 10.0, pot,
                        FlowConfig(dt=dt))
            xe = math.cos(10.0)
            ve = -math.sin(10.0)
            errs.append(max(abs(x[0] - xe), abs(v[0] - ve)))
        assert errs[0] <= 1e-4
        assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_02_shooting_contraction():
    with budget(None, "ACCEPTANCE 2 [shooting contraction]"):
        for pot in (quadratic_potential(1.0), quartic_potential(1.0)):
            x0, x1 = np.array([0.5]), np.array([-1.0])
            t1 = shooting_time_bound(1.0, pot)
            res = shoot(x0, x1, 0.9 * t1, pot, FlowConfig(dt=1e-3),
                        tol=1e-10, max_iter=25)
            assert res.max_ratio <= 0.26, pot.name
            assert res.residual <= 1e-10
        # harmonic closed form: v0 = t x1 / sin t
        res = shoot(np.array([0.0]), np.array([0.3]), 0.4,
                    quadratic_potential(1.0), FlowConfig(dt=1e-4), tol=1e-12)
        assert abs(res.v0[0] - 0.4 * 0.3 / math.sin(0.4)) <= 1e-8


def test_03_bgk_moment_oracle():
    with budget(30.0, "ACCEPTANCE 3 [relaxation moment oracle]"):
        dom = DomainSpec(d=1, geometry="torus")
        proc = ProcessSpec(kind="bgk", domain=dom)
        ens = Ensemble.dirac(dom, 100_000, [0.5], [5.0], seed_base=301)
        for t in np.geomspace(0.25, 10.0, 20):
            ens = simulate(ens, proc, float(t))
            m = ens.speed2()
            se = m.std(ddof=1) / math.sqrt(ens.n)
            expected = 1.0 + 24.0 * math.exp(-t)
            assert abs(m.mean() - expected) <= 3.0 * se, t


@pytest.mark.parametrize(
    "kind", ["torus-bgk", "torus-boltzmann", "confined-bgk",
             "confined-boltzmann"]
)
def test_04_equilibrium_invariance(kind):
    with budget(None, f"ACCEPTANCE 4 [{kind} equilibrium invariance]"):
        sc = make_scenario(kind, d=1, n_particles=100_000, seed=404,
                           bins_per_axis=24)
        eq = sc.equilibrium()
        binning = default_binning(eq, sc.bins_per_axis)
        ens = Ensemble.from_equilibrium(eq, sc.n_particles, seed_base=404)
        proc = sc.process()

        def moments(e):
            v2 = e.speed2()
            xv = np.sum(e.x * e.v, axis=1)
            phi = (np.zeros(e.n) if eq.domain.is_torus
                   else eq.domain.potential.value(e.x))
            return [v2, phi, xv]

        base = moments(ens)
        tv0, err0 = estimate_tv(ens, eq, binning)
        for t in (2.0, 5.0, 10.0, 20.0):
            ens = simulate(ens, proc, t)
            cur = moments(ens)
            for m0, mt in zip(base, cur):
                se = math.hypot(
                    m0.std(ddof=1) / math.sqrt(len(m0)),
                    mt.std(ddof=1) / math.sqrt(len(mt)),
                )
                assert abs(mt.mean() - m0.mean()) <= 3.0 * se, (kind, t)
            tv, err = estimate_tv(ens, eq, binning)
            assert abs(tv - tv0) <= 3.0 * math.hypot(err, err0), (kind, t)


def test_05_lyapunov_pointwise_certificate():
    with budget(None, "ACCEPTANCE 5 [pointwise drift certificate]"):
        from scipy.stats import qmc

        pot = quadratic_potential(1.0)
        spec = lyapunov_for("confined_bgk", potential=pot, d=1)
        lam, K, _ = spec.drift()
        dp = pot.drift(2.0)
        assert lam == min(dp.gamma1, dp.gamma2, 1.0) / 4.0
        pts = qmc.Halton(d=2, scramble=False).random(10_000)
        x = (2.0 * pts[:, :1] - 1.0) * 50.0
        v = (2.0 * pts[:, 1:] - 1.0) * 50.0
        resid = generator_apply_bgk(spec, x, v) + lam * spec.V(x, v) - K
        n_viol = int(np.sum(resid > 1e-12))
        assert n_viol == 0


def test_06_torus_decay_dominated_by_certificate():
    with budget(120.0, "ACCEPTANCE 6 [torus relaxation decay vs certificate]"):
        sc = make_scenario("torus-bgk", d=1, n_particles=100_000, seed=606,
                           t_final=20.0, bins_per_axis=32)
        eq = sc.equilibrium()
        binning = default_binning(eq, sc.bins_per_axis)
        ens = sc.initial_ensemble()
        proc = sc.process()
        rows = []
        for t in sc.snapshots():
            ens = simulate(ens, proc, float(t))
            tv, err = estimate_tv(ens, eq, binning)
            rows.append((t, tv, err))
        times = np.array([r[0] for r in rows])
        tv = np.array([r[1] for r in rows])
        err = np.array([r[2] for r in rows])
        floor = estimate_bias_floor(eq, binning, sc.n_particles, seed=77)
        fit = fit_decay(times, tv, err, "exponential", floor=floor)
        assert fit.r_squared >= 0.98

        cert = optimize_doeblin_torus_bgk(1)
        lam_cert, pref = doeblin_rate(cert.t_star, cert.alpha)
        bound = 2.0 * pref * np.exp(-lam_cert * times)
        assert np.all(bound >= tv - 3.0 * err)
        assert lam_cert < fit.rate  # constants are conservative
        print(
            f"\n  measured lambda_hat = {fit.rate:.4f} (R2 = "
            f"{fit.r_squared:.4f}); certified lambda = {lam_cert:.3e}"
        )


def test_07_confined_decay_dominated():
    with budget(300.0, "ACCEPTANCE 7 [confined relaxation weighted decay]"):
        sc = make_scenario("confined-bgk", d=1, n_particles=100_000, seed=707,
                           t_final=20.0, bins_per_axis=24)
        from kinetic_harris.harris_certificates import assemble_certificate
        from kinetic_harris.cli import _bound_column

        scert = assemble_certificate(sc)
        eq = sc.equilibrium()
        binning = default_binning(eq, sc.bins_per_axis)
        weight = confined_weight(sc.potential)
        ens0 = sc.initial_ensemble()
        ens = ens0
        rows = []
        for t in sc.snapshots():
            ens = simulate(ens, sc.process(), float(t))
            wtv, werr = estimate_weighted_tv(ens, eq, weight, binning)
            rows.append((t, wtv, werr))
        times = np.array([r[0] for r in rows])
        wtv = np.array([r[1] for r in rows])
        werr = np.array([r[2] for r in rows])
        wfloor = estimate_weighted_tv(
            Ensemble.from_equilibrium(eq, sc.n_particles, 9007), eq, weight,
            binning,
        )[0]
        # the weighted norm grows transiently while the bulk climbs the
        # potential; fit the decay from its peak onward
        peak = int(np.argmax(wtv))
        fit = fit_decay(times[peak:], wtv[peak:], werr[peak:], "exponential",
                        floor=wfloor)
        bounds, norm = _bound_column(sc, scert, eq, ens0, times)
        assert norm == "wtv"
        lam_cert = scert.certificate.lam_rate
        assert fit.rate > lam_cert
        assert np.all(bounds >= wtv - 3.0 * werr)  # no bound violation
        print(
            f"\n  measured lambda_hat = {fit.rate:.4f} (R2 = "
            f"{fit.r_squared:.4f}); certified lambda = {lam_cert:.3e}"
        )


def test_08_subgeometric_signature():
    with budget(600.0, "ACCEPTANCE 8 [weak-confinement algebraic signature]"):
        sc = make_scenario("subgeometric-bgk", d=1, seed=808)
        assert sc.n_particles == 200_000 and sc.t_final == 200.0
        eq = sc.equilibrium()
        binning = default_binning(eq, sc.bins_per_axis)
        ens0 = sc.initial_ensemble()
        ens = ens0
        times = np.geomspace(2.0, 200.0, 20)
        rows = []
        for t in times:
            ens = simulate(ens, sc.process(), float(t))
            tv, err = estimate_tv(ens, eq, binning)
            rows.append((t, tv, err))
        tv = np.array([r[1] for r in rows])
        err = np.array([r[2] for r in rows])
        floor = estimate_bias_floor(eq, binning, sc.n_particles, seed=88)
        # tail window: after the bulk has begun to mix
        tail = times >= 20.0
        alg = fit_decay(times[tail], tv[tail], err[tail], "algebraic",
                        floor=floor)
        expo = fit_decay(times[tail], tv[tail], err[tail], "exponential",
                         floor=floor)
        beta = 0.5
        assert alg.rate >= 0.6 * beta / (1.0 - beta)
        assert expo.r_squared < alg.r_squared  # exponential model rejected

        # certified curve dominates at every snapshot
        spec = lyapunov_for("subgeometric_bgk", potential=sc.potential, d=1)
        lam, K, q = spec.drift()
        mu_V = float(np.mean(spec.V(ens0.x, ens0.v)))
        curve = subgeometric_rate(q, mu_V=mu_V, C=2.0, lam=lam)
        bound = np.minimum(2.0, np.asarray(curve.bound(times)))
        assert np.all(bound >= tv - 3.0 * err)
        print(
            f"\n  tail p_hat = {alg.rate:.3f} (R2 alg {alg.r_squared:.4f} vs "
            f"exp {expo.r_squared:.4f}); certified exponent "
            f"{curve.asymptotic_exponent:.3f}"
        )


def test_09_collision_sampler_exactness():
    with budget(None, "ACCEPTANCE 9 [collision sampler exactness]"):
        kern = hard_spheres(1.0, 3)
        rng = np.random.default_rng(909)
        v = rng.standard_normal((1_000_000, 3))
        vp, vsp, w, _ = sample_collision(v, kern, rng, return_partner=True)
        assert np.max(np.abs((vp + vsp) - (v + w))) <= 1e-13
        scale = np.sum(v * v + w * w, axis=1)
        en_err = np.abs(
            np.sum(vp * vp + vsp * vsp, axis=1) - scale
        ) / np.maximum(scale, 1.0)
        assert np.max(en_err) <= 1e-13

        # stationarity of the jump map: Maxwellian in => Maxwellian out at
        # constant rate; at gamma > 0 the collision-flux law kappa(v) M(v)
        # is the invariant one (the rate-kappa process then preserves M)
        kern0 = hard_spheres(0.0, 3)
        v0 = rng.standard_normal((1_000_000, 3))
        vp0 = sample_collision(v0, kern0, rng)
        assert stats.kstest(
            np.linalg.norm(vp0, axis=1), stats.chi(3).cdf
        ).pvalue > 0.01
        table = kappa_table_for(kern, 3)
        prop = rng.standard_normal((2_200_000, 3))
        keep = rng.uniform(size=len(prop)) < table.eval(
            np.linalg.norm(prop, axis=1)
        ) / table.eval(8.0)
        vflux = prop[keep][:1_000_000]
        vpf = sample_collision(vflux, kern, rng)
        grid = np.linspace(0.0, 12.0, 4001)
        dens = table.eval(grid) * stats.chi(3).pdf(grid)
        cdf = np.concatenate(
            [[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1])) * np.diff(grid)[0]]
        )
        cdf /= cdf[-1]
        pval = stats.kstest(
            np.linalg.norm(vpf, axis=1), lambda s: np.interp(s, grid, cdf)
        ).pvalue
        assert pval > 0.01

        # thinned jump rate vs quadrature kappa per |v| bin (>= 1e4 events)
        dom = DomainSpec(d=3, geometry="whole_space",
                         potential=quadratic_potential(1.0))
        proc = ProcessSpec(kind="boltzmann", domain=dom, kernel=kern,
                           flow=FlowConfig(dt=1e-2))
        ens = Ensemble.from_equilibrium(equilibrium_spec(dom), 100_000,
                                        seed_base=909)
        nb = 12
        instr = {
            "occupation": np.zeros(nb),
            "events": np.zeros(nb, dtype=np.int64),
            "dv": 6.0 / nb,
        }
        out = simulate(ens, proc, 45.0, instrument=instr)
        assert out.jumps.sum() >= 10_000_000
        centers = (np.arange(nb) + 0.5) * instr["dv"]
        checked = 0
        for i in range(nb):
            if instr["events"][i] < 10_000:
                continue
            rate = instr["events"][i] / instr["occupation"][i]
            kap = collision_rate_kappa(
                np.array([centers[i], 0.0, 0.0]), kern
            )
            assert abs(rate - kap) / kap <= 0.05, (centers[i], rate, kap)
            checked += 1
        assert checked >= 5
        print(f"\n  thinned-rate bins checked: {checked}, "
              f"events total = {int(out.jumps.sum())}")


def test_10_minorisation_conservative():
    with budget(300.0, "ACCEPTANCE 10 [minorisation floor is conservative]"):
        cert = optimize_doeblin_torus_bgk(1)
        t_star = cert.t_star
        delta = cert.v_radius
        floor = math.exp(cert.density_floor_log)
        dom = DomainSpec(d=1, geometry="torus")
        proc = ProcessSpec(kind="bgk", domain=dom)
        rng = np.random.default_rng(1010)
        nb = 8
        n = 1_000_000
        for k in range(10):
            x0 = float(rng.uniform())
            v0 = float(rng.uniform(-8.0, 8.0))
            ens = Ensemble.dirac(dom, n, [x0], [v0], seed_base=1000 + k)
            out = simulate(ens, proc, t_star)
            xe = np.linspace(0.0, 1.0, nb + 1)
            ve = np.linspace(-delta, delta, nb + 1)
            hist, _, _ = np.histogram2d(out.x[:, 0], out.v[:, 0],
                                        bins=(xe, ve))
            vol = (1.0 / nb) * (2.0 * delta / nb)
            dens = hist / n / vol
            se = np.sqrt(np.maximum(hist, 1.0)) / n / vol
            assert np.all(dens + 3.0 * se >= floor), (x0, v0)


def test_11_subgeometric_machinery():
    with budget(None, "ACCEPTANCE 11 [weak-drift rate machinery]"):
        curve = subgeometric_rate(0.5, mu_V=1.0)
        for u in (2.0, 10.0, 1e3):
            closed = 2.0 * (math.sqrt(u) - 1.0) - 2.0 * math.log(
                (1.0 + math.sqrt(u)) / 2.0
            )
            assert abs(curve.H(u) - closed) <= 1e-10
            assert abs(curve.H_inv(curve.H(u)) - u) <= 1e-9 * u
        t = 1e6
        b1 = float(curve.bound(t))
        b2 = float(curve.bound(t * 1.02))
        slope = (math.log(b2) - math.log(b1)) / math.log(1.02)
        target = curve.asymptotic_exponent  # q/(1-q) = 1 at q = 1/2
        assert abs(slope + target) <= 0.02 * target
