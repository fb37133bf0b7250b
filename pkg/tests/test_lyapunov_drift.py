import math

import numpy as np
import pytest
from scipy import optimize

from kinetic_harris.domain_core import (
    DomainSpec,
    hard_spheres,
    quadratic_potential,
)
from kinetic_harris.jump_samplers import Ensemble, ProcessSpec, simulate
from kinetic_harris.lyapunov_drift import (
    LyapunovSpec,
    drift_constants_confined_bgk,
    drift_constants_confined_boltzmann,
    drift_constants_subgeometric,
    drift_constants_torus_boltzmann,
    empirical_drift_check,
    generator_apply_bgk,
    generator_apply_boltzmann,
    lyapunov_for,
    scattering_v2_generator,
)


def _grid(lim=50.0, n=101):
    g = np.linspace(-lim, lim, n)
    X, V = np.meshgrid(g, g)
    return X.ravel()[:, None], V.ravel()[:, None]


class TestGeneratorClosedForms:
    def test_velocity_weight_alone(self):
        # V = |v|^2 under the relaxation generator: d - |v|^2
        spec = LyapunovSpec(form="torus_boltzmann_v2", lam=1.0, K=1.0)
        v = np.array([[0.0], [2.0]])
        x = np.zeros_like(v)
        uv = generator_apply_bgk(spec, x, v)
        assert uv[0] == pytest.approx(1.0)
        assert uv[1] == pytest.approx(1.0 - 4.0)

    def test_confined_form_at_origin(self, quadratic):
        spec = lyapunov_for("confined_bgk", potential=quadratic, d=1)
        uv = generator_apply_bgk(spec, np.zeros((1, 1)), np.zeros((1, 1)))
        assert uv[0] == pytest.approx(0.5)  # d/2

    def test_positivity_of_weight(self, quadratic, rng):
        spec = lyapunov_for("confined_bgk", potential=quadratic, d=1)
        x, v = _grid()
        assert np.min(spec.V(x, v)) >= 0.0

    def test_coefficient_constraints_enforced(self, quadratic):
        with pytest.raises(ValueError):
            LyapunovSpec(form="confined_bgk", a=1.0, b=0.3,
                         potential=quadratic)
        with pytest.raises(ValueError):
            LyapunovSpec(form="subgeometric_boltzmann", a=0.5, b=0.5,
                         potential=quadratic)


class TestConfinedRelaxationDrift:
    def test_lambda_formula_quadratic(self, quadratic):
        lam, K = drift_constants_confined_bgk(quadratic, 1)
        # gamma1 = 1/2, gamma2 = 1: lambda = min(1/2, 1, 1)/4
        assert lam == pytest.approx(0.125)

    def test_lambda_formula_small_gamma1(self):
        pot = quadratic_potential(0.2)  # gamma1 = 0.1, gamma2 = 1
        lam, _ = drift_constants_confined_bgk(pot, 1)
        assert lam == pytest.approx(0.025)

    def test_K_dominates_grid_search_oracle(self, quadratic):
        lam, K = drift_constants_confined_bgk(quadratic, 1)
        spec = lyapunov_for("confined_bgk", potential=quadratic, d=1)
        x, v = _grid()
        resid = generator_apply_bgk(spec, x, v) + lam * spec.V(x, v)
        assert float(np.max(resid)) <= K + 1e-12

    def test_pointwise_certificate_no_violations(self, quadratic):
        # acceptance-scale check at 1e4 quasi-random points
        from scipy.stats import qmc

        spec = lyapunov_for("confined_bgk", potential=quadratic, d=1)
        lam, K, _ = spec.drift()
        pts = qmc.Halton(d=2, scramble=False).random(10_000)
        x = (2.0 * pts[:, :1] - 1.0) * 50.0
        v = (2.0 * pts[:, 1:] - 1.0) * 50.0
        resid = generator_apply_bgk(spec, x, v) + lam * spec.V(x, v) - K
        assert np.max(resid) <= 1e-12

    def test_quartic_drift(self, quartic):
        lam, K = drift_constants_confined_bgk(quartic, 1)
        spec = LyapunovSpec(form="confined_bgk", a=0.25, b=0.125, lam=lam,
                            K=K, potential=quartic)
        x, v = _grid(30.0)
        resid = generator_apply_bgk(spec, x, v) + lam * spec.V(x, v) - K
        assert np.max(resid) <= 1e-10


class TestTorusScatteringDrift:
    def test_moment_ratio_constants_against_scalar_oracle(self, spheres3):
        td = drift_constants_torus_boltzmann(spheres3, 3)
        # independent oracle: adaptive quadrature + scalar minimisation
        def ratio(s):
            from kinetic_harris.jump_samplers import collision_rate_kappa

            v = np.zeros(3)
            v[0] = s
            return collision_rate_kappa(v, spheres3) / (1.0 + s)

        res = optimize.minimize_scalar(ratio, bounds=(0.0, 30.0),
                                       method="bounded")
        assert td.A0 == pytest.approx(res.fun, rel=1e-3)
        assert td.gamma_b == pytest.approx(0.5)  # even angular law
        assert td.lam > 0.0

    @pytest.mark.parametrize("gamma,d", [(0.0, 1), (1.0, 1), (1.0, 3)])
    def test_positive_rate_for_builtins(self, gamma, d):
        td = drift_constants_torus_boltzmann(hard_spheres(gamma, d), d)
        assert td.lam > 0.0 and td.K >= 0.0

    def test_gamma0_closed_form(self):
        kern = hard_spheres(0.0, 3)
        td = drift_constants_torus_boltzmann(kern, 3)
        # at gamma = 0 all moment integrals are v-independent:
        # T0 = 1, T1 = E|v*|, T2 = 3, ratios against (1 + |v|^0) = 2
        assert td.A0 == pytest.approx(0.5, rel=1e-6)
        assert td.C1 == pytest.approx(math.sqrt(2.0 / math.pi) * 2.0 / 2.0,
                                      rel=1e-6)
        assert td.C2 == pytest.approx(1.5, rel=1e-6)

    def test_drift_inequality_on_grid(self, spheres3):
        td = drift_constants_torus_boltzmann(spheres3, 3)
        s = np.linspace(0.0, 50.0, 400)
        uv = scattering_v2_generator(spheres3, 3, s)
        assert np.max(uv + td.lam * s * s - td.K) <= 1e-6


class TestConfinedScatteringDrift:
    def test_grid_certificate(self, quartic, spheres1):
        cd = drift_constants_confined_boltzmann(quartic, spheres1, 1)
        spec = LyapunovSpec(form="confined_boltzmann", a=cd.a, b=cd.b,
                            lam=cd.lam, K=cd.K, potential=quartic)
        x, v = _grid(30.0, 81)
        uv = generator_apply_boltzmann(spec, x, v, quartic, spheres1)
        resid = uv + cd.lam * spec.V(x, v) - cd.K
        assert np.max(resid) <= 1e-6

    def test_gamma0_reduces_to_quadratic_growth(self, quadratic):
        kern = hard_spheres(0.0, 1)
        cd = drift_constants_confined_boltzmann(quadratic, kern, 1)
        assert cd.lam > 0.0
        spec = LyapunovSpec(form="confined_boltzmann", a=cd.a, b=cd.b,
                            lam=cd.lam, K=cd.K, potential=quadratic)
        x, v = _grid(40.0, 81)
        uv = generator_apply_boltzmann(spec, x, v, quadratic, kern)
        assert np.max(uv + cd.lam * spec.V(x, v) - cd.K) <= 1e-6


class TestSubgeometricDrift:
    def test_exponents(self, sublinear):
        lam, K, q = drift_constants_subgeometric("bgk", sublinear, 1)
        assert q == pytest.approx(0.5)  # beta = 1/2 for Phi = <x>
        from kinetic_harris.domain_core import sublinear_potential

        pot = sublinear_potential(1.0, 1.0)
        out = drift_constants_subgeometric(
            "boltzmann", pot, 1, hard_spheres(1.0, 1)
        )
        assert out[2] == pytest.approx(0.5)  # delta/(1+delta) at delta = 1

    def test_bgk_grid_certificate(self, sublinear):
        lam, K, q = drift_constants_subgeometric("bgk", sublinear, 1)
        spec = LyapunovSpec(form="subgeometric_bgk", a=0.25, b=0.125,
                            lam=lam, K=K, q=q, potential=sublinear)
        x, v = _grid(50.0)
        resid = generator_apply_bgk(spec, x, v) + lam * spec.V(x, v) ** q - K
        assert np.max(resid) <= 1e-10

    def test_boltzmann_grid_certificate(self):
        from kinetic_harris.domain_core import sublinear_potential

        pot = sublinear_potential(1.0, 0.5)
        kern = hard_spheres(1.0, 1)
        lam, K, q, a, b = drift_constants_subgeometric("boltzmann", pot, 1,
                                                       kern)
        spec = LyapunovSpec(form="subgeometric_boltzmann", a=a, b=b, lam=lam,
                            K=K, q=q, potential=pot)
        x, v = _grid(40.0, 81)
        uv = generator_apply_boltzmann(spec, x, v, pot, kern)
        assert np.max(uv + lam * spec.V(x, v) ** q - K) <= 1e-6


class TestEmpiricalDriftCheck:
    def test_torus_second_moment_envelope(self):
        dom = DomainSpec(d=1, geometry="torus")
        proc = ProcessSpec(kind="bgk", domain=dom)
        # for V = |v|^2 the relaxation drift is exact: UV = -V + d
        spec = LyapunovSpec(form="torus_boltzmann_v2", lam=1.0, K=1.0)
        ens = Ensemble.dirac(dom, 20_000, [0.5], [5.0], seed_base=41)
        rep = empirical_drift_check(proc, spec, ens, horizon=6.0, n_times=8)
        assert rep.passed
        # the envelope at the exact ODE solution: e^{-t} 25 + 1
        ode = np.exp(-rep.times) * 25.0 + 1.0 * (1.0 - np.exp(-rep.times))
        assert np.all(np.abs(rep.mean_V - ode) <= 5.0 * rep.stderr)

    def test_confined_envelope(self, quadratic):
        dom = DomainSpec(d=1, geometry="whole_space", potential=quadratic)
        proc = ProcessSpec(kind="bgk", domain=dom)
        spec = lyapunov_for("confined_bgk", potential=quadratic, d=1)
        ens = Ensemble.dirac(dom, 10_000, [2.0], [1.0], seed_base=42)
        rep = empirical_drift_check(proc, spec, ens, horizon=8.0, n_times=6)
        assert rep.passed

    def test_discrete_time_consistency_dirac_starts(self, quadratic):
        # (P*_t V)(z) <= e^{-lam t} V(z) + K/lam, checked from 100 random
        # Dirac starts simulated as one block-structured ensemble
        dom = DomainSpec(d=1, geometry="whole_space", potential=quadratic)
        proc = ProcessSpec(kind="bgk", domain=dom)
        spec = lyapunov_for("confined_bgk", potential=quadratic, d=1)
        lam, K, _ = spec.drift()
        rng = np.random.default_rng(4242)
        n_starts, per = 100, 1500
        z_x = rng.uniform(-4.0, 4.0, n_starts)
        z_v = rng.uniform(-4.0, 4.0, n_starts)
        x = np.repeat(z_x, per)[:, None]
        v = np.repeat(z_v, per)[:, None]
        ens = Ensemble.from_points(x, v, dom, seed_base=4242)
        t_star = 1.0
        out = simulate(ens, proc, t_star)
        val = spec.V(out.x, out.v).reshape(n_starts, per)
        v0 = spec.V(np.stack([z_x], axis=1), np.stack([z_v], axis=1))
        envelope = math.exp(-lam * t_star) * v0 + K / lam
        means = val.mean(axis=1)
        ses = val.std(axis=1, ddof=1) / math.sqrt(per)
        assert np.all(means <= envelope + 3.0 * ses)

    def test_stationary_start_stays_below_offset(self, quadratic):
        from kinetic_harris.domain_core import equilibrium_spec

        dom = DomainSpec(d=1, geometry="whole_space", potential=quadratic)
        eq = equilibrium_spec(dom)
        proc = ProcessSpec(kind="bgk", domain=dom)
        spec = lyapunov_for("confined_bgk", potential=quadratic, d=1)
        lam, K, _ = spec.drift()
        ens = Ensemble.from_equilibrium(eq, 20_000, seed_base=43)
        rep = empirical_drift_check(proc, spec, ens, horizon=4.0, n_times=4)
        assert rep.passed
        assert np.all(rep.mean_V <= K / lam + 3.0 * rep.stderr)
