import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from kinetic_harris.domain_core import (
    DomainSpec,
    equilibrium_normalizer,
    equilibrium_spec,
    maxwellian_density,
    radial_position_expectation,
    sample_equilibrium,
    sample_maxwellian,
    wrap_torus,
)
from kinetic_harris.quadrature import QuadratureConfig, radial_integral


class TestMaxwellian:
    def test_value_at_zero_d1(self):
        assert maxwellian_density(np.zeros(1)) == pytest.approx(
            (2 * math.pi) ** -0.5, abs=1e-12
        )

    def test_value_at_zero_d3(self):
        assert maxwellian_density(np.zeros(3)) == pytest.approx(
            (2 * math.pi) ** -1.5, abs=1e-12
        )

    def test_value_d1_unit_speed(self):
        # cross-checked against the quadrature normalisation below
        expected = (2 * math.pi) ** -0.5 * math.exp(-0.5)
        assert maxwellian_density(np.array([1.0])) == pytest.approx(
            expected, rel=1e-12
        )

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_normalises_to_one(self, d):
        total = radial_integral(
            lambda r: (2 * math.pi) ** (-d / 2) * math.exp(-0.5 * r * r),
            d,
            QuadratureConfig(1e-12),
        )
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_vectorised_rows(self, rng):
        v = rng.standard_normal((100, 3))
        out = maxwellian_density(v)
        assert out.shape == (100,)
        assert np.allclose(
            out, [(2 * math.pi) ** -1.5 * math.exp(-0.5 * u @ u) for u in v]
        )


class TestSampleMaxwellian:
    def test_moments_d2(self):
        rng = np.random.default_rng(11)
        n = 1_000_000
        v = sample_maxwellian(rng, 2, n)
        assert np.all(np.abs(v.mean(axis=0)) < 4.0 / math.sqrt(n))
        # chi-square interval for the sample variance at this n is ~0.3%
        assert np.all(np.abs(v.var(axis=0) - 1.0) < 0.01)

    def test_speed_second_moment_d3(self):
        rng = np.random.default_rng(12)
        v = sample_maxwellian(rng, 3, 1_000_000)
        assert np.mean(np.sum(v * v, axis=1)) == pytest.approx(3.0, rel=0.01)


class TestWrapTorus:
    @pytest.mark.parametrize(
        "x, expected", [(0.5, 0.5), (1.25, 0.25), (-0.1, 0.9)]
    )
    def test_examples(self, x, expected):
        assert wrap_torus(np.array([x]))[0] == pytest.approx(expected, abs=1e-15)

    @given(st.floats(-1e6, 1e6, allow_nan=False))
    def test_idempotent_and_in_range(self, x):
        w = wrap_torus(np.array([x]))
        assert 0.0 <= w[0] < 1.0
        assert wrap_torus(w)[0] == w[0]


class TestEquilibriumNormalizer:
    def test_gaussian_d1(self, quadratic):
        assert equilibrium_normalizer(quadratic, 1) == pytest.approx(
            math.sqrt(2 * math.pi), rel=1e-10
        )

    def test_gaussian_d2(self, quadratic):
        assert equilibrium_normalizer(quadratic, 2) == pytest.approx(
            2 * math.pi, rel=1e-10
        )

    def test_quartic_d1_vs_adaptive_oracle(self, quartic):
        oracle, err = integrate.quad(
            lambda x: math.exp(-0.25 * x**4), -np.inf, np.inf
        )
        assert err < 1e-6
        # equals 4^(1/4) Gamma(1/4) / 2 = 2.5636933520...
        assert oracle == pytest.approx(
            2.0**0.5 * math.gamma(0.25) / 2.0, rel=1e-9
        )
        assert equilibrium_normalizer(quartic, 1) == pytest.approx(
            oracle, rel=1e-8
        )


class TestSampleEquilibrium:
    def test_torus_uniform_position(self):
        dom = DomainSpec(d=1, geometry="torus")
        eq = equilibrium_spec(dom)
        rng = np.random.default_rng(5)
        x, v = sample_equilibrium(rng, eq, 100_000)
        assert stats.kstest(x[:, 0], "uniform").pvalue > 0.01

    def test_gaussian_position_variance(self, quadratic):
        dom = DomainSpec(d=1, geometry="whole_space", potential=quadratic)
        eq = equilibrium_spec(dom)
        rng = np.random.default_rng(6)
        x, _ = sample_equilibrium(rng, eq, 100_000)
        assert x[:, 0].var() == pytest.approx(1.0, rel=0.02)

    def test_quartic_second_moment_vs_quadrature(self, quartic):
        dom = DomainSpec(d=1, geometry="whole_space", potential=quartic)
        eq = equilibrium_spec(dom)
        oracle = radial_position_expectation(eq, lambda r: r * r)
        num, _ = integrate.quad(
            lambda x: x * x * math.exp(-0.25 * x**4), -np.inf, np.inf
        )
        den, _ = integrate.quad(
            lambda x: math.exp(-0.25 * x**4), -np.inf, np.inf
        )
        assert oracle == pytest.approx(num / den, rel=1e-9)
        rng = np.random.default_rng(7)
        x, _ = sample_equilibrium(rng, eq, 100_000)
        assert np.mean(x[:, 0] ** 2) == pytest.approx(oracle, rel=0.02)

    def test_subquadratic_tail_sampler(self, sublinear):
        # exp(-<x>) has heavier tails than any Gaussian: inverse-CDF path
        dom = DomainSpec(d=1, geometry="whole_space", potential=sublinear)
        eq = equilibrium_spec(dom)
        oracle = radial_position_expectation(eq, lambda r: r * r)
        rng = np.random.default_rng(8)
        x, _ = sample_equilibrium(rng, eq, 200_000)
        assert np.mean(x[:, 0] ** 2) == pytest.approx(oracle, rel=0.03)


class TestPotentials:
    def test_declared_drift_holds_on_quasirandom_points(self, all_potentials):
        from scipy.stats import qmc

        pts = qmc.Halton(d=1, scramble=False).random(10_000)
        x = (2.0 * pts - 1.0) * 50.0
        r = np.abs(x[:, 0])
        for pot in all_potentials:
            lhs = np.sum(x * pot.gradient(x), axis=1)
            for p in pot.drift_exponents():
                dp = pot.drift(p)
                rhs = dp.gamma1 * dp.weight(r) + dp.gamma2 * pot.value(x) - dp.A
                assert np.min(lhs - rhs) > -1e-9, (pot.name, p)

    def test_quadratic_drift_is_exact_identity(self, quadratic):
        dp = quadratic.drift(2.0)
        assert (dp.gamma1, dp.gamma2, dp.A) == (0.5, 1.0, 0.0)

    def test_sup_bounds_dominate_samples(self, all_potentials, rng):
        for pot in all_potentials:
            for R in (0.5, 3.0, 20.0):
                x = rng.uniform(-R, R, (2000, 1))
                x = x[np.abs(x[:, 0]) <= R]
                g = np.abs(pot.gradient(x)[:, 0])
                assert np.max(g) <= pot.grad_sup_bound(R) + 1e-12
                h = np.abs(pot.hessian(x)[:, 0, 0])
                assert np.max(h) <= pot.hess_sup_bound(R) + 1e-12
                assert pot.grad_sup_bound(2 * R) >= pot.grad_sup_bound(R)

    def test_lower_bound(self, all_potentials, rng):
        x = rng.uniform(-50, 50, (5000, 1))
        for pot in all_potentials:
            assert np.min(pot.value(x)) >= pot.lower_bound - 1e-12


class TestKernels:
    def test_angular_mass_hard_spheres(self, spheres3):
        assert spheres3.angular_mass(3) == pytest.approx(1.0, rel=1e-12)

    def test_positivity(self, spheres3):
        assert spheres3.validate_positivity()

    def test_angular_mass_d1(self, spheres1):
        # S^0 has two points
        assert spheres1.angular_mass(1) == pytest.approx(
            2 * spheres1.b0, rel=1e-12
        )

    def test_tabulated_even_kernel(self):
        from kinetic_harris.domain_core import CollisionKernelSpec

        kern = CollisionKernelSpec(
            gamma=1.0, b_lower=0.1, angular_form="tabulated",
            b_func=lambda z: 0.2 + z * z,
        )
        assert kern.validate_positivity()
        assert kern.mean_cosine(3) == pytest.approx(0.0, abs=1e-10)
        mass = kern.angular_mass(3)
        oracle, _ = integrate.quad(lambda z: 0.2 + z * z, -1, 1)
        assert mass == pytest.approx(2 * math.pi * oracle, rel=1e-9)

    def test_soft_kernels_rejected(self):
        from kinetic_harris.domain_core import CollisionKernelSpec

        with pytest.raises(ValueError):
            CollisionKernelSpec(gamma=-0.5, b_lower=1.0)
