"""Cross-backend agreement and determinism contracts.

Integer RNG streams are bit-identical across backends; float trajectories
agree to transcendental rounding (numpy's vectorised log/exp differ from
libm by <= 1 ulp), so state equality is asserted at 1e-9 relative while jump
counts and stream states are asserted exactly.  Within a backend, results
are bit-identical regardless of worker count.
"""

import numpy as np
import pytest

from kinetic_harris import _backend
from kinetic_harris.domain_core import (
    DomainSpec,
    hard_spheres,
    quadratic_potential,
    quartic_potential,
)
from kinetic_harris.hamiltonian_flow import FlowConfig
from kinetic_harris.jump_samplers import Ensemble, ProcessSpec, simulate

needs_compiled = pytest.mark.skipif(
    not _backend.HAVE_COMPILED, reason="compiled backend not built"
)


def _splitmix_reference(seed_base, i, n_draws):
    """Independent pure-python splitmix64 reference for the stream contract."""
    mask = (1 << 64) - 1
    gold = 0x9E3779B97F4A7C15
    m1 = 0xBF58476D1CE4E5B9
    m2 = 0x94D049BB133111EB

    def mix(z):
        z ^= z >> 30
        z = (z * m1) & mask
        z ^= z >> 27
        z = (z * m2) & mask
        return z ^ (z >> 31)

    s = (seed_base + gold * (i + 1)) & mask
    s = (mix(s) + gold) & mask
    s = mix(s)
    out = []
    for _ in range(n_draws):
        s = (s + gold) & mask
        out.append(mix(s))
    return out


class TestStreams:
    def test_streams_match_pure_python_reference(self):
        from kinetic_harris._backend import kernels_py as kp

        st = kp.stream_init(12345, 4)
        idx = np.arange(4)
        draws = [kp._next(st, idx) for _ in range(3)]
        for i in range(4):
            ref = _splitmix_reference(12345, i, 3)
            got = [int(z[i]) for z in draws]
            assert got == ref

    def test_uniforms_in_open_interval(self):
        from kinetic_harris._backend import kernels_py as kp

        st = kp.stream_init(7, 100_000)
        u = kp._unif(st, np.arange(100_000))
        assert np.all((u > 0.0) & (u < 1.0))
        assert abs(u.mean() - 0.5) < 0.005


def _cases():
    torus1 = DomainSpec(d=1, geometry="torus")
    torus3 = DomainSpec(d=3, geometry="torus")
    conf_q = DomainSpec(d=1, geometry="whole_space",
                        potential=quadratic_potential(1.0))
    conf_4 = DomainSpec(d=1, geometry="whole_space",
                        potential=quartic_potential(1.0))
    return [
        ("torus-bgk-d1",
         Ensemble.dirac(torus1, 3000, [0.3], [5.0], 11),
         ProcessSpec(kind="bgk", domain=torus1), 5.0),
        ("torus-lb-d3",
         Ensemble.from_maxwellian_at(torus3, 1500, [0.5] * 3, 12),
         ProcessSpec(kind="boltzmann", domain=torus3,
                     kernel=hard_spheres(1.0, 3)), 2.0),
        ("torus-lb-d1-gamma0",
         Ensemble.from_maxwellian_at(torus1, 1500, [0.5], 13),
         ProcessSpec(kind="boltzmann", domain=torus1,
                     kernel=hard_spheres(0.0, 1)), 3.0),
        ("confined-bgk-d1",
         Ensemble.dirac(conf_q, 1500, [1.0], [0.5], 14),
         ProcessSpec(kind="bgk", domain=conf_q, flow=FlowConfig(dt=1e-2)), 3.0),
        ("confined-lb-quartic",
         Ensemble.from_maxwellian_at(conf_4, 800, [0.5], 15),
         ProcessSpec(kind="boltzmann", domain=conf_4,
                     kernel=hard_spheres(1.0, 1), flow=FlowConfig(dt=5e-3)),
         2.0),
    ]


@needs_compiled
class TestCrossBackend:
    @pytest.mark.parametrize("case", _cases(), ids=lambda c: c[0])
    def test_backends_agree(self, case):
        _, ens, proc, t = case
        a = simulate(ens, proc, t, backend="compiled")
        b = simulate(ens, proc, t, backend="python")
        np.testing.assert_array_equal(a.jumps, b.jumps)
        np.testing.assert_array_equal(a.rng_state, b.rng_state)
        np.testing.assert_allclose(a.x, b.x, rtol=1e-9, atol=1e-11)
        np.testing.assert_allclose(a.v, b.v, rtol=1e-9, atol=1e-11)


class TestDeterminism:
    @pytest.mark.parametrize("backend", ["compiled", "python"])
    def test_worker_count_invariance(self, backend):
        if backend == "compiled" and not _backend.HAVE_COMPILED:
            pytest.skip("compiled backend not built")
        dom = DomainSpec(d=3, geometry="torus")
        ens = Ensemble.from_maxwellian_at(dom, 2000, [0.5] * 3, 21)
        proc = ProcessSpec(kind="boltzmann", domain=dom,
                           kernel=hard_spheres(1.0, 3))
        ref = simulate(ens, proc, 2.0, workers=1, backend=backend)
        for w in (2, 5):
            out = simulate(ens, proc, 2.0, workers=w, backend=backend)
            np.testing.assert_array_equal(ref.x, out.x)
            np.testing.assert_array_equal(ref.v, out.v)
            np.testing.assert_array_equal(ref.rng_state, out.rng_state)
            np.testing.assert_array_equal(ref.jumps, out.jumps)

    def test_rerun_bit_identical(self):
        dom = DomainSpec(d=1, geometry="torus")
        ens = Ensemble.dirac(dom, 3000, [0.2], [4.0], 31)
        proc = ProcessSpec(kind="bgk", domain=dom)
        a = simulate(ens, proc, 7.0)
        b = simulate(ens, proc, 7.0)
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.v, b.v)

    def test_seeds_change_results(self):
        dom = DomainSpec(d=1, geometry="torus")
        proc = ProcessSpec(kind="bgk", domain=dom)
        a = simulate(Ensemble.dirac(dom, 100, [0.2], [4.0], 1), proc, 3.0)
        b = simulate(Ensemble.dirac(dom, 100, [0.2], [4.0], 2), proc, 3.0)
        assert not np.array_equal(a.v, b.v)


class TestBenchmark:
    def test_benchmark_runs(self, capsys):
        from kinetic_harris.benchmark import run

        run(n=2000, t=1.0)
        out = capsys.readouterr().out
        assert "torus relaxation" in out
        if _backend.HAVE_COMPILED:
            assert "True" in out


class TestWorkerEnv:
    def test_env_var_sets_default_worker_count(self, monkeypatch):
        from kinetic_harris.jump_samplers import _worker_count

        monkeypatch.delenv("KINETIC_HARRIS_WORKERS", raising=False)
        assert _worker_count(None) == 1
        monkeypatch.setenv("KINETIC_HARRIS_WORKERS", "6")
        assert _worker_count(None) == 6
        assert _worker_count(2) == 2  # explicit argument wins
