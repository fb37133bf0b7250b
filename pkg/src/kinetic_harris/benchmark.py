"""Backend benchmark: compiled extension vs NumPy kernels.

Run as  python -m kinetic_harris.benchmark [--n N] [--t T].

Both backends execute the identical per-particle algorithm on identical RNG
streams, so the comparison is pure kernel throughput; the final column
checks that jump counts agree exactly.
"""

import argparse
import time

import numpy as np

from . import _backend
from .domain_core import DomainSpec, hard_spheres, quadratic_potential
from .hamiltonian_flow import FlowConfig
from .jump_samplers import Ensemble, ProcessSpec, simulate


def _cases(n, t):
    torus = DomainSpec(d=1, geometry="torus")
    torus3 = DomainSpec(d=3, geometry="torus")
    conf = DomainSpec(d=1, geometry="whole_space",
                      potential=quadratic_potential(1.0))
    return [
        ("torus relaxation d=1",
         Ensemble.dirac(torus, n, [0.5], [5.0], 1),
         ProcessSpec(kind="bgk", domain=torus), t),
        ("torus scattering d=3",
         Ensemble.from_maxwellian_at(torus3, max(n // 4, 1), [0.5] * 3, 2),
         ProcessSpec(kind="boltzmann", domain=torus3,
                     kernel=hard_spheres(1.0, 3)), t),
        ("confined relaxation d=1",
         Ensemble.dirac(conf, max(n // 4, 1), [1.0], [0.0], 3),
         ProcessSpec(kind="bgk", domain=conf, flow=FlowConfig(dt=1e-2)), t),
        ("confined scattering d=1",
         Ensemble.from_maxwellian_at(conf, max(n // 8, 1), [0.5], 4),
         ProcessSpec(kind="boltzmann", domain=conf, kernel=hard_spheres(1.0, 1),
                     flow=FlowConfig(dt=1e-2)), t),
    ]


def run(n=50_000, t=5.0):
    backends = ["python"]
    if _backend.HAVE_COMPILED:
        backends.insert(0, "compiled")
    print(f"particles per case ~{n}, horizon t={t}")
    header = f"{'case':28s}" + "".join(f"{b:>14s}" for b in backends)
    print(header + f"{'speedup':>10s}{'jumps equal':>13s}")
    for name, ens, proc, horizon in _cases(n, t):
        times = {}
        results = {}
        for b in backends:
            simulate(ens, proc, min(0.01, horizon), backend=b)  # warm caches
            tic = time.perf_counter()
            results[b] = simulate(ens, proc, horizon, backend=b)
            times[b] = time.perf_counter() - tic
        line = f"{name:28s}" + "".join(f"{times[b]:>13.3f}s" for b in backends)
        if len(backends) == 2:
            speed = times["python"] / times["compiled"]
            agree = bool(
                np.array_equal(results["compiled"].jumps, results["python"].jumps)
            )
            line += f"{speed:>9.1f}x{str(agree):>13s}"
        print(line)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=50_000)
    ap.add_argument("--t", type=float, default=5.0)
    args = ap.parse_args(argv)
    run(args.n, args.t)


if __name__ == "__main__":
    main()
