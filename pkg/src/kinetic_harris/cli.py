"""Batch experiment runner.

Subcommands:
    kinetic-harris run <config>          full pipeline: certificate, ensemble
                                         simulation, TV decay, fits, report
    kinetic-harris validate <config>     static checks, never simulates
    kinetic-harris certificate <config>  certificate assembly only

Exit codes: 0 success, 2 configuration error, 3 certified bound crossed by
the empirical curve beyond 3 standard errors.

Config files are flat key = value text with sections ([scenario],
[potential], [kernel]); see the README for a worked example.  All runs are
deterministic in (config, seed): reruns produce byte-identical outputs, and
the worker count never changes results.
"""

import argparse
import configparser
import dataclasses
import math
import os
import sys

import numpy as np

from .distance_metrics import (
    default_binning,
    estimate_bias_floor,
    estimate_tv,
    estimate_weighted_tv,
    fit_decay,
)
from .domain_core import CollisionKernelSpec, radial_position_expectation, sphere_area
from .errors import ConfigError, InsufficientSignal, KineticHarrisError
from .harris_certificates import assemble_certificate, norm_conversion
from .jump_samplers import simulate
from .scenarios import (
    SCENARIO_KINDS,
    confined_weight,
    make_scenario,
    potential_from_config,
    torus_weight,
)

_FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------------------
# config parsing


_SCENARIO_KEYS = {
    "kind", "d", "n", "t_final", "snapshots", "snapshot_times", "seed",
    "bins", "dt", "t_star", "start", "start_x", "start_v", "workers",
    "output_dir",
}
_POTENTIAL_KEYS = {"name", "c", "beta", "delta"}
_KERNEL_KEYS = {"gamma", "b0"}


def parse_config(path):
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    if "scenario" not in cp:
        raise ConfigError("missing [scenario] section")
    sc = cp["scenario"]
    for key in sc:
        if key not in _SCENARIO_KEYS:
            raise ConfigError(f"[scenario] unknown key {key!r}")
    kind = sc.get("kind")
    if kind not in SCENARIO_KINDS:
        raise ConfigError(
            f"[scenario] kind must be one of {', '.join(SCENARIO_KINDS)}"
        )
    over = {}
    try:
        if "d" in sc:
            over["d"] = sc.getint("d")
        if "n" in sc:
            over["n_particles"] = int(float(sc.get("n")))
        if "t_final" in sc:
            over["t_final"] = sc.getfloat("t_final")
        if "snapshots" in sc:
            over["n_snapshots"] = sc.getint("snapshots")
        if "snapshot_times" in sc:
            over["snapshot_times"] = tuple(
                float(tok) for tok in sc.get("snapshot_times").split(",")
            )
        if "seed" in sc:
            over["seed"] = sc.getint("seed")
        if "bins" in sc:
            over["bins_per_axis"] = sc.getint("bins")
        if "dt" in sc:
            over["dt"] = sc.getfloat("dt")
        if "t_star" in sc:
            over["t_star"] = sc.getfloat("t_star")
        if "start" in sc:
            over["start"] = sc.get("start")
        if "start_x" in sc:
            over["start_x"] = sc.getfloat("start_x")
        if "start_v" in sc:
            over["start_v"] = sc.getfloat("start_v")
        if "workers" in sc:
            over["workers"] = sc.getint("workers")
        if "output_dir" in sc:
            over["output_dir"] = sc.get("output_dir")
    except ValueError as exc:
        raise ConfigError(f"[scenario] bad value: {exc}") from exc

    if "potential" in cp:
        ps = cp["potential"]
        for key in ps:
            if key not in _POTENTIAL_KEYS:
                raise ConfigError(f"[potential] unknown key {key!r}")
        name = ps.get("name")
        if name is None:
            raise ConfigError("[potential] needs a name")
        params = {}
        for key in ("c", "beta", "delta"):
            if key in ps:
                try:
                    params[key] = ps.getfloat(key)
                except ValueError as exc:
                    raise ConfigError(f"[potential] {key}: {exc}") from exc
        try:
            over["potential"] = potential_from_config(name, params)
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"[potential] {exc}") from exc

    if "kernel" in cp:
        ks = cp["kernel"]
        for key in ks:
            if key not in _KERNEL_KEYS:
                raise ConfigError(f"[kernel] unknown key {key!r}")
        try:
            gamma = ks.getfloat("gamma", fallback=1.0)
            d = over.get("d", 1)
            b0_raw = ks.get("b0", fallback="unit")
            b0 = 1.0 / sphere_area(d) if b0_raw == "unit" else float(b0_raw)
            over["kernel"] = CollisionKernelSpec(
                gamma=gamma, b_lower=b0, angular_form="uniform", b0=b0
            )
        except ValueError as exc:
            raise ConfigError(f"[kernel] {exc}") from exc

    try:
        return make_scenario(kind, **over)
    except (ConfigError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# shared pipeline pieces


def _weight_fn(cfg):
    if cfg.is_torus:
        return torus_weight()
    return confined_weight(cfg.potential)


def _equilibrium_mean_V(cfg, eq, spec):
    d = cfg.d
    if spec.form == "torus_bgk_trivial":
        return 1.0
    if spec.form == "torus_boltzmann_v2":
        return float(d)
    pot = spec.potential
    e_phi = radial_position_expectation(
        eq, lambda r: float(pot.radial_value(r)) - pot.lower_bound
    )
    if spec.form in ("confined_bgk", "subgeometric_bgk", "confined_boltzmann"):
        e_x2 = radial_position_expectation(eq, lambda r: r * r)
        c0 = 0.0 if spec.form == "confined_boltzmann" else 1.0
        return c0 + e_phi + 0.5 * d + spec.b * e_x2
    e_bx = radial_position_expectation(eq, lambda r: math.sqrt(1.0 + r * r))
    return e_phi + 0.5 * d + spec.b * e_bx


def _bound_column(cfg, scert, eq, ens0, times):
    """Certified bound per snapshot, in the norm named by the flavor."""
    flavor = scert.flavor
    cert = scert.certificate
    if flavor == "doeblin":
        return cert.bound_tv(times, d0=2.0), "tv"
    if flavor == "harris":
        spec = scert.lyapunov
        a = cert.a_weight
        if a <= 0.0:
            return np.full(len(times), np.inf), "wtv"
        f0V = float(np.mean(spec.V(ens0.x, ens0.v)))
        muV = _equilibrium_mean_V(cfg, eq, spec)
        d0 = 2.0 + a * (f0V + muV)
        k1, _ = norm_conversion(_weight_fn(cfg), spec, a)
        return k1 * cert.bound_weighted(times, d0), "wtv"
    spec = scert.lyapunov
    f0V = float(np.mean(spec.V(ens0.x, ens0.v)))
    return np.asarray(cert.bound_tv(times, mu_V=f0V, d0=2.0)), "tv"


def _run_decay(cfg, backend=None):
    """Simulate the scenario and estimate distances at every snapshot."""
    eq = cfg.equilibrium()
    binning = default_binning(eq, cfg.bins_per_axis)
    weight = _weight_fn(cfg)
    ens = cfg.initial_ensemble()
    ens0 = ens
    times = cfg.snapshots()
    rows = []
    for t in times:
        ens = simulate(ens, cfg.process(), float(t), workers=cfg.workers,
                       backend=backend)
        tv, tv_err = estimate_tv(ens, eq, binning)
        wtv, wtv_err = estimate_weighted_tv(ens, eq, weight, binning)
        rows.append((float(t), tv, tv_err, wtv, wtv_err))
    floor = estimate_bias_floor(eq, binning, cfg.n_particles,
                                seed=cfg.seed + 909)
    return eq, ens0, times, rows, floor


def _write_csv(path, rows, bounds):
    lines = ["t,tv,tv_stderr,wtv,wtv_stderr,bound"]
    for (t, tv, tve, wtv, wtve), b in zip(rows, bounds):
        lines.append(
            ",".join(_FLOAT_FMT % v for v in (t, tv, tve, wtv, wtve, b))
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _fit_report(cfg, rows, floor=0.0):
    times = np.array([r[0] for r in rows])
    tv = np.array([r[1] for r in rows])
    tve = np.array([r[2] for r in rows])
    wtv = np.array([r[3] for r in rows])
    wtve = np.array([r[4] for r in rows])
    out = []
    for label, dist, err in (("tv", tv, tve), ("wtv", wtv, wtve)):
        for model in ("exponential", "algebraic"):
            try:
                fit = fit_decay(times, dist, err, model,
                                floor=floor if label == "tv" else 0.0)
                out.append((label, fit))
            except InsufficientSignal:
                continue
    lines = []
    for label, fit in out:
        name = "lambda_hat" if fit.model == "exponential" else "p_hat"
        lines.append(
            f"fit {label} {fit.model}: {name} = {fit.rate:.6g}, "
            f"C = {fit.amplitude:.6g}, R2 = {fit.r_squared:.4f}, "
            f"window = [{fit.window[0]:.3g}, {fit.window[1]:.3g}], "
            f"n = {fit.n_used}"
        )
    return out, lines, (times, tv, tve, wtv, wtve)


def cmd_run(cfg, backend=None):
    os.makedirs(cfg.output_dir, exist_ok=True)
    scert = assemble_certificate(cfg)
    audit_path = os.path.join(cfg.output_dir, f"certificate_{cfg.kind}.txt")
    with open(audit_path, "w") as fh:
        fh.write(scert.audit_text())

    eq, ens0, times, rows, floor = _run_decay(cfg, backend)
    bounds, bound_norm = _bound_column(cfg, scert, eq, ens0, times)
    csv_path = os.path.join(cfg.output_dir, f"decay_{cfg.kind}.csv")
    _write_csv(csv_path, rows, bounds)

    fits, fit_lines, data = _fit_report(cfg, rows, floor)
    times_a, tv, tve, wtv, wtve = data
    measured = tv if bound_norm == "tv" else wtv
    err = tve if bound_norm == "tv" else wtve
    violation = bool(np.any(measured - 3.0 * err > bounds))

    summary = [
        f"scenario = {cfg.kind}",
        f"backend deterministic in (seed={cfg.seed}, workers-any)",
        f"bound norm = {bound_norm}",
        f"tv bias floor (measured) = {floor:.6g}",
        f"certified rate (per unit time) = "
        + _certified_rate_line(scert),
        *fit_lines,
        f"bound violation (measured - 3 stderr > bound) = {violation}",
    ]
    summary_path = os.path.join(cfg.output_dir, f"summary_{cfg.kind}.txt")
    with open(summary_path, "w") as fh:
        fh.write("\n".join(summary) + "\n\n" + scert.audit_text())
    print("\n".join(summary))
    print(f"wrote {csv_path}, {summary_path}, {audit_path}")
    return 3 if violation else 0


def _certified_rate_line(scert):
    cert = scert.certificate
    if scert.flavor == "doeblin":
        return f"{cert.lam_rate:.6g} (doeblin)"
    if scert.flavor == "harris":
        return f"{cert.lam_rate:.6g} (harris, weighted norm)"
    return (
        f"algebraic exponent {cert.rate.asymptotic_exponent:.6g} "
        f"(subgeometric upper bound)"
    )


def cmd_certificate(cfg):
    os.makedirs(cfg.output_dir, exist_ok=True)
    scert = assemble_certificate(cfg)
    path = os.path.join(cfg.output_dir, f"certificate_{cfg.kind}.txt")
    with open(path, "w") as fh:
        fh.write(scert.audit_text())
    print(scert.audit_text())
    print(f"wrote {path}")
    return 0


def cmd_validate(cfg):
    lines = []
    ok = True

    if cfg.is_torus and cfg.potential is not None:
        lines.append("WARN [potential] ignored for torus scenarios")

    if cfg.potential is not None and not cfg.is_torus:
        pot = cfg.potential
        rng = np.random.default_rng(0)
        x = (rng.uniform(-1.0, 1.0, (10_000, cfg.d))) * 50.0
        r = np.linalg.norm(x, axis=1)
        lhs = np.sum(x * pot.gradient(x), axis=1)
        worst = None
        for p in pot.drift_exponents():
            dp = pot.drift(p)
            rhs = dp.gamma1 * dp.weight(r) + dp.gamma2 * pot.value(x) - dp.A
            gap = lhs - rhs
            if np.min(gap) < -1e-9:
                ok = False
                worst = x[np.argmin(gap)]
                lines.append(
                    f"FAIL [potential] drift inequality (p={p:g}) violated at "
                    f"x = {np.array2string(worst, precision=4)} "
                    f"(gap {np.min(gap):.3e})"
                )
            else:
                lines.append(f"PASS [potential] drift inequality holds (p={p:g})")
        low = float(np.min(pot.value(x)))
        if low < pot.lower_bound - 1e-9:
            ok = False
            lines.append(
                f"FAIL [potential] value {low:.6g} below declared lower bound"
            )
        else:
            lines.append("PASS [potential] lower bound respected")

    if cfg.kernel is not None:
        if cfg.kernel.validate_positivity():
            lines.append("PASS [kernel] angular factor uniformly positive")
        else:
            ok = False
            lines.append("FAIL [kernel] angular factor below its floor")

    try:
        eq = cfg.equilibrium()
        binning = default_binning(eq, cfg.bins_per_axis)
        from .distance_metrics import equilibrium_bin_masses

        total = float(np.sum(equilibrium_bin_masses(eq, binning)))
        lines.append(f"PASS [binning] box covers {total:.5%} equilibrium mass")
    except KineticHarrisError as exc:
        ok = False
        lines.append(f"FAIL [binning] {exc}")

    lines.append("result = " + ("PASS" if ok else "FAIL"))
    print("\n".join(lines))
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="kinetic-harris",
        description="kinetic jump-process simulator with convergence certificates",
    )
    parser.add_argument("--workers", type=int, default=None,
                        help="worker count (never changes results)")
    parser.add_argument("--backend", choices=["compiled", "python"],
                        default=None, help="force a simulation backend")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "validate", "certificate"):
        p = sub.add_parser(name)
        p.add_argument("config", help="path to the experiment config file")

    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.workers is not None:
            cfg = dataclasses.replace(cfg, workers=args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "run":
            return cmd_run(cfg, backend=args.backend)
        if args.command == "certificate":
            return cmd_certificate(cfg)
        return cmd_validate(cfg)
    except KineticHarrisError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
