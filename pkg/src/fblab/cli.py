"""Command-line front end: experiment orchestration and data-file emission.

Subcommands
-----------
solve     run the free-boundary fixed-point iteration from a config file
diagnose  evaluate the diagnostic battery on saved u / phi fields
prandtl   closed-form disk-problem roots, sweeps, and radial profiles
verify    run the self-verification suite

Exit codes: 0 success; 1 verification hard failure; 2 non-convergence or
empty sweep; 3 invalid configuration or input files; 4 phase collapse.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import os
import sys
import time
from contextlib import contextmanager

import numpy as np

from .config import SCHEMA_VERSION, ConfigError, load_config
from .diagnostics import (
    acf_product,
    flatness_table,
    oscillation_decay,
    two_plane_fit,
    weiss_phi,
    weiss_series,
)
from .errors import (
    DegenerateInterfaceError,
    FblabError,
    PhaseCollapseError,
)
from .fields import (
    interface_extract,
    read_field,
    read_levelset,
    write_field,
    write_polylines,
)
from .fbiter import run as fbiter_run
from .prandtl import (
    ConditionError,
    PBParams,
    jump_threshold_min,
    radial_solution,
    threshold_roots,
)
from .verify import SuiteContext, run_suite

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_NOT_CONVERGED = 2
EXIT_BAD_CONFIG = 3
EXIT_PHASE_COLLAPSE = 4

_LOCK_NAME = ".fblab.lock"


def _g(v) -> str:
    """17-significant-digit float formatting for reproducible diffs."""
    return f"{float(v):.17g}"


def _apply_thread_cap():
    """Honor FBLAB_THREADS by capping the BLAS thread pools (only where the
    user has not already pinned them)."""
    cap = os.environ.get("FBLAB_THREADS")
    if not cap:
        return None
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS"):
        os.environ.setdefault(var, cap)
    return cap


@contextmanager
def _locked_output(out_dir: str):
    """Exclusive per-directory lockfile; concurrent writers are refused."""
    os.makedirs(out_dir, exist_ok=True)
    lock_path = os.path.join(out_dir, _LOCK_NAME)
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(
            f"output directory {out_dir} is locked by another run "
            f"(remove {lock_path} if stale)")
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield out_dir
    finally:
        try:
            os.remove(lock_path)
        except OSError:
            pass


def _write_iterations_csv(report, path):
    with open(path, "w") as fh:
        fh.write("iter,jump_linf,displacement,area_plus\n")
        for it, jump, disp, area in report.rows():
            fh.write(f"{it},{_g(jump)},{_g(disp)},{_g(area)}\n")


def _flatness_payload(table):
    if table is None:
        return None
    return {
        "radii": [float(r) for r in table.radii],
        "deltas": [float(d) for d in table.deltas],
        "directions": [[float(c) for c in d] for d in table.directions],
    }


def _fit_payload(tp, residual):
    angle = math.degrees(math.atan2(-tp.nu[0], tp.nu[1]))
    return {
        "beta": float(tp.beta),
        "alpha": float(tp.alpha),
        "angle_degrees": angle,
        "offset": float(tp.c),
        "residual": float(residual),
    }


def cmd_solve(args) -> int:
    t0 = time.time()
    try:
        cfg = load_config(args.config)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    try:
        with _locked_output(args.out) as out_dir:
            try:
                u, phi, report = fbiter_run(cfg.problem, cfg.phi0,
                                            cfg.options)
            except DegenerateInterfaceError as err:
                print(f"error: {err}", file=sys.stderr)
                return EXIT_BAD_CONFIG
            except PhaseCollapseError as err:
                print(f"error: phase collapse: {err}", file=sys.stderr)
                return EXIT_PHASE_COLLAPSE

            write_field(u, os.path.join(out_dir, "u.csv"))
            write_field(phi, os.path.join(out_dir, "phi.csv"))
            write_polylines(interface_extract(phi),
                            os.path.join(out_dir, "interface.csv"))
            _write_iterations_csv(report,
                                  os.path.join(out_dir, "iterations.csv"))

            fit = monotone = None
            if cfg.diagnostics is not None:
                spec = cfg.diagnostics
                tp, residual = two_plane_fit(u, phi, spec.center,
                                             max(spec.radii))
                fit = _fit_payload(tp, residual)
                series = weiss_series(u, phi, spec.center, spec.radii,
                                      tp.alpha, tp.beta)
                monotone = bool(series.monotone)

            summary = {
                "schema_version": SCHEMA_VERSION,
                "converged": bool(report.converged),
                "iterations": int(report.iterations),
                "final_jump": float(report.jump_history[-1])
                if report.iterations else None,
                "two_plane_fit": fit,
                "weiss_monotone": monotone,
                "flatness": _flatness_payload(report.flatness),
                "notes": list(report.notes),
                "seconds": round(time.time() - t0, 3),
            }
            with open(os.path.join(out_dir, "summary.json"), "w") as fh:
                json.dump(summary, fh, indent=2, sort_keys=True)
                fh.write("\n")
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    if not report.converged:
        print("fixed-point iteration did not converge; artifacts written",
              file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_diagnose(args) -> int:
    t0 = time.time()
    try:
        cfg = load_config(args.config)
        if cfg.diagnostics is None:
            raise ConfigError("diagnose requires a [diagnostics] section")
        u = read_field(args.u)
        phi = read_levelset(args.phi)
        if not u.grid.same_layout(phi.grid):
            raise ConfigError("u and phi grids differ")
        if not u.grid.same_layout(cfg.grid):
            raise ConfigError("field grids do not match the config grid")
    except (ConfigError, FblabError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    spec = cfg.diagnostics
    try:
        with _locked_output(args.out) as out_dir:
            tp, residual = two_plane_fit(u, phi, spec.center,
                                         max(spec.radii))
            series = weiss_series(u, phi, spec.center, spec.radii,
                                  tp.alpha, tp.beta)
            acf = acf_product(u, phi, spec.center, spec.radii)
            table = flatness_table(phi, spec.center, spec.radii)
            flat_by_r = {float(r): (float(d), dirv)
                         for r, d, dirv in zip(table.radii, table.deltas,
                                               table.directions)}

            rows_path = os.path.join(out_dir, "diagnostics.csv")
            with open(rows_path, "w") as fh:
                fh.write("r,E,boundary_term,phi_weiss,acf_J,delta_flat,"
                         "nu_x,nu_y\n")
                for k, r in enumerate(spec.radii):
                    delta, nu = flat_by_r.get(float(r),
                                              (float("nan"), (float("nan"),
                                                              float("nan"))))
                    fh.write(",".join([
                        _g(r), _g(series.E_values[k]),
                        _g(series.boundary_terms[k]),
                        _g(series.phi_values[k]), _g(acf.values[k]),
                        _g(delta), _g(nu[0]), _g(nu[1]),
                    ]) + "\n")

            trapping = None
            if spec.levels > 0:
                try:
                    offsets = oscillation_decay(
                        u, phi, spec.center, max(spec.radii), spec.levels,
                        tp.alpha, tp.beta)
                    trapping = [[float(a), float(b)] for a, b in offsets]
                except (FblabError, ValueError):
                    trapping = None  # scale ladder not resolvable here

            summary = {
                "schema_version": SCHEMA_VERSION,
                "two_plane_fit": _fit_payload(tp, residual),
                "weiss_monotone": bool(series.monotone),
                "weiss_first_violation": series.first_violation,
                "acf_monotone": bool(acf.monotone),
                "trapping_offsets": trapping,
                "flatness": _flatness_payload(table),
                "seconds": round(time.time() - t0, 3),
            }
            with open(os.path.join(out_dir, "summary.json"), "w") as fh:
                json.dump(summary, fh, indent=2, sort_keys=True)
                fh.write("\n")
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except FblabError as err:
        print(f"error: diagnostics failed: {err}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    return EXIT_OK


def _parse_sweep(specs):
    """Each spec is key=a:b:n; returns a list of (key, values)."""
    sweeps = []
    for spec in specs or ():
        try:
            key, rng = spec.split("=", 1)
            a, b, n = rng.split(":")
            values = np.linspace(float(a), float(b), int(n))
        except ValueError as err:
            raise ConfigError(f"bad sweep spec {spec!r}: {err}") from err
        if key not in ("mu", "omega", "h", "sigma"):
            raise ConfigError(f"unknown sweep key {key!r}")
        if len(values) < 1:
            raise ConfigError(f"empty sweep {spec!r}")
        sweeps.append((key, values))
    return sweeps


def cmd_prandtl(args) -> int:
    base = {"mu": args.mu, "omega": args.omega, "h": args.h,
            "sigma": args.sigma}
    if base["mu"] <= 0 or base["h"] <= 0 or base["omega"] < 0 \
            or base["sigma"] <= 0:
        print("error: mu, h, sigma must be positive and omega non-negative",
              file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        sweeps = _parse_sweep(args.sweep)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    combos = [dict(base)]
    for key, values in sweeps:
        combos = [dict(c, **{key: float(v)})
                  for c in combos for v in values]

    any_holds = False
    try:
        with _locked_output(args.out) as out_dir:
            sweep_path = os.path.join(out_dir, "sweep.csv")
            with open(sweep_path, "w") as fh:
                fh.write("h,mu,omega,sigma,z0,rho_star,cond_holds,"
                         "rho1,rho2\n")
                for c in combos:
                    try:
                        z0, rho_star, rho1, rho2 = threshold_roots(
                            c["h"], c["mu"], c["omega"], c["sigma"])
                        holds = True
                    except ConditionError as err:
                        z0 = err.z0
                        _, rho_star = jump_threshold_min(
                            c["h"], c["mu"], c["omega"])
                        rho1 = rho2 = float("nan")
                        holds = False
                    any_holds = any_holds or holds
                    fh.write(",".join([
                        _g(c["h"]), _g(c["mu"]), _g(c["omega"]),
                        _g(c["sigma"]), _g(z0), _g(rho_star),
                        str(int(holds)), _g(rho1), _g(rho2),
                    ]) + "\n")

            if args.profiles and base["omega"] > 0:
                try:
                    params = PBParams(**base)
                    for branch in (1, 2):
                        sol = radial_solution(params, branch)
                        rs = np.linspace(0.0, 1.0, 201)
                        path = os.path.join(
                            out_dir, f"profile_branch{branch}.csv")
                        with open(path, "w") as fh:
                            fh.write("r,u\n")
                            for r, uv in zip(rs, sol.u(rs)):
                                fh.write(f"{_g(r)},{_g(uv)}\n")
                except ConditionError:
                    pass  # no admissible radii: sweep rows already say so
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    if not any_holds:
        print("no sweep point satisfies the existence condition",
              file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_suite(args.level, out_dir=args.out, ctx=SuiteContext())
    width = max(len(r.name) for r in results)
    hard_failures = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        kind = "hard" if r.hard else "audit"
        print(f"{r.name:<{width}}  {status}  {kind:<5}  "
              f"{r.seconds:7.1f}s  {r.detail}")
        if r.hard and not r.passed:
            hard_failures.append(r.name)
    if hard_failures:
        print("hard criteria failed: " + ", ".join(hard_failures),
              file=sys.stderr)
        return EXIT_VERIFY_FAIL
    print(f"all {len(results)} criteria executed; hard criteria passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fblab",
        description="Two-phase free-boundary simulation and verification "
                    "toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser(
        "solve", help="run the free-boundary iteration from a config file")
    p_solve.add_argument("--config", required=True)
    p_solve.add_argument("--out", required=True)
    p_solve.set_defaults(fn=cmd_solve)

    p_diag = sub.add_parser(
        "diagnose", help="run the diagnostic battery on saved fields")
    p_diag.add_argument("--u", required=True)
    p_diag.add_argument("--phi", required=True)
    p_diag.add_argument("--config", required=True)
    p_diag.add_argument("--out", required=True)
    p_diag.set_defaults(fn=cmd_diagnose)

    p_pb = sub.add_parser(
        "prandtl", help="disk-problem roots, sweeps and radial profiles")
    p_pb.add_argument("--mu", type=float, required=True)
    p_pb.add_argument("--omega", type=float, required=True)
    p_pb.add_argument("--h", type=float, required=True)
    p_pb.add_argument("--sigma", type=float, required=True)
    p_pb.add_argument("--sweep", action="append", metavar="key=a:b:n")
    p_pb.add_argument("--profiles", action="store_true",
                      help="also write radial profile CSVs for both "
                           "branches")
    p_pb.add_argument("--out", required=True)
    p_pb.set_defaults(fn=cmd_prandtl)

    p_ver = sub.add_parser("verify", help="run the self-verification suite")
    p_ver.add_argument("--level", choices=("quick", "full"),
                       default="quick")
    p_ver.add_argument("--out", default="verify-out",
                       help="directory for audit report files")
    p_ver.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
