"""Command line front end.

Subcommands map onto the library layers: ``run`` and ``batch`` drive
whole scenarios, ``spectrum`` exposes the linearized eigenpair,
``fit`` decomposes a single snapshot file, ``theta`` scans the
weighted density of a saved trajectory.  Output directories default
to ./runs, overridable with the BLOWUP_LAB_OUT environment variable.
Exit status is 0 only when every enabled check on the requested work
passed.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .decomposition import BubbleParams, fit_orthogonal, snapshot_sampler
from .diagnostics import CutoffSpec, theta_monotonicity_report, write_theta_csv
from .dimension import Dimension
from .kernel import ground_state
from .runner import batch, run
from .scenario import ScenarioError, load_scenario
from .solver import load_trajectory


def _out_root(explicit: str | None) -> Path:
    if explicit:
        return Path(explicit)
    return Path(os.environ.get("BLOWUP_LAB_OUT", "runs"))


def _cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    for note in sc.warnings:
        print(f"warning: {note}", file=sys.stderr)
    out = _out_root(args.out) / Path(args.scenario).stem
    manifest = run(sc, out)
    print(f"status: {manifest.status}")
    print(f"termination: {manifest.termination}")
    if manifest.T_est is not None:
        print(f"T_est: {manifest.T_est:.17g}")
    if manifest.classification:
        print(f"verdict: {manifest.classification['verdict']}")
    for name, count in sorted(manifest.violations.items()):
        print(f"{name}: {count} violation(s)")
    if manifest.error:
        print(manifest.error.rstrip(), file=sys.stderr)
    print(f"artifacts: {out}")
    return 0 if manifest.accepted() else 1


def _scenario_files(spec: str) -> list:
    path = Path(spec)
    if path.is_dir():
        return sorted(str(p) for p in path.iterdir()
                      if p.suffix in (".yaml", ".yml"))
    return [spec]


def _cmd_batch(args) -> int:
    paths = []
    for spec in args.scenarios:
        paths.extend(_scenario_files(spec))
    out_root = _out_root(args.out)
    rows = batch(paths, out_root, parallelism=args.parallelism)
    for row in rows:
        tail = row["error"] or row["termination"]
        print(f"{row['scenario']}: {row['status']} "
              f"({'accepted' if row['accepted'] else 'rejected'}) {tail}")
    print(f"summary: {out_root / 'summary.csv'}")
    return 0 if all(row["accepted"] for row in rows) else 1


def _cmd_spectrum(args) -> int:
    dim = Dimension(args.n)
    data = ground_state(dim)
    payload = {"n": dim.n,
               "mu0": data.mu0,
               "z0_origin": float(data.z0(0.0)),
               "l2_norm": data.l2_norm}
    print(json.dumps(payload, indent=1))
    if args.out:
        data.save(args.out)
        print(f"table: {args.out}", file=sys.stderr)
    return 0


def _cmd_fit(args) -> int:
    table = np.loadtxt(args.snapshot, delimiter=",", skiprows=1, ndmin=2)
    if table.shape[1] < 2:
        raise ScenarioError(f"{args.snapshot}: need two columns r,u")
    r, vals = table[:, 0], table[:, 1]
    dim = Dimension(args.n)
    u = snapshot_sampler(r, vals, dim)
    sup = float(np.max(vals))
    if sup <= 0.0:
        raise ScenarioError(f"{args.snapshot}: field has no positive values")
    guess = BubbleParams(xi=np.zeros(dim.n), lam=sup ** (-2.0 / (dim.n - 2)),
                         a=0.0)
    result = fit_orthogonal(u, guess, ground_state(dim), dim, K=args.cutoff,
                            pin_center=True)
    cert = result.certificate or {}
    payload = {"converged": result.converged,
               "message": result.message,
               "lambda": result.params.lam,
               "a": result.params.a,
               "xi": list(result.params.xi),
               "max_residual": result.max_residual(),
               "certificate_passed": bool(cert.get("passed", False)),
               "error_norms": result.error_field_norms}
    print(json.dumps(payload, indent=1))
    return 0 if result.converged and cert.get("passed", False) else 1


def _parse_s_range(text: str):
    try:
        lo_s, hi_s = text.split(":")
        lo, hi = float(lo_s), float(hi_s)
    except ValueError as exc:
        raise ScenarioError(f"--s-range must be LO:HI, got {text!r}") from exc
    if not 0.0 < lo < hi:
        raise ScenarioError(f"--s-range needs 0 < LO < HI, got {text!r}")
    return lo, hi


def _cmd_theta(args) -> int:
    traj = load_trajectory(args.trajectory)
    t = args.t
    if t is None:
        t = traj.T_est if traj.T_est is not None else traj.t_last
    x = np.zeros(traj.dim.n)
    x[0] = args.x
    lo, hi = _parse_s_range(args.s_range)
    s_list = np.geomspace(lo, hi, args.samples)
    cutoff = CutoffSpec(radius=args.cutoff_radius)
    report = theta_monotonicity_report(traj, x, t, s_list, cutoff,
                                       tol_mono=args.tol)
    if args.out:
        write_theta_csv(report.samples, args.out)
        print(f"table: {args.out}")
    else:
        print("s,theta")
        for smp in report.samples:
            print(f"{smp.s:.17g},{smp.value:.17g}")
    print(f"monotonicity violations: {len(report.violations)}",
          file=sys.stderr)
    return 0 if not report.violations else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blowup-lab",
        description="Numerical laboratory for energy-critical "
                    "semilinear heat flow")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one scenario file")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", default=None,
                       help="output root (default: $BLOWUP_LAB_OUT or ./runs)")
    p_run.set_defaults(func=_cmd_run)

    p_batch = sub.add_parser("batch",
                             help="execute scenario files or directories")
    p_batch.add_argument("scenarios", nargs="+")
    p_batch.add_argument("--out", default=None)
    p_batch.add_argument("--parallelism", type=int, default=1)
    p_batch.set_defaults(func=_cmd_batch)

    p_spec = sub.add_parser("spectrum",
                            help="linearized ground-state eigenpair")
    p_spec.add_argument("--n", type=int, default=7)
    p_spec.add_argument("--out", default=None,
                        help="write the tabulated eigenfunction as JSON")
    p_spec.set_defaults(func=_cmd_spectrum)

    p_fit = sub.add_parser("fit",
                           help="orthogonal bubble fit of one snapshot csv")
    p_fit.add_argument("snapshot")
    p_fit.add_argument("--n", type=int, default=7)
    p_fit.add_argument("--cutoff", type=float, default=20.0,
                       help="fit window radius in bubble units")
    p_fit.set_defaults(func=_cmd_fit)

    p_theta = sub.add_parser("theta",
                             help="weighted-density scan of a saved run")
    p_theta.add_argument("trajectory", help="directory written by run")
    p_theta.add_argument("--x", type=float, default=0.0,
                         help="base point radius on the first axis")
    p_theta.add_argument("--s-range", required=True, metavar="LO:HI")
    p_theta.add_argument("--samples", type=int, default=25)
    p_theta.add_argument("--t", type=float, default=None,
                         help="base time (default: estimated blowup time)")
    p_theta.add_argument("--cutoff-radius", type=float, default=15.0)
    p_theta.add_argument("--tol", type=float, default=1e-4)
    p_theta.add_argument("--out", default=None, help="write csv here")
    p_theta.set_defaults(func=_cmd_theta)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
