"""Experiment orchestration: scenario in, artifact directory out.

A run always leaves a ``manifest.json`` behind, written atomically
(temp file plus rename).  The manifest is created immediately with
status ``incomplete`` and rewritten once at the end with ``complete``
or ``failed``, so a killed process is distinguishable from a finished
one and no reader ever sees a half-written manifest.  Every other
artifact is listed in the manifest with its sha256, which is how
readers detect truncation.

Batch execution is share-nothing: each scenario is loaded and run in
its own worker, and the summary row order follows the input order, so
the summary is identical whatever the parallelism.
"""

import csv
import json
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dimension import Dimension
from .diagnostics import (CutoffSpec, classify, pohozaev_identity_residual,
                          theta_monotonicity_report, write_classification_json,
                          write_theta_csv)
from .decomposition import track_parameters, write_parameter_track_csv
from .kernel import bubble_profile, ground_state
from .scenario import Scenario, load_scenario
from .solver import (RadialField, RadialGrid, RunConfig, StepControls,
                     _sha256, run_until_blowup, save_trajectory)
from .tangent import self_similar_profile, write_profile_csv

CODE_VERSION = "0.1.0"


def build_grid(sc: Scenario) -> RadialGrid:
    dim = Dimension(sc.n)
    if sc.grid.kind == "uniform":
        return RadialGrid.uniform(dim, sc.radius, sc.grid.m)
    return RadialGrid.graded(dim, sc.radius, sc.grid.m, ratio=sc.grid.ratio)


def initial_values(sc: Scenario, r: np.ndarray) -> np.ndarray:
    dim = Dimension(sc.n)
    ini = sc.initial
    if ini.family == "scaled_bubble":
        return ini.amplitude * bubble_profile(r, ini.scale, dim)
    if ini.family == "gaussian":
        return ini.amplitude * np.exp(-(r / ini.sigma) ** 2)
    table = np.loadtxt(ini.path, delimiter=",", skiprows=1, ndmin=2)
    if table.shape[1] < 2:
        raise ValueError(f"{ini.path}: need two columns r,u")
    rt, ut = table[:, 0], table[:, 1]
    order = np.argsort(rt)
    rt, ut = rt[order], ut[order]
    if rt[0] > 0.0 or rt[-1] < r[-1]:
        raise ValueError(f"{ini.path}: table covers [{rt[0]:g}, {rt[-1]:g}], "
                         f"run needs [0, {r[-1]:g}]")
    return np.interp(r, rt, ut)


def build_initial(sc: Scenario, grid: RadialGrid) -> RadialField:
    return RadialField(grid, initial_values(sc, grid.r), 0.0)


def run_config(sc: Scenario) -> RunConfig:
    controls = StepControls(rtol=sc.solver.rtol, atol=sc.solver.atol)
    return RunConfig(u_max=sc.solver.u_max, t_max=sc.solver.t_max,
                     mode=sc.solver.mode, controls=controls,
                     snap_sup_decades=sc.solver.snap_sup_decades,
                     snap_dt=sc.solver.snap_dt)


@dataclass
class RunManifest:
    scenario: dict
    code_version: str = CODE_VERSION
    status: str = "incomplete"  # incomplete | complete | failed
    termination: str | None = None
    aborted: bool = False
    T_est: float | None = None
    T_uncertainty: float | None = None
    classification: dict | None = None
    decomposition: dict | None = None
    tangent: dict | None = None
    pohozaev: list = field(default_factory=list)
    violations: dict = field(default_factory=dict)
    violation_log: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    files: dict = field(default_factory=dict)
    error: str | None = None
    wall_time_s: float | None = None

    def to_dict(self) -> dict:
        return {"format": "blowup-lab-manifest-1",
                "code_version": self.code_version,
                "status": self.status,
                "scenario": self.scenario,
                "termination": self.termination,
                "aborted": self.aborted,
                "T_est": self.T_est,
                "T_uncertainty": self.T_uncertainty,
                "classification": self.classification,
                "decomposition": self.decomposition,
                "tangent": self.tangent,
                "pohozaev": self.pohozaev,
                "violations": self.violations,
                "violation_log": self.violation_log,
                "warnings": self.warnings,
                "files": self.files,
                "error": self.error,
                "wall_time_s": self.wall_time_s}

    def accepted(self) -> bool:
        """All enabled invariant checks passed and the run finished."""
        return (self.status == "complete" and not self.aborted
                and all(v == 0 for v in self.violations.values()))


def write_manifest(manifest: RunManifest, out_dir) -> None:
    path = Path(out_dir) / "manifest.json"
    tmp = path.with_suffix(".json.tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def load_manifest(out_dir) -> dict:
    with open(Path(out_dir) / "manifest.json", "r", encoding="utf-8") as fh:
        return json.load(fh)


def _inventory(out_dir: Path) -> dict:
    files = {}
    for p in sorted(out_dir.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            files[p.relative_to(out_dir).as_posix()] = _sha256(p)
    return files


def _theta_checks(sc: Scenario, traj, cutoff, base_time, out_dir, manifest):
    plan = sc.diagnostics.theta
    # the earliest usable offset looks back exactly to the last snapshot
    s_floor = max(base_time - traj.t_last, 0.0) * (1.0 + 1e-9) + 1e-15
    s_ceil = (base_time - traj.t_first) * (1.0 - 1e-9)
    s_lo, s_hi = max(plan.s_lo, s_floor), min(plan.s_hi, s_ceil)
    if not s_lo < s_hi:
        manifest.warnings.append(
            f"theta scan skipped: offsets [{plan.s_lo:g}, {plan.s_hi:g}] do "
            f"not intersect the resolved range [{s_floor:g}, {s_ceil:g}]")
        return
    if (s_lo, s_hi) != (plan.s_lo, plan.s_hi):
        manifest.warnings.append(
            f"theta offsets clamped to [{s_lo:g}, {s_hi:g}]")
    x = np.zeros(sc.n)
    x[0] = plan.x
    s_list = np.geomspace(s_lo, s_hi, plan.samples)
    report = theta_monotonicity_report(traj, x, base_time, s_list, cutoff,
                                       tol_mono=sc.diagnostics.monotonicity_tol)
    write_theta_csv(report.samples, out_dir / "theta.csv")
    manifest.violations["theta_monotonicity"] = len(report.violations)
    for s_a, s_b, v_a, v_b in report.violations:
        manifest.violation_log.append(
            f"theta drops from {v_a:.6g} at s={s_a:.6g} "
            f"to {v_b:.6g} at s={s_b:.6g}")


def _decomposition_checks(sc: Scenario, traj, out_dir, manifest):
    spectral = ground_state(traj.grid.dim)
    track = track_parameters(traj, spectral, K=sc.decomposition.cutoff,
                             stride=sc.decomposition.stride)
    write_parameter_track_csv(track, out_dir / "parameter_track.csv")
    failed = int((~track.valid).sum())
    manifest.violations["decomposition_failed_fits"] = failed
    for t, msg in track.violation_log:
        manifest.violation_log.append(f"decomposition at t={t:.6g}: {msg}")
    manifest.decomposition = {
        "snapshots_fit": int(track.valid.size),
        "failed_fits": failed,
        "c_red_plain": track.c_red_plain,
        "c_red_normalized": (track.c_red_normalized
                             if math.isfinite(track.c_red_normalized)
                             else None)}


def _tangent_checks(sc: Scenario, traj, out_dir, manifest):
    T = traj.T_est
    if T is None:
        manifest.warnings.append(
            "self-similar profile skipped: no blowup time estimate")
        return
    tau_hi = (T - traj.t_first) * 0.5
    tau_lo = (T - traj.t_last) * (1.0 + 1e-9)
    if not 0.0 < tau_lo < tau_hi:
        manifest.warnings.append(
            "self-similar profile skipped: trajectory too short")
        return
    times = T - np.geomspace(tau_hi, tau_lo, sc.tangent.times)
    profile = self_similar_profile(traj, 0.0, times, y_max=sc.tangent.y_max)
    write_profile_csv(profile, out_dir / "self_similar.csv")
    dev = profile.dev_sup
    manifest.tangent = {"kappa": profile.kappa,
                        "dev_sup_first": float(dev[0]),
                        "dev_sup_last": float(dev[-1])}


def run(sc: Scenario, out_dir) -> RunManifest:
    """Execute a scenario end to end; artifacts and manifest land in out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.monotonic()
    manifest = RunManifest(scenario=sc.to_dict(), warnings=list(sc.warnings))
    write_manifest(manifest, out)
    try:
        grid = build_grid(sc)
        u0 = build_initial(sc, grid)
        traj = run_until_blowup(u0, run_config(sc))
        save_trajectory(traj, out / "trajectory")
        manifest.termination = traj.termination
        manifest.aborted = traj.aborted
        manifest.T_est = traj.T_est
        manifest.T_uncertainty = traj.T_uncertainty

        cutoff = CutoffSpec(radius=sc.diagnostics.cutoff_radius,
                            C_mono=sc.diagnostics.c_mono_big,
                            c_mono=sc.diagnostics.c_mono_small)
        base_time = traj.T_est if traj.T_est is not None else traj.t_last
        if sc.diagnostics.theta.enabled:
            _theta_checks(sc, traj, cutoff, base_time, out, manifest)
        if sc.diagnostics.classify:
            x = np.zeros(sc.n)
            x[0] = sc.diagnostics.theta.x
            result = classify(traj, x, cutoff, base_time=base_time)
            write_classification_json(result, out / "classification.json")
            manifest.classification = result.to_dict()
        for radius in sc.diagnostics.pohozaev_radii:
            try:
                res = pohozaev_identity_residual(traj, traj.t_last, radius)
                manifest.pohozaev.append({"r": radius, "residual": res})
            except ValueError as exc:
                manifest.warnings.append(f"pohozaev at r={radius:g}: {exc}")
        if sc.decomposition.track:
            _decomposition_checks(sc, traj, out, manifest)
        if sc.tangent.profile:
            _tangent_checks(sc, traj, out, manifest)
        manifest.status = "complete"
    except Exception:
        manifest.status = "failed"
        manifest.error = traceback.format_exc(limit=20)
    finally:
        manifest.files = _inventory(out)
        manifest.wall_time_s = time.monotonic() - t0
        write_manifest(manifest, out)
    return manifest


def _dedupe_names(paths) -> list:
    names, seen = [], {}
    for p in paths:
        stem = Path(p).stem or "scenario"
        count = seen.get(stem, 0)
        seen[stem] = count + 1
        names.append(stem if count == 0 else f"{stem}-{count + 1}")
    return names


def _batch_one(path: str, out_dir: str) -> dict:
    try:
        sc = load_scenario(path)
        manifest = run(sc, out_dir)
        verdict = (manifest.classification or {}).get("verdict", "")
        return {"scenario": path, "out_dir": out_dir,
                "status": manifest.status,
                "accepted": manifest.accepted(),
                "termination": manifest.termination or "",
                "T_est": manifest.T_est,
                "verdict": verdict,
                "violations": sum(manifest.violations.values()),
                "error": ""}
    except Exception as exc:
        return {"scenario": path, "out_dir": out_dir, "status": "failed",
                "accepted": False, "termination": "", "T_est": None,
                "verdict": "", "violations": 0,
                "error": f"{type(exc).__name__}: {exc}"}


def _summary_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


SUMMARY_COLUMNS = ("scenario", "out_dir", "status", "accepted", "termination",
                   "T_est", "verdict", "violations", "error")


def batch(paths, out_root, parallelism: int = 1) -> list:
    """Run scenarios share-nothing; summary.csv rows follow input order."""
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    paths = [os.fspath(p) for p in paths]
    out_dirs = [str(out_root / name) for name in _dedupe_names(paths)]
    if parallelism == 1 or len(paths) <= 1:
        rows = [_batch_one(p, d) for p, d in zip(paths, out_dirs)]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(_batch_one, paths, out_dirs))
    tmp = out_root / "summary.csv.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow([_summary_cell(row[c]) for c in SUMMARY_COLUMNS])
    os.replace(tmp, out_root / "summary.csv")
    return rows
