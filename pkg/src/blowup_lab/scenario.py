"""Scenario configuration: strict, typed parsing of experiment files.

The grammar is nested YAML key-value with a fixed schema.  Unknown keys
are fatal rather than ignored: silently dropping a misspelled tolerance
would change a tolerance-sensitive experiment without notice.  Every
field has a documented default, so a minimal scenario is just a
dimension, a radius, and an initial-data family.
"""

import math
import os
from dataclasses import dataclass, field, asdict

import yaml


@dataclass
class GridSpec:
    kind: str = "graded"  # uniform | graded
    m: int = 2200
    ratio: float = 1.004


@dataclass
class InitialSpec:
    family: str = "scaled_bubble"  # scaled_bubble | gaussian | custom_table
    amplitude: float = 1.2
    scale: float = 1.0  # scaled_bubble bubble scale
    sigma: float = 2.0  # gaussian width
    path: str = ""  # custom_table csv with columns r,u


@dataclass
class SolverSpec:
    mode: str = "full"  # full | reaction_only
    u_max: float = 1e8
    t_max: float = 50.0
    rtol: float = 1e-8
    atol: float = 1e-14
    snap_sup_decades: float = 0.005
    snap_dt: float | None = None


@dataclass
class ThetaPlan:
    enabled: bool = False
    x: float = 0.0  # base-point radius on the first axis
    s_lo: float = 1e-4
    s_hi: float = 1e-3
    samples: int = 25


@dataclass
class DiagnosticsPlan:
    classify: bool = True
    theta: ThetaPlan = field(default_factory=ThetaPlan)
    cutoff_radius: float = 15.0
    c_mono_big: float = 100.0
    c_mono_small: float = 0.01
    monotonicity_tol: float = 1e-4
    pohozaev_radii: list = field(default_factory=list)


@dataclass
class DecompositionPlan:
    track: bool = False
    cutoff: float = 20.0
    stride: int = 1


@dataclass
class TangentPlan:
    profile: bool = False
    y_max: float = 5.0
    times: int = 12  # log-spaced sample count over the resolved decades


@dataclass
class Scenario:
    n: int = 7
    radius: float = 20.0
    grid: GridSpec = field(default_factory=GridSpec)
    initial: InitialSpec = field(default_factory=InitialSpec)
    solver: SolverSpec = field(default_factory=SolverSpec)
    diagnostics: DiagnosticsPlan = field(default_factory=DiagnosticsPlan)
    decomposition: DecompositionPlan = field(default_factory=DecompositionPlan)
    tangent: TangentPlan = field(default_factory=TangentPlan)
    seed: int = 0  # reserved for randomized quadrature; echoed for provenance
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("warnings")
        return d


class ScenarioError(ValueError):
    pass


def _need(cond: bool, path: str, msg: str):
    if not cond:
        raise ScenarioError(f"{path}: {msg}")


def _to_float(val) -> float | None:
    """Coerce a YAML scalar to float, or None if it is not numeric.

    YAML 1.1 reads exponents without a sign ("1.0e6", "1e-8") as strings,
    so numeric-looking strings are accepted too.
    """
    if isinstance(val, bool):
        return None
    if isinstance(val, (int, float)):
        return float(val)
    if isinstance(val, str):
        try:
            return float(val)
        except ValueError:
            return None
    return None


def _take(mapping: dict, path: str, key: str, kind, default):
    """Pop a typed scalar; bool is not accepted where a number is wanted."""
    if key not in mapping:
        return default
    val = mapping.pop(key)
    if kind is float:
        num = _to_float(val)
        _need(num is not None, f"{path}.{key}",
              f"expected a number, got {val!r}")
        return num
    if kind is int:
        _need(isinstance(val, int) and not isinstance(val, bool),
              f"{path}.{key}", f"expected an integer, got {val!r}")
        return int(val)
    if kind is bool:
        _need(isinstance(val, bool), f"{path}.{key}",
              f"expected true/false, got {val!r}")
        return val
    if kind is str:
        _need(isinstance(val, str), f"{path}.{key}",
              f"expected a string, got {val!r}")
        return val
    raise AssertionError(kind)


def _section(mapping: dict, path: str, key: str) -> dict:
    val = mapping.pop(key, {})
    if val is None:
        val = {}
    _need(isinstance(val, dict), f"{path}.{key}", "expected a mapping")
    return dict(val)


def _no_leftovers(mapping: dict, path: str):
    if mapping:
        raise ScenarioError(
            f"{path}: unknown key(s) {sorted(mapping)} (strict mode)")


def parse_scenario(text: str, base_dir: str = ".") -> Scenario:
    """Parse and validate scenario text; unknown keys are fatal."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"not well-formed YAML: {exc}") from exc
    if raw is None:
        raw = {}
    _need(isinstance(raw, dict), "scenario", "top level must be a mapping")
    raw = dict(raw)

    n = _take(raw, "scenario", "n", int, 7)
    _need(n >= 3, "scenario.n", f"dimension must be >= 3, got {n}")
    radius = _take(raw, "scenario", "radius", float, 20.0)
    _need(radius > 0, "scenario.radius", "must be positive")
    seed = _take(raw, "scenario", "seed", int, 0)

    g = _section(raw, "scenario", "grid")
    grid = GridSpec(kind=_take(g, "grid", "kind", str, "graded"),
                    m=_take(g, "grid", "m", int, 2200),
                    ratio=_take(g, "grid", "ratio", float, 1.004))
    _no_leftovers(g, "grid")
    _need(grid.kind in ("uniform", "graded"), "grid.kind",
          f"must be uniform or graded, got {grid.kind!r}")
    _need(grid.m >= 16, "grid.m", "need at least 16 intervals")
    _need(grid.ratio >= 1.0, "grid.ratio", "must be >= 1")

    i = _section(raw, "scenario", "initial")
    initial = InitialSpec(family=_take(i, "initial", "family", str, "scaled_bubble"),
                          amplitude=_take(i, "initial", "amplitude", float, 1.2),
                          scale=_take(i, "initial", "scale", float, 1.0),
                          sigma=_take(i, "initial", "sigma", float, 2.0),
                          path=_take(i, "initial", "path", str, ""))
    _no_leftovers(i, "initial")
    _need(initial.family in ("scaled_bubble", "gaussian", "custom_table"),
          "initial.family", f"unknown family {initial.family!r}")
    _need(initial.scale > 0, "initial.scale", "must be positive")
    _need(initial.sigma > 0, "initial.sigma", "must be positive")
    if initial.family == "custom_table":
        _need(bool(initial.path), "initial.path", "custom_table needs a path")
        resolved = os.path.abspath(os.path.join(base_dir, initial.path))
        _need(os.path.exists(resolved), "initial.path",
              f"file not found: {resolved}")
        # later consumers (runner, batch workers) must not depend on cwd
        initial.path = resolved

    s = _section(raw, "scenario", "solver")
    solver = SolverSpec(mode=_take(s, "solver", "mode", str, "full"),
                        u_max=_take(s, "solver", "u_max", float, 1e8),
                        t_max=_take(s, "solver", "t_max", float, 50.0),
                        rtol=_take(s, "solver", "rtol", float, 1e-8),
                        atol=_take(s, "solver", "atol", float, 1e-14),
                        snap_sup_decades=_take(s, "solver", "snap_sup_decades",
                                               float, 0.005))
    snap_dt = s.pop("snap_dt", None)
    if snap_dt is not None:
        num = _to_float(snap_dt)
        _need(num is not None and num > 0, "solver.snap_dt",
              "must be a positive number")
        solver.snap_dt = num
    _no_leftovers(s, "solver")
    _need(solver.mode in ("full", "reaction_only"), "solver.mode",
          f"must be full or reaction_only, got {solver.mode!r}")
    for name in ("u_max", "t_max", "rtol", "atol", "snap_sup_decades"):
        _need(getattr(solver, name) > 0, f"solver.{name}", "must be positive")

    d = _section(raw, "scenario", "diagnostics")
    t = _section(d, "diagnostics", "theta")
    theta = ThetaPlan(enabled=_take(t, "diagnostics.theta", "enabled", bool, False),
                      x=_take(t, "diagnostics.theta", "x", float, 0.0),
                      s_lo=_take(t, "diagnostics.theta", "s_lo", float, 1e-4),
                      s_hi=_take(t, "diagnostics.theta", "s_hi", float, 1e-3),
                      samples=_take(t, "diagnostics.theta", "samples", int, 25))
    _no_leftovers(t, "diagnostics.theta")
    _need(0 < theta.s_lo < theta.s_hi, "diagnostics.theta",
          "need 0 < s_lo < s_hi")
    _need(theta.samples >= 3, "diagnostics.theta.samples", "need >= 3")
    radii = d.pop("pohozaev_radii", [])
    _need(isinstance(radii, list), "diagnostics.pohozaev_radii",
          "expected a list of positive numbers")
    radii = [_to_float(r) for r in radii]
    _need(all(r is not None and r > 0 for r in radii),
          "diagnostics.pohozaev_radii", "expected a list of positive numbers")
    diags = DiagnosticsPlan(
        classify=_take(d, "diagnostics", "classify", bool, True),
        theta=theta,
        cutoff_radius=_take(d, "diagnostics", "cutoff_radius", float, 15.0),
        c_mono_big=_take(d, "diagnostics", "c_mono_big", float, 100.0),
        c_mono_small=_take(d, "diagnostics", "c_mono_small", float, 0.01),
        monotonicity_tol=_take(d, "diagnostics", "monotonicity_tol", float, 1e-4),
        pohozaev_radii=[float(r) for r in radii])
    _no_leftovers(d, "diagnostics")
    _need(diags.cutoff_radius >= 1.0, "diagnostics.cutoff_radius",
          "must be >= 1 (cutoff derivative budget)")

    dc = _section(raw, "scenario", "decomposition")
    decomp = DecompositionPlan(track=_take(dc, "decomposition", "track", bool, False),
                               cutoff=_take(dc, "decomposition", "cutoff", float, 20.0),
                               stride=_take(dc, "decomposition", "stride", int, 1))
    _no_leftovers(dc, "decomposition")
    _need(decomp.cutoff > 0, "decomposition.cutoff", "must be positive")
    _need(decomp.stride >= 1, "decomposition.stride", "must be >= 1")

    tg = _section(raw, "scenario", "tangent")
    tangent = TangentPlan(profile=_take(tg, "tangent", "profile", bool, False),
                          y_max=_take(tg, "tangent", "y_max", float, 5.0),
                          times=_take(tg, "tangent", "times", int, 12))
    _no_leftovers(tg, "tangent")
    _need(tangent.y_max > 0, "tangent.y_max", "must be positive")
    _need(tangent.times >= 2, "tangent.times", "need >= 2 sample times")

    _no_leftovers(raw, "scenario")

    warnings = []
    if n < 7:
        warnings.append(f"n = {n} is outside the classified regime (n >= 7); "
                        "solver and diagnostics run, classification caveats apply")
    if initial.family == "custom_table":
        warnings.append("custom_table data must be nonnegative for "
                        "classified-regime claims")
    return Scenario(n=n, radius=radius, grid=grid, initial=initial,
                    solver=solver, diagnostics=diags, decomposition=decomp,
                    tangent=tangent, seed=seed, warnings=warnings)


def load_scenario(path) -> Scenario:
    path = os.fspath(path)
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        return parse_scenario(text, base_dir=os.path.dirname(os.path.abspath(path)))
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def serialize_scenario(sc: Scenario) -> str:
    """Canonical form: full schema with defaults filled, sorted keys."""
    return yaml.safe_dump(sc.to_dict(), sort_keys=True)


def normalize_scenario(text: str, base_dir: str = ".") -> str:
    return serialize_scenario(parse_scenario(text, base_dir=base_dir))
