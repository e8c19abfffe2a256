"""Radial method-of-lines integrator for u_t = Delta u + |u|^{p-1} u.

Space: second-order finite differences on a uniform or geometrically graded
radial grid over [0, R], Dirichlet at R, with the origin closed by the even
extension Delta u(0) = n u_rr(0).  Time: an IMEX two-stage scheme (implicit
in the tridiagonal diffusion, explicit in the reaction) with step-doubling
error control, a reaction timescale cap dt <= c_safe ||u||_inf^{-(p-1)}, and
a reaction-only mode that integrates the pointwise ODE u' = |u|^{p-1} u for
exact-solution validation.  A fully explicit scheme is kept for
cross-validation on coarse grids.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import minimize_scalar

from .dimension import Dimension

# ARS(2,2,2) coefficients
_GAMMA = 1.0 - 1.0 / math.sqrt(2.0)
_DELTA = 1.0 - 1.0 / (2.0 * _GAMMA)


class FitRangeError(ValueError):
    """sup-norm history lacks the dynamic range required for a rate fit."""


@dataclass(frozen=True)
class RadialGrid:
    """Strictly increasing radii r_0 = 0 < ... < r_M = R."""

    dim: Dimension
    r: np.ndarray
    kind: str = "uniform"

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        object.__setattr__(self, "r", r)
        if r.size < 17:
            raise ValueError(f"grid needs at least 17 nodes (M >= 16), got {r.size}")
        if r[0] != 0.0:
            raise ValueError("first node must be exactly 0")
        if np.any(np.diff(r) <= 0.0):
            raise ValueError("nodes must be strictly increasing")

    @classmethod
    def uniform(cls, dim: Dimension, radius: float, m: int) -> "RadialGrid":
        return cls(dim, np.linspace(0.0, radius, m + 1), "uniform")

    @classmethod
    def graded(cls, dim: Dimension, radius: float, m: int,
               ratio: float = 1.02) -> "RadialGrid":
        """Geometric spacing h_j = h_0 * ratio^j refining toward r = 0."""
        if ratio <= 1.0:
            return cls.uniform(dim, radius, m)
        weights = ratio ** np.arange(m)
        nodes = np.concatenate(([0.0], np.cumsum(weights)))
        nodes *= radius / nodes[-1]
        nodes[-1] = radius
        return cls(dim, nodes, "graded")

    @property
    def radius(self) -> float:
        return float(self.r[-1])

    @property
    def m(self) -> int:
        return self.r.size - 1

    def laplacian_bands(self):
        """(lower, diag, upper) of the radial Laplacian; boundary row zero."""
        n = self.dim.n
        r = self.r
        m = self.m
        lower = np.zeros(m + 1)
        diag = np.zeros(m + 1)
        upper = np.zeros(m + 1)
        h0 = r[1] - r[0]
        diag[0] = -2.0 * n / (h0 * h0)
        upper[0] = 2.0 * n / (h0 * h0)
        hl = r[1:m] - r[0:m - 1]
        hr = r[2:m + 1] - r[1:m]
        # 3-point second derivative plus centered first derivative, both
        # exact on quadratics for nonuniform spacing
        d2l = 2.0 / (hl * (hl + hr))
        d2c = -2.0 / (hl * hr)
        d2r = 2.0 / (hr * (hl + hr))
        d1l = -hr / (hl * (hl + hr))
        d1c = (hr - hl) / (hl * hr)
        d1r = hl / (hr * (hl + hr))
        fac = (n - 1) / r[1:m]
        lower[1:m] = d2l + fac * d1l
        diag[1:m] = d2c + fac * d1c
        upper[1:m] = d2r + fac * d1r
        return lower, diag, upper

    def quad_weights(self) -> np.ndarray:
        """Trapezoid weights for int f dx = |S^{n-1}| int f r^{n-1} dr."""
        r = self.r
        h = np.diff(r)
        w = np.zeros_like(r)
        w[:-1] += h / 2.0
        w[1:] += h / 2.0
        return self.dim.sphere_area * w * r ** (self.dim.n - 1)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.quad_weights(), values))

    def gradient(self, values: np.ndarray) -> np.ndarray:
        """Second-order radial derivative of nodal values."""
        r = self.r
        out = np.empty_like(values)
        out[1:-1] = _centered_d1(r, values)
        # one-sided second-order ends
        out[0] = _onesided_d1(r[0], r[1], r[2], values[0], values[1], values[2])
        out[-1] = -_onesided_d1(r[-1], r[-2], r[-3], values[-1], values[-2],
                                values[-3])
        return out


def _centered_d1(r, v):
    hl = r[1:-1] - r[:-2]
    hr = r[2:] - r[1:-1]
    wl = -hr / (hl * (hl + hr))
    wc = (hr - hl) / (hl * hr)
    wr = hl / (hr * (hl + hr))
    return wl * v[:-2] + wc * v[1:-1] + wr * v[2:]


def _onesided_d1(x0, x1, x2, v0, v1, v2):
    h1 = x1 - x0
    h2 = x2 - x0
    return (-(h1 + h2) / (h1 * h2) * v0
            + h2 / (h1 * (h2 - h1)) * v1
            - h1 / (h2 * (h2 - h1)) * v2)


@dataclass
class RadialField:
    """Nodal values of a radial scalar field at one time."""

    grid: RadialGrid
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.r.shape:
            raise ValueError("values must match the grid")

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


def discrete_laplacian(fld: RadialField) -> RadialField:
    """Radial Laplacian of the field; the Dirichlet boundary row is zero."""
    lower, diag, upper = fld.grid.laplacian_bands()
    v = fld.values
    out = diag * v
    out[1:] += lower[1:] * v[:-1]
    out[:-1] += upper[:-1] * v[1:]
    return RadialField(fld.grid, out, fld.t)


def reaction(values: np.ndarray, p: float) -> np.ndarray:
    return np.abs(values) ** (p - 1.0) * values


@dataclass
class StepControls:
    rtol: float = 1e-6
    atol: float = 1e-12
    c_safe: float = 0.1
    dt_max: float = 1.0
    dt_min: float = 1e-15
    safety: float = 0.9
    max_steps: int = 500_000
    scheme: str = "imex"  # imex | explicit


@dataclass
class StepResult:
    values: np.ndarray
    error_estimate: float  # normalized: accept iff <= 1


class _Stepper:
    """One time level of the scheme; factorizations rebuilt per dt."""

    def __init__(self, grid: RadialGrid, mode: str, controls: StepControls):
        if mode not in ("full", "reaction_only"):
            raise ValueError(f"unknown mode {mode!r}")
        self.grid = grid
        self.mode = mode
        self.controls = controls
        self.p = grid.dim.p
        if mode == "full":
            self.bands = grid.laplacian_bands()
        else:
            z = np.zeros(grid.r.size)
            self.bands = (z, z, z)

    def _apply_l(self, v):
        lower, diag, upper = self.bands
        out = diag * v
        out[1:] += lower[1:] * v[:-1]
        out[:-1] += upper[:-1] * v[1:]
        return out

    def _solve(self, coef, rhs):
        """Solve (I - coef*L) x = rhs with the Dirichlet row pinned."""
        if self.mode != "full":
            return rhs
        lower, diag, upper = self.bands
        m = rhs.size - 1
        ab = np.zeros((3, rhs.size))
        ab[0, 1:] = -coef * upper[:-1]
        ab[1, :] = 1.0 - coef * diag
        ab[2, :-1] = -coef * lower[1:]
        rhs = rhs.copy()
        rhs[m] = 0.0
        return solve_banded((1, 1), ab, rhs, check_finite=False)

    def _advance_imex(self, v, dt):
        p = self.p
        fe0 = reaction(v, p)
        u1 = self._solve(_GAMMA * dt, v + dt * _GAMMA * fe0)
        rhs = v + dt * (_DELTA * fe0 + (1.0 - _DELTA) * reaction(u1, p)
                        + (1.0 - _GAMMA) * self._apply_l(u1))
        return self._solve(_GAMMA * dt, rhs)

    def _advance_explicit(self, v, dt):
        def f(u):
            return self._apply_l(u) + reaction(u, self.p)
        k1 = f(v)
        k2 = f(v + 0.5 * dt * k1)
        out = v + dt * k2
        if self.mode == "full":
            out[-1] = 0.0
        return out

    def _advance(self, v, dt):
        if self.controls.scheme == "explicit":
            return self._advance_explicit(v, dt)
        return self._advance_imex(v, dt)

    def attempt(self, v, dt) -> StepResult:
        """Candidate step with step-doubling error estimate (order 2)."""
        if dt == 0.0:
            return StepResult(v.copy(), 0.0)
        full = self._advance(v, dt)
        half = self._advance(self._advance(v, 0.5 * dt), 0.5 * dt)
        scale = self.controls.atol + self.controls.rtol * np.maximum(
            np.abs(v), np.abs(half))
        with np.errstate(invalid="ignore"):
            err = float(np.max(np.abs(half - full) / scale)) / 3.0
        if not np.isfinite(err):
            err = np.inf
        return StepResult(half, err)


def step(fld: RadialField, dt: float, mode: str = "full",
         controls: StepControls | None = None) -> StepResult:
    """One candidate step from the field; rejection is signaled through
    error_estimate > 1, retried by the driver rather than raised."""
    controls = controls or StepControls()
    st = _Stepper(fld.grid, mode, controls)
    return st.attempt(fld.values, dt)


@dataclass
class TimeDerivativeBudget:
    """Cumulative int_0^t int |u_t|^2 dx dt, accumulated per accepted step."""

    times: np.ndarray
    increments: np.ndarray

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.increments)

    def value_at(self, t: float) -> float:
        cum = self.cumulative
        idx = np.searchsorted(self.times, t, side="right") - 1
        if idx < 0:
            return 0.0
        return float(cum[min(idx, cum.size - 1)])


@dataclass
class RunConfig:
    u_max: float = 1e8
    t_max: float = 50.0
    mode: str = "full"
    controls: StepControls = field(default_factory=StepControls)
    snap_sup_decades: float = 0.01
    snap_dt: float | None = None  # defaults to t_max / 400


@dataclass
class BlowupFit:
    T_est: float
    T_uncertainty: float
    rate_exponent: float
    kappa_fit: float
    window: tuple
    n_points: int
    rms_residual: float

    def to_dict(self) -> dict:
        return {"T_est": self.T_est, "T_uncertainty": self.T_uncertainty,
                "rate_exponent": self.rate_exponent, "kappa_fit": self.kappa_fit,
                "window": list(self.window), "n_points": self.n_points,
                "rms_residual": self.rms_residual}


@dataclass
class Trajectory:
    """Snapshots (decimated) plus per-step sup history of one run."""

    grid: RadialGrid
    mode: str
    times: list
    snapshots: list  # value arrays aligned with times
    sup_history: np.ndarray  # columns t, sup, dt
    budget: TimeDerivativeBudget
    termination: str
    aborted: bool = False
    fit: BlowupFit | None = None

    @property
    def dim(self) -> Dimension:
        return self.grid.dim

    @property
    def t_first(self) -> float:
        return self.times[0]

    @property
    def t_last(self) -> float:
        return self.times[-1]

    @property
    def T_est(self) -> float | None:
        return self.fit.T_est if self.fit is not None else None

    @property
    def T_uncertainty(self) -> float | None:
        return self.fit.T_uncertainty if self.fit is not None else None

    @property
    def dt_history(self) -> np.ndarray:
        return self.sup_history[:, 2]

    def field_at(self, t: float) -> RadialField:
        """Linear interpolation in time between bracketing snapshots."""
        times = self.times
        if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
            raise ValueError(
                f"time {t} outside trajectory range [{times[0]}, {times[-1]}]")
        idx = np.searchsorted(times, t)
        if idx == 0:
            return RadialField(self.grid, self.snapshots[0].copy(), times[0])
        if idx >= len(times):
            return RadialField(self.grid, self.snapshots[-1].copy(), times[-1])
        t0, t1 = times[idx - 1], times[idx]
        w = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
        vals = (1.0 - w) * self.snapshots[idx - 1] + w * self.snapshots[idx]
        return RadialField(self.grid, vals, t)

    def time_derivative_at(self, t: float) -> RadialField:
        """u_t from the scheme's right-hand side at the interpolated field."""
        fld = self.field_at(t)
        p = self.dim.p
        if self.mode == "reaction_only":
            vals = reaction(fld.values, p)
        else:
            vals = discrete_laplacian(fld).values + reaction(fld.values, p)
            vals[-1] = 0.0
        return RadialField(self.grid, vals, t)

    # -- persistence ------------------------------------------------------

    def save(self, directory) -> None:
        save_trajectory(self, directory)

    @classmethod
    def load(cls, directory) -> "Trajectory":
        return load_trajectory(directory)


def run_until_blowup(u0: RadialField, config: RunConfig) -> Trajectory:
    """Integrate until sup |u| >= u_max, t >= t_max, or failure.

    dt follows min(error-controlled dt, c_safe * sup^{-(p-1)}, dt_max); the
    sup history records every accepted step while snapshots are decimated by
    sup-growth decades and a wall-time-independent spacing floor.
    """
    if not np.all(np.isfinite(u0.values)):
        raise ValueError("initial data must be finite")
    grid = u0.grid
    p = grid.dim.p
    ctl = config.controls
    stepper = _Stepper(grid, config.mode, ctl)
    weights = grid.quad_weights()
    snap_dt = config.snap_dt if config.snap_dt is not None else config.t_max / 400.0

    v = u0.values.copy()
    if config.mode == "full":
        v[-1] = 0.0
    t = float(u0.t)
    sup = float(np.max(np.abs(v)))

    def cap(s):
        return ctl.c_safe * s ** (1.0 - p) if s > 0 else ctl.dt_max

    dt = min(0.01 * cap(sup), ctl.dt_max, config.t_max - t)
    times = [t]
    snaps = [v.copy()]
    sup_rows = [(t, sup, 0.0)]
    budget_t = []
    budget_inc = []
    termination = "t_max"
    aborted = False
    last_snap_sup = sup
    last_snap_t = t

    if sup >= config.u_max:
        termination = "sup_cap"
    else:
        for _ in range(ctl.max_steps):
            if t >= config.t_max:
                termination = "t_max"
                break
            dt = min(dt, cap(sup), ctl.dt_max, config.t_max - t)
            if dt <= ctl.dt_min * max(abs(t), 1.0):
                termination = "dt_underflow"
                aborted = True
                break
            res = stepper.attempt(v, dt)
            if res.error_estimate > 1.0:
                if not np.isfinite(res.error_estimate):
                    dt *= 0.2
                else:
                    dt *= max(0.2, ctl.safety * res.error_estimate ** (-1.0 / 3.0))
                continue
            new_v = res.values
            if not np.all(np.isfinite(new_v)):
                termination = "overflow"
                aborted = True
                break
            du = (new_v - v) / dt
            budget_t.append(t + dt)
            budget_inc.append(dt * float(np.dot(weights, du * du)))
            v = new_v
            t += dt
            sup = float(np.max(np.abs(v)))
            sup_rows.append((t, sup, dt))
            grew = abs(math.log10(max(sup, 1e-300) / max(last_snap_sup, 1e-300)))
            if grew >= config.snap_sup_decades or t - last_snap_t >= snap_dt:
                times.append(t)
                snaps.append(v.copy())
                last_snap_sup = sup
                last_snap_t = t
            if sup >= config.u_max:
                termination = "sup_cap"
                break
            growth = max(0.2, min(2.0, ctl.safety * (res.error_estimate + 1e-16)
                                  ** (-1.0 / 3.0)))
            dt *= growth
        else:
            termination = "max_steps"
            aborted = True

    if times[-1] != t:
        times.append(t)
        snaps.append(v.copy())

    traj = Trajectory(
        grid=grid, mode=config.mode, times=times, snapshots=snaps,
        sup_history=np.asarray(sup_rows),
        budget=TimeDerivativeBudget(np.asarray(budget_t),
                                    np.asarray(budget_inc)),
        termination=termination, aborted=aborted)
    if termination == "sup_cap":
        try:
            traj.fit = estimate_blowup_time(traj)
        except FitRangeError:
            traj.fit = None
    return traj


def estimate_blowup_time(traj: Trajectory, fit_decades: float = 3.0,
                         min_decades: float = 3.0) -> BlowupFit:
    """Fit sup|u(t)| ~ kappa_fit (T - t)^{-q} over the last growth decades.

    T is a free parameter chosen to minimize the least-squares residual of
    log sup vs log(T - t); raises FitRangeError when the sup history spans
    less than min_decades of growth.
    """
    hist = traj.sup_history
    t_arr, s_arr = hist[:, 0], hist[:, 1]
    s_end = s_arr[-1]
    total_range = s_end / np.min(s_arr)
    if total_range < 10.0 ** min_decades:
        raise FitRangeError(
            f"sup history spans only {np.log10(total_range):.2f} decades of "
            f"growth; need {min_decades}")
    lo_cut = s_end / 10.0 ** fit_decades
    start = np.argmax(s_arr >= lo_cut)
    t_w, s_w = t_arr[start:], s_arr[start:]
    # thin to at most 400 points, keep endpoints
    if t_w.size > 400:
        idx = np.unique(np.linspace(0, t_w.size - 1, 400).astype(int))
        t_w, s_w = t_w[idx], s_w[idx]
    t_end = t_w[-1]
    span = t_end - t_w[0]
    y = np.log(s_w)

    def sse(T):
        x = np.log(T - t_w)
        mat = np.vstack([x, np.ones_like(x)]).T
        coef, res, *_ = np.linalg.lstsq(mat, y, rcond=None)
        pred = mat @ coef
        return float(np.sum((pred - y) ** 2))

    # optimize over log(T - t_end): T must resolve far below the machine
    # relative precision of T itself when T - t_end << T
    opt = minimize_scalar(lambda th: sse(t_end + math.exp(th)),
                          bounds=(math.log(1e-12 * span), math.log(span)),
                          method="bounded", options={"xatol": 1e-12})
    T = t_end + math.exp(float(opt.x))
    x = np.log(T - t_w)
    mat = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(mat, y, rcond=None)
    slope, intercept = coef
    n_pts = t_w.size
    rms = math.sqrt(sse(T) / n_pts)
    # curvature-based asymptotic uncertainty for T
    dT = 1e-4 * (T - t_end)
    s0, s_plus, s_minus = sse(T), sse(T + dT), sse(T - dT)
    curv = (s_plus + s_minus - 2.0 * s0) / dT**2
    sigma2 = s0 / max(n_pts - 3, 1)
    T_unc = math.sqrt(2.0 * sigma2 / curv) if curv > 0 else float("inf")
    return BlowupFit(T_est=T, T_uncertainty=T_unc, rate_exponent=float(-slope),
                     kappa_fit=float(np.exp(intercept)),
                     window=(float(t_w[0]), float(t_end)), n_points=n_pts,
                     rms_residual=rms)


def energy_identity_residual(traj: Trajectory, eta_scale: float | None = None):
    """Per-interval residual of the localized energy identity.

    d/dt int [ |grad u|^2/2 - |u|^{p+1}/(p+1) ] eta^2
        = - int |u_t|^2 eta^2 + 2 int eta u_t grad u . grad eta,
    with eta the radial bump of unit plateau scaled by eta_scale (eta == 1
    when eta_scale is None).  Returns (midpoint times, residuals).
    """
    from .cutoffs import eta as eta_bump, eta_d1

    grid = traj.grid
    p = grid.dim.p
    w = grid.quad_weights()
    r = grid.r
    if eta_scale is None:
        eta_v = np.ones_like(r)
        eta_g = np.zeros_like(r)
    else:
        eta_v = eta_bump(r / eta_scale)
        eta_g = eta_d1(r / eta_scale) / eta_scale

    def energy(vals):
        gr = grid.gradient(vals)
        dens = 0.5 * gr * gr - np.abs(vals) ** (p + 1.0) / (p + 1.0)
        return float(np.dot(w, dens * eta_v * eta_v))

    def rhs(tq):
        fld = traj.field_at(tq)
        ut = traj.time_derivative_at(tq).values
        gr = grid.gradient(fld.values)
        integ = -ut * ut * eta_v * eta_v + 2.0 * eta_v * ut * gr * eta_g
        return float(np.dot(w, integ))

    times = np.asarray(traj.times)
    mids = []
    residuals = []
    for k in range(len(times) - 1):
        t0, t1 = times[k], times[k + 1]
        if t1 <= t0:
            continue
        lhs = (energy(traj.snapshots[k + 1]) - energy(traj.snapshots[k])) / (t1 - t0)
        rr = 0.5 * (rhs(t0) + rhs(t1))
        mids.append(0.5 * (t0 + t1))
        residuals.append(lhs - rr)
    return np.asarray(mids), np.asarray(residuals)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_trajectory(traj: Trajectory, directory) -> None:
    """Directory layout: manifest trajectory.json (written last, atomically),
    snapshots/*.csv with columns (r, u), sup_history.csv, budget.csv."""
    directory = os.fspath(directory)
    snap_dir = os.path.join(directory, "snapshots")
    os.makedirs(snap_dir, exist_ok=True)
    index = []
    for k, (t, vals) in enumerate(zip(traj.times, traj.snapshots)):
        name = f"snap_{k:06d}.csv"
        path = os.path.join(snap_dir, name)
        np.savetxt(path, np.column_stack([traj.grid.r, vals]),
                   delimiter=",", header="r,u", comments="", fmt="%.17g")
        index.append({"file": f"snapshots/{name}", "t": float(t),
                      "sha256": _sha256(path)})
    sup_path = os.path.join(directory, "sup_history.csv")
    np.savetxt(sup_path, traj.sup_history, delimiter=",",
               header="t,sup,dt", comments="", fmt="%.17g")
    bud_path = os.path.join(directory, "budget.csv")
    np.savetxt(bud_path,
               np.column_stack([traj.budget.times, traj.budget.increments])
               if traj.budget.times.size else np.empty((0, 2)),
               delimiter=",", header="t,increment", comments="", fmt="%.17g")
    manifest = {
        "format": "blowup-lab-trajectory-1",
        "dimension": traj.dim.n,
        "grid": {"kind": traj.grid.kind, "nodes": traj.grid.r.tolist()},
        "mode": traj.mode,
        "termination": traj.termination,
        "aborted": traj.aborted,
        "fit": traj.fit.to_dict() if traj.fit else None,
        "snapshots": index,
        "files": {
            "sup_history": {"file": "sup_history.csv", "sha256": _sha256(sup_path)},
            "budget": {"file": "budget.csv", "sha256": _sha256(bud_path)},
        },
    }
    tmp = os.path.join(directory, "trajectory.json.tmp")
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=1)
    os.replace(tmp, os.path.join(directory, "trajectory.json"))


def load_trajectory(directory) -> Trajectory:
    """Reload a persisted trajectory, verifying checksums."""
    directory = os.fspath(directory)
    with open(os.path.join(directory, "trajectory.json")) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "blowup-lab-trajectory-1":
        raise ValueError("not a trajectory directory")

    def checked(entry):
        path = os.path.join(directory, entry["file"])
        if _sha256(path) != entry["sha256"]:
            raise ValueError(f"checksum mismatch for {entry['file']}")
        return path

    grid = RadialGrid(Dimension(manifest["dimension"]),
                      np.asarray(manifest["grid"]["nodes"], dtype=float),
                      manifest["grid"]["kind"])
    times, snaps = [], []
    for entry in manifest["snapshots"]:
        data = np.loadtxt(checked(entry), delimiter=",", skiprows=1)
        times.append(entry["t"])
        snaps.append(data[:, 1])
    sup = np.loadtxt(checked(manifest["files"]["sup_history"]), delimiter=",",
                     skiprows=1, ndmin=2)
    bud = np.loadtxt(checked(manifest["files"]["budget"]), delimiter=",",
                     skiprows=1, ndmin=2)
    if bud.size == 0:
        bud = np.empty((0, 2))
    fit = None
    if manifest["fit"]:
        fd = dict(manifest["fit"])
        fd["window"] = tuple(fd["window"])
        fit = BlowupFit(**fd)
    return Trajectory(grid=grid, mode=manifest["mode"], times=times,
                      snapshots=snaps, sup_history=sup,
                      budget=TimeDerivativeBudget(bud[:, 0], bud[:, 1]),
                      termination=manifest["termination"],
                      aborted=manifest["aborted"], fit=fit)
