"""Parabolic rescaling views of a trajectory and the self-similar profile.

A rescaled view evaluates u_lam(y, t) = lam^{2/(p-1)} u(a + lam y,
T + lam^2 t) by interpolation alone (linear in time between snapshots,
cubic in radius); nothing is re-solved.  The self-similar profile
w(y, t) = (T-t)^{1/(p-1)} u(a + y sqrt(T-t), t) tends, for a Type I
blowup at (a, T), to the constant kappa = (p-1)^{-1/(p-1)} on compact
y-sets, and its sup-distance to the two constant alternatives 0 and
kappa is the desk-scale stand-in for the Liouville dichotomy.

Profiles from a single run approximate the scaling limit only
heuristically: there is no subsequence structure in one trajectory,
and the blowup time enters through the solver's fitted estimate, whose
uncertainty is propagated as a band on the profile deviation.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .solver import RadialField, RadialGrid, TimeDerivativeBudget, Trajectory


def _spline_at(traj: Trajectory, t: float) -> CubicSpline:
    fld = traj.field_at(t)
    return CubicSpline(traj.grid.r, fld.values)


def _radii(traj: Trajectory, coords: np.ndarray, what: str) -> np.ndarray:
    r = np.abs(coords)
    r_max = traj.grid.radius
    if np.any(r > r_max * (1.0 + 1e-12)):
        raise ValueError(
            f"{what} needs radius {float(np.max(r)):.6g}, outside the "
            f"trajectory domain of radius {r_max:.6g}")
    return np.minimum(r, r_max)


@dataclass(frozen=True)
class RescaledView:
    """u_lam(y, t) = lam^{2/(p-1)} u(a + lam y, T + lam^2 t).

    a is an axis coordinate (the backing run is radial, so a point on a
    line through the origin loses no generality); y is measured along
    the same axis.
    """

    traj: Trajectory
    a: float
    T: float
    lam: float

    def value(self, y, t: float):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        tau = self.T + self.lam ** 2 * t
        r = _radii(self.traj, self.a + self.lam * y, "rescaled window")
        spline = _spline_at(self.traj, tau)
        alpha = self.traj.dim.alpha  # 2/(p-1) = (n-2)/2
        return self.lam ** alpha * spline(r)

    def compose(self, lam2: float, a2: float = 0.0, t2: float = 0.0) -> "RescaledView":
        """The view of this view, collapsed to a single view of the base
        trajectory: scales multiply, offsets compose affinely."""
        if not lam2 > 0:
            raise ValueError(f"rescaling factor must be positive, got {lam2}")
        return RescaledView(traj=self.traj,
                            a=self.a + self.lam * a2,
                            T=self.T + self.lam ** 2 * t2,
                            lam=self.lam * lam2)

    def as_trajectory(self, y_max: float, m: int, times) -> Trajectory:
        """Materialize the view on a radial grid (a = 0 only, so the
        rescaled field is again radial) for cross-module diagnostics."""
        if self.a != 0.0:
            raise ValueError("off-center views are not radially symmetric")
        grid = RadialGrid.uniform(self.traj.dim, y_max, m)
        times = [float(t) for t in times]
        snaps = [self.value(grid.r, t) for t in times]
        sups = [float(np.max(np.abs(s))) for s in snaps]
        dts = np.gradient(times) if len(times) > 1 else np.zeros(len(times))
        hist = np.column_stack([times, sups, dts])
        return Trajectory(grid=grid, mode=self.traj.mode, times=times,
                          snapshots=snaps, sup_history=hist,
                          budget=TimeDerivativeBudget(np.zeros(0), np.zeros(0)),
                          termination="rescaled_view")


def rescale(traj: Trajectory, a: float, T: float, lam: float) -> RescaledView:
    if not lam > 0:
        raise ValueError(f"rescaling factor must be positive, got {lam}")
    if not math.isfinite(T):
        raise ValueError(f"blowup time must be finite, got {T}")
    return RescaledView(traj=traj, a=float(a), T=float(T), lam=float(lam))


@dataclass
class SelfSimilarProfile:
    """w(y, t) = (T-t)^{1/(p-1)} u(a + y sqrt(T-t), t) on a fixed y-grid."""

    a: float
    T: float
    times: np.ndarray
    y: np.ndarray
    w: np.ndarray  # shape (times, y)
    kappa: float
    dev_sup: np.ndarray  # per-time sup |w - kappa| over the y-grid
    band: dict = field(default_factory=dict)  # dev_sup at T +/- dT


def self_similar_profile(traj: Trajectory, a: float, times, y_max: float = 5.0,
                         samples: int = 201, T: float | None = None) -> SelfSimilarProfile:
    """Sample the self-similar normalization at the given times.

    T defaults to the solver's fitted blowup time; when the fit carries
    an uncertainty dT, the deviation sups are re-evaluated at T - dT and
    T + dT and reported as a band (times against which T +/- dT is not a
    future blowup time get NaN entries).
    """
    if T is None:
        T = traj.T_est
    if T is None:
        raise ValueError("trajectory carries no blowup-time estimate; pass T")
    T = float(T)
    times = np.asarray([float(t) for t in times])
    if times.size == 0:
        raise ValueError("no sample times given")
    lo, hi = traj.t_first, traj.t_last
    bad = (times >= T) | (times < lo - 1e-12) | (times > hi + 1e-12)
    if np.any(bad):
        raise ValueError(
            f"sample times must lie in [{lo:.6g}, {hi:.6g}] and before "
            f"T = {T:.6g}; offending: {times[bad][:4]}")
    dim = traj.dim
    kappa = (dim.p - 1.0) ** (-1.0 / (dim.p - 1.0))
    y = np.linspace(-y_max, y_max, samples)

    def deviations(T_use, store=None):
        dev = np.full(times.size, np.nan)
        for i, t in enumerate(times):
            tau = T_use - t
            if tau <= 0.0:
                continue
            r = _radii(traj, a + y * math.sqrt(tau), "self-similar window")
            vals = tau ** (1.0 / (dim.p - 1.0)) * _spline_at(traj, t)(r)
            if store is not None:
                store[i] = vals
            dev[i] = float(np.max(np.abs(vals - kappa)))
        return dev

    w = np.empty((times.size, y.size))
    dev_sup = deviations(T, store=w)
    band = {}
    dT = traj.T_uncertainty
    if dT is not None and dT > 0.0:
        band = {"T_minus": deviations(T - dT), "T_plus": deviations(T + dT)}
    return SelfSimilarProfile(a=float(a), T=T, times=times, y=y, w=w,
                              kappa=kappa, dev_sup=dev_sup, band=band)


def liouville_distance(profile: SelfSimilarProfile) -> tuple:
    """Sup-norm distances of the latest-time profile to the constant
    alternatives 0 and kappa."""
    last = profile.w[-1]
    d_zero = float(np.max(np.abs(last)))
    d_kappa = float(np.max(np.abs(last - profile.kappa)))
    return d_zero, d_kappa


def write_profile_csv(profile: SelfSimilarProfile, path) -> None:
    rows = []
    for i, t in enumerate(profile.times):
        for j, yy in enumerate(profile.y):
            rows.append((t, yy, profile.w[i, j]))
    arr = np.asarray(rows)
    header = "t,y,w"
    np.savetxt(path, arr, delimiter=",", header=header, comments="",
               fmt="%.17g")
