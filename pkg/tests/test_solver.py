"""Radial solver: exact solutions, invariances, persistence."""

import math

import numpy as np
import pytest

from blowup_lab.dimension import Dimension
from blowup_lab.kernel import bubble_profile
from blowup_lab.solver import (RadialField, RadialGrid, RunConfig,
                               StepControls, energy_identity_residual,
                               estimate_blowup_time, load_trajectory,
                               run_until_blowup, save_trajectory)

DIM = Dimension(7)


def _ode_run(u_max=1e8):
    grid = RadialGrid.uniform(DIM, 1.0, 16)
    u0 = RadialField(grid, np.ones(grid.r.size))
    cfg = RunConfig(u_max=u_max, t_max=10.0, mode="reaction_only",
                    controls=StepControls(rtol=1e-10, atol=1e-14))
    return run_until_blowup(u0, cfg)


def test_reaction_only_matches_exact_ode():
    # u' = u^p from u=1 blows up at T = 1/(p-1) with exponent 1/(p-1)
    traj = _ode_run()
    p = DIM.p
    T_exact = 1.0 / (p - 1.0)
    assert traj.termination == "sup_cap"
    fit = traj.fit
    assert abs(fit.T_est - T_exact) < 1e-6
    assert abs(fit.rate_exponent - DIM.rate_exponent) < 1e-3 * DIM.rate_exponent
    assert abs(fit.kappa_fit - DIM.kappa) < 1e-3 * DIM.kappa

    def exact(t):
        return (1.0 - t / T_exact) ** (-1.0 / (p - 1.0))

    # stored snapshots carry integrator accuracy
    k = int(np.argmin(np.abs(np.asarray(traj.times) - 1.0)))
    t_snap = traj.times[k]
    got = float(traj.snapshots[k][0])
    assert abs(got - exact(t_snap)) < 1e-7 * exact(t_snap)
    # between snapshots the linear-in-time read sits on the cadence floor
    got_mid = float(traj.field_at(1.0).values[0])
    assert abs(got_mid - exact(1.0)) < 1e-3 * exact(1.0)


def test_time_derivative_matches_reaction():
    traj = _ode_run()
    fld = traj.field_at(0.5)
    ut = traj.time_derivative_at(0.5)
    want = fld.values ** DIM.p
    assert np.max(np.abs(ut.values - want)) < 1e-12 * np.max(want)


def test_bubble_is_discrete_steady_state():
    # W is a steady state; the solved field should not drift at desk scale
    grid = RadialGrid.graded(DIM, 40.0, 2400, ratio=1.004)
    u0 = RadialField(grid, bubble_profile(grid.r, 1.0, DIM))
    traj = run_until_blowup(u0, RunConfig(u_max=1e8, t_max=1.0))
    assert traj.termination == "t_max"
    drift = np.max(np.abs(traj.snapshots[-1] - bubble_profile(grid.r, 1.0, DIM)))
    assert drift < 1e-3


def test_subcritical_data_disperses_and_stays_positive():
    grid = RadialGrid.graded(DIM, 20.0, 1100, ratio=1.008)
    u0 = RadialField(grid, 0.5 * bubble_profile(grid.r, 1.0, DIM))
    traj = run_until_blowup(u0, RunConfig(u_max=1e8, t_max=20.0))
    assert traj.termination == "t_max"
    sup_first = float(np.max(traj.snapshots[0]))
    sup_last = float(np.max(traj.snapshots[-1]))
    assert sup_last < 0.2 * sup_first
    assert min(float(np.min(s)) for s in traj.snapshots) >= -1e-12


def test_parabolic_scaling_covariance():
    # v(x,t) = lam^alpha u(lam x, lam^2 t) solves the same equation; on a
    # geometric grid the rescaled run retraces the base run exactly
    lam, t1 = 2.0, 0.05
    ctl = StepControls(rtol=1e-8, atol=1e-30)
    base_grid = RadialGrid.graded(DIM, 20.0, 1100, ratio=1.008)
    u0 = RadialField(base_grid, 1.1 * bubble_profile(base_grid.r, 1.0, DIM))
    tr_u = run_until_blowup(u0, RunConfig(u_max=1e8, t_max=t1, controls=ctl))

    v_grid = RadialGrid.graded(DIM, 20.0 / lam, 1100, ratio=1.008)
    v0 = RadialField(v_grid, lam ** DIM.alpha
                     * 1.1 * bubble_profile(lam * v_grid.r, 1.0, DIM))
    tr_v = run_until_blowup(v0, RunConfig(u_max=1e8, t_max=t1 / lam ** 2,
                                          controls=ctl))
    u_end = tr_u.field_at(t1)
    v_end = tr_v.field_at(t1 / lam ** 2)
    want = lam ** DIM.alpha * np.interp(lam * v_grid.r, base_grid.r,
                                        u_end.values)
    err = np.max(np.abs(v_end.values - want)) / np.max(np.abs(want))
    assert err < 1e-10


def test_energy_identity_residual_small(bubble_run):
    # d/dt E = -int |u_t|^2 (cutoff-localized); residual relative to the
    # dissipation scale of each interval
    mids, res = energy_identity_residual(bubble_run)
    grid = bubble_run.grid
    w = grid.quad_weights()
    rel = []
    for k in range(0, len(mids), max(1, len(mids) // 60)):
        ut = bubble_run.time_derivative_at(mids[k]).values
        scale = abs(float(np.dot(w, ut * ut))) + 1.0
        rel.append(abs(res[k]) / scale)
    rel = np.array(rel)
    assert np.median(rel) < 1e-3
    assert np.max(rel) < 0.1


def test_budget_nondecreasing(bubble_run):
    cum = bubble_run.budget.cumulative
    assert cum.size > 100
    assert np.all(np.diff(cum) >= 0.0)


def test_blowup_fit_stability(bubble_run):
    refit = estimate_blowup_time(bubble_run)
    assert abs(refit.T_est - bubble_run.T_est) < 1e-8
    assert refit.T_uncertainty < 1e-6


def test_trajectory_roundtrip(tmp_path, bubble_run):
    save_trajectory(bubble_run, tmp_path / "traj")
    back = load_trajectory(tmp_path / "traj")
    assert back.termination == bubble_run.termination
    assert back.times == pytest.approx(bubble_run.times)
    assert np.array_equal(back.grid.r, bubble_run.grid.r)
    k = len(back.snapshots) // 2
    assert np.array_equal(back.snapshots[k], bubble_run.snapshots[k])
    assert back.T_est == pytest.approx(bubble_run.T_est, abs=0.0)
    assert np.array_equal(back.sup_history, bubble_run.sup_history)


def test_trajectory_tamper_detected(tmp_path, bubble_run):
    save_trajectory(bubble_run, tmp_path / "traj")
    victim = tmp_path / "traj" / "snapshots" / "snap_000010.csv"
    text = victim.read_text()
    victim.write_text(text.replace("2", "3", 1))
    with pytest.raises(ValueError, match="checksum"):
        load_trajectory(tmp_path / "traj")


def test_grid_validation():
    with pytest.raises(ValueError):
        RadialGrid.uniform(DIM, 10.0, 4)  # too few nodes
    grid = RadialGrid.graded(DIM, 10.0, 100, ratio=1.05)
    assert grid.r[0] == 0.0
    assert grid.r[-1] == pytest.approx(10.0)
    assert np.all(np.diff(grid.r) > 0.0)
    # refinement toward the origin
    h = np.diff(grid.r)
    assert h[0] < h[-1]


def test_field_at_range_check(bubble_run):
    with pytest.raises(ValueError):
        bubble_run.field_at(bubble_run.t_last + 1.0)
