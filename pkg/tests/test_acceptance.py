"""Acceptance gate: ten end-to-end checks of the laboratory's core claims.

Each test prints one measurement line (visible with -s, or in the captured
output on failure) and pytest -v gives one pass/fail line per criterion.
The expensive reference runs live in session fixtures and are shared.
"""

import math

import numpy as np
import pytest

from blowup_lab.dimension import Dimension
from blowup_lab.kernel import (BubbleParams, bubble_energy, bubble_profile,
                               bubble_profile_slope, ground_state,
                               linearized_matrix)
from blowup_lab.solver import (RadialField, RadialGrid, RunConfig,
                               StepControls, run_until_blowup)
from blowup_lab.diagnostics import (CutoffSpec, classify, pohozaev,
                                    pohozaev_boundary_term, theta,
                                    theta_monotonicity_report, type_i_density)
from blowup_lab.decomposition import (bubble_tree, default_guess,
                                      fit_orthogonal, quantized_energy,
                                      synthetic_bubble_field)
from blowup_lab.tangent import self_similar_profile

DIM = Dimension(7)


def test_criterion_01_space_free_blowup_matches_exact_solution():
    # u' = u^p from u(0) = 1 blows up at T = 1/(p-1) with rate kappa
    grid = RadialGrid.uniform(DIM, 1.0, 16)
    u0 = RadialField(grid, np.ones(grid.r.size))
    traj = run_until_blowup(
        u0, RunConfig(u_max=1e8, t_max=10.0, mode="reaction_only",
                      controls=StepControls(rtol=1e-10, atol=1e-14)))
    T_true = 1.0 / (DIM.p - 1.0)
    fit = traj.fit
    t_err = abs(fit.T_est - T_true)
    q_err = abs(fit.rate_exponent - T_true) / T_true
    k_err = abs(fit.kappa_fit - DIM.kappa) / DIM.kappa
    d_i = type_i_density(DIM)
    cut = CutoffSpec(radius=math.inf, C_mono=0.0, c_mono=1.0)
    th_err = max(abs(theta(traj, 0.0, fit.T_est, s, cut).value - d_i) / d_i
                 for s in (1e-4, 1e-3))
    print(f"criterion 01: |T-5/4| {t_err:.3g} (tol 1e-6), exponent rel "
          f"{q_err:.3g}, kappa rel {k_err:.3g} (tol 1e-3), "
          f"theta-limit rel {th_err:.3g} (tol 1e-6)")
    assert t_err < 1e-6
    assert q_err < 1e-3
    assert k_err < 1e-3
    assert th_err < 1e-6


def test_criterion_02_supercritical_bubble_blows_up_type_i(bubble_run):
    T = bubble_run.T_est
    t_arr = bubble_run.sup_history[:, 0]
    sup = bubble_run.sup_history[:, 1]
    decades = math.log10(sup[-1] / sup[0])
    mask = (sup >= 1e5) & (sup <= 1e8) & (t_arr < T)
    slope = np.polyfit(np.log(T - t_arr[mask]), np.log(sup[mask]), 1)[0]
    target = -1.0 / (DIM.p - 1.0)
    slope_dev = abs(slope - target) / abs(target)

    cut = CutoffSpec(radius=15.0, C_mono=100.0, c_mono=0.01)
    verdict = classify(bubble_run, np.zeros(DIM.n), cut).verdict
    report = theta_monotonicity_report(bubble_run, np.zeros(DIM.n), T,
                                       np.geomspace(1e-4, 1e-3, 21), cut,
                                       tol_mono=1e-4)
    print(f"criterion 02: growth exponent {slope:.4f} vs {target} "
          f"(rel {slope_dev:.3g}, tol 0.05) over {decades:.1f} sup-decades, "
          f"verdict {verdict}, monotonicity violations "
          f"{len(report.violations)}")
    assert decades >= 3.0
    assert slope_dev < 0.05
    assert verdict == "TypeI"
    assert not report.violations


def test_criterion_03_stationary_bubble_pohozaev_identity():
    # boundary functional equals its own boundary term on a static solution
    worst = 0.0
    for n in (7, 9):
        dim = Dimension(n)
        pair = (lambda r, d=dim: bubble_profile(r, 1.0, d),
                lambda r, d=dim: bubble_profile_slope(r, 1.0, d))
        for radius in (0.5, 1.0, 2.0, 5.0):
            gap = pohozaev(pair, radius, dim) \
                - pohozaev_boundary_term(pair, radius, dim)
            worst = max(worst, abs(gap))
    print(f"criterion 03: worst stationary Pohozaev residual {worst:.3g} "
          f"(tol 1e-8)")
    assert worst < 1e-8


def test_criterion_04_linearized_spectrum_cross_validated():
    mu_ref = 0.22248383907003721
    cross = {}
    for n in (7, 8, 9):
        data = ground_state(Dimension(n))
        cross[n] = data.meta["cross_check_rel_diff"]
        assert cross[n] < 1e-6, (n, cross[n])
    data7 = ground_state(DIM)
    mu_err = abs(data7.mu0 - mu_ref)
    norm_err = abs(data7.l2_norm - 1.0)

    # exactly one unstable direction in the radial sector
    from scipy.linalg import eigh_tridiagonal
    diag, off, _ = linearized_matrix(DIM, 60.0, 6000)
    evals = eigh_tridiagonal(diag, off, select="v",
                             select_range=(-1e3, 0.0))[0]
    negative = int(np.sum(evals < 0.0))
    print(f"criterion 04: mu0 err {mu_err:.3g} (tol 1e-9), cross-oracle "
          f"rel {max(cross.values()):.3g} for n=7,8,9 (tol 1e-6), "
          f"L2 norm err {norm_err:.3g}, negative eigenvalues {negative}")
    assert mu_err < 1e-9
    assert norm_err < 1e-8
    assert negative == 1


def test_criterion_05_randomized_decomposition_recovery(spectral7):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        lam = rng.uniform(0.3, 3.0)
        a = rng.uniform(-0.05, 0.05) * lam
        d = rng.normal(size=DIM.n)
        d /= np.linalg.norm(d)
        xi = rng.uniform(0.0, 1.0) * d
        u = synthetic_bubble_field([BubbleParams(xi=xi, lam=lam, a=a)],
                                   DIM, spectral7)
        res = fit_orthogonal(u, default_guess(u, DIM, domain=(-2.0, 2.0)),
                             spectral7, DIM)
        assert res.converged, res.message
        assert res.certificate["passed"]
        err = max(float(np.max(np.abs(res.params.xi - xi))),
                  abs(res.params.lam - lam), abs(res.params.a - a))
        worst = max(worst, err)
    print(f"criterion 05: 100/100 randomized fits converged with "
          f"certificates, worst parameter error {worst:.3g} (tol 1e-7)")
    assert worst < 1e-7


def _axis_bubbles(spec_list):
    e1 = np.zeros(DIM.n)
    e1[0] = 1.0
    params = [BubbleParams(xi=c * e1, lam=l, a=0.0) for c, l in spec_list]
    return synthetic_bubble_field(params, DIM), e1


def test_criterion_06_quantized_energy_within_one_percent():
    lam_ref = 64343.757902
    lam = bubble_energy(DIM)
    closed_form_rel = abs(lam - lam_ref) / lam_ref

    u1, _ = _axis_bubbles([(0.0, 0.2)])
    tree1 = bubble_tree(u1, (-30.0, 30.0), C2=30.0, dim=DIM)
    e1 = quantized_energy(u1, tree1, R=100.0)
    u2, _ = _axis_bubbles([(0.0, 0.2), (100.0, 0.2)])
    tree2 = bubble_tree(u2, (-30.0, 150.0), C2=30.0, dim=DIM)
    e2 = quantized_energy(u2, tree2, R=100.0)
    worst = max(float(np.max(np.abs(e / lam - 1.0))) for e in (e1, e2))

    u_close, _ = _axis_bubbles([(0.0, 0.2), (60.0, 0.2)])
    tree_close = bubble_tree(u_close, (-30.0, 110.0), C2=30.0, dim=DIM)
    with pytest.raises(ValueError, match="separation"):
        quantized_energy(u_close, tree_close, R=100.0)
    print(f"criterion 06: Lambda rel err {closed_form_rel:.3g} (tol 1e-5), "
          f"worst per-bubble energy dev {worst:.3g} (tol 0.01), "
          f"overlapping balls refused")
    assert closed_form_rel < 1e-5
    assert worst < 0.01
    assert e2.size == 2


def test_criterion_07_bubble_tree_counts_and_centers():
    configs = [
        ([(0.0, 0.2)], (-30.0, 30.0)),
        ([(0.0, 0.2), (60.0, 0.1)], (-30.0, 100.0)),
        ([(0.0, 0.2), (60.0, 0.1), (180.0, 2.0)], (-30.0, 240.0)),
        ([(0.0, 0.2), (60.0, 0.1), (180.0, 2.0), (320.0, 0.05)],
         (-30.0, 380.0)),
    ]
    worst_rel = 0.0
    min_sep = math.inf
    for spec_list, domain in configs:
        u, e1 = _axis_bubbles(spec_list)
        tree = bubble_tree(u, domain, C2=30.0, dim=DIM)
        assert tree.count == len(spec_list), (spec_list, tree.count)
        assert not tree.aborted
        min_sep = min(min_sep, tree.min_separation_ratio())
        for c, lam in spec_list:
            err = min(abs(float(np.dot(ctr, e1)) - c) for ctr in tree.centers)
            worst_rel = max(worst_rel, err / lam)
    print(f"criterion 07: counts 1-4 exact, worst center error "
          f"{worst_rel:.3g} of the bubble scale (tol 0.05), min separation "
          f"ratio {min_sep:.0f} (>= 50)")
    assert worst_rel < 0.05
    assert min_sep >= 50.0


def test_criterion_08_seeded_mode_grows_at_linear_rate(mode_track, spectral7):
    track = mode_track
    assert track.valid.all()
    ratio_a = np.abs(track.a) / track.lam
    inside = ratio_a <= 0.1
    end = int(np.argmin(inside)) if not inside.all() else inside.size
    window = track.times[end - 1] - track.times[0]
    a0_err = abs(track.a[0] - 0.02)
    lam0_err = abs(track.lam[0] - 1.0)
    assert all(r.certificate["passed"] for r in track.results[:end])

    ratios = track.ratios_plain()[:end]
    k80 = int(0.8 * end)
    early = float(np.nanmax(ratios[:k80]))
    late = float(np.nanmax(ratios[k80:]))

    k3 = (2 * end) // 3
    slope = np.polyfit(track.times[k3:end],
                       np.log(np.abs(track.a[k3:end])), 1)[0]
    mu0 = spectral7.mu0
    rate_dev = abs(slope - mu0) / mu0
    print(f"criterion 08: {int(track.valid.sum())}/{track.valid.size} fits "
          f"valid, certified window {window:.1f} time units (>= 5), "
          f"a(0) err {a0_err:.2g}, scale-rate ratio late/early "
          f"{late / early:.2f} (<= 3), mode growth rate {slope:.4f} vs "
          f"mu0 {mu0:.4f} (rel {rate_dev:.3f}, tol 0.25)")
    assert window >= 5.0
    assert a0_err < 1e-3 and lam0_err < 1e-3
    assert late <= 3.0 * early
    assert rate_dev < 0.25


def test_criterion_09_log_law_deviation_band(bubble_run):
    T = bubble_run.T_est
    tau_lo = (T - bubble_run.t_last) * 2.0
    times = T - np.geomspace(100.0 * tau_lo, tau_lo, 13)
    prof = self_similar_profile(bubble_run, 0.0, times, y_max=3.0,
                                samples=121)
    dev = prof.dev_sup
    scaled = dev * np.abs(np.log(T - prof.times))
    spread = float(scaled.max() / scaled.min())
    print(f"criterion 09: dev*|ln tau| in [{scaled.min():.3f}, "
          f"{scaled.max():.3f}] (band [2.85, 3.45]), spread {spread:.3f} "
          f"(<= 1.3), final dev {dev[-1]:.3f} (< 0.25), decreasing "
          f"{bool(np.all(np.diff(dev) < 0))}")
    assert np.all(scaled >= 2.85) and np.all(scaled <= 3.45)
    assert spread <= 1.3
    assert dev[-1] < 0.25
    assert np.all(np.diff(dev) < 0.0)


def _last_decade_increment(traj, cap):
    t_arr = traj.sup_history[:, 0]
    sup = traj.sup_history[:, 1]
    t_cross = t_arr[int(np.argmax(sup >= cap / 10.0))]
    total = float(traj.budget.cumulative[-1])
    return total, total - traj.budget.value_at(t_cross)


def test_criterion_10_dissipation_budget_keeps_growing(bubble_run,
                                                       bubble_run_low):
    tot_hi, inc_hi = _last_decade_increment(bubble_run, 1e8)
    tot_lo, inc_lo = _last_decade_increment(bubble_run_low, 1e6)
    nondecreasing = bool(np.all(np.diff(bubble_run.budget.cumulative)
                                >= 0.0))
    print(f"criterion 10: budget total {tot_lo:.3e} at cap 1e6 -> "
          f"{tot_hi:.3e} at cap 1e8 (ratio {tot_hi / tot_lo:.2f}, >= 2), "
          f"last-decade increment {inc_lo:.3e} -> {inc_hi:.3e} (growing), "
          f"cumulative nondecreasing {nondecreasing}")
    assert nondecreasing
    assert tot_hi >= 2.0 * tot_lo
    assert inc_hi > inc_lo
