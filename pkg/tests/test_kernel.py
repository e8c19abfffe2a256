"""Bubble kernels, zero modes, and the linearized eigenpair."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowup_lab.dimension import Dimension
from blowup_lab.kernel import (BubbleParams, bubble_energy, bubble_gradient,
                               bubble_laplacian, bubble_profile,
                               bubble_profile_slope, bubble_value,
                               dilation_kernel_profile, ground_state,
                               kernel_Z, linearized_matrix, scaled_kernel)
from blowup_lab.quadrature import radial_integral

RNG = np.random.default_rng(7)


def test_bubble_is_steady_state():
    # -Lap W = W^p pointwise
    for n in (7, 9):
        dim = Dimension(n)
        pts = RNG.normal(size=(40, n)) * 3.0
        params = BubbleParams(xi=np.zeros(n), lam=1.0, a=0.0)
        lap = bubble_laplacian(pts, params, dim)
        val = bubble_value(pts, params, dim)
        assert np.max(np.abs(lap + val ** dim.p)) < 1e-12 * np.max(val ** dim.p)


def test_bubble_gradient_matches_finite_differences():
    dim = Dimension(7)
    params = BubbleParams(xi=0.3 * np.ones(7), lam=0.8, a=0.0)
    pts = RNG.normal(size=(10, 7))
    grad = bubble_gradient(pts, params, dim)
    h = 1e-6
    for j in range(7):
        e = np.zeros(7)
        e[j] = h
        fd = (bubble_value(pts + e, params, dim)
              - bubble_value(pts - e, params, dim)) / (2 * h)
        assert np.max(np.abs(grad[:, j] - fd)) < 1e-7


@settings(max_examples=40, deadline=None)
@given(lam=st.floats(0.05, 20.0), r=st.floats(0.0, 50.0))
def test_bubble_scaling_identity(lam, r):
    # W_lam(r) = lam^-alpha W(r / lam), exactly the invariant scaling
    dim = Dimension(7)
    left = float(bubble_profile(np.array([r]), lam, dim)[0])
    right = lam ** (-dim.alpha) * float(
        bubble_profile(np.array([r / lam]), 1.0, dim)[0])
    assert math.isclose(left, right, rel_tol=1e-12)


def test_dilation_kernel_identity():
    # Z_{n+1} = alpha W + r dW/dr
    dim = Dimension(7)
    r = np.linspace(0.0, 30.0, 400)
    want = dim.alpha * bubble_profile(r, 1.0, dim) \
        + r * bubble_profile_slope(r, 1.0, dim)
    got = dilation_kernel_profile(r, dim)
    assert np.max(np.abs(got - want)) < 1e-14


def test_translation_kernels_are_bubble_derivatives():
    dim = Dimension(7)
    pts = RNG.normal(size=(20, 7)) * 2.0
    params = BubbleParams(xi=np.zeros(7), lam=1.0, a=0.0)
    grad = bubble_gradient(pts, params, dim)
    for i in range(1, 8):
        zi = kernel_Z(i, pts, dim)
        assert np.max(np.abs(zi - grad[:, i - 1])) < 1e-13


def test_scaled_kernel_l2_invariance():
    # the lam^{-n/2} prefactor makes int Z_{i,xi,lam}^2 independent of lam
    dim = Dimension(7)
    base = radial_integral(
        lambda r: dilation_kernel_profile(r, dim) ** 2, dim)
    for lam in (0.25, 1.0, 3.0):
        params = BubbleParams(xi=np.zeros(7), lam=lam, a=0.0)

        def profile_sq(r, params=params):
            # radial_integral feeds scalar r
            pts = np.zeros((1, 7))
            pts[0, 0] = r
            return float(scaled_kernel(8, pts, params, dim)[0]) ** 2

        val = radial_integral(profile_sq, dim)
        assert abs(val - base) < 1e-6 * base


def test_bubble_energy_closed_form():
    # Lambda = int |grad W|^2 via an exact Beta-function reduction:
    # int_0^inf W'(r)^2 r^{n-1} dr with W' rational for odd n
    sympy = pytest.importorskip("sympy")
    n = 7
    dim = Dimension(n)
    r, c = sympy.symbols("r c", positive=True)
    w = (1 + r ** 2 / (n * (n - 2))) ** sympy.Rational(-(n - 2), 2)
    integrand = sympy.diff(w, r) ** 2 * r ** (n - 1)
    exact = sympy.integrate(integrand, (r, 0, sympy.oo))
    omega = 2 * sympy.pi ** sympy.Rational(n, 2) / sympy.gamma(sympy.Rational(n, 2))
    lam_exact = float(omega * exact)
    got = bubble_energy(dim)
    assert abs(got - lam_exact) < 1e-9 * lam_exact
    assert abs(got - 64343.757902) < 1e-5 * got


def test_ground_state_eigenvalue_n7(spectral7):
    assert abs(spectral7.mu0 - 0.22248383907003721) < 1e-9
    assert spectral7.meta["cross_check_rel_diff"] < 1e-6


def test_ground_state_normalization(dim7, spectral7):
    norm = radial_integral(lambda r: spectral7.z0(r) ** 2, dim7, r_max=40.0)
    assert abs(norm - 1.0) < 1e-8
    assert spectral7.z0(0.0) > 0.0
    # exponential tail: strictly decreasing well past the potential core
    r = np.linspace(5.0, 60.0, 200)
    assert np.all(np.diff(spectral7.z0(r)) < 0.0)


def test_ground_state_weak_eigen_residual(dim7, spectral7):
    # weak form against a smooth test function phi:
    # int z0' phi' - int p W^{p-1} z0 phi = -mu0 int z0 phi
    from blowup_lab.kernel import linearized_potential

    def phi(r):
        return np.exp(-0.5 * r * r)

    def phi_slope(r):
        return -r * np.exp(-0.5 * r * r)

    lhs = radial_integral(
        lambda r: spectral7.z0_slope(r) * phi_slope(r)
        - linearized_potential(r, dim7) * spectral7.z0(r) * phi(r),
        dim7, r_max=40.0)
    rhs = -spectral7.mu0 * radial_integral(
        lambda r: spectral7.z0(r) * phi(r), dim7, r_max=40.0)
    assert abs(lhs - rhs) < 1e-5 * abs(rhs)


def _zero_mode_residual_l2(dim, m, r_max=40.0):
    diag, off, centers = linearized_matrix(dim, r_max, m)
    h = r_max / m
    sq = np.sqrt(centers ** (dim.n - 1))
    w = dilation_kernel_profile(centers, dim) * sq
    res = diag * w
    res[:-1] += off * w[1:]
    res[1:] += off * w[:-1]
    res_z = res / sq
    half = centers < r_max / 2.0
    return float(np.sqrt(np.sum(res_z[half] ** 2
                                * centers[half] ** (dim.n - 1) * h)))


def test_discrete_zero_mode_residual_second_order():
    # L[Z_{n+1}] = 0 analytically; the conservative-flux discretization
    # reproduces it at second order in the volume-weighted norm
    for n in (7, 9):
        dim = Dimension(n)
        r1 = _zero_mode_residual_l2(dim, 800)
        r2 = _zero_mode_residual_l2(dim, 1600)
        r4 = _zero_mode_residual_l2(dim, 3200)
        assert 3.4 < r1 / r2 < 4.6
        assert 3.4 < r2 / r4 < 4.6


def test_dimension_constants():
    dim = Dimension(7)
    assert dim.p == pytest.approx(1.8)
    assert dim.alpha == 2.5
    assert dim.rate_exponent == pytest.approx(1.25)
    assert dim.kappa == pytest.approx(1.321714079300705, rel=1e-12)
    # kappa is the amplitude of the flat exact solution: (p-1) kappa^{p-1} = 1
    assert (dim.p - 1.0) * dim.kappa ** (dim.p - 1.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        Dimension(2)
