"""Orthogonal bubble decomposition, parameter tracking and bubble trees.

fit_orthogonal solves the n+2 orthogonality conditions

    F_i(xi, lam, a) = int [u - W_{xi,lam} - a Z_{0,xi,lam}]
                          eta((x - xi)/(K lam)) Z_{i,xi,lam} dx = 0

for the bubble parameters (xi, lam, a) by damped Newton with analytic
Jacobians.  Fields enter through FieldSampler objects that are finite sums
of radial profiles with collinear centers; that covers PDE snapshots
(radial about 0), synthetic bubble-plus-mode fields and multi-bubble sums,
and reduces every orthogonality integral to a radial quadrature times a
Gauss-Jacobi rule in the polar angle.  Perpendicular translation conditions
then vanish identically by symmetry and the Newton iteration moves xi along
the common axis, which realizes the full (n+2)-dimensional system without
n-dimensional cubature.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .cutoffs import eta as eta_bump
from .dimension import Dimension
from .kernel import (BubbleParams, SpectralData, bubble_profile,
                     bubble_profile_slope, dilation_kernel_profile)
from .quadrature import jacobi_mu_rule, panel_rule

TOL_ORTH = 1e-10


# ---------------------------------------------------------------------------
# field samplers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadialTerm:
    """One radial component g(|x - center|) of a sampled field.

    width is the characteristic feature scale used to place quadrature
    panels; support_radius (inf allowed) truncates the profile.
    """

    center: np.ndarray
    value: object  # callable s -> g(s), vectorized
    slope: object  # callable s -> g'(s), vectorized
    width: float = 1.0
    support_radius: float = math.inf
    knot_radii: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "center",
                           np.atleast_1d(np.asarray(self.center, dtype=float)))

    def eval_value(self, s):
        s = np.asarray(s)
        if s.dtype.kind != "f":
            s = s.astype(float)
        v = self.value(s)
        if math.isfinite(self.support_radius):
            v = np.where(s <= self.support_radius, v, 0.0)
        return v

    def eval_slope(self, s):
        s = np.asarray(s)
        if s.dtype.kind != "f":
            s = s.astype(float)
        v = self.slope(s)
        if math.isfinite(self.support_radius):
            v = np.where(s <= self.support_radius, v, 0.0)
        return v


class FieldSampler:
    """Sum of radial profiles with collinear centers: x -> (value, gradient).

    provenance is one of pde_snapshot | synthetic | analytic.
    """

    def __init__(self, dim: Dimension, terms, provenance: str = "synthetic"):
        self.dim = dim
        self.terms = list(terms)
        self.provenance = provenance
        self.axis = self._common_axis()
        base = self.terms[0].center if self.terms else np.zeros(dim.n)
        # axis line is {axis_origin + t * axis}; origin is perpendicular part
        self.axis_origin = base - np.dot(base, self.axis) * self.axis

    def _common_axis(self) -> np.ndarray:
        n = self.dim.n
        centers = [t.center for t in self.terms]
        base = centers[0] if centers else np.zeros(n)
        e = None
        for c in centers[1:]:
            d = c - base
            norm = np.linalg.norm(d)
            if norm < 1e-14:
                continue
            d = d / norm
            if e is None:
                e = d
            elif np.linalg.norm(d - e) > 1e-10 and np.linalg.norm(d + e) > 1e-10:
                raise ValueError("sampler centers must be collinear")
        if e is None:
            e = np.zeros(n)
            e[0] = 1.0
        return e

    def value(self, x):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(pts.shape[0])
        for term in self.terms:
            s = np.linalg.norm(pts - term.center, axis=1)
            out += term.eval_value(s)
        return out if np.asarray(x).ndim > 1 else float(out[0])

    def gradient(self, x):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros_like(pts)
        for term in self.terms:
            rel = pts - term.center
            s = np.linalg.norm(rel, axis=1)
            sl = term.eval_slope(s)
            safe = np.where(s > 0.0, s, 1.0)
            out += (sl / safe)[:, None] * rel
        return out if np.asarray(x).ndim > 1 else out[0]

    def on_axis_value(self, coord):
        """Field value at axis points axis_origin + coord * axis."""
        coord = np.asarray(coord, dtype=float)
        out = np.zeros_like(coord)
        for term in self.terms:
            off = float(np.dot(term.center, self.axis))
            out += term.eval_value(np.abs(coord - off))
        return out


def bubble_term(params: BubbleParams, dim: Dimension) -> RadialTerm:
    lam = params.lam
    return RadialTerm(center=params.xi,
                      value=lambda s, lam=lam: bubble_profile(s, lam, dim),
                      slope=lambda s, lam=lam: bubble_profile_slope(s, lam, dim),
                      width=lam)


def mode_term(params: BubbleParams, spectral: SpectralData,
              dim: Dimension) -> RadialTerm:
    """a * Z_{0,xi,lam} as a radial term (L2-normalized scaling)."""
    lam, a = params.lam, params.a
    n = dim.n
    amp = a * lam ** (-n / 2.0)
    return RadialTerm(
        center=params.xi,
        value=lambda s, amp=amp, lam=lam: amp * spectral.z0(s / lam),
        slope=lambda s, amp=amp, lam=lam: amp / lam * spectral.z0_slope(s / lam),
        width=lam)


def synthetic_bubble_field(params_list, dim: Dimension,
                           spectral: SpectralData | None = None) -> FieldSampler:
    """Sum of bubbles W_{xi,lam} + a Z_{0,xi,lam} with collinear centers."""
    terms = []
    for params in params_list:
        terms.append(bubble_term(params, dim))
        if params.a != 0.0:
            if spectral is None:
                raise ValueError("nonzero mode amplitude needs spectral data")
            terms.append(mode_term(params, spectral, dim))
    return FieldSampler(dim, terms, provenance="synthetic")


def snapshot_sampler(grid_r: np.ndarray, values: np.ndarray,
                     dim: Dimension) -> FieldSampler:
    """Radial PDE snapshot as a sampler (zero beyond the grid radius)."""
    sp = CubicSpline(grid_r, values)
    dsp = sp.derivative()
    r_max = float(grid_r[-1])
    # feature scale from the sup location
    sup = float(np.max(np.abs(values)))
    width = sup ** (-2.0 / (dim.n - 2)) if sup > 0 else 1.0
    term = RadialTerm(center=np.zeros(dim.n), value=sp, slope=dsp,
                      width=width, support_radius=r_max,
                      knot_radii=np.asarray(grid_r, dtype=float))
    return FieldSampler(dim, [term], provenance="pde_snapshot")


def translated_sampler(u: FieldSampler, shift) -> FieldSampler:
    shift = np.asarray(shift, dtype=float)
    terms = [RadialTerm(t.center + shift, t.value, t.slope, t.width,
                        t.support_radius, t.knot_radii) for t in u.terms]
    return FieldSampler(u.dim, terms, u.provenance)


def rescaled_sampler(u: FieldSampler, mu: float) -> FieldSampler:
    """u_mu(x) = mu^{-(n-2)/2} u(x / mu): bubbles map to bubbles."""
    amp = np.longdouble(mu) ** (-u.dim.alpha)
    terms = [RadialTerm(mu * t.center,
                        lambda s, f=t.value: amp * f(np.asarray(s) / mu),
                        lambda s, f=t.slope: amp / mu * f(np.asarray(s) / mu),
                        mu * t.width, mu * t.support_radius,
                        None if t.knot_radii is None else mu * t.knot_radii)
             for t in u.terms]
    return FieldSampler(u.dim, terms, u.provenance)


# ---------------------------------------------------------------------------
# orthogonality system
# ---------------------------------------------------------------------------

def _radial_edges(u: FieldSampler, xi: np.ndarray, lam: float, K: float):
    """Panel edges on [0, 2K] in the bubble frame, clustered at each data
    feature radius |c_j - xi| / lam with local scale width_j / lam.  Spline
    knots of concentric snapshot terms become edges so the composite rule
    sees only polynomial pieces."""
    r_hi = 2.0 * K
    cores = []
    for t in u.terms:
        d = float(np.linalg.norm(t.center - xi)) / lam
        wdt = max(t.width / lam, 1e-8)
        cores.append((d, wdt))
    w_min = min(w for _, w in cores)
    base_lo = max(min(w_min / 16.0, 0.05), 1e-9)
    edges = {0.0, r_hi, K}
    edges.update(np.geomspace(base_lo, r_hi, 80).tolist())
    edges.update(np.linspace(K, r_hi, 17).tolist())
    for (d, wdt), term in zip(cores, u.terms):
        local = np.geomspace(wdt / 16.0, min(12.0 * wdt, r_hi), 28)
        if d < 1e-12:
            edges.update(local.tolist())
        else:
            edges.update((d + local).tolist())
            edges.update(np.clip(d - local, 0.0, None).tolist())
            if d < r_hi:
                edges.add(d)
        knots = term.knot_radii
        if knots is not None and d < 1e-12:
            scaled = np.asarray(knots, dtype=float) / lam
            edges.update(scaled[(scaled > 0.0) & (scaled < r_hi)].tolist())
    arr = np.array(sorted(e for e in edges if 0.0 <= e <= r_hi))
    keep = np.concatenate([[True], np.diff(arr) > 1e-12])
    return arr[keep]


def _mu_order(u: FieldSampler, xi: np.ndarray, lam: float) -> int:
    sharp = 0.0
    for t in u.terms:
        d = float(np.linalg.norm(t.center - xi)) / lam
        wdt = max(t.width / lam, 1e-8)
        sharp = max(sharp, d / wdt)
    return int(min(80, 16 + 6 * math.sqrt(sharp)))


class _OrthoSystem:
    """Quadrature engine for the orthogonality map F and its Jacobian at one
    parameter point, in the bubble frame y = (x - xi)/lam.

    The error field phi = u - W_{xi,lam} - a Z_{0,xi,lam} is formed pointwise
    at the quadrature nodes before contraction with the kernels; subtracting
    whole integrals instead would cancel catastrophically, since the raw
    dilation moment int W Z_{n+1} eta is orders of magnitude above tol_orth.
    """

    def __init__(self, u: FieldSampler, xi, lam: float, K: float,
                 spectral: SpectralData, dim: Dimension, order: int = 8,
                 mu_pad: int = 0):
        self.u = u
        self.dim = dim
        self.lam = lam
        self.xi = np.atleast_1d(np.asarray(xi, dtype=float))
        n = dim.n
        edges = _radial_edges(u, self.xi, lam, K)
        r_nodes, r_wts = panel_rule(edges, order=order)
        # concentric data needs no angular resolution; parity still kills
        # the translation rows exactly on any symmetric rule
        e = self.u.axis
        self.offsets = [float(np.dot(t.center - self.xi, e)) for t in u.terms]
        sharp = max((abs(d) / lam for d in self.offsets), default=0.0)
        mu_order = 2 if sharp < 1e-13 else _mu_order(u, self.xi, lam) + mu_pad
        mu_nodes, mu_wts = jacobi_mu_rule(n, mu_order)
        self.r = r_nodes
        self.r_wts = r_wts
        self.mu = mu_nodes
        self.mu_wts = mu_wts
        # angular factor |S^{n-2}| folds into the Jacobi weights
        surf = 2.0 * math.pi ** ((n - 1) / 2.0) / math.gamma((n - 1) / 2.0)
        self.ang = surf * mu_wts
        eta_vals = eta_bump(r_nodes / K)
        self.base_w = self.r_wts * r_nodes ** (n - 1) * eta_vals
        # kernel profiles in the bubble frame
        self.psi0 = spectral.z0(r_nodes)
        self.psid = dilation_kernel_profile(r_nodes, dim)
        self.psit = bubble_profile_slope(r_nodes, 1.0, dim)  # times mu below

    def _error_fields(self, a: float):
        """phi, dphi/d(xi_par), dphi/d(lam), dphi/d(a) on the (r, mu) grid.

        phi is accumulated in extended precision: tol_orth is absolute
        while the dilation row carries a lam^{n/2} r^2-tail amplification,
        so the float64 rounding of u - W alone would sit near the
        tolerance for lam of order one.
        """
        n = self.dim.n
        alpha = self.dim.alpha
        lam = np.longdouble(self.lam)
        r = self.r.astype(np.longdouble)[:, None]
        mu = self.mu.astype(np.longdouble)[None, :]
        ones = np.ones((1, self.mu.size))
        phi = np.zeros((self.r.size, self.mu.size), dtype=np.longdouble)
        dphi_dxi = np.zeros_like(phi)
        dphi_dlam = np.zeros_like(phi)
        for term, d in zip(self.u.terms, self.offsets):
            d = np.longdouble(d)
            s2 = lam * lam * r * r - 2.0 * lam * r * d * mu + d * d
            s = np.sqrt(np.maximum(s2, 0.0))
            phi += term.eval_value(s)
            sl = term.eval_slope(s)
            safe = np.where(s > 0.0, s, 1.0)
            dphi_dxi += sl * (lam * r * mu - d) / safe
            dphi_dlam += sl * (lam * r * r - r * d * mu) / safe
        w_prof = bubble_profile(self.r.astype(np.longdouble), 1.0, self.dim)
        model = lam ** (-alpha) * w_prof + a * lam ** (-n / 2.0) * self.psi0
        dmodel_dlam = (-alpha * lam ** (-alpha - 1.0) * w_prof
                       - (n / 2.0) * a * lam ** (-n / 2.0 - 1.0) * self.psi0)
        phi -= model[:, None] * ones
        dphi_dlam -= dmodel_dlam[:, None] * ones
        dphi_da = -(float(lam) ** (-n / 2.0)) * self.psi0
        return phi, dphi_dxi, dphi_dlam, dphi_da

    def residual_parts(self, a: float):
        """(F_i, dF_i/dxi_par, dF_i/dlam, dF_i/da) for i in (par, 0, n+1)."""
        n = self.dim.n
        lam = self.lam
        phi, dphi_dxi, dphi_dlam, dphi_da = self._error_fields(a)
        pref = lam ** (n / 2.0)
        mu_total = float(np.sum(self.ang))

        def contract(fld, psi, mu_p):
            ang = self.ang * (self.mu ** mu_p if mu_p else 1.0)
            return pref * float(np.dot(self.base_w * psi, fld @ ang))

        def contract_radial(prof, psi, mu_p):
            if mu_p:
                return 0.0
            return pref * mu_total * float(np.dot(self.base_w * psi, prof))

        out = {}
        for tag, psi, mu_p in (("par", self.psit, 1),
                               ("0", self.psi0, 0),
                               ("d", self.psid, 0)):
            F = contract(phi, psi, mu_p)
            dxi = contract(dphi_dxi, psi, mu_p)
            dlam = contract(dphi_dlam, psi, mu_p) + (n / 2.0) * F / lam
            da = contract_radial(dphi_da, psi, mu_p)
            out[tag] = (F, dxi, dlam, da)
        return out


@dataclass
class DecompositionResult:
    params: BubbleParams
    residuals: np.ndarray  # n+2 orthogonality integrals at the solution
    error_field_norms: dict
    iterations: int
    converged: bool
    certificate: dict | None = None
    message: str = ""

    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residuals)))


def _assemble_residuals(dim, parts, pinned, axis):
    """Full (n+2)-vector [F_0, F_1..F_n, F_{n+1}]; perpendicular translation
    entries vanish identically for collinear samplers."""
    n = dim.n
    res = np.zeros(n + 2)
    res[0] = parts["0"][0]
    res[n + 1] = parts["d"][0]
    if not pinned:
        res[1:n + 1] = parts["par"][0] * axis
    return res


def default_guess(u: FieldSampler, dim: Dimension,
                  domain=(-20.0, 20.0), samples: int = 4001) -> BubbleParams:
    """Bubble-frame starting point read off the field: center at the axis
    argmax, scale from sup u = lam^{-(n-2)/2} W(0), zero mode amplitude.

    Fits started here stay in the uniqueness basin of the nearest bubble;
    remote guesses can converge to spurious roots of the projected system,
    which the residual certificate then rejects.
    """
    coords = np.linspace(float(domain[0]), float(domain[1]), samples)
    vals = u.on_axis_value(coords)
    k = int(np.argmax(vals))
    sup = float(vals[k])
    if sup <= 0.0:
        raise ValueError("field has no positive values on the search axis")
    cc = _golden_max(
        lambda c: float(u.on_axis_value(np.atleast_1d(c))[0]),
        coords[max(k - 1, 0)], coords[min(k + 1, samples - 1)])
    lam0 = float(u.on_axis_value(np.atleast_1d(cc))[0]) ** (-2.0 / (dim.n - 2))
    return BubbleParams(xi=u.axis_origin + cc * u.axis, lam=lam0, a=0.0)


def _distinct_centers(u: FieldSampler) -> int:
    seen = []
    for t in u.terms:
        if not any(np.linalg.norm(t.center - c) < 1e-14 for c in seen):
            seen.append(t.center)
    return len(seen)


def fit_orthogonal(u: FieldSampler, guess: BubbleParams, spectral: SpectralData,
                   dim: Dimension, K: float = 20.0, tol_orth: float = TOL_ORTH,
                   max_iter: int = 50, pin_center: bool = False,
                   certificate: bool = True) -> DecompositionResult:
    """Damped-Newton solve of the orthogonality conditions near a bubble.

    pin_center=True freezes xi (radial snapshots) and solves the
    {Z_0, Z_{n+1}} pair for (lam, a); otherwise xi moves along the line
    through the sampler centers and all n+2 conditions are enforced, the
    perpendicular ones holding identically by symmetry.  Convergence
    requires max|F| <= tol_orth together with a parameter step below
    1e-9 relative; on Jacobian failure or iteration overflow the last
    iterate is returned with converged=False.
    """
    e = u.axis
    xi = np.atleast_1d(np.asarray(guess.xi, dtype=float)).copy()
    lam = float(guess.lam)
    a = float(guess.a)
    if not pin_center:
        off_axis = xi - u.terms[0].center
        perp = off_axis - np.dot(off_axis, e) * e
        if np.linalg.norm(perp) > 1e-9:
            if _distinct_centers(u) > 1:
                raise ValueError("guess center must lie on the sampler axis "
                                 "for multi-component fields")
            # single-center field: the axis through xi and the center is
            # the natural reduction frame
            e = -off_axis / np.linalg.norm(off_axis)
            u = FieldSampler(u.dim, u.terms, u.provenance)
            u.axis = e

    def system(xi_c, lam_c, a_c):
        sys_q = _OrthoSystem(u, xi_c, lam_c, K, spectral, dim)
        return sys_q.residual_parts(a_c)

    def resid_norm(parts):
        vals = [parts["0"][0], parts["d"][0]]
        if not pin_center:
            vals.append(parts["par"][0])
        return float(np.max(np.abs(vals)))

    parts = system(xi, lam, a)
    fnorm = resid_norm(parts)
    converged = False
    message = "max iterations exceeded"
    it = 0
    for it in range(1, max_iter + 1):
        if pin_center:
            F = np.array([parts["0"][0], parts["d"][0]])
            J = np.array([[parts["0"][2], parts["0"][3]],
                          [parts["d"][2], parts["d"][3]]])
        else:
            F = np.array([parts["par"][0], parts["0"][0], parts["d"][0]])
            J = np.array([
                [parts["par"][1], parts["par"][2], parts["par"][3]],
                [parts["0"][1], parts["0"][2], parts["0"][3]],
                [parts["d"][1], parts["d"][2], parts["d"][3]]])
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            message = "singular Jacobian"
            break
        scale = max(lam, 1e-12)
        # damped update with step halving on residual increase
        factor = 1.0
        for _ in range(9):
            if pin_center:
                lam_n = lam + factor * step[0]
                a_n = a + factor * step[1]
                xi_n = xi
            else:
                xi_n = xi + factor * step[0] * e
                lam_n = lam + factor * step[1]
                a_n = a + factor * step[2]
            if lam_n > 0.0:
                parts_n = system(xi_n, lam_n, a_n)
                fnorm_n = resid_norm(parts_n)
                if fnorm_n <= fnorm or fnorm <= tol_orth:
                    break
            factor *= 0.5
        else:
            message = "damping exhausted"
            break
        step_size = factor * float(np.max(np.abs(step)))
        xi, lam, a = xi_n, lam_n, a_n
        parts, fnorm = parts_n, fnorm_n
        # lam -> 0 is a degenerate root of the projected system (every
        # moment carries a positive power of lam), so a collapsing iterate
        # means the guess was outside the basin, not progress
        if not guess.lam * 1e-3 <= lam <= guess.lam * 1e3:
            message = "left trust region"
            break
        if fnorm <= tol_orth and step_size <= 1e-9 * scale:
            converged = True
            message = "converged"
            break

    params = BubbleParams(xi=xi, lam=lam, a=a)
    residuals = _assemble_residuals(dim, parts, pin_center, e)
    cert = None
    if certificate and converged:
        cert = _certify(u, params, spectral, dim, K, pin_center, e, tol_orth)
        if not cert["passed"]:
            converged = False
            message = "certificate failed"
    norms = _error_field_norms(u, params, spectral, dim)
    return DecompositionResult(params=params, residuals=residuals,
                               error_field_norms=norms, iterations=it,
                               converged=converged, certificate=cert,
                               message=message)


def _certify(u, params, spectral, dim, K, pinned, axis, tol_orth):
    """Re-verify the orthogonality integrals on an independent node set
    (different quadrature orders); passes within 10 * tol_orth."""
    sys_q = _OrthoSystem(u, params.xi, params.lam, K, spectral, dim,
                         order=11, mu_pad=10)
    parts = sys_q.residual_parts(params.a)
    res = _assemble_residuals(dim, parts, pinned, axis)
    worst = float(np.max(np.abs(res)))
    return {"residuals": res.tolist(), "worst": worst,
            "passed": bool(worst <= 10.0 * tol_orth)}


def _error_field_norms(u, params, spectral, dim):
    """Bubble-normalized sup of phi = u - W - a Z_0 on dyadic annuli
    |x - xi| / lam in [2^k, 2^{k+1}), k = 0..4."""
    lam, xi, a = params.lam, params.xi, params.a
    n = dim.n
    out = {}
    mu_nodes, _ = jacobi_mu_rule(dim.n, 12)
    e = u.axis
    e_perp = np.zeros(n)
    e_perp[(int(np.argmax(np.abs(e))) + 1) % n] = 1.0
    e_perp = e_perp - np.dot(e_perp, e) * e
    e_perp /= np.linalg.norm(e_perp)
    for k in range(5):
        rho = np.geomspace(2.0 ** k, 2.0 ** (k + 1), 24)
        worst = 0.0
        for m in mu_nodes:
            pts = (xi[None, :]
                   + np.outer(rho * lam * m, e)
                   + np.outer(rho * lam * math.sqrt(max(1 - m * m, 0.0)),
                              e_perp))
            vals = u.value(pts)
            model = (bubble_profile(rho * lam, lam, dim)
                     + a * lam ** (-n / 2.0) * spectral.z0(rho))
            weight = lam ** dim.alpha * (1.0 + rho ** 2) ** (dim.alpha / 2.0)
            worst = max(worst, float(np.max(np.abs(vals - model) * weight)))
        out[f"annulus_2^{k}"] = worst
    return out


# ---------------------------------------------------------------------------
# parameter tracking
# ---------------------------------------------------------------------------

@dataclass
class ParameterTrack:
    times: np.ndarray
    xi: np.ndarray      # (m, n)
    lam: np.ndarray
    a: np.ndarray
    dlam_dt: np.ndarray
    da_dt: np.ndarray
    valid: np.ndarray   # per-snapshot fit success
    c_red_plain: float
    c_red_normalized: float
    violation_log: list
    results: list = None  # per-snapshot DecompositionResult
    T_ref: float | None = None

    def ratios_plain(self) -> np.ndarray:
        n = self.xi.shape[1] if self.xi.size else 0
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.abs(self.dlam_dt) / self.lam ** ((n - 4) / 2.0)


def track_parameters(traj, spectral: SpectralData, K: float = 20.0,
                     t_window=None, stride: int = 1,
                     tol_orth: float = TOL_ORTH) -> ParameterTrack:
    """Pinned-center orthogonal fits across trajectory snapshots with warm
    starts, centered-difference derivatives, and the reduction-inequality
    ratios |lam'| / lam^{(n-4)/2} (plain) and
    |lam'| / [(T-t)^{(n-10)/4} lam^{(n-4)/2}] (blowup-normalized, when T_est
    is available).  C_red constants are fitted as the window maxima and
    reported, never assumed; failed fits are logged and skipped.
    """
    dim = traj.grid.dim
    n = dim.n
    r_grid = float(traj.grid.r[-1])
    times_all = list(traj.times)
    idx = range(0, len(times_all), stride)
    sel = [k for k in idx
           if t_window is None or t_window[0] <= times_all[k] <= t_window[1]]
    t_list, xi_list, lam_list, a_list, ok_list = [], [], [], [], []
    log = []
    results = []
    sups = [float(np.max(np.abs(traj.snapshots[k]))) for k in sel]
    lam0s = [s ** (-2.0 / (n - 2)) if s > 0 else math.inf for s in sups]
    finite = [v for v in lam0s if math.isfinite(v)]
    if not finite:
        raise ValueError("no usable snapshots in the tracking window")
    # one cutoff for the whole track, so the decomposition definition does
    # not drift between snapshots: B_{2K lam} must stay inside the grid
    # even for the largest bubble in the window
    k_eff = min(K, 0.45 * r_grid / max(finite))
    if k_eff < 2.0:
        raise ValueError(
            f"bubble scale {max(finite):.3g} too large for grid radius "
            f"{r_grid:.3g}; shrink the window or enlarge the domain")
    warm = None
    for k, sup, lam0 in zip(sel, sups, lam0s):
        vals = traj.snapshots[k]
        t = times_all[k]
        if sup <= 0.0:
            log.append((t, "empty snapshot"))
            continue
        u = snapshot_sampler(traj.grid.r, vals, dim)
        guess = warm if warm is not None and warm.lam > 0 else None
        if guess is None or abs(math.log(guess.lam / lam0)) > 0.7:
            guess = BubbleParams(xi=np.zeros(n), lam=lam0, a=0.0)
        fit = fit_orthogonal(u, guess, spectral, dim, K=k_eff,
                             tol_orth=tol_orth, pin_center=True)
        ok = fit.converged
        # a fitted scale far from the sup-based scale of the same snapshot
        # is a spurious root, not a decomposition of this field
        if ok and not 0.02 <= fit.params.lam / lam0 <= 50.0:
            ok = False
            log.append((t, f"fit scale {fit.params.lam:.3g} inconsistent "
                           f"with snapshot scale {lam0:.3g}"))
        t_list.append(t)
        xi_list.append(fit.params.xi)
        lam_list.append(fit.params.lam)
        a_list.append(fit.params.a)
        ok_list.append(ok)
        results.append(fit)
        if ok:
            warm = fit.params
        else:
            if not fit.converged:
                log.append((t, f"fit failed: {fit.message}"))
            warm = None
    t_arr = np.asarray(t_list)
    lam_arr = np.asarray(lam_list)
    a_arr = np.asarray(a_list)
    xi_arr = np.asarray(xi_list) if xi_list else np.zeros((0, n))
    valid = np.asarray(ok_list, dtype=bool)
    dlam = _centered_diff(t_arr, lam_arr)
    da = _centered_diff(t_arr, a_arr)
    # a derivative stencil touching a failed fit carries its garbage values
    stencil = valid.copy()
    if valid.size >= 2:
        stencil[0] = valid[0] & valid[1]
        stencil[-1] = valid[-1] & valid[-2]
    if valid.size >= 3:
        stencil[1:-1] = valid[1:-1] & valid[2:] & valid[:-2]
    dlam[~stencil] = np.nan
    da[~stencil] = np.nan
    ex = (n - 4) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        plain = np.abs(dlam) / lam_arr ** ex
    good = valid & np.isfinite(plain)
    c_plain = float(np.max(plain[good])) if good.any() else math.inf
    T_ref = traj.T_est
    c_norm = math.inf
    if T_ref is not None and t_arr.size:
        tau = np.maximum(T_ref - t_arr, 1e-300)
        normed = plain / tau ** ((n - 10) / 4.0)
        c_norm = float(np.max(normed[good])) if good.any() else math.inf
    return ParameterTrack(times=t_arr, xi=xi_arr, lam=lam_arr, a=a_arr,
                          dlam_dt=dlam, da_dt=da, valid=valid,
                          c_red_plain=c_plain, c_red_normalized=c_norm,
                          violation_log=log, results=results, T_ref=T_ref)


def _centered_diff(t: np.ndarray, v: np.ndarray) -> np.ndarray:
    if t.size < 3:
        return np.zeros_like(v)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (t[2:] - t[:-2])
    out[0] = (v[1] - v[0]) / (t[1] - t[0])
    out[-1] = (v[-1] - v[-2]) / (t[-1] - t[-2])
    return out


def write_parameter_track_csv(track: ParameterTrack, path) -> None:
    n = track.xi.shape[1] if track.xi.size else 0
    cols = [track.times]
    cols.extend(track.xi[:, j] for j in range(n))
    cols.extend([track.lam, track.a, track.dlam_dt,
                 (~track.valid).astype(float)])
    header = ",".join(["t"] + [f"xi_{j+1}" for j in range(n)]
                      + ["lambda", "a", "dlambda_dt", "invalid_flag"])
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=header,
               comments="", fmt="%.17g")


# ---------------------------------------------------------------------------
# bubble tree
# ---------------------------------------------------------------------------

@dataclass
class BubbleTree:
    centers: list          # axis n-vectors, discovery order
    scales: list           # lam_j* = u(xi_j*)^{-2/(n-2)}
    separation: np.ndarray  # |xi_j - xi_k| / max(lam_j, lam_k)
    stopped_value: float
    aborted: bool = False

    @property
    def count(self) -> int:
        return len(self.centers)

    def min_separation_ratio(self) -> float:
        if self.count < 2:
            return math.inf
        off = self.separation[~np.eye(self.count, dtype=bool)]
        return float(np.min(off))

    def to_dict(self) -> dict:
        return {"centers": [np.asarray(c).tolist() for c in self.centers],
                "scales": list(self.scales),
                "separation": self.separation.tolist(),
                "stopped_value": self.stopped_value,
                "aborted": self.aborted}

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def bubble_tree(u: FieldSampler, domain, C2: float, dim: Dimension,
                n_max: int = 16, samples: int = 20001) -> BubbleTree:
    """Iterative maximal-point extraction along the sampler axis.

    domain is the (lo, hi) axis-coordinate interval searched.  Start: if
    sup u <= C2 there is no bubble-scale structure and the tree is empty
    (the weighted criterion with no centers reduces to sup u).  Then
    repeat: record the maximizer of min_k |x - xi_k|^{(n-2)/2} u(x) as a
    new center with scale u(xi)^{-2/(n-2)}, until the weighted sup drops
    to C2; more than n_max centers aborts with a partial tree.
    """
    lo, hi = float(domain[0]), float(domain[1])
    coords = np.linspace(lo, hi, samples)
    vals = u.on_axis_value(coords)
    alpha = dim.alpha
    centers_c = []

    def weighted(c_arr, v_arr):
        if not centers_c:
            return v_arr
        dist = np.min(np.abs(c_arr[:, None]
                             - np.asarray(centers_c)[None, :]), axis=1)
        return dist ** alpha * v_arr

    aborted = False
    while True:
        wv = weighted(coords, vals)
        k = int(np.argmax(wv))
        if wv[k] <= C2:
            break
        if len(centers_c) >= n_max:
            aborted = True
            break
        # golden refinement of the maximizer on the bracketing interval
        a_br = coords[max(k - 1, 0)]
        b_br = coords[min(k + 1, samples - 1)]
        cc = _golden_max(lambda c: float(weighted(
            np.atleast_1d(c), u.on_axis_value(np.atleast_1d(c)))[0]),
            a_br, b_br)
        # the weight's own gradient biases the weighted maximizer off the
        # peak by O(lam^2 / separation); record the nearby local maximum
        # of u itself instead
        uc = float(u.on_axis_value(np.atleast_1d(cc))[0])
        if uc > 0.0 and math.isfinite(uc):
            half = 1.5 * uc ** (-2.0 / (dim.n - 2))
            if centers_c:
                half = min(half, 0.25 * min(abs(cc - c0) for c0 in centers_c))
            lo_br, hi_br = max(lo, cc - half), min(hi, cc + half)
            if hi_br > lo_br:
                cc = _golden_max(lambda c: float(
                    u.on_axis_value(np.atleast_1d(c))[0]), lo_br, hi_br)
        centers_c.append(cc)
    e = u.axis
    centers = [u.axis_origin + c * e for c in centers_c]
    scales = [float(u.on_axis_value(np.atleast_1d(c))[0]) ** (-2.0 / (dim.n - 2))
              for c in centers_c]
    m = len(centers_c)
    sep = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            if i != j:
                sep[i, j] = (abs(centers_c[i] - centers_c[j])
                             / max(scales[i], scales[j]))
    wv = weighted(coords, vals)
    return BubbleTree(centers=centers, scales=scales, separation=sep,
                      stopped_value=float(np.max(wv)) if m else float(np.max(vals)),
                      aborted=aborted)


def _golden_max(f, a: float, b: float, iters: int = 60) -> float:
    g = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = b - g * (b - a)
    x2 = a + g * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + g * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - g * (b - a)
            f1 = f(x1)
        if b - a < 1e-14 * max(1.0, abs(a) + abs(b)):
            break
    return 0.5 * (a + b)


def quantized_energy(u: FieldSampler, tree: BubbleTree,
                     R: float = 100.0) -> np.ndarray:
    """Per-bubble Dirichlet energies int_{B_{R lam_j}(xi_j)} |grad u|^2.

    Refuses when any separation ratio is below 4R: the balls would overlap
    or capture a neighbor's core, so per-bubble quantization is meaningless.
    """
    if tree.count == 0:
        return np.zeros(0)
    if tree.count >= 2 and tree.min_separation_ratio() < 4.0 * R:
        raise ValueError(
            f"bubbles too close for per-bubble energy: min separation ratio "
            f"{tree.min_separation_ratio():.3g} < 4R = {4.0 * R:.3g}")
    dim = u.dim
    n = dim.n
    e = u.axis
    mu_nodes, mu_wts = jacobi_mu_rule(n, 48)
    surf = 2.0 * math.pi ** ((n - 1) / 2.0) / math.gamma((n - 1) / 2.0)
    out = np.zeros(tree.count)
    for j, (xi_j, lam_j) in enumerate(zip(tree.centers, tree.scales)):
        r_ball = R * lam_j
        edges = np.concatenate([
            [0.0], np.geomspace(lam_j / 20.0, r_ball, 120)])
        r_nodes, r_wts = panel_rule(edges, order=8)
        xi_off = float(np.dot(np.asarray(xi_j), e))
        grad_sq = np.zeros((r_nodes.size, mu_nodes.size))
        parts = []
        for term, ctr in ((t, float(np.dot(t.center, e))) for t in u.terms):
            d = ctr - xi_off
            r2 = r_nodes[:, None] ** 2
            s2 = r2 - 2.0 * r_nodes[:, None] * d * mu_nodes[None, :] + d * d
            s = np.sqrt(np.maximum(s2, 0.0))
            sl = term.eval_slope(s)
            safe = np.where(s > 0.0, s, 1.0)
            parts.append((sl / safe, d))
        for gk, dk in parts:
            for gl, dl in parts:
                dot = (r_nodes[:, None] ** 2
                       - r_nodes[:, None] * mu_nodes[None, :] * (dk + dl)
                       + dk * dl)
                grad_sq += gk * gl * dot
        radial_w = r_wts * r_nodes ** (n - 1)
        out[j] = surf * float(radial_w @ grad_sq @ mu_wts)
    return out
