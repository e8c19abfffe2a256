"""Steady bubbles, their symmetry kernels, and the linearized spectrum.

The bubble normalization used everywhere is

    W(y) = (1 + |y|^2 / (n(n-2)))**(-(n-2)/2),

the positive radial entire solution of -Delta W = W^p with W(0) = 1, and the
scaled family W_{xi,lam}(x) = lam**(-(n-2)/2) W((x - xi)/lam).  The linearized
operator L = -Delta - p W^{p-1} has exactly one negative eigenvalue -mu0 with
positive radial eigenfunction Z0, and an (n+1)-dimensional kernel spanned by
the translation modes Z_i = dW/dy_i and the dilation mode
Z_{n+1} = ((n-2)/2) W + y . grad W.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .dimension import Dimension
from .quadrature import IntegrationError, radial_integral


class BracketError(RuntimeError):
    """Shooting functional has no sign change over the search bracket."""


class ConsistencyError(RuntimeError):
    """Two independent numerical routes disagree beyond tolerance."""


@dataclass(frozen=True)
class BubbleParams:
    """Center xi in R^n, scale lambda > 0, and negative-mode amplitude a."""

    xi: np.ndarray
    lam: float
    a: float = 0.0

    def __post_init__(self):
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        object.__setattr__(self, "xi", xi)
        if not np.all(np.isfinite(xi)):
            raise ValueError("bubble center must be finite")
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"bubble scale must be positive, got {self.lam}")


# ---------------------------------------------------------------------------
# closed-form bubble and kernels
# ---------------------------------------------------------------------------

def _as_float(r):
    """Float array view preserving extended precision if already floating."""
    r = np.asarray(r)
    return r if r.dtype.kind == "f" else r.astype(float)


def bubble_profile(r, lam: float, dim: Dimension):
    """W_{0,lam} as a function of the distance r from the center.

    Extended-precision input is honored, including in the lam prefactor;
    decomposition residuals cancel W against the fitted model pointwise
    and need better than float64 coherence there.
    """
    if not lam > 0:
        raise ValueError(f"bubble scale must be positive, got {lam}")
    r = _as_float(r)
    c = dim.n * (dim.n - 2)
    rho = r / r.dtype.type(lam)
    return r.dtype.type(lam) ** (-dim.alpha) * (1.0 + rho * rho / c) ** (-dim.alpha)


def bubble_profile_slope(r, lam: float, dim: Dimension):
    """d/dr of W_{0,lam}(r)."""
    if not lam > 0:
        raise ValueError(f"bubble scale must be positive, got {lam}")
    r = _as_float(r)
    n = dim.n
    c = n * (n - 2)
    lam_t = r.dtype.type(lam)
    rho = r / lam_t
    base = (1.0 + rho * rho / c) ** (-n / 2)
    return -lam_t ** (-dim.alpha - 1) * (n - 2) / c * rho * base


def bubble_profile_curvature(r, lam: float, dim: Dimension):
    """d^2/dr^2 of W_{0,lam}(r), closed form."""
    r = np.asarray(r, dtype=float)
    n = dim.n
    c = n * (n - 2)
    rho = r / lam
    q = 1.0 + rho * rho / c
    return -lam ** (-dim.alpha - 2) * (n - 2) / c * q ** (-n / 2 - 1) * (
        q - n / c * rho * rho)


def _points(x, n: int):
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != n:
        raise ValueError(f"points must have {n} components, got shape {pts.shape}")
    return pts, single


def bubble_value(x, params: BubbleParams, dim: Dimension):
    """W_{xi,lam}(x) for a point or an array of points."""
    pts, single = _points(x, dim.n)
    r = np.linalg.norm(pts - params.xi, axis=-1)
    out = bubble_profile(r, params.lam, dim)
    return out[0] if single else out


def bubble_gradient(x, params: BubbleParams, dim: Dimension):
    """Closed-form gradient of W_{xi,lam} at a point or array of points."""
    if not params.lam > 0:
        raise ValueError(f"bubble scale must be positive, got {params.lam}")
    pts, single = _points(x, dim.n)
    n = dim.n
    c = n * (n - 2)
    lam = params.lam
    d = pts - params.xi
    r2 = np.sum(d * d, axis=-1)
    # grad W_{xi,lam} = -(1/n) lam^{-alpha-2} (1 + (r/lam)^2/c)^{-n/2-...}
    # written through the slope to keep one source of truth
    factor = lam ** (-dim.alpha - 2) * (-(n - 2) / c) * (
        1.0 + r2 / (lam * lam * c)) ** (-n / 2)
    out = factor[..., None] * d
    return out[0] if single else out


def bubble_laplacian(x, params: BubbleParams, dim: Dimension):
    """Laplacian of W_{xi,lam} via closed-form second radial derivatives."""
    pts, single = _points(x, dim.n)
    r = np.linalg.norm(pts - params.xi, axis=-1)
    curv = bubble_profile_curvature(r, params.lam, dim)
    slope = bubble_profile_slope(r, params.lam, dim)
    with np.errstate(invalid="ignore", divide="ignore"):
        lap = np.where(r > 0.0, curv + (dim.n - 1) * slope / np.where(r > 0, r, 1.0),
                       dim.n * curv)
    return lap[0] if single else lap


def dilation_kernel_profile(rho, dim: Dimension):
    """Radial profile of Z_{n+1} = alpha W + rho W'."""
    rho = np.asarray(rho, dtype=float)
    return dim.alpha * bubble_profile(rho, 1.0, dim) + rho * bubble_profile_slope(
        rho, 1.0, dim)


def kernel_Z(i: int, y, dim: Dimension):
    """Zero modes of the linearized operator at the unit bubble.

    i in 1..n gives the translation mode dW/dy_i; i = n+1 the dilation mode.
    """
    n = dim.n
    if not 1 <= i <= n + 1:
        raise IndexError(f"kernel index must be in 1..{n + 1}, got {i}")
    pts, single = _points(y, n)
    if i <= n:
        grad = bubble_gradient(pts, BubbleParams(np.zeros(n), 1.0), dim)
        out = grad[:, i - 1]
    else:
        rho = np.linalg.norm(pts, axis=-1)
        out = dilation_kernel_profile(rho, dim)
    return out[0] if single else out


def scaled_kernel(i: int, x, params: BubbleParams, dim: Dimension,
                  spectral: "SpectralData | None" = None):
    """Z_{i,xi,lam}(x) = lam^{-n/2} Z_i((x - xi)/lam); i=0 needs SpectralData."""
    n = dim.n
    if not 0 <= i <= n + 1:
        raise IndexError(f"kernel index must be in 0..{n + 1}, got {i}")
    pts, single = _points(x, n)
    y = (pts - params.xi) / params.lam
    if i == 0:
        if spectral is None:
            raise ValueError("scaled_kernel with i=0 requires spectral data")
        rho = np.linalg.norm(y, axis=-1)
        out = spectral.z0(rho)
    else:
        out = np.asarray(kernel_Z(i, y, dim))
    out = params.lam ** (-n / 2) * out
    return out[0] if single else out


# ---------------------------------------------------------------------------
# bubble energy
# ---------------------------------------------------------------------------

_ENERGY_CACHE: dict[int, float] = {}


def bubble_energy(dim: Dimension) -> float:
    """The scale-invariant energy Lambda = int |grad W|^2 = int W^{p+1}.

    Both integrals are computed by adaptive radial quadrature and must agree
    internally to 1e-8 relative; the gradient form is returned and cached.
    """
    if dim.n in _ENERGY_CACHE:
        return _ENERGY_CACHE[dim.n]
    grad_form = radial_integral(
        lambda r: bubble_profile_slope(r, 1.0, dim) ** 2, dim)
    pot_form = radial_integral(
        lambda r: bubble_profile(r, 1.0, dim) ** (dim.p + 1), dim)
    if abs(grad_form - pot_form) > 1e-8 * abs(grad_form):
        raise IntegrationError(
            f"energy forms disagree: grad {grad_form!r} vs potential {pot_form!r}")
    _ENERGY_CACHE[dim.n] = grad_form
    return grad_form


# ---------------------------------------------------------------------------
# linearized spectrum
# ---------------------------------------------------------------------------

def linearized_potential(r, dim: Dimension):
    """p W^{p-1}(r) at the unit bubble; W^{p-1} = (1 + r^2/(n(n-2)))^{-2}."""
    r = np.asarray(r, dtype=float)
    c = dim.n * (dim.n - 2)
    return dim.p * (1.0 + r * r / c) ** (-2.0)


def linearized_matrix(dim: Dimension, r_max: float, m: int):
    """Symmetric tridiagonal discretization of -Delta_rad - p W^{p-1}.

    Cell-centered conservative flux form on m cells of [0, r_max]; the zero
    flux through r=0 encodes the regularity condition and the last cell sees
    a homogeneous Dirichlet value at r_max.  Returns (diag, offdiag, centers).
    """
    n = dim.n
    h = r_max / m
    centers = (np.arange(m) + 0.5) * h
    faces = np.arange(m + 1) * h
    wl = faces[:-1] ** (n - 1)
    wr = faces[1:] ** (n - 1)
    vol = centers ** (n - 1)
    diag = (wl + wr) / (h * h * vol) - linearized_potential(centers, dim)
    off = -wr[:-1] / (h * h * np.sqrt(vol[:-1] * vol[1:]))
    return diag, off, centers


def _matrix_negative_eigenvalues(dim: Dimension, r_max: float, m: int):
    diag, off, _ = linearized_matrix(dim, r_max, m)
    return eigh_tridiagonal(diag, off, eigvals_only=True, select="v",
                            select_range=(-2.0 * dim.p, 0.0))


def _shoot(dim: Dimension, mu: float, r_max: float, dense: bool = False):
    """Integrate the radial eigenvalue ODE outward from r=0 with Z(0)=1."""
    n = dim.n

    def rhs(r, z):
        zv, zp = z
        pot = (mu - linearized_potential(r, dim)) * zv
        if r < 1e-10:
            # regularity limit: Z'' (1 + (n-1)/n ...) -> Z''(0) = pot/n
            return (zp, pot / n)
        return (zp, pot - (n - 1) / r * zp)

    sol = solve_ivp(rhs, (0.0, r_max), (1.0, 0.0), method="DOP853",
                    rtol=1e-12, atol=1e-30, dense_output=dense)
    if not sol.success:
        raise BracketError(f"shooting integration failed at mu={mu}: {sol.message}")
    return sol


def _shoot_mismatch(dim: Dimension, mu: float, r_max: float) -> float:
    """Decay-matching functional; zero iff the outward solution is decaying."""
    sol = _shoot(dim, mu, r_max)
    zv, zp = sol.y[0, -1], sol.y[1, -1]
    beta = np.sqrt(mu) + (dim.n - 1) / (2.0 * r_max)
    return zp + beta * zv


def _count_interior_zeros(sol, r_max: float) -> int:
    rr = np.linspace(1e-6, r_max, 2000)
    vals = sol.sol(rr)[0]
    signs = np.sign(vals)
    return int(np.sum(signs[:-1] * signs[1:] < 0))


@dataclass
class SpectralData:
    """Computed negative eigenpair (mu0, Z0) of the linearized operator.

    The profile is tabulated on a log-spaced radial grid and interpolated
    cubically in log-value space, which keeps the evaluator strictly positive
    and extends it past r_max with the exponential tail rate.  Immutable once
    built; safe to share across threads.
    """

    n: int
    mu0: float
    radii: np.ndarray
    values: np.ndarray
    l2_norm: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(self.values <= 0.0):
            raise ValueError("Z0 table must be strictly positive")
        r_max = self.radii[-1]
        tail_slope = -(np.sqrt(self.mu0) + (self.n - 1) / (2.0 * r_max))
        self._log_spline = CubicSpline(
            self.radii, np.log(self.values),
            bc_type=((1, 0.0), (1, tail_slope)))
        self._tail_slope = tail_slope

    def z0(self, r):
        """Z0 at radius r (vectorized, exponential continuation past r_max)."""
        r = np.asarray(r, dtype=float)
        r_max = self.radii[-1]
        inside = np.minimum(r, r_max)
        logv = self._log_spline(inside)
        logv = logv + self._tail_slope * np.maximum(r - r_max, 0.0)
        return np.exp(logv)

    def z0_slope(self, r):
        """d Z0 / dr at radius r (vectorized)."""
        r = np.asarray(r, dtype=float)
        r_max = self.radii[-1]
        inside = np.minimum(r, r_max)
        log_slope = self._log_spline.derivative()(inside)
        log_slope = np.where(r > r_max, self._tail_slope, log_slope)
        return self.z0(r) * log_slope

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mu0": self.mu0,
            "radii": self.radii.tolist(),
            "values": self.values.tolist(),
            "l2_norm": self.l2_norm,
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SpectralData":
        return cls(n=int(data["n"]), mu0=float(data["mu0"]),
                   radii=np.asarray(data["radii"], dtype=float),
                   values=np.asarray(data["values"], dtype=float),
                   l2_norm=float(data["l2_norm"]),
                   meta=dict(data.get("meta", {})))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "SpectralData":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


_SPECTRAL_CACHE: dict[tuple, SpectralData] = {}


def ground_state(dim: Dimension, r_max: float = 40.0,
                 tol: float = 1e-8) -> SpectralData:
    """Negative eigenpair of -Delta - p W^{p-1} on radial functions.

    mu0 is located by shooting with decay matching at r_max and bisection on
    the eigenvalue, then independently confirmed by a tridiagonal eigensolve
    of the conservative flux discretization (Richardson-extrapolated over a
    grid doubling).  Disagreement beyond 1e-5 relative raises
    ConsistencyError; no bracketing sign change raises BracketError.
    """
    key = (dim.n, float(r_max))
    if key in _SPECTRAL_CACHE:
        return _SPECTRAL_CACHE[key]

    p = dim.p
    if linearized_potential(r_max, dim) > p / 10.0:
        raise ValueError(f"r_max={r_max} too small: potential not yet decayed")

    # one negative eigenvalue lives in (0, p); scan for the decay-matching root
    grid = np.linspace(0.01 * p, 0.995 * p, 80)
    mism = [_shoot_mismatch(dim, mu, r_max) for mu in grid]
    roots = []
    for lo, hi, flo, fhi in zip(grid[:-1], grid[1:], mism[:-1], mism[1:]):
        if flo == 0.0:
            roots.append(lo)
        elif flo * fhi < 0.0:
            roots.append(brentq(lambda mu: _shoot_mismatch(dim, mu, r_max),
                                lo, hi, xtol=1e-14, rtol=8.9e-16))
    # keep only roots whose profile is the nodeless (ground) state
    ground = []
    for mu in roots:
        sol = _shoot(dim, mu, r_max, dense=True)
        if _count_interior_zeros(sol, r_max) == 0:
            ground.append((mu, sol))
    if not ground:
        raise BracketError(
            f"no nodeless decay-matched eigenvalue in (0, {0.995 * p:.3f}) "
            f"for n={dim.n}, r_max={r_max}")
    if len(ground) > 1:
        raise ConsistencyError(
            f"multiple nodeless shooting roots for n={dim.n}: "
            f"{[m for m, _ in ground]}")
    mu_shoot, sol = ground[0]

    # independent route: discrete eigensolve, Richardson in the cell count
    m = max(4000, int(round(250 * r_max)))
    neg_coarse = _matrix_negative_eigenvalues(dim, r_max, m)
    neg_fine = _matrix_negative_eigenvalues(dim, r_max, 2 * m)
    if len(neg_fine) != 1:
        raise ConsistencyError(
            f"discrete operator has {len(neg_fine)} negative eigenvalues, "
            f"expected exactly 1 (n={dim.n})")
    mu_matrix = -(4.0 * neg_fine[0] - neg_coarse[0]) / 3.0
    rel = abs(mu_shoot - mu_matrix) / mu_shoot
    if rel > 1e-5:
        raise ConsistencyError(
            f"shooting mu0={mu_shoot!r} vs matrix mu0={mu_matrix!r} "
            f"disagree by {rel:.2e} relative (n={dim.n})")

    # tabulate the profile, sign fixed positive at the origin, L2-normalized
    radii = np.concatenate(([0.0], np.geomspace(1e-3, r_max, 400)))
    values = sol.sol(radii)[0]
    if np.any(values <= 0.0):
        raise ConsistencyError("ground-state profile lost positivity")
    raw = SpectralData(n=dim.n, mu0=mu_shoot, radii=radii, values=values,
                       l2_norm=1.0)
    norm_sq = radial_integral(lambda r: raw.z0(r) ** 2, dim, r_max=r_max)
    data = SpectralData(
        n=dim.n, mu0=mu_shoot, radii=radii, values=values / np.sqrt(norm_sq),
        l2_norm=1.0,
        meta={"r_max": r_max, "mu0_matrix": mu_matrix,
              "cross_check_rel_diff": rel, "tol": tol})
    _SPECTRAL_CACHE[key] = data
    return data
