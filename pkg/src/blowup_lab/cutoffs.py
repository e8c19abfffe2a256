"""Polynomial smoothstep cutoffs.

Two radial bump profiles are used throughout:

* eta: identically 1 on [0, 1], 0 beyond 2, quintic-smoothstep transition on
  [1, 2].  Satisfies |eta'| + |eta''| <= 10 (max is about 6.7).
* psi-style profile: identically 1 on [0, 3/4], 0 beyond 1, transition on
  [3/4, 1].  Satisfies |psi'| + |psi''| <= 100 (max is about 95.8).

Both are C^2; the quintic smoothstep has vanishing first and second
derivatives at the transition ends.
"""

from __future__ import annotations

import numpy as np


def smoothstep(x):
    """Quintic smoothstep: 0 for x<=0, 1 for x>=1, 6x^5-15x^4+10x^3 between."""
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10.0 + x * (-15.0 + 6.0 * x))


def smoothstep_d1(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    xc = np.clip(x, 0.0, 1.0)
    return np.where(inside, 30.0 * xc**2 * (1.0 - xc) ** 2, 0.0)


def smoothstep_d2(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    xc = np.clip(x, 0.0, 1.0)
    return np.where(inside, 60.0 * xc * (1.0 - xc) * (1.0 - 2.0 * xc), 0.0)


def eta(rho):
    """Even bump in the radial variable: 1 on [0,1], 0 beyond 2."""
    rho = np.abs(np.asarray(rho, dtype=float))
    return smoothstep(2.0 - rho)


def eta_d1(rho):
    rho = np.abs(np.asarray(rho, dtype=float))
    return -smoothstep_d1(2.0 - rho)


def eta_scaled(r, scale: float):
    """eta(|r| / scale): 1 on [0, scale], support [0, 2*scale]."""
    return eta(np.asarray(r, dtype=float) / scale)


def bump_profile(rho, plateau: float = 0.75):
    """Radial bump: 1 on [0, plateau], 0 beyond 1, smoothstep between."""
    rho = np.abs(np.asarray(rho, dtype=float))
    return smoothstep((1.0 - rho) / (1.0 - plateau))


def bump_profile_d1(rho, plateau: float = 0.75):
    rho = np.abs(np.asarray(rho, dtype=float))
    width = 1.0 - plateau
    return -smoothstep_d1((1.0 - rho) / width) / width


def bump_profile_d2(rho, plateau: float = 0.75):
    rho = np.abs(np.asarray(rho, dtype=float))
    width = 1.0 - plateau
    return smoothstep_d2((1.0 - rho) / width) / width**2
