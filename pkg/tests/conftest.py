"""Session fixtures: the expensive reference runs, built once and shared.

The 1.2 W blowup run doubles as the subject of the rate, profile,
boundedness, and budget checks; building it per-test would dominate the
suite runtime.
"""

import numpy as np
import pytest

from blowup_lab.dimension import Dimension
from blowup_lab.kernel import bubble_profile, ground_state
from blowup_lab.solver import (RadialField, RadialGrid, RunConfig,
                               StepControls, run_until_blowup)


@pytest.fixture(scope="session")
def dim7():
    return Dimension(7)


@pytest.fixture(scope="session")
def spectral7(dim7):
    return ground_state(dim7)


def _bubble_run(u_max: float):
    dim = Dimension(7)
    grid = RadialGrid.graded(dim, 20.0, 2200, ratio=1.004)
    u0 = RadialField(grid, 1.2 * bubble_profile(grid.r, 1.0, dim))
    cfg = RunConfig(u_max=u_max, t_max=50.0,
                    controls=StepControls(rtol=1e-8, atol=1e-14),
                    snap_sup_decades=0.005)
    return run_until_blowup(u0, cfg)


@pytest.fixture(scope="session")
def bubble_run():
    """1.2 W on B_20, graded 2200-node grid, sup cap 1e8."""
    return _bubble_run(1e8)


@pytest.fixture(scope="session")
def bubble_run_low():
    """Same initial data with sup cap 1e6, for cap-sensitivity checks."""
    return _bubble_run(1e6)


@pytest.fixture(scope="session")
def mode_run(dim7, spectral7):
    """W plus a small unstable-mode seed on a wide domain.

    The domain radius matters: on B_20 the Dirichlet truncation deficit
    of W diffuses inward on the same ~25-unit timescale as the mode
    growth, swamps the seed, and flips the run to dispersal.  B_60 keeps
    the boundary influence out of the tracking window.
    """
    grid = RadialGrid.graded(dim7, 60.0, 2400, ratio=1.004)
    vals = bubble_profile(grid.r, 1.0, dim7) + 0.02 * spectral7.z0(grid.r)
    cfg = RunConfig(u_max=1e6, t_max=80.0,
                    controls=StepControls(rtol=1e-8, atol=1e-14),
                    snap_sup_decades=0.005, snap_dt=0.25)
    return run_until_blowup(RadialField(grid, vals), cfg)


@pytest.fixture(scope="session")
def mode_track(mode_run, spectral7):
    from blowup_lab.decomposition import track_parameters
    return track_parameters(mode_run, spectral7, t_window=(0.0, 14.0))
