import numpy as np
import pytest

from viscolimit.spectral import SCALAR, SYMMETRIC, VECTOR, Grid, component_count, dealias, leray_project, to_spectral


def random_field(grid, rank, seed=0, band=None):
    """Real random field; dealiased, or limited to ``max |k_i| <= band``."""
    rng = np.random.default_rng(seed)
    n = component_count(rank, grid.dims)
    f = to_spectral(rng.standard_normal((n,) + grid.shape), grid, rank)
    if band is None:
        return dealias(f)
    keep = np.ones(grid.spectral_shape, dtype=bool)
    for k in grid.wavenumbers:
        keep &= np.abs(k) <= band
    return type(f)(grid, rank, f.coeffs * keep)


def random_solenoidal(grid, seed=0, band=None):
    return leray_project(random_field(grid, VECTOR, seed, band))


@pytest.fixture
def grid16():
    return Grid(2, 16)


@pytest.fixture
def grid32():
    return Grid(2, 32)


@pytest.fixture
def grid3d():
    return Grid(3, 16)


def oracle_worst_error(initial, final, params, t, coupling=True, forcing=None):
    """Largest per-mode relative deviation of a linear run from the matrix-exponential oracle."""
    from viscolimit.solver import linear_mode_solution

    grid = initial.grid
    worst = 0.0
    f_hat = forcing
    for idx in zip(*np.nonzero(grid.dealias_mask)):
        k = [int(grid.wavenumbers[i][idx]) for i in range(grid.dims)]
        if not any(k):
            continue
        fk = None if f_hat is None else f_hat.mode(k)
        ue, te = linear_mode_solution(k, params, initial.u_hat.mode(k), initial.tau_hat.mode(k), t, fk, coupling)
        exact = np.concatenate([ue, te])
        num = np.concatenate([final.u_hat.mode(k), final.tau_hat.mode(k)])
        scale = np.linalg.norm(exact)
        if scale > 0:
            worst = max(worst, float(np.linalg.norm(num - exact) / scale))
    return worst


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
