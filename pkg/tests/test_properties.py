import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_field
from viscolimit.analysis import besov_norm, fit_rate, sobolev_norm
from viscolimit.checkpoint import decode, encode
from viscolimit.constitutive import FlowState, FluidParams, Forcing
from viscolimit.spectral import SCALAR, SYMMETRIC, VECTOR, Grid, LPFamily, divergence, leray_project, split_frequencies

GRID = Grid(2, 16)
FAMILY = LPFamily(GRID)
seeds = st.integers(0, 2**32 - 1)
fast = settings(max_examples=30, deadline=None)


@fast
# squared magnitudes underflow below about 1e-150, so tiny factors are excluded
@given(seeds, st.floats(-1e3, 1e3).filter(lambda c: c == 0 or abs(c) > 1e-100), st.floats(0, 3))
def test_sobolev_scaling(seed, c, s):
    f = random_field(GRID, VECTOR, seed)
    assert math.isclose(sobolev_norm(f * c, s), abs(c) * sobolev_norm(f, s), rel_tol=1e-12, abs_tol=1e-300)


@fast
@given(seeds, st.floats(0, 2), st.floats(0, 2))
def test_sobolev_monotone_in_s(seed, s1, s2):
    f = random_field(GRID, SYMMETRIC, seed)
    lo, hi = sorted((s1, s2))
    assert sobolev_norm(f, lo) <= sobolev_norm(f, hi) * (1 + 1e-14)


@fast
@given(seeds)
def test_leray_is_idempotent_and_solenoidal(seed):
    u = leray_project(random_field(GRID, VECTOR, seed))
    assert np.max(np.abs(divergence(u).coeffs)) <= 1e-12 * max(1.0, sobolev_norm(u, 0.0))
    assert np.allclose(leray_project(u).coeffs, u.coeffs, rtol=0, atol=1e-15)


@fast
@given(seeds, st.floats(0.1, 20))
def test_frequency_split_is_exact(seed, cutoff):
    f = random_field(GRID, SCALAR, seed)
    low, high = split_frequencies(f, cutoff)
    assert np.array_equal((low + high).coeffs, f.coeffs)


@fast
@given(seeds, st.floats(1e-8, 0.5), st.floats(0.01, 0.49), st.floats(-1, 2))
def test_besov_subsets_add_up(seed, eps, alpha, s):
    f = random_field(GRID, SCALAR, seed)
    whole = besov_norm(f, s, family=FAMILY)
    parts = sum(besov_norm(f, s, c, eps=eps, alpha=alpha, family=FAMILY) for c in "IJK")
    assert math.isclose(parts, whole, rel_tol=1e-12)


@fast
@given(st.floats(-2, 2), st.floats(1e-3, 1e3))
def test_fit_rate_recovers_exponent(p, c):
    eps = [1e-1, 1e-2, 1e-3, 1e-4]
    assert math.isclose(fit_rate(eps, [c * e**p for e in eps]).slope, p, abs_tol=1e-9)


@fast
@given(
    seeds,
    st.floats(0, 1e3),
    st.floats(1e-8, 10),
    st.floats(0.01, 0.99),
    st.floats(-1, 1),
    st.booleans(),
)
def test_checkpoint_round_trip(seed, t, eps, omega, slip, newtonian):
    params = FluidParams(1.5, eps, omega, slip=slip, forcing=Forcing("shear", 0.25, 3))
    u = random_field(GRID, VECTOR, seed)
    tau = None if newtonian else random_field(GRID, SYMMETRIC, seed + 1)
    blob = encode(FlowState(t, u, tau), params)
    back, params_back = decode(blob)
    assert params_back == params and back.t == t
    assert np.array_equal(back.u_hat.coeffs, u.coeffs)
    assert (back.tau_hat is None) == newtonian
    assert encode(back, params_back) == blob
