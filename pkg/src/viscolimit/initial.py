"""Initial data for the sweep: velocity fields and well- or ill-prepared stresses."""

from __future__ import annotations

import numpy as np

from .checkpoint import load_checkpoint
from .config import ExperimentConfig, InitialSpec
from .constitutive import FlowState, FluidParams, identity_tensor, normalize_velocity, rate_of_strain
from .spectral import SYMMETRIC, VECTOR, Grid, SpectralField, sym_pairs, to_physical, to_spectral


def taylor_green(grid: Grid, amplitude: float = 1.0) -> SpectralField:
    """``(sin x cos y, -cos x sin y)`` (zero third component in 3D)."""
    x = grid.coordinates
    u = np.zeros((grid.dims,) + grid.shape)
    u[0] = amplitude * np.sin(x[0]) * np.cos(x[1])
    u[1] = -amplitude * np.cos(x[0]) * np.sin(x[1])
    if grid.dims == 3:
        u[0] *= np.cos(x[2])
        u[1] *= np.cos(x[2])
    return to_spectral(u, grid, VECTOR)


def random_bandlimited(grid: Grid, kmax: int, seed: int, amplitude: float = 1.0) -> SpectralField:
    """Random solenoidal field with ``max_i |k_i| <= kmax`` and ``||u||_{L^2} = amplitude``."""
    if not 1 <= kmax < grid.resolution / 3:
        raise ValueError(f"kmax must satisfy 1 <= kmax < M/3 = {grid.resolution / 3:.4g}, got {kmax}")
    rng = np.random.default_rng(seed)
    shape = (grid.dims,) + grid.spectral_shape
    coeffs = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    band = np.ones(grid.spectral_shape, dtype=bool)
    for k in grid.wavenumbers:
        band &= np.abs(k) <= kmax
    # a round trip through physical space enforces Hermitian symmetry; the
    # second mask clears the roundoff it leaves outside the band
    u = to_spectral(to_physical(SpectralField(grid, VECTOR, coeffs * band)), grid, VECTOR)
    u = normalize_velocity(SpectralField(grid, VECTOR, u.coeffs * band))
    norm = np.sqrt(np.sum(grid.multiplicity * np.sum(np.abs(u.coeffs) ** 2, axis=0)))
    return u * (amplitude / norm)


def well_prepared(u: SpectralField, omega: float) -> SpectralField:
    """``tau_0 = 2 omega D[u_0]``, so the elastic defect starts at zero."""
    return rate_of_strain(u) * (2.0 * omega)


def ill_prepared(grid: Grid, amplitude: float, seed: int, wavenumber: int = 2) -> SpectralField:
    """``amplitude * (I + S cos(k0 x_1))`` with a seeded symmetric ``S``.

    The identity part alone has ``||.||_{L^2} = amplitude sqrt(dims)``, and it is
    orthogonal to every ``D[u]``, so ``||tau_0 - 2 omega D[u_0]|| > 0.1 amplitude``
    for any velocity.
    """
    rng = np.random.default_rng(seed)
    entries = rng.uniform(-0.5, 0.5, size=len(sym_pairs(grid.dims)))
    profile = np.cos(wavenumber * grid.coordinates[0])
    tau = np.stack([amplitude * e * profile for e in entries])
    return identity_tensor(grid, amplitude) + to_spectral(tau, grid, SYMMETRIC)


def generate_initial_data(spec: InitialSpec, grid: Grid, params: FluidParams) -> tuple[SpectralField, SpectralField]:
    """Velocity and stress at ``t = 0``; deterministic for fixed seeds."""
    if spec.velocity == "taylor_green":
        u0 = normalize_velocity(taylor_green(grid, spec.amplitude))
    elif spec.velocity == "random_bandlimited":
        u0 = random_bandlimited(grid, spec.kmax, spec.seed, spec.amplitude)
    else:
        raise ValueError(f"unknown velocity spec {spec.velocity!r}")
    if spec.stress == "well_prepared":
        tau0 = well_prepared(u0, params.omega)
    elif spec.stress == "ill_prepared":
        tau0 = ill_prepared(grid, spec.stress_amplitude, spec.stress_seed, spec.stress_wavenumber)
    elif spec.stress == "explicit":
        state, _ = load_checkpoint(spec.checkpoint)
        if state.grid != grid or state.tau_hat is None:
            raise ValueError(f"checkpoint {spec.checkpoint} does not hold a stress on {grid}")
        tau0 = state.tau_hat
    else:
        raise ValueError(f"unknown stress spec {spec.stress!r}")
    return u0, tau0


def initial_state(cfg: ExperimentConfig, eps: float | None = None) -> FlowState:
    params = cfg.params_for(cfg.epsilons[0] if eps is None else eps)
    u0, tau0 = generate_initial_data(cfg.initial, cfg.grid, params)
    return FlowState(0.0, u0, tau0)
