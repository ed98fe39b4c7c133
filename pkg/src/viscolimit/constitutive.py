"""Oldroyd-B field physics: parameters, state, strain/vorticity, objective terms.

Nondimensional system on the torus (pressure eliminated by Leray projection)::

    Re (u_t + P[(u.grad) u]) = (1 - omega) lap u + P div tau + P f
    eps (tau_t + (u.grad) tau + g(grad u, tau)) + tau = 2 omega D[u]

with ``g = tau W - W tau - a (D tau + tau D)``. The dimensional groups are
``Re = rho U L / eta``, ``eps = lambda1 U / L`` and ``omega = 1 - lambda2 / lambda1``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.fft as sfft

from .spectral import (
    SYMMETRIC,
    TENSOR,
    VECTOR,
    Grid,
    SpectralField,
    dealias,
    gradient,
    leray_project,
    sym_index,
    sym_pairs,
    to_physical,
    to_spectral,
)

BESOV_OMEGA_LIMIT = 1.0 / 33.0


def besov_gamma(omega: float) -> float:
    """Dissipation margin ``(1 - omega)/2 - 16 omega``; positive iff omega < 1/33."""
    return (1.0 - omega) / 2.0 - 16.0 * omega


@dataclass(frozen=True)
class Forcing:
    """Steady body force.

    ``kind="zero"`` or ``kind="shear"``: the Kolmogorov-type field
    ``amplitude * sin(wavenumber * x_2) e_1``, which is band-limited and
    already solenoidal.
    """

    kind: str = "zero"
    amplitude: float = 0.0
    wavenumber: int = 1

    def __post_init__(self):
        if self.kind not in ("zero", "shear"):
            raise ValueError(f"unknown forcing kind {self.kind!r}")
        if self.kind == "shear" and self.wavenumber < 1:
            raise ValueError("forcing wavenumber must be >= 1")

    @property
    def active(self) -> bool:
        return self.kind != "zero" and self.amplitude != 0.0

    def field(self, grid: Grid) -> SpectralField:
        """Projected, dealiased forcing ``P f``."""
        if not self.active:
            return SpectralField.zeros(grid, VECTOR)
        x = grid.coordinates
        f = np.zeros((grid.dims,) + grid.shape)
        f[0] = self.amplitude * np.sin(self.wavenumber * x[1])
        return dealias(leray_project(to_spectral(f, grid, VECTOR)))


@dataclass(frozen=True)
class FluidParams:
    """Parameter set of the nondimensional Oldroyd-B system.

    ``delta`` is the optional margin of the Sobolev regime (``omega <= 1 - delta``);
    ``omega0`` is the optional Besov-regime bound (``omega <= omega0``, ``gamma(omega0) > 0``).
    """

    reynolds: float
    weissenberg: float
    omega: float
    slip: float = 0.0
    delta: float | None = None
    omega0: float | None = None
    forcing: Forcing = Forcing()

    def __post_init__(self):
        if not self.reynolds > 0:
            raise ValueError(f"Re must be > 0, got {self.reynolds}")
        if not self.weissenberg > 0:
            raise ValueError(f"eps must be > 0, got {self.weissenberg}")
        if not 0 < self.omega < 1:
            raise ValueError(f"omega must lie in (0, 1), got {self.omega}")
        if not -1 <= self.slip <= 1:
            raise ValueError(f"slip parameter a must lie in [-1, 1], got {self.slip}")
        if self.delta is not None:
            if not 0 < self.delta < 1:
                raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
            if self.omega > 1 - self.delta:
                raise ValueError(f"0 < omega <= 1 - delta violated: omega={self.omega}, delta={self.delta}")
        if self.omega0 is not None:
            if besov_gamma(self.omega0) <= 0:
                raise ValueError(
                    f"gamma(omega0) = (1 - omega0)/2 - 16 omega0 = {besov_gamma(self.omega0):.4g} must be > 0"
                )
            if self.omega > self.omega0:
                raise ValueError(f"omega <= omega0 violated: {self.omega} > {self.omega0}")

    @property
    def eps(self) -> float:
        return self.weissenberg

    def with_eps(self, eps: float) -> "FluidParams":
        return replace(self, weissenberg=eps)

    def besov_ok(self) -> bool:
        return besov_gamma(self.omega0 if self.omega0 is not None else self.omega) > 0


@dataclass(frozen=True)
class FlowState:
    """Time plus spectral velocity and (for Oldroyd runs) symmetric extra stress."""

    t: float
    u_hat: SpectralField
    tau_hat: SpectralField | None = None

    @property
    def grid(self) -> Grid:
        return self.u_hat.grid

    @property
    def is_newtonian(self) -> bool:
        return self.tau_hat is None


def normalize_velocity(u: SpectralField) -> SpectralField:
    """Projected, zero-mean, dealiased copy of ``u``."""
    return dealias(leray_project(u))


# -- physical-space tensor helpers (shared with the stepper) ------------------


def sym_to_matrix(comps: np.ndarray, dims: int) -> np.ndarray:
    """Expand stored symmetric components ``(ns, ...)`` to ``(dims, dims, ...)``."""
    idx = sym_index(dims)
    return comps[idx.ravel()].reshape((dims, dims) + comps.shape[1:])


def matrix_to_sym(mat: np.ndarray) -> np.ndarray:
    """Symmetric part of ``(dims, dims, ...)`` in storage order."""
    dims = mat.shape[0]
    return np.stack([0.5 * (mat[m, n] + mat[n, m]) for m, n in sym_pairs(dims)])


def g_physical(gradu: np.ndarray, tau: np.ndarray, a: float) -> np.ndarray:
    """Pointwise ``tau W - W tau - a (D tau + tau D)`` for ``gradu[m, n] = d_n u_m``."""
    gt = np.swapaxes(gradu, 0, 1)
    W = 0.5 * (gradu - gt)
    out = np.einsum("mp...,pn...->mn...", tau, W) - np.einsum("mp...,pn...->mn...", W, tau)
    if a != 0.0:
        D = 0.5 * (gradu + gt)
        out -= a * (np.einsum("mp...,pn...->mn...", D, tau) + np.einsum("mp...,pn...->mn...", tau, D))
    return out


# -- spectral operations ------------------------------------------------------


def _require_vector(u: SpectralField):
    if u.rank != VECTOR:
        raise ValueError(f"expected a vector field, got rank {u.rank}")


def rate_of_strain(u: SpectralField) -> SpectralField:
    """``D[u] = (grad u + grad u^T) / 2`` as a symmetric tensor."""
    _require_vector(u)
    g = u.grid
    kd = g.deriv_wavenumbers
    comps = [0.5j * (kd[n] * u.coeffs[m] + kd[m] * u.coeffs[n]) for m, n in sym_pairs(g.dims)]
    return SpectralField(g, SYMMETRIC, np.stack(comps))


def vorticity_tensor(u: SpectralField) -> SpectralField:
    """``W[u] = (grad u - grad u^T) / 2``, stored as a dense antisymmetric tensor."""
    _require_vector(u)
    g = u.grid
    kd = g.deriv_wavenumbers
    comps = [0.5j * (kd[n] * u.coeffs[m] - kd[m] * u.coeffs[n]) for m in range(g.dims) for n in range(g.dims)]
    return SpectralField(g, TENSOR, np.stack(comps))


def objective_bilinear(u: SpectralField, tau: SpectralField, a: float) -> SpectralField:
    """Objective-derivative nonlinearity ``g(grad u, tau)``, dealiased and symmetric."""
    _require_vector(u)
    if tau.rank != SYMMETRIC:
        raise ValueError("tau must be a symmetric tensor field")
    if u.grid != tau.grid:
        raise ValueError("fields live on different grids")
    dims = u.grid.dims
    gradu = to_physical(gradient(u)).reshape((dims, dims) + u.grid.shape)
    tau_m = sym_to_matrix(to_physical(tau), dims)
    out = matrix_to_sym(g_physical(gradu, tau_m, a))
    return dealias(to_spectral(out, u.grid, SYMMETRIC))


def advect(u: SpectralField, q: SpectralField) -> SpectralField:
    """Pseudo-spectral ``(u.grad) q`` for a field of any rank, dealiased."""
    _require_vector(u)
    if u.grid != q.grid:
        raise ValueError("fields live on different grids")
    g = u.grid
    kd = g.deriv_wavenumbers
    up = to_physical(u)
    dq = np.stack([1j * kd[n] * q.coeffs for n in range(g.dims)])  # (dims, ncomp, ...)
    dq_phys = sfft.irfftn(dq * g.npoints, s=g.shape, axes=g.axes)
    out = np.einsum("n...,nc...->c...", up, dq_phys)
    return dealias(to_spectral(out, g, q.rank))


def elastic_defect(state: FlowState, omega: float) -> SpectralField:
    """``Z = tau - 2 omega D[u]``, damped at rate 1/eps by the constitutive law."""
    if state.tau_hat is None:
        raise ValueError("state carries no stress")
    return state.tau_hat - 2.0 * omega * rate_of_strain(state.u_hat)


def identity_tensor(grid: Grid, scale: float = 1.0) -> SpectralField:
    """Spatially uniform ``scale * I`` as a symmetric field."""
    f = SpectralField.zeros(grid, SYMMETRIC)
    origin = (0,) * grid.dims
    for s, (m, n) in enumerate(sym_pairs(grid.dims)):
        if m == n:
            f.coeffs[(s,) + origin] = scale
    return f


__all__ = [
    "BESOV_OMEGA_LIMIT",
    "FlowState",
    "FluidParams",
    "Forcing",
    "advect",
    "besov_gamma",
    "elastic_defect",
    "identity_tensor",
    "normalize_velocity",
    "objective_bilinear",
    "rate_of_strain",
    "vorticity_tensor",
]
