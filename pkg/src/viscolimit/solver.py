"""Time integration of the Oldroyd-B system and of the Navier-Stokes reference.

Both models are written per Fourier mode as ``y' = L y + N(y)``. The linear
part ``L`` (viscosity, relaxation and the two linear coupling terms
``P div tau / Re`` and ``2 omega D[u] / eps``) is integrated exactly with
per-mode matrix exponentials; the quadratic terms go through the two-stage
exponential Runge-Kutta scheme of Cox and Matthews (ETD2RK)::

    a       = e^{hL} y_n + h phi1(hL) N(y_n)
    y_{n+1} = a + h phi2(hL) (N(a) - N(y_n))

Relaxation is therefore exact for any ``eps`` at fixed ``h``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft
import scipy.linalg

from .analysis import NormSeries
from .constitutive import FlowState, FluidParams, g_physical, matrix_to_sym, sym_to_matrix
from .spectral import SYMMETRIC, VECTOR, Grid, SpectralField, dealias, divergence, leray_project, sym_index, sym_pairs

log = logging.getLogger(__name__)

BLOWUP_FACTOR = 1e8


class BlowUpError(RuntimeError):
    """Raised when the evolved fields stop being finite or grow past the guard."""

    def __init__(self, t: float, reason: str):
        super().__init__(f"blow-up at t={t:.6g}: {reason}")
        self.t = t
        self.reason = reason


@dataclass(frozen=True)
class StepOptions:
    """Switches for isolating parts of the model in tests.

    ``coupling`` toggles both linear coupling terms, ``freeze_velocity`` keeps
    ``u`` fixed while the stress relaxes towards ``2 omega D[u]``.
    """

    advection: bool = True
    objective: bool = True
    coupling: bool = True
    freeze_velocity: bool = False

    @property
    def nonlinear(self) -> bool:
        return self.advection or self.objective


LINEAR = StepOptions(advection=False, objective=False)


@dataclass(frozen=True)
class DtPolicy:
    """Step-size rule ``dt = min(accuracy * 32 / M, cfl * dx / max|u|)``.

    ``fixed`` overrides the accuracy cap (the CFL cap still applies).
    """

    accuracy: float = 1e-3
    cfl: float = 0.5
    fixed: float | None = None

    def __post_init__(self):
        if not self.accuracy > 0 or not self.cfl > 0:
            raise ValueError("dt policy constants must be positive")
        if self.fixed is not None and not self.fixed > 0:
            raise ValueError("fixed dt must be positive")

    def accuracy_cap(self, grid: Grid) -> float:
        return self.fixed if self.fixed is not None else self.accuracy * 32 / grid.resolution

    def cfl_cap(self, grid: Grid, umax: float) -> float:
        return math.inf if umax <= 0 else self.cfl * grid.dx / umax


# -- phi functions -------------------------------------------------------------


def phi_functions(z: np.ndarray, small: float = 1e-4) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scalar ``e^z``, ``phi1 = (e^z - 1)/z`` and ``phi2 = (e^z - 1 - z)/z^2``.

    Taylor series are used for ``|z| < small`` (phi1) and ``|z| < 1e-2`` (phi2)
    where the closed forms cancel.
    """
    z = np.asarray(z, dtype=float)
    ez = np.exp(z)
    phi1 = np.empty_like(z)
    phi2 = np.empty_like(z)
    t1 = np.abs(z) < small
    t2 = np.abs(z) < 1e-2
    zs = np.where(t1, 1.0, z)
    phi1[~t1] = np.expm1(zs[~t1]) / zs[~t1]
    zt = z[t1]
    phi1[t1] = 1 + zt / 2 + zt**2 / 6 + zt**3 / 24
    zs = np.where(t2, 1.0, z)
    phi2[~t2] = (np.expm1(zs[~t2]) - zs[~t2]) / zs[~t2] ** 2
    zt = z[t2]
    term = np.full_like(zt, 0.5)
    acc = term.copy()
    for n in range(3, 12):
        term = term * zt / n
        acc += term
    phi2[t2] = acc
    return ez, phi1, phi2


def phi_matrices(A: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched ``(e^A, phi1(A), phi2(A))`` from one augmented matrix exponential."""
    nm, n, _ = A.shape
    B = np.zeros((nm, 3 * n, 3 * n), dtype=A.dtype)
    eye = np.eye(n)
    B[:, :n, :n] = A
    B[:, :n, n : 2 * n] = eye
    B[:, n : 2 * n, 2 * n :] = eye
    eB = scipy.linalg.expm(B)
    return eB[:, :n, :n], eB[:, :n, n : 2 * n], eB[:, :n, 2 * n :]


# -- steppers ------------------------------------------------------------------


class _ModeSpace:
    """Gather/scatter between full half-spectrum arrays and the dealiased modes."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.mask = grid.dealias_mask
        self.k = np.stack([kd[self.mask] for kd in grid.deriv_wavenumbers])  # (dims, nm)
        kk = np.sum(self.k**2, axis=0)
        self.inv_k2 = np.divide(1.0, kk, out=np.zeros_like(kk), where=kk > 0)
        self.k2 = grid.k2[self.mask]
        self.mult = grid.multiplicity[self.mask]
        self.nmodes = self.k.shape[1]
        self.zero = int(np.flatnonzero(self.k2 == 0)[0])

    def gather(self, coeffs: np.ndarray) -> np.ndarray:
        return coeffs[:, self.mask]

    def scatter(self, y: np.ndarray) -> np.ndarray:
        out = np.zeros((y.shape[0],) + self.grid.spectral_shape, dtype=complex)
        out[:, self.mask] = y
        return out

    def project(self, v: np.ndarray) -> np.ndarray:
        kv = np.sum(self.k * v, axis=0) * self.inv_k2
        out = v - self.k * kv
        out[:, self.zero] = 0.0
        return out

    def to_physical(self, y: np.ndarray) -> np.ndarray:
        g = self.grid
        return sfft.irfftn(self.scatter(y) * g.npoints, s=g.shape, axes=g.axes)

    def to_spectral(self, phys: np.ndarray) -> np.ndarray:
        g = self.grid
        return sfft.rfftn(phys, axes=g.axes)[:, self.mask] / g.npoints

    def sq_norm(self, y: np.ndarray, weights: np.ndarray | None = None) -> float:
        e = np.abs(y) ** 2 * self.mult
        if weights is not None:
            e = e * weights[:, None]
        return float(np.sum(e))


class OldroydStepper:
    """ETD2RK stepper for the coupled velocity / extra-stress system."""

    def __init__(self, grid: Grid, params: FluidParams, options: StepOptions = StepOptions()):
        self.grid = grid
        self.params = params
        self.options = options
        self.space = _ModeSpace(grid)
        d = grid.dims
        self.ntau = d * (d + 1) // 2
        self.n = d + self.ntau
        self.L = self._linear_operator()
        self.forcing = self.space.gather(params.forcing.field(grid).coeffs) / params.reynolds
        self.tau_weights = np.array([1.0 if m == n else 2.0 for m, n in sym_pairs(d)])
        self._props: dict[float, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self.last_umax = 0.0

    def _linear_operator(self) -> np.ndarray:
        """Per-mode matrices ``L`` of shape ``(nmodes, n, n)``."""
        p, opt, sp = self.params, self.options, self.space
        d, nt = self.grid.dims, self.ntau
        idx = sym_index(d)
        k = sp.k
        L = np.zeros((sp.nmodes, self.n, self.n), dtype=complex)
        for s in range(nt):
            L[:, d + s, d + s] = -1.0 / p.eps
        if not opt.freeze_velocity:
            nu_k2 = (1.0 - p.omega) * sp.k2 / p.reynolds
            # the longitudinal velocity subspace is invariant and empty for
            # solenoidal data; damping it keeps roundoff there from outliving
            # the solenoidal mode
            damp = (nu_k2 + 1.0 / p.eps) * (sp.k2 > 0)
            for m in range(d):
                L[:, m, m] = -nu_k2
                for q in range(d):
                    L[:, m, q] -= damp * k[m] * k[q] * sp.inv_k2
        if not opt.coupling:
            return L
        if not opt.freeze_velocity:
            # P(i tau k) / Re: Pi_mq * i k_n tau_qn
            Pi = np.eye(d)[:, :, None] - k[:, None, :] * k[None, :, :] * sp.inv_k2
            Pi[:, :, sp.zero] = 0.0
            for m in range(d):
                for q in range(d):
                    for n in range(d):
                        L[:, m, d + idx[q, n]] += 1j * Pi[m, q] * k[n] / p.reynolds
        # (2 omega / eps) D[u]: D_qn = (i/2)(k_n u_q + k_q u_n)
        c = p.omega / p.eps
        for s, (q, n) in enumerate(sym_pairs(d)):
            L[:, d + s, q] += 1j * c * k[n]
            L[:, d + s, n] += 1j * c * k[q]
        return L

    def propagators(self, dt: float):
        key = float(f"{dt:.12g}")
        if key not in self._props:
            E, P1, P2 = phi_matrices(self.L * key)
            self._props[key] = (E, P1 * key, P2 * key)
        return self._props[key]

    @staticmethod
    def _apply(M: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.einsum("mij,jm->im", M, y)

    def nonlinear(self, y: np.ndarray) -> np.ndarray:
        opt, sp = self.options, self.space
        d, nt = self.grid.dims, self.ntau
        out = np.zeros_like(y)
        if not opt.freeze_velocity:
            out[:d] = self.forcing
        if not opt.nonlinear:
            return out
        u, tau = y[:d], y[d:]
        k = sp.k
        gradu = (1j * k[None, :, :] * u[:, None, :]).reshape(d * d, -1)  # [m*d+n] = d_n u_m
        parts = [u, gradu, tau]
        if opt.advection:
            gradtau = (1j * k[None, :, :] * tau[:, None, :]).reshape(nt * d, -1)
            parts.append(gradtau)
        phys = sp.to_physical(np.concatenate(parts))
        shape = self.grid.shape
        up = phys[:d]
        gu = phys[d : d + d * d].reshape((d, d) + shape)
        taup = phys[d + d * d : d + d * d + nt]
        self.last_umax = float(np.sqrt(np.max(np.sum(up**2, axis=0))))
        prods = []
        if opt.advection:
            gt = phys[d + d * d + nt :].reshape((nt, d) + shape)
            prods.append(np.einsum("n...,mn...->m...", up, gu))
            stress = np.einsum("n...,sn...->s...", up, gt)
        else:
            stress = np.zeros((nt,) + shape)
        if opt.objective:
            stress = stress + matrix_to_sym(g_physical(gu, sym_to_matrix(taup, d), self.params.slip))
        prods.append(stress)
        spec = sp.to_spectral(np.concatenate(prods))
        if opt.advection and not opt.freeze_velocity:
            out[:d] -= sp.project(spec[:d])
        out[d:] -= spec[-nt:]
        return out

    def step(self, y: np.ndarray, dt: float) -> np.ndarray:
        E, P1, P2 = self.propagators(dt)
        n0 = self.nonlinear(y)
        a = self._apply(E, y) + self._apply(P1, n0)
        if self.options.nonlinear:
            a = self._clean(a)
            y1 = a + self._apply(P2, self.nonlinear(a) - n0)
        else:
            y1 = a
        return self._clean(y1)

    def _clean(self, y: np.ndarray) -> np.ndarray:
        d = self.grid.dims
        if not self.options.freeze_velocity:
            y[:d] = self.space.project(y[:d])
        return y

    def pack(self, state: FlowState) -> np.ndarray:
        if state.tau_hat is None:
            raise ValueError("Oldroyd stepper needs a stress field")
        return np.concatenate([self.space.gather(state.u_hat.coeffs), self.space.gather(state.tau_hat.coeffs)])

    def unpack(self, y: np.ndarray, t: float) -> FlowState:
        d = self.grid.dims
        u = SpectralField(self.grid, VECTOR, self.space.scatter(y[:d]))
        tau = SpectralField(self.grid, SYMMETRIC, self.space.scatter(y[d:]))
        return FlowState(t, u, tau)

    def guard_norm(self, y: np.ndarray) -> float:
        d = self.grid.dims
        return math.sqrt(self.space.sq_norm(y[:d])) + math.sqrt(self.space.sq_norm(y[d:], self.tau_weights))


class NewtonianStepper:
    """ETD2RK stepper for incompressible Navier-Stokes, diagonal linear part."""

    def __init__(self, grid: Grid, params: FluidParams, options: StepOptions = StepOptions()):
        self.grid = grid
        self.params = params
        self.options = options
        self.space = _ModeSpace(grid)
        self.lam = -self.space.k2 / params.reynolds
        self.forcing = self.space.gather(params.forcing.field(grid).coeffs) / params.reynolds
        self._props: dict[float, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self.last_umax = 0.0

    def propagators(self, dt: float):
        key = float(f"{dt:.12g}")
        if key not in self._props:
            E, p1, p2 = phi_functions(self.lam * key)
            self._props[key] = (E, p1 * key, p2 * key)
        return self._props[key]

    def nonlinear(self, u: np.ndarray) -> np.ndarray:
        out = np.broadcast_to(self.forcing, u.shape).copy()
        if not self.options.advection:
            return out
        sp = self.space
        d = self.grid.dims
        gradu = (1j * sp.k[None, :, :] * u[:, None, :]).reshape(d * d, -1)
        phys = sp.to_physical(np.concatenate([u, gradu]))
        up = phys[:d]
        gu = phys[d:].reshape((d, d) + self.grid.shape)
        self.last_umax = float(np.sqrt(np.max(np.sum(up**2, axis=0))))
        adv = np.einsum("n...,mn...->m...", up, gu)
        out -= sp.project(sp.to_spectral(adv))
        return out

    def step(self, u: np.ndarray, dt: float) -> np.ndarray:
        E, P1, P2 = self.propagators(dt)
        n0 = self.nonlinear(u)
        a = self.space.project(E * u + P1 * n0)
        if self.options.advection:
            a = self.space.project(a + P2 * (self.nonlinear(a) - n0))
        return a

    def pack(self, state: FlowState) -> np.ndarray:
        return self.space.gather(state.u_hat.coeffs)

    def unpack(self, y: np.ndarray, t: float) -> FlowState:
        return FlowState(t, SpectralField(self.grid, VECTOR, self.space.scatter(y)))

    def guard_norm(self, y: np.ndarray) -> float:
        return math.sqrt(self.space.sq_norm(y))


@lru_cache(maxsize=32)
def _oldroyd_stepper(grid: Grid, params: FluidParams, options: StepOptions) -> OldroydStepper:
    return OldroydStepper(grid, params, options)


@lru_cache(maxsize=32)
def _newtonian_stepper(grid: Grid, params: FluidParams, options: StepOptions) -> NewtonianStepper:
    return NewtonianStepper(grid, params, options)


def _checked(stepper, y: np.ndarray, t: float) -> np.ndarray:
    if not np.all(np.isfinite(y)):
        raise BlowUpError(t, "non-finite coefficients")
    return y


def oldroyd_step(
    state: FlowState, params: FluidParams, dt: float, options: StepOptions = StepOptions()
) -> FlowState:
    """Advance the Oldroyd-B state by one ETD2RK step of size ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    st = _oldroyd_stepper(state.grid, params, options)
    y = _checked(st, st.step(st.pack(state), dt), state.t + dt)
    return st.unpack(y, state.t + dt)


def newtonian_step(
    state: FlowState, params: FluidParams, dt: float, options: StepOptions = StepOptions()
) -> FlowState:
    """Advance the Navier-Stokes state (full unit viscosity, no stress) by one step."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    st = _newtonian_stepper(state.grid, params, options)
    y = _checked(st, st.step(st.pack(state), dt), state.t + dt)
    return st.unpack(y, state.t + dt)


# -- independent per-mode oracle ---------------------------------------------


def expm_taylor(A: np.ndarray, tol: float = 1e-18) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a Taylor series run to convergence."""
    A = np.asarray(A, dtype=complex)
    norm = np.linalg.norm(A, 1)
    s = max(0, int(np.ceil(np.log2(norm))) + 1) if norm > 0.5 else 0
    B = A / 2.0**s
    term = np.eye(A.shape[0], dtype=complex)
    acc = term.copy()
    for j in range(1, 60):
        term = term @ B / j
        acc = acc + term
        if np.linalg.norm(term, 1) <= tol * np.linalg.norm(acc, 1):
            break
    for _ in range(s):
        acc = acc @ acc
    return acc


def linear_mode_matrix(k: Sequence[float], params: FluidParams, coupling: bool = True) -> np.ndarray:
    """Dense generator of the linearised single-mode system in ``[u, tau_sym]`` order."""
    k = np.asarray(k, dtype=float)
    d = k.size
    pairs = sym_pairs(d)
    nt = len(pairs)
    k2 = float(k @ k)
    Pi = np.eye(d) - np.outer(k, k) / k2
    A = np.zeros((d + nt, d + nt), dtype=complex)
    nu_k2 = (1.0 - params.omega) * k2 / params.reynolds
    # extra decay on the (invariant, unexcited) longitudinal direction so its
    # roundoff cannot dominate the slower-decaying solenoidal answer
    A[:d, :d] = -nu_k2 * np.eye(d) - (nu_k2 + 1.0 / params.eps) * (np.eye(d) - Pi)
    A[d:, d:] = -np.eye(nt) / params.eps
    if coupling:
        for s, (q, n) in enumerate(pairs):
            # tau k contributes through both (q, n) and (n, q)
            e = np.zeros(d, dtype=complex)
            e[q] += 1j * k[n]
            if q != n:
                e[n] += 1j * k[q]
            A[:d, d + s] = Pi @ e / params.reynolds
            A[d + s, q] += 1j * params.omega * k[n] / params.eps
            A[d + s, n] += 1j * params.omega * k[q] / params.eps
    return A


def linear_mode_solution(
    k: Sequence[float],
    params: FluidParams,
    u_k0: np.ndarray,
    tau_k0: np.ndarray,
    t: float,
    f_k: np.ndarray | None = None,
    coupling: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact solution at time ``t`` of the linearised system for one wavevector.

    ``Re u' = -(1 - omega)|k|^2 u + Pi_k(i tau k) + Pi_k f``,
    ``eps tau' = -tau + i omega (k u^T + u k^T)``; ``tau`` in symmetric storage.
    """
    k = np.asarray(k, dtype=float)
    if not np.any(k):
        raise ValueError("k must be nonzero")
    d = k.size
    A = linear_mode_matrix(k, params, coupling)
    n = A.shape[0]
    y0 = np.concatenate([np.asarray(u_k0, dtype=complex), np.asarray(tau_k0, dtype=complex)])
    if t == 0:
        return y0[:d].copy(), y0[d:].copy()
    # diagonal similarity balancing the two coupling blocks; without it the
    # squaring phase loses digits once omega/eps dwarfs 1/Re
    scale = np.ones(n)
    scale[d:] = math.sqrt(params.eps / (params.omega * params.reynolds))
    Ab = A * scale[:, None] / scale[None, :]
    if f_k is None:
        y = (expm_taylor(Ab * t) @ (scale * y0)) / scale
    else:
        k2 = float(k @ k)
        b = np.zeros(n, dtype=complex)
        b[:d] = (np.eye(d) - np.outer(k, k) / k2) @ np.asarray(f_k, dtype=complex) / params.reynolds
        aug = np.zeros((n + 1, n + 1), dtype=complex)
        aug[:n, :n] = Ab * t
        aug[:n, n] = scale * b * t
        y = (expm_taylor(aug) @ np.append(scale * y0, 1.0))[:n] / scale
    return y[:d], y[d:]


# -- trajectories ---------------------------------------------------------------


@dataclass
class Trajectory:
    """Snapshots of a run plus per-step monitor series."""

    snapshots: list[FlowState]
    params: FluidParams
    grid: Grid
    model: str
    options: StepOptions
    dt_base: float
    series: dict[str, NormSeries] = field(default_factory=dict)
    blowup_time: float | None = None
    blowup_reason: str | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def final(self) -> FlowState:
        return self.snapshots[-1]

    @property
    def completed(self) -> bool:
        return self.blowup_time is None


@dataclass(frozen=True)
class LayerSpec:
    """Resolution of the initial relaxation layer: window length and sample spacing."""

    window: float
    sample: float


def default_layer(eps: float) -> LayerSpec:
    return LayerSpec(window=10.0 * eps, sample=eps / 20.0)


def snapshot_times(horizon: float, stride: float, layer: LayerSpec | None = None) -> np.ndarray:
    """Deterministic output schedule: every ``stride``, refined inside the layer window."""
    if horizon <= 0:
        return np.array([0.0])
    n = int(math.floor(horizon / stride + 1e-9))
    coarse = [i * stride for i in range(n + 1)]
    if horizon - coarse[-1] > 1e-12 * max(1.0, horizon):
        coarse.append(horizon)
    if layer is None:
        return np.array(coarse)
    # layer samples only up to the window end; near-duplicates of coarse times are dropped
    nfine = int(math.ceil(min(layer.window, horizon) / layer.sample - 1e-9))
    tol = 1e-9 * min(stride, layer.sample)
    fine = [q * layer.sample for q in range(1, nfine + 1)]
    fine = [t for t in fine if t < coarse[-1] - tol and min(abs(t - c) for c in coarse) > tol]
    return np.array(sorted(coarse + fine))


def run(
    initial: FlowState,
    params: FluidParams,
    horizon: float,
    dt_policy: DtPolicy = DtPolicy(),
    stride: float | None = None,
    *,
    model: str = "oldroyd",
    layer: LayerSpec | bool | None = True,
    options: StepOptions = StepOptions(),
    monitors: dict[str, Callable[[FlowState], float]] | None = None,
    times: Sequence[float] | None = None,
) -> Trajectory:
    """Integrate from ``initial`` to ``horizon`` and record snapshots.

    The step is ``min(accuracy cap, CFL cap)`` shrunk so that it divides each
    output interval. For Oldroyd runs ``layer=True`` refines the output (and
    hence the step) to ``eps/20`` over the first ``10 eps``. Blow-up ends the
    run early with ``blowup_time`` set instead of raising.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if model not in ("oldroyd", "newtonian"):
        raise ValueError(f"unknown model {model!r}")
    grid = initial.grid
    if model == "oldroyd":
        stepper = _oldroyd_stepper(grid, params, options)
        if initial.tau_hat is None:
            raise ValueError("Oldroyd run needs an initial stress")
    else:
        stepper = _newtonian_stepper(grid, params, options)
    u0 = initial.u_hat if _is_clean_velocity(initial.u_hat) else dealias(leray_project(initial.u_hat))
    tau0 = dealias(initial.tau_hat) if model == "oldroyd" else None
    state0 = FlowState(0.0 + initial.t, u0, tau0)
    y = stepper.pack(state0)

    umax0 = float(np.sqrt(np.max(np.sum(_phys_velocity(u0) ** 2, axis=0))))
    dt_base = min(dt_policy.accuracy_cap(grid), dt_policy.cfl_cap(grid, umax0))
    if stride is None:
        stride = 10 * dt_base
    if not stride > 0:
        raise ValueError("snapshot stride must be positive")
    if layer is True:
        layer = default_layer(params.eps) if model == "oldroyd" else None
    elif layer is False:
        layer = None
    if times is None:
        rel = snapshot_times(horizon, stride, layer)
    else:
        rel = np.asarray(times, dtype=float) - initial.t
        if rel[0] != 0 or np.any(np.diff(rel) <= 0):
            raise ValueError("output times must start at the initial time and increase")
    t_out = initial.t + rel

    traj = Trajectory([state0], params, grid, model, options, dt_base)
    traj.metadata.update(horizon=horizon, stride=stride, layer=layer)
    monitors = monitors or {}
    mon_t = [state0.t]
    mon_v = {name: [fn(state0)] for name, fn in monitors.items()}
    g0 = stepper.guard_norm(y)
    refine = 0
    t = state0.t
    try:
        for i in range(1, len(t_out)):
            length = t_out[i] - t_out[i - 1]
            nsteps = max(1, int(math.ceil(length / dt_base - 1e-9))) * 2**refine
            umax = stepper.last_umax if stepper.last_umax > 0 else umax0
            while length / nsteps > dt_policy.cfl_cap(grid, umax) * (1 + 1e-12):
                refine += 1
                nsteps *= 2
            dt = length / nsteps
            for j in range(nsteps):
                y = stepper.step(y, dt)
                t = t_out[i - 1] + (j + 1) * dt if j + 1 < nsteps else t_out[i]
                if not np.all(np.isfinite(y)):
                    raise BlowUpError(t, "non-finite coefficients")
                gn = stepper.guard_norm(y)
                if gn > BLOWUP_FACTOR * max(g0, 1e-300):
                    raise BlowUpError(t, f"norm {gn:.3g} exceeds {BLOWUP_FACTOR:g} x initial {g0:.3g}")
                if monitors:
                    st = stepper.unpack(y, t)
                    mon_t.append(t)
                    for name, fn in monitors.items():
                        mon_v[name].append(fn(st))
            traj.snapshots.append(stepper.unpack(y.copy(), float(t_out[i])))
    except BlowUpError as exc:
        log.warning("%s run stopped: %s", model, exc)
        traj.blowup_time = exc.t
        traj.blowup_reason = exc.reason
    for name in monitors:
        traj.series[name] = NormSeries(np.array(mon_t), np.array(mon_v[name]), name)
    return traj


def _is_clean_velocity(u: SpectralField) -> bool:
    """Already dealiased and solenoidal to roundoff.

    Such fields (e.g. a checkpointed state) are used as given, because a second
    projection perturbs the last bits and would break bit-exact resumption.
    """
    g = u.grid
    if np.any(u.coeffs[:, ~g.dealias_mask] != 0):
        return False
    scale = float(np.max(np.abs(u.coeffs)))
    return float(np.max(np.abs(divergence(u).coeffs))) <= 1e-13 * max(scale, 1e-300) * g.resolution


def _phys_velocity(u: SpectralField) -> np.ndarray:
    g = u.grid
    return sfft.irfftn(u.coeffs * g.npoints, s=g.shape, axes=g.axes)
