"""Norms and limit diagnostics.

Sobolev and homogeneous Besov norms of spectral fields, dyadic index-subset
semi-norms, space-time norms of sampled series, the two energy functionals
that control the distance to the Newtonian flow, and rate estimators.

All mode reductions use ``numpy.sum`` over C-ordered arrays, so results are
bit-reproducible for identical inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np
import scipy.integrate

from .constitutive import FluidParams, besov_gamma, elastic_defect
from .spectral import LPFamily, SpectralField, mode_energy, split_frequencies

if TYPE_CHECKING:
    from .solver import Trajectory


@dataclass(frozen=True)
class SplitConfig:
    """Frequency-splitting exponents and regularity indices.

    Cut-off between low and high frequencies is ``eps**-alpha``.
    """

    alpha: float = 0.125
    beta: float = 0.125
    s: float = 2.0
    s_prime: float = 1.5

    def cutoff(self, eps: float) -> float:
        return eps**-self.alpha

    def sobolev_violations(self, dims: int) -> list[str]:
        out = []
        if not self.alpha > 0:
            out.append(f"alpha > 0 violated (alpha={self.alpha})")
        if not self.beta > 0:
            out.append(f"beta > 0 violated (beta={self.beta})")
        margin = 1 - 3 * self.beta - 2 * self.alpha
        if not margin > 1e-12:
            shown = 0.0 if abs(margin) <= 1e-12 else margin
            out.append(f"1-3beta-2alpha>0 violated: 1-3({self.beta:g})-2({self.alpha:g}) = {shown:.4g} is not > 0")
        if not dims / 2 < self.s_prime <= self.s:
            out.append(f"N/2 < s' <= s violated (N={dims}, s'={self.s_prime}, s={self.s})")
        return out

    def besov_violations(self) -> list[str]:
        out = []
        if not 0 < self.alpha < 0.5:
            out.append(f"0<alpha<1/2 violated (alpha={self.alpha})")
        if not 0 < 2 * self.beta < 1 - 2 * self.alpha:
            out.append(f"0<2beta<1-2alpha violated (beta={self.beta}, alpha={self.alpha})")
        return out


@dataclass
class NormSeries:
    times: np.ndarray
    values: np.ndarray
    kind: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values differ in length")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return self.times.size


# -- spatial norms -------------------------------------------------------------


def sobolev_norm(f: SpectralField, s: float) -> float:
    """``(sum_k (1 + |k|^2)^s |f_k|^2)^(1/2)`` with Frobenius tensor weights."""
    w = (1.0 + f.grid.k2) ** s
    return math.sqrt(float(np.sum(w * mode_energy(f))))


def gradient_sobolev_norm(f: SpectralField, s: float) -> float:
    """``||grad f||_{H^s}``, i.e. the ``|k|^2``-weighted H^s sum."""
    w = (1.0 + f.grid.k2) ** s * f.grid.k2
    return math.sqrt(float(np.sum(w * mode_energy(f))))


def block_norms(f: SpectralField, family: LPFamily | None = None) -> dict[int, float]:
    """``||Delta_j f||_{L2}`` for every active dyadic index."""
    family = family or LPFamily(f.grid)
    e = mode_energy(f)
    return {j: math.sqrt(float(np.sum(family.weights(j) ** 2 * e))) for j in family.j_range}


def index_sets(eps: float, alpha: float, js: Iterable[int]) -> dict[str, list[int]]:
    """Partition dyadic indices into I (2^j < 1), J (1 <= 2^j <= eps^-alpha) and K (2^j > eps^-alpha)."""
    top = eps**-alpha
    sets = {"I": [], "J": [], "K": []}
    for j in js:
        if j < 0:
            sets["I"].append(j)
        elif 2.0**j <= top * (1 + 1e-12):
            sets["J"].append(j)
        else:
            sets["K"].append(j)
    return sets


def besov_norm(
    f: SpectralField,
    s: float,
    subset: str = "all",
    eps: float | None = None,
    alpha: float | None = None,
    family: LPFamily | None = None,
) -> float:
    """Homogeneous ``sum_j 2^{js} ||Delta_j f||`` over a dyadic index subset.

    ``subset`` is ``"all"`` or any combination of ``I``, ``J``, ``K`` (e.g.
    ``"IJ"`` for the union). The zero mode never contributes.
    """
    norms = block_norms(f, family)
    if subset == "all":
        js = list(norms)
    else:
        if eps is None or alpha is None:
            raise ValueError("index subsets need eps and alpha")
        sets = index_sets(eps, alpha, norms)
        if not subset or any(c not in sets for c in subset):
            raise ValueError(f"unknown subset {subset!r}")
        js = sorted(j for c in subset for j in sets[c])
    return float(sum(2.0 ** (j * s) * norms[j] for j in js))


# -- time norms ----------------------------------------------------------------


def trapezoid(values: np.ndarray, times: np.ndarray) -> float:
    if values.size < 2:
        return 0.0
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(times)))


def cumulative_trapezoid(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values, dtype=float)
    if values.size > 1:
        out[1:] = np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(times))
    return out


def spacetime_norm(series: NormSeries, exponent) -> float:
    """``L^q`` in time of a sampled spatial norm (trapezoid rule); ``q = inf`` gives the max."""
    if len(series) == 0:
        raise ValueError("empty series")
    if exponent in (math.inf, "inf"):
        return float(np.max(series.values))
    q = float(exponent)
    if q not in (1.0, 2.0):
        raise ValueError("exponent must be 1, 2 or inf")
    if len(series) < 2:
        raise ValueError("at least two samples are needed for a time integral")
    return trapezoid(series.values**q, series.times) ** (1.0 / q)


# -- energy balance -------------------------------------------------------------


def energy(state, params: FluidParams) -> float:
    """``Re/2 ||u||^2 + eps/(4 omega) ||tau||^2``; Newtonian states have no stress term."""
    e = params.reynolds / 2 * sobolev_norm(state.u_hat, 0.0) ** 2
    if state.tau_hat is not None:
        e += params.eps / (4 * params.omega) * sobolev_norm(state.tau_hat, 0.0) ** 2
    return e


def dissipation(state, params: FluidParams) -> float:
    """Rate matching :func:`energy` when ``a = 0`` and ``f = 0``."""
    if state.tau_hat is None:
        return gradient_sobolev_norm(state.u_hat, 0.0) ** 2
    return (1 - params.omega) * gradient_sobolev_norm(state.u_hat, 0.0) ** 2 + sobolev_norm(
        state.tau_hat, 0.0
    ) ** 2 / (2 * params.omega)


def energy_drift(E: NormSeries, D: NormSeries, rule: str = "simpson") -> float:
    """Relative defect ``(E(T) + int_0^T D - E(0)) / E(0)`` of sampled balance series.

    Simpson's rule keeps the quadrature error well below the scheme's own
    defect on per-step samples; ``rule="trapezoid"`` is available for comparison.
    """
    if E.times.shape != D.times.shape or np.any(E.times != D.times):
        raise ValueError("energy and dissipation series must share their times")
    if rule == "simpson":
        integral = float(scipy.integrate.simpson(D.values, x=D.times))
    elif rule == "trapezoid":
        integral = trapezoid(D.values, D.times)
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    return (E.values[-1] + integral - E.values[0]) / E.values[0]


# -- energy functionals --------------------------------------------------------


def align(oldroyd: "Trajectory", newtonian: "Trajectory", tol: float = 1e-9) -> list[tuple[int, int]]:
    """Index pairs of snapshots shared by both trajectories.

    Every reference time up to the Oldroyd final time must also be an
    Oldroyd snapshot time.
    """
    to, tn = oldroyd.times, newtonian.times
    scale = tol * max(1.0, float(tn[-1]) if tn.size else 1.0)
    pairs = []
    for jn, t in enumerate(tn):
        if t > to[-1] + scale:
            break
        io = int(np.searchsorted(to, t - scale))
        if io >= to.size or abs(to[io] - t) > scale:
            raise ValueError(f"misaligned trajectories: reference time {t:.12g} has no Oldroyd snapshot")
        pairs.append((io, jn))
    if not pairs:
        raise ValueError("misaligned trajectories: no shared snapshot times")
    return pairs


def _sobolev_parts(state, v_hat, cfg: SplitConfig, params: FluidParams, s: float) -> dict[str, float]:
    eps, om, beta = params.eps, params.omega, cfg.beta
    Z = elastic_defect(state, om)
    low, high = split_frequencies(state.tau_hat, cfg.cutoff(eps))
    parts = {
        "tau": eps / (4 * om) * sobolev_norm(state.tau_hat, s) ** 2,
        "Z": eps ** (2 * beta) / 2 * sobolev_norm(Z, s - 1) ** 2,
        "int_tau": sobolev_norm(high, s) ** 2 / 8 + eps**beta / 8 * sobolev_norm(low, s) ** 2,
        "int_Z": eps ** (2 * beta - 1) / 4 * sobolev_norm(Z, s - 1) ** 2,
    }
    if v_hat is not None:
        W = state.u_hat - v_hat
        parts["W"] = params.reynolds / 2 * sobolev_norm(W, s) ** 2
        parts["int_W"] = (1 - om) / 4 * gradient_sobolev_norm(W, s) ** 2
    return parts


def _besov_parts(state, v_hat, cfg: SplitConfig, params: FluidParams, s: float, family) -> dict[str, float]:
    eps, om, beta, alpha = params.eps, params.omega, cfg.beta, cfg.alpha
    om0 = params.omega0 if params.omega0 is not None else om
    Z = elastic_defect(state, om)
    kw = dict(eps=eps, alpha=alpha, family=family)
    tau = state.tau_hat
    parts = {
        "tau": 4 * eps * besov_norm(tau, s, family=family),
        "Z": eps ** (2 * beta) * besov_norm(Z, s - 2, "IJ", **kw),
        "int_tau": besov_norm(tau, s, "K", **kw) + eps**beta * besov_norm(tau, s, "IJ", **kw),
        "int_Z": eps ** (2 * beta - 1) / 2 * (besov_norm(Z, s - 2, "J", **kw) + besov_norm(Z, s, "I", **kw)),
    }
    if v_hat is not None:
        W = state.u_hat - v_hat
        parts["W"] = params.reynolds * besov_norm(W, s - 1, family=family)
        parts["int_W"] = besov_gamma(om0) / 2 * besov_norm(W, s + 1, family=family)
        # split of the aggregated dissipation term, recorded for inspection
        parts["int_W_K"] = besov_gamma(om0) * besov_norm(W, s + 1, "K", **kw)
        parts["int_W_IJ"] = besov_norm(W, s + 1, "IJ", **kw)
    return parts


INSTANT = ("W", "tau", "Z")
INTEGRATED = ("int_W", "int_tau", "int_Z")


def energy_components(
    oldroyd: "Trajectory",
    newtonian: "Trajectory",
    cfg: SplitConfig,
    params: FluidParams | None = None,
    variant: str = "sobolev",
    s: float | None = None,
) -> dict[str, NormSeries]:
    """Every term of the energy functional as a time series.

    Terms that involve only the Oldroyd solution are sampled on all Oldroyd
    snapshots (layer-resolved); terms involving ``W = u - v`` on the shared
    snapshots. Integrated terms are returned as running integrals evaluated
    at the shared times.
    """
    params = params or oldroyd.params
    s = cfg.s if s is None else s
    pairs = align(oldroyd, newtonian)
    family = LPFamily(oldroyd.grid)
    if variant == "sobolev":
        parts = lambda st, v: _sobolev_parts(st, v, cfg, params, s)  # noqa: E731
    elif variant == "besov":
        parts = lambda st, v: _besov_parts(st, v, cfg, params, s, family)  # noqa: E731
    else:
        raise ValueError(f"unknown variant {variant!r}")

    to = oldroyd.times
    own = [parts(st, None) for st in oldroyd.snapshots]
    shared = [parts(oldroyd.snapshots[io], newtonian.snapshots[jn].u_hat) for io, jn in pairs]
    io_idx = np.array([io for io, _ in pairs])
    ts = to[io_idx]
    out: dict[str, NormSeries] = {}
    for name in ("tau", "Z"):
        out[name] = NormSeries(ts, np.array([own[i][name] for i in io_idx]), name)
    out["W"] = NormSeries(ts, np.array([p["W"] for p in shared]), "W")
    for name in ("int_tau", "int_Z"):
        run = cumulative_trapezoid(np.array([p[name] for p in own]), to)
        out[name] = NormSeries(ts, run[io_idx], name)
    out["int_W"] = NormSeries(ts, cumulative_trapezoid(np.array([p["int_W"] for p in shared]), ts), "int_W")
    for name in ("int_W_K", "int_W_IJ"):
        if name in shared[0]:
            out[name] = NormSeries(ts, cumulative_trapezoid(np.array([p[name] for p in shared]), ts), name)
    return out


def energy_functional_X(
    oldroyd: "Trajectory",
    newtonian: "Trajectory",
    cfg: SplitConfig,
    params: FluidParams | None = None,
    variant: str = "sobolev",
    s: float | None = None,
) -> NormSeries:
    """Instantaneous terms plus running dissipation integrals, on the shared times."""
    comps = energy_components(oldroyd, newtonian, cfg, params, variant, s)
    total = sum(comps[name].values for name in INSTANT + INTEGRATED)
    return NormSeries(comps["W"].times, total, f"X_{variant}")


def energy_X_instant(state, v_hat, cfg: SplitConfig, params: FluidParams, variant="sobolev", s=None) -> float:
    """Instantaneous part of the functional at one state (no time integral)."""
    s = cfg.s if s is None else s
    if variant == "sobolev":
        p = _sobolev_parts(state, v_hat, cfg, params, s)
    else:
        p = _besov_parts(state, v_hat, cfg, params, s, LPFamily(state.grid))
    return p["W"] + p["tau"] + p["Z"]


# -- rates ---------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual: float


def fit_rate(epsilons: Sequence[float], errors: Sequence[float]) -> RateFit:
    """Least-squares line through ``(log eps, log error)``; the slope is the measured order."""
    x = np.asarray(epsilons, dtype=float)
    y = np.asarray(errors, dtype=float)
    if x.size != y.size:
        raise ValueError("epsilons and errors differ in length")
    if x.size < 3:
        raise ValueError("at least three points are needed for a rate fit")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("rate fit needs positive inputs")
    lx, ly = np.log(x), np.log(y)
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = float(np.sqrt(np.mean((A @ [slope, intercept] - ly) ** 2)))
    return RateFit(float(slope), float(intercept), resid)


def damping_rate(series: NormSeries, eps: float, window: float | None = None) -> float:
    """Decay rate of ``||Z(t)||`` from a log-linear fit over the initial window.

    The window defaults to ``5 eps`` from the first sample; sampling coarser
    than ``eps/4`` inside it is rejected.
    """
    window = 5 * eps if window is None else window
    t, v = series.times, series.values
    sel = t <= t[0] + window * (1 + 1e-9)
    ts, vs = t[sel], v[sel]
    if ts.size < 3:
        raise ValueError("window holds fewer than three samples")
    if np.max(np.diff(ts)) > eps / 4 * (1 + 1e-9):
        raise ValueError(f"window too coarse: sampling {np.max(np.diff(ts)):.3g} > eps/4 = {eps / 4:.3g}")
    if np.any(vs <= 0):
        raise ValueError("series must stay positive inside the window")
    slope, _ = np.polyfit(ts - ts[0], np.log(vs), 1)
    return float(-slope)


def time_to_half(series: NormSeries) -> float:
    """First time at which the series drops to half its initial value (log-linear interpolation)."""
    t, v = series.times, series.values
    target = 0.5 * v[0]
    below = np.flatnonzero(v <= target)
    if below.size == 0:
        return math.inf
    i = int(below[0])
    if i == 0:
        return float(t[0])
    a, b = math.log(v[i - 1]), math.log(max(v[i], 1e-300))
    frac = (a - math.log(target)) / (a - b) if a != b else 1.0
    return float(t[i - 1] + frac * (t[i] - t[i - 1]) - t[0])


def norm_series(traj: "Trajectory", fn, kind: str = "") -> NormSeries:
    """Evaluate ``fn(state)`` on every snapshot of a trajectory."""
    return NormSeries(traj.times, np.array([fn(st) for st in traj.snapshots]), kind)
