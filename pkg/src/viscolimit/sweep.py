"""The epsilon sweep: distance of Oldroyd-B runs to one Navier-Stokes reference."""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .analysis import (
    NormSeries,
    align,
    besov_norm,
    damping_rate,
    energy_functional_X,
    fit_rate,
    sobolev_norm,
    spacetime_norm,
    time_to_half,
)
from .config import ExperimentConfig
from .constitutive import FlowState, elastic_defect
from .initial import initial_state
from .solver import Trajectory, run
from .spectral import LPFamily

log = logging.getLogger(__name__)

WORKERS_ENV = "VISCOLIMIT_WORKERS"

# metric columns in report order; the version is bumped whenever this changes
COLUMNS = (
    "eps",
    "u_err",
    "z_norm",
    "eps_tau",
    "X_T0",
    "damping_eps",
    "z_half_over_eps",
    "tau_mean_T0",
    "blowup",
    "blowup_time",
)
COLUMNS_VERSION = 1
CONVERGENCE_METRICS = ("u_err", "z_norm", "eps_tau")


class SweepAborted(RuntimeError):
    """The Newtonian reference itself failed, so no comparison is possible."""


@dataclass
class EpsResult:
    row: dict[str, float]
    series: dict[str, NormSeries]
    wall_time: float
    snapshots: int


@dataclass
class ConvergenceReport:
    rows: list[dict[str, float]]
    slopes: dict[str, float | None]
    monotone: dict[str, bool | None]
    mode: str
    norm_index: float
    velocity_index: float
    reference: dict
    empirical_eps0: float | None
    wall_times: list[float] = field(default_factory=list)
    series: list[dict[str, NormSeries]] = field(default_factory=list)
    reference_series: dict[str, NormSeries] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    version: str = __version__


def reference_run(cfg: ExperimentConfig) -> Trajectory:
    """Navier-Stokes run from the configured velocity; raises if it blows up."""
    init = initial_state(cfg)
    traj = run(
        FlowState(0.0, init.u_hat),
        cfg.params_for(cfg.epsilons[0]),
        cfg.horizon,
        cfg.dt_policy,
        cfg.stride,
        model="newtonian",
    )
    if not traj.completed:
        raise SweepAborted(
            f"Newtonian reference blew up at t={traj.blowup_time:.6g} < T0={cfg.horizon} ({traj.blowup_reason}); "
            "lower the horizon or the data size"
        )
    return traj


def oldroyd_run(cfg: ExperimentConfig, eps: float) -> Trajectory:
    """One Oldroyd-B run; its output schedule contains every reference time."""
    return run(initial_state(cfg, eps), cfg.params_for(eps), cfg.horizon, cfg.dt_policy, cfg.stride, model="oldroyd")


def _sobolev_or_besov(cfg: ExperimentConfig, r: float):
    if cfg.mode == "sobolev":
        return lambda f: sobolev_norm(f, r)
    family = LPFamily(cfg.grid)
    return lambda f: besov_norm(f, r, family=family)


def evaluate(oldroyd: Trajectory, reference: Trajectory, cfg: ExperimentConfig) -> tuple[dict, dict]:
    """Report row and plot series for one Oldroyd trajectory."""
    params = oldroyd.params
    eps = params.eps
    nan = math.nan
    row = dict.fromkeys(COLUMNS, nan)
    row["eps"] = eps
    row["blowup"] = 0.0 if oldroyd.completed else 1.0
    row["blowup_time"] = nan if oldroyd.completed else oldroyd.blowup_time
    if not oldroyd.completed:
        return row, {}

    norm = _sobolev_or_besov(cfg, cfg.norm_index)
    unorm = _sobolev_or_besov(cfg, cfg.velocity_index)
    pairs = align(oldroyd, reference)
    t_all = oldroyd.times
    t_shared = t_all[[io for io, _ in pairs]]
    werr = NormSeries(
        t_shared,
        [unorm(oldroyd.snapshots[io].u_hat - reference.snapshots[jn].u_hat) for io, jn in pairs],
        "u_err",
    )
    Z = [elastic_defect(st, params.omega) for st in oldroyd.snapshots]
    zs = NormSeries(t_all, [norm(z) for z in Z], "Z")
    z_l2 = NormSeries(t_all, [sobolev_norm(z, 0.0) for z in Z], "Z_L2")
    etau = NormSeries(t_all, [math.sqrt(eps) * norm(st.tau_hat) for st in oldroyd.snapshots], "eps_tau")

    row["u_err"] = spacetime_norm(werr, math.inf)
    row["z_norm"] = spacetime_norm(zs, 2 if cfg.mode == "sobolev" else 1)
    row["eps_tau"] = spacetime_norm(etau, math.inf)
    variant = cfg.mode
    X = energy_functional_X(oldroyd, reference, cfg.split, params, variant=variant, s=cfg.norm_index)
    row["X_T0"] = float(X.values[-1])
    try:
        row["damping_eps"] = damping_rate(z_l2, eps) * eps
    except ValueError as exc:
        log.info("eps=%g: no damping rate (%s)", eps, exc)
    row["z_half_over_eps"] = time_to_half(z_l2) / eps
    tau_T = oldroyd.final.tau_hat
    origin = (slice(None),) + (0,) * cfg.grid.dims
    mean = tau_T.coeffs[origin].real
    weights = np.array([1.0 if m == n else 2.0 for m in range(cfg.grid.dims) for n in range(m, cfg.grid.dims)])
    row["tau_mean_T0"] = float(np.sqrt(np.sum(weights * mean**2)))
    return row, {"u_err": werr, "Z": zs, "Z_L2": z_l2, "eps_tau": etau, "X": X}


def _strictly_decreasing(values: list[float]) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def summarize(rows: list[dict]) -> tuple[dict, dict, float | None]:
    """Monotonicity flags, log-log slopes and the empirical eps_0 over non-blow-up rows."""
    ok = [r for r in rows if r["blowup"] == 0.0]
    monotone: dict[str, bool | None] = {}
    slopes: dict[str, float | None] = {}
    for name in CONVERGENCE_METRICS + ("X_T0",):
        vals = [r[name] for r in ok]
        monotone[name] = _strictly_decreasing(vals) if len(vals) >= 2 else None
        slopes[name] = None
        if len(vals) >= 3 and all(v > 0 and math.isfinite(v) for v in vals):
            slopes[name] = fit_rate([r["eps"] for r in ok], vals).slope
    eps0 = None
    for r in rows:
        if r["blowup"] == 0.0 and all(q["blowup"] == 0.0 for q in rows if q["eps"] <= r["eps"]):
            eps0 = r["eps"]
            break
    return monotone, slopes, eps0


_SHARED: dict = {}


def _init_worker(cfg: ExperimentConfig, reference: Trajectory):
    _SHARED["cfg"] = cfg
    _SHARED["reference"] = reference


def _one(eps: float) -> EpsResult:
    cfg, reference = _SHARED["cfg"], _SHARED["reference"]
    start = time.perf_counter()
    traj = oldroyd_run(cfg, eps)
    row, series = evaluate(traj, reference, cfg)
    if not traj.completed:
        log.warning("eps=%g blew up at t=%.6g; flagged as eps >= eps_0", eps, traj.blowup_time)
    return EpsResult(row, series, time.perf_counter() - start, len(traj.snapshots))


def default_workers(n_tasks: int) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be >= 1, got {n}")
        return n
    return max(1, min(n_tasks, os.cpu_count() or 1))


def sweep(cfg: ExperimentConfig, workers: int | None = None, epsilons=None) -> ConvergenceReport:
    """Reference once, then one Oldroyd run per epsilon on a bounded pool."""
    epsilons = tuple(cfg.epsilons if epsilons is None else epsilons)
    start = time.perf_counter()
    reference = reference_run(cfg)
    ref_wall = time.perf_counter() - start
    workers = default_workers(len(epsilons)) if workers is None else workers
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if workers == 1 or len(epsilons) == 1:
        _init_worker(cfg, reference)
        results = [_one(e) for e in epsilons]
    else:
        with ProcessPoolExecutor(
            max_workers=min(workers, len(epsilons)), initializer=_init_worker, initargs=(cfg, reference)
        ) as pool:
            results = list(pool.map(_one, epsilons))
    rows = [r.row for r in results]
    monotone, slopes, eps0 = summarize(rows)
    for name in CONVERGENCE_METRICS:
        if monotone[name] is False:
            log.warning("metric %s is not strictly decreasing across the sweep", name)
    unorm = _sobolev_or_besov(cfg, cfg.velocity_index)
    ref_norm = NormSeries(reference.times, [unorm(st.u_hat) for st in reference.snapshots], "v")
    return ConvergenceReport(
        rows=rows,
        slopes=slopes,
        monotone=monotone,
        mode=cfg.mode,
        norm_index=cfg.norm_index,
        velocity_index=cfg.velocity_index,
        reference={
            "dt": reference.dt_base,
            "snapshots": len(reference.snapshots),
            "horizon": cfg.horizon,
            "completed": reference.completed,
            "sup_norm": float(np.max(ref_norm.values)),
            "wall_time": ref_wall,
        },
        empirical_eps0=eps0,
        wall_times=[r.wall_time for r in results],
        series=[r.series for r in results],
        reference_series={"v": ref_norm},
        config=cfg.source,
    )
