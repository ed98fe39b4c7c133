"""Experiment configuration: a flat TOML file with dotted sections.

Every key is optional except ``params.epsilons``. Example::

    grid.dims = 2
    grid.resolution = 64

    params.reynolds = 1.0
    params.omega = 0.5            # default 0.5 (sobolev mode) or 0.02 (besov mode)
    params.epsilons = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]

    split.mode = "sobolev"        # or "besov"
    split.alpha = 0.125
    split.beta = 0.125

    initial.velocity = "random_bandlimited"
    initial.kmax = 4
    initial.seed = 0
    initial.stress = "ill_prepared"

    run.horizon = 1.0

The full key list with defaults is in ``SCHEMA`` below.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .analysis import SplitConfig
from .constitutive import BESOV_OMEGA_LIMIT, FluidParams, Forcing, besov_gamma
from .solver import DtPolicy
from .spectral import Grid


class ConfigError(ValueError):
    """Invalid configuration; the message names the violated condition."""


_NUM = (int, float)

# section -> key -> (accepted types, default)
SCHEMA: dict[str, dict[str, tuple[tuple[type, ...], Any]]] = {
    "grid": {"dims": ((int,), 2), "resolution": ((int,), 64)},
    "params": {
        "reynolds": (_NUM, 1.0),
        "omega": (_NUM, None),
        "slip": (_NUM, 0.0),
        "delta": (_NUM, None),
        "omega0": (_NUM, None),
        "epsilons": ((list,), None),
        "omega_schedule": ((list,), None),
    },
    "forcing": {"kind": ((str,), "zero"), "amplitude": (_NUM, 0.0), "wavenumber": ((int,), 1)},
    "split": {
        "mode": ((str,), "sobolev"),
        "alpha": (_NUM, 0.125),
        "beta": (_NUM, 0.125),
        "s": (_NUM, 2.0),
        "s_prime": (_NUM, 1.5),
    },
    "initial": {
        "velocity": ((str,), "random_bandlimited"),
        "kmax": ((int,), 4),
        "seed": ((int,), 0),
        "amplitude": (_NUM, 1.0),
        "stress": ((str,), "ill_prepared"),
        "stress_amplitude": (_NUM, 1.0),
        "stress_seed": ((int,), 1),
        "stress_wavenumber": ((int,), 2),
        "checkpoint": ((str,), None),
    },
    "run": {
        "horizon": (_NUM, 1.0),
        "stride": (_NUM, None),
        "dt_accuracy": (_NUM, 1e-3),
        "dt_fixed": (_NUM, None),
        "cfl": (_NUM, 0.5),
    },
    "output": {"dir": ((str,), "out")},
}

VELOCITY_KINDS = ("taylor_green", "random_bandlimited")
STRESS_KINDS = ("well_prepared", "ill_prepared", "explicit")


@dataclass(frozen=True)
class InitialSpec:
    velocity: str = "random_bandlimited"
    kmax: int = 4
    seed: int = 0
    amplitude: float = 1.0
    stress: str = "ill_prepared"
    stress_amplitude: float = 1.0
    stress_seed: int = 1
    stress_wavenumber: int = 2
    checkpoint: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    grid: Grid
    base_params: FluidParams
    epsilons: tuple[float, ...]
    split: SplitConfig
    mode: str
    horizon: float
    initial: InitialSpec
    dt_policy: DtPolicy
    stride: float | None
    output_dir: Path
    omega_schedule: tuple[float, ...] | None = None
    source: dict = field(default_factory=dict, compare=False)

    @property
    def norm_index(self) -> float:
        """Regularity of the stress and defect metrics."""
        return self.split.s_prime if self.mode == "sobolev" else self.grid.dims / 2

    @property
    def velocity_index(self) -> float:
        """Regularity of the velocity error; one below the critical index in Besov mode."""
        return self.norm_index if self.mode == "sobolev" else self.grid.dims / 2 - 1

    def params_for(self, eps: float) -> FluidParams:
        p = self.base_params.with_eps(eps)
        if self.omega_schedule is not None:
            p = replace(p, omega=self.omega_schedule[self.epsilons.index(eps)])
        return p


def _flatten(doc: dict) -> dict[str, dict[str, Any]]:
    out: dict[str, dict[str, Any]] = {}
    for section, body in doc.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section {section!r} (expected one of {', '.join(SCHEMA)})")
        if not isinstance(body, dict):
            raise ConfigError(f"{section!r} must be a section, not a bare value")
        for key, value in body.items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            types, _ = SCHEMA[section][key]
            if isinstance(value, bool) or not isinstance(value, types):
                raise ConfigError(f"{section}.{key} has type {type(value).__name__}, expected {types[0].__name__}")
            out.setdefault(section, {})[key] = value
    return out


def _get(raw: dict, section: str, key: str, default=None):
    value = raw.get(section, {}).get(key)
    if value is None:
        schema_default = SCHEMA[section][key][1]
        return schema_default if default is None else default
    return value


def _float_list(raw: dict, key: str) -> tuple[float, ...] | None:
    value = raw.get("params", {}).get(key)
    if value is None:
        return None
    if not all(isinstance(x, _NUM) and not isinstance(x, bool) for x in value):
        raise ConfigError(f"params.{key} must be a list of numbers")
    return tuple(float(x) for x in value)


def from_dict(doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Validate a parsed document and fill defaults."""
    raw = _flatten(doc)
    dims, M = _get(raw, "grid", "dims"), _get(raw, "grid", "resolution")
    try:
        grid = Grid(dims, M)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    mode = _get(raw, "split", "mode")
    if mode not in ("sobolev", "besov"):
        raise ConfigError(f"split.mode must be 'sobolev' or 'besov', got {mode!r}")
    split = SplitConfig(
        alpha=float(_get(raw, "split", "alpha")),
        beta=float(_get(raw, "split", "beta")),
        s=float(_get(raw, "split", "s")),
        s_prime=float(_get(raw, "split", "s_prime")),
    )
    issues = split.sobolev_violations(dims) if mode == "sobolev" else split.besov_violations()
    if issues:
        raise ConfigError("; ".join(issues))

    eps_list = _float_list(raw, "epsilons")
    if not eps_list:
        raise ConfigError("params.epsilons is required and must be non-empty")
    if any(not (e > 0 and math.isfinite(e)) for e in eps_list):
        raise ConfigError(f"epsilon list must be positive: {list(eps_list)}")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError(f"epsilon list must be strictly decreasing: {list(eps_list)}")

    omega = _get(raw, "params", "omega", 0.5 if mode == "sobolev" else 0.02)
    delta = _get(raw, "params", "delta")
    omega0 = _get(raw, "params", "omega0")
    schedule = _float_list(raw, "omega_schedule")
    if schedule is not None and len(schedule) != len(eps_list):
        raise ConfigError("params.omega_schedule must have one entry per epsilon")
    omegas = schedule or (float(omega),)
    for om in omegas:
        _check_omega(om, mode, delta, omega0)

    try:
        forcing = Forcing(
            kind=_get(raw, "forcing", "kind"),
            amplitude=float(_get(raw, "forcing", "amplitude")),
            wavenumber=_get(raw, "forcing", "wavenumber"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if forcing.active and forcing.wavenumber > M // 3:
        raise ConfigError(f"forcing.wavenumber must be <= M/3 = {M // 3}")
    try:
        base = FluidParams(
            reynolds=float(_get(raw, "params", "reynolds")),
            weissenberg=eps_list[0],
            omega=float(omegas[0]),
            slip=float(_get(raw, "params", "slip")),
            delta=None if delta is None else float(delta),
            omega0=None if omega0 is None else float(omega0),
            forcing=forcing,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    init = InitialSpec(**{k: _get(raw, "initial", k) for k in SCHEMA["initial"]})
    if init.velocity not in VELOCITY_KINDS:
        raise ConfigError(f"initial.velocity must be one of {VELOCITY_KINDS}, got {init.velocity!r}")
    if init.stress not in STRESS_KINDS:
        raise ConfigError(f"initial.stress must be one of {STRESS_KINDS}, got {init.stress!r}")
    if init.velocity == "random_bandlimited" and not 1 <= init.kmax < M / 3:
        raise ConfigError(f"initial.kmax must satisfy 1 <= kmax < M/3 = {M / 3:.4g}, got {init.kmax}")
    if init.stress_wavenumber < 1 or init.stress_wavenumber >= M / 3:
        raise ConfigError(f"initial.stress_wavenumber must satisfy 1 <= k0 < M/3, got {init.stress_wavenumber}")
    if init.stress == "explicit":
        if init.checkpoint is None:
            raise ConfigError("initial.stress = 'explicit' needs initial.checkpoint")
        path = Path(init.checkpoint)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        init = replace(init, checkpoint=str(path))

    horizon = float(_get(raw, "run", "horizon"))
    if not horizon > 0:
        raise ConfigError(f"run.horizon must be > 0, got {horizon}")
    stride = _get(raw, "run", "stride")
    if stride is not None and not stride > 0:
        raise ConfigError(f"run.stride must be > 0, got {stride}")
    try:
        policy = DtPolicy(
            accuracy=float(_get(raw, "run", "dt_accuracy")),
            cfl=float(_get(raw, "run", "cfl")),
            fixed=_get(raw, "run", "dt_fixed"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    out_dir = Path(_get(raw, "output", "dir"))
    if base_dir is not None and not out_dir.is_absolute():
        out_dir = base_dir / out_dir
    return ExperimentConfig(
        grid=grid,
        base_params=base,
        epsilons=eps_list,
        split=split,
        mode=mode,
        horizon=horizon,
        initial=init,
        dt_policy=policy,
        stride=None if stride is None else float(stride),
        output_dir=out_dir,
        omega_schedule=schedule,
        source=raw,
    )


def _check_omega(om: float, mode: str, delta, omega0):
    if not 0 < om < 1:
        raise ConfigError(f"0 < omega < 1 violated: omega={om}")
    if mode == "sobolev":
        if delta is not None and om > 1 - delta:
            raise ConfigError(f"0 < omega <= 1 - delta violated: omega={om}, delta={delta}")
        return
    g = besov_gamma(om)
    if not g > 0:
        raise ConfigError(
            f"gamma(omega) = (1-omega)/2 - 16 omega = {g:.4g} must be > 0 (omega < {BESOV_OMEGA_LIMIT:.4g}); omega={om}"
        )
    if omega0 is not None:
        g0 = besov_gamma(omega0)
        if not g0 > 0:
            raise ConfigError(f"gamma(omega0) = (1-omega0)/2 - 16 omega0 = {g0:.4g} must be > 0")
        if om > omega0:
            raise ConfigError(f"omega <= omega0 violated: omega={om}, omega0={omega0}")


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from None
    try:
        return from_dict(doc, base_dir=path.parent)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
