"""Pseudo-spectral Oldroyd-B simulator and Newtonian-limit diagnostics on the torus."""

__version__ = "0.1.0"

from .analysis import (
    NormSeries,
    SplitConfig,
    besov_norm,
    damping_rate,
    energy_functional_X,
    fit_rate,
    sobolev_norm,
    spacetime_norm,
)
from .constitutive import (
    FlowState,
    FluidParams,
    Forcing,
    advect,
    elastic_defect,
    objective_bilinear,
    rate_of_strain,
    vorticity_tensor,
)
from .solver import (
    BlowUpError,
    DtPolicy,
    StepOptions,
    Trajectory,
    linear_mode_solution,
    newtonian_step,
    oldroyd_step,
    run,
)
from .spectral import (
    Grid,
    LPFamily,
    SpectralField,
    dealias,
    differentiate,
    leray_project,
    lp_block,
    split_frequencies,
    to_physical,
    to_spectral,
)

