"""Fourier-space fields on the periodic box [0, 2*pi)^dims.

Fields are stored in the real-FFT half spectrum with volume normalisation,
so that exp(i k.x) has the single coefficient 1 at k and the L2 norm is the
plain sum of squared coefficients (mean over the torus). Every operator in
this module is a pure function returning a new field.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

SCALAR = "scalar"
VECTOR = "vector"
TENSOR = "tensor"
SYMMETRIC = "symmetric"
RANKS = (SCALAR, VECTOR, TENSOR, SYMMETRIC)


def sym_pairs(dims: int) -> list[tuple[int, int]]:
    """Upper-triangle index pairs, row major: the storage order of symmetric tensors."""
    return [(m, n) for m in range(dims) for n in range(m, dims)]


def sym_index(dims: int) -> np.ndarray:
    """Matrix ``idx[m, n]`` giving the storage slot of component (m, n)."""
    idx = np.empty((dims, dims), dtype=int)
    for s, (m, n) in enumerate(sym_pairs(dims)):
        idx[m, n] = idx[n, m] = s
    return idx


def component_count(rank: str, dims: int) -> int:
    if rank == SCALAR:
        return 1
    if rank == VECTOR:
        return dims
    if rank == TENSOR:
        return dims * dims
    if rank == SYMMETRIC:
        return dims * (dims + 1) // 2
    raise ValueError(f"unknown rank {rank!r}")


def component_weights(rank: str, dims: int) -> np.ndarray:
    """Frobenius weights per stored component (off-diagonal symmetric slots count twice)."""
    if rank == SYMMETRIC:
        return np.array([1.0 if m == n else 2.0 for m, n in sym_pairs(dims)])
    return np.ones(component_count(rank, dims))


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with ``resolution`` points per axis.

    Wavenumber arrays follow the real-FFT layout: full FFT ordering on the
    leading axes, non-negative frequencies ``0..M/2`` on the last axis.
    """

    dims: int
    resolution: int

    def __post_init__(self):
        if self.dims not in (2, 3):
            raise ValueError(f"dims must be 2 or 3, got {self.dims}")
        if self.resolution < 8 or self.resolution % 2:
            raise ValueError(f"resolution must be even and >= 8, got {self.resolution}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.resolution,) * self.dims

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        M = self.resolution
        return (M,) * (self.dims - 1) + (M // 2 + 1,)

    @property
    def npoints(self) -> int:
        return self.resolution**self.dims

    @property
    def dx(self) -> float:
        return 2 * np.pi / self.resolution

    @property
    def kmax(self) -> int:
        return self.resolution // 2 - 1

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dims, 0))

    @cached_property
    def coordinates(self) -> tuple[np.ndarray, ...]:
        x = np.arange(self.resolution) * self.dx
        return tuple(np.meshgrid(*([x] * self.dims), indexing="ij"))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Integer wavevector components broadcast to ``spectral_shape``."""
        M = self.resolution
        full = np.fft.fftfreq(M, 1.0 / M)
        half = np.arange(M // 2 + 1, dtype=float)
        axes = [full] * (self.dims - 1) + [half]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def deriv_wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Wavenumbers for first derivatives; Nyquist entries are zeroed to keep fields real."""
        M = self.resolution
        out = []
        for k in self.wavenumbers:
            kd = k.copy()
            kd[np.abs(kd) == M // 2] = 0.0
            out.append(kd)
        return tuple(out)

    @cached_property
    def k2(self) -> np.ndarray:
        return sum(k**2 for k in self.wavenumbers)

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def multiplicity(self) -> np.ndarray:
        """Hermitian multiplicity of each stored mode (2 for interior last-axis modes)."""
        M = self.resolution
        last = self.wavenumbers[-1]
        mult = np.full(self.spectral_shape, 2.0)
        mult[(last == 0) | (last == M // 2)] = 1.0
        return mult

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        cut = self.resolution // 3
        mask = np.ones(self.spectral_shape, dtype=bool)
        for k in self.wavenumbers:
            mask &= np.abs(k) <= cut
        return mask

    def mode_index(self, k: Sequence[int]) -> tuple[int, ...]:
        """Storage index of wavevector ``k``; ``k[-1]`` must be non-negative."""
        if len(k) != self.dims:
            raise ValueError("wavevector length does not match grid dims")
        if k[-1] < 0:
            raise ValueError("last component must be >= 0 in half-spectrum storage")
        M = self.resolution
        return tuple(int(c) % M for c in k[:-1]) + (int(k[-1]),)


@dataclass
class SpectralField:
    """Fourier coefficients of a real field.

    ``coeffs`` has shape ``(ncomp,) + grid.spectral_shape``. Symmetric tensors
    store only the upper-triangle components (see :func:`sym_pairs`); dense
    tensors store ``dims*dims`` components row major.
    """

    grid: Grid
    rank: str
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.rank not in RANKS:
            raise ValueError(f"unknown rank {self.rank!r}")
        expected = (component_count(self.rank, self.grid.dims),) + self.grid.spectral_shape
        if self.coeffs.shape != expected:
            raise ValueError(f"coefficient shape {self.coeffs.shape} != {expected}")

    @classmethod
    def zeros(cls, grid: Grid, rank: str) -> "SpectralField":
        n = component_count(rank, grid.dims)
        return cls(grid, rank, np.zeros((n,) + grid.spectral_shape, dtype=complex))

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[0]

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.rank, self.coeffs.copy())

    def mode(self, k: Sequence[int]) -> np.ndarray:
        """Coefficients (all components) at wavevector ``k``."""
        return self.coeffs[(slice(None),) + self.grid.mode_index(k)]

    def component(self, m: int, n: int | None = None) -> np.ndarray:
        if n is None:
            return self.coeffs[m]
        if self.rank == SYMMETRIC:
            return self.coeffs[sym_index(self.grid.dims)[m, n]]
        if self.rank == TENSOR:
            return self.coeffs[m * self.grid.dims + n]
        raise ValueError("two indices require a tensor field")

    def _check(self, other: "SpectralField"):
        if not isinstance(other, SpectralField):
            raise TypeError(f"expected SpectralField, got {type(other).__name__}")
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")
        if other.rank != self.rank:
            raise ValueError(f"rank mismatch: {self.rank} vs {other.rank}")

    def __add__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.rank, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.rank, self.coeffs - other.coeffs)

    def __mul__(self, c):
        if isinstance(c, SpectralField):
            return NotImplemented
        return SpectralField(self.grid, self.rank, self.coeffs * c)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.grid, self.rank, -self.coeffs)


def _infer_rank(ncomp: int, dims: int) -> str:
    for rank in (SCALAR, VECTOR, SYMMETRIC, TENSOR):
        if component_count(rank, dims) == ncomp:
            return rank
    raise ValueError(f"cannot infer rank from {ncomp} components in {dims}D")


def to_spectral(samples: np.ndarray, grid: Grid, rank: str | None = None) -> SpectralField:
    """Forward transform of physical samples.

    ``samples`` is either ``grid.shape`` (scalar) or ``(ncomp,) + grid.shape``.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.shape == grid.shape:
        samples = samples[None]
    if samples.shape[1:] != grid.shape:
        raise ValueError(f"sample shape {samples.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(samples)):
        raise ValueError("non-finite input samples")
    if rank is None:
        rank = _infer_rank(samples.shape[0], grid.dims)
    coeffs = sfft.rfftn(samples, axes=grid.axes) / grid.npoints
    return SpectralField(grid, rank, coeffs)


def to_physical(f: SpectralField) -> np.ndarray:
    """Inverse transform; scalars come back with shape ``grid.shape``."""
    g = f.grid
    out = sfft.irfftn(f.coeffs * g.npoints, s=g.shape, axes=g.axes)
    return out[0] if f.rank == SCALAR else out


def gradient(f: SpectralField) -> SpectralField:
    """Scalar -> vector, vector -> dense tensor with ``(grad u)[m, n] = d_n u_m``."""
    g = f.grid
    kd = g.deriv_wavenumbers
    if f.rank == SCALAR:
        return SpectralField(g, VECTOR, np.stack([1j * k * f.coeffs[0] for k in kd]))
    if f.rank == VECTOR:
        comps = [1j * kd[n] * f.coeffs[m] for m in range(g.dims) for n in range(g.dims)]
        return SpectralField(g, TENSOR, np.stack(comps))
    raise ValueError(f"gradient is undefined for rank {f.rank}")


def divergence(f: SpectralField) -> SpectralField:
    """Vector -> scalar, (symmetric) tensor -> vector with ``(div t)_m = sum_n d_n t_mn``."""
    g = f.grid
    kd = g.deriv_wavenumbers
    if f.rank == VECTOR:
        return SpectralField(g, SCALAR, sum(1j * kd[n] * f.coeffs[n] for n in range(g.dims))[None])
    if f.rank in (TENSOR, SYMMETRIC):
        comps = [sum(1j * kd[n] * f.component(m, n) for n in range(g.dims)) for m in range(g.dims)]
        return SpectralField(g, VECTOR, np.stack(comps))
    raise ValueError(f"divergence is undefined for rank {f.rank}")


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, f.rank, -f.grid.k2 * f.coeffs)


_DIFF_OPS: dict[str, Callable[[SpectralField], SpectralField]] = {
    "gradient": gradient,
    "divergence": divergence,
    "laplacian": laplacian,
}


def differentiate(f: SpectralField, op: str) -> SpectralField:
    try:
        return _DIFF_OPS[op](f)
    except KeyError:
        raise ValueError(f"unknown differential operator {op!r}") from None


def leray_project(v: SpectralField) -> SpectralField:
    """Orthogonal projection onto solenoidal fields; the k=0 mode is removed."""
    if v.rank != VECTOR:
        raise ValueError("Leray projection needs a vector field")
    g = v.grid
    kd = g.deriv_wavenumbers
    kk = sum(k**2 for k in kd)
    inv = np.divide(1.0, kk, out=np.zeros_like(kk), where=kk > 0)
    kdotv = sum(kd[n] * v.coeffs[n] for n in range(g.dims)) * inv
    out = np.stack([v.coeffs[m] - kd[m] * kdotv for m in range(g.dims)])
    out[(slice(None),) + (0,) * g.dims] = 0.0
    return SpectralField(g, VECTOR, out)


def dealias(f: SpectralField) -> SpectralField:
    """2/3 rule: keep modes with every ``|k_i| <= M // 3``."""
    return SpectralField(f.grid, f.rank, f.coeffs * f.grid.dealias_mask)


def split_frequencies(f: SpectralField, cutoff: float) -> tuple[SpectralField, SpectralField]:
    """Sharp split into ``|k| <= cutoff`` and ``|k| > cutoff`` parts."""
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    low = f.grid.kmag <= cutoff
    return (
        SpectralField(f.grid, f.rank, f.coeffs * low),
        SpectralField(f.grid, f.rank, f.coeffs * ~low),
    )


def inner(f: SpectralField, g: SpectralField) -> float:
    """Real L2 inner product (mean over the torus), Frobenius convention for tensors."""
    f._check(g)
    w = component_weights(f.rank, f.grid.dims)
    prod = (f.coeffs * np.conj(g.coeffs)).real * f.grid.multiplicity
    return float(np.sum(w * prod.reshape(f.ncomp, -1).sum(axis=1)))


def mode_energy(f: SpectralField) -> np.ndarray:
    """Per-mode squared magnitude, weighted by components and Hermitian multiplicity."""
    w = component_weights(f.rank, f.grid.dims).reshape((-1,) + (1,) * f.grid.dims)
    return np.sum(w * np.abs(f.coeffs) ** 2, axis=0) * f.grid.multiplicity


# -- Littlewood-Paley ---------------------------------------------------------


def _smoothstep(x: np.ndarray) -> np.ndarray:
    """Degree-7 smoothstep on [0, 1]: first three derivatives vanish at both ends."""
    x = np.clip(x, 0.0, 1.0)
    return x**4 * (35.0 - 84.0 * x + 70.0 * x**2 - 20.0 * x**3)


def lp_cutoff(z) -> np.ndarray:
    """Even bump equal to 1 on [-1, 1], vanishing outside [-2, 2]."""
    z = np.abs(np.asarray(z, dtype=float))
    return 1.0 - _smoothstep(z - 1.0)


def psi_hat(z) -> np.ndarray:
    """Dyadic annulus profile, supported in [1/2, 2]; its dyadic dilates sum to 1."""
    z = np.abs(np.asarray(z, dtype=float))
    return np.where(z > 0, lp_cutoff(z) - lp_cutoff(2.0 * z), 0.0)


@dataclass(frozen=True)
class LPFamily:
    """Littlewood-Paley family restricted to the indices active on ``grid``."""

    grid: Grid
    psi_hat: Callable = psi_hat
    phi_hat: Callable = lp_cutoff

    @property
    def j_range(self) -> range:
        top = np.sqrt(self.grid.dims) * self.grid.resolution / 2
        return range(-1, int(np.ceil(np.log2(top))) + 2)

    def weights(self, j: int) -> np.ndarray:
        """Symbol of the j-th block on the grid's modes (zero at k=0)."""
        if j not in self.j_range:
            return np.zeros(self.grid.spectral_shape)
        return self.psi_hat(self.grid.kmag * 2.0**-j)

    def low_pass(self, j: int) -> np.ndarray:
        return self.phi_hat(self.grid.kmag * 2.0**-j)


def lp_block(f: SpectralField, j: int, family: LPFamily | None = None) -> SpectralField:
    family = family or LPFamily(f.grid)
    return SpectralField(f.grid, f.rank, f.coeffs * family.weights(j))


def lp_low(f: SpectralField, j: int, family: LPFamily | None = None) -> SpectralField:
    """Low-frequency cut-off operator with symbol ``phi_hat(2^-j |k|)``."""
    family = family or LPFamily(f.grid)
    return SpectralField(f.grid, f.rank, f.coeffs * family.low_pass(j))


def lp_block_tilde(f: SpectralField, j: int, family: LPFamily | None = None) -> SpectralField:
    family = family or LPFamily(f.grid)
    w = family.weights(j - 1) + family.weights(j) + family.weights(j + 1)
    return SpectralField(f.grid, f.rank, f.coeffs * w)
