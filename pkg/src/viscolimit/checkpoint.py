"""Bit-exact binary checkpoints of a flow state.

Layout (all little-endian)::

    offset  size  field
    0       4     magic b"OLDB"
    4       4     u32 format version (1)
    8       4     u32 dims
    12      4     u32 resolution M
    16      4     u32 flags (bit 0: stress present)
    20      8     f64 time t
    28      56    f64 x 7: Re, eps, omega, a, delta, omega0, forcing amplitude
                  (NaN marks an unset delta / omega0)
    84      8     u32 forcing kind (0 zero, 1 shear), u32 forcing wavenumber
    92      ...   payload: complex128 coefficients, velocity components then
                  stress components; within a component the wavevectors run
                  lexicographically over k_1..k_{d-1} in [-M/2, M/2-1] and
                  k_d in [0, M/2] (the stored Hermitian half)
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from .constitutive import FlowState, FluidParams, Forcing
from .spectral import SYMMETRIC, VECTOR, Grid, SpectralField, component_count

MAGIC = b"OLDB"
VERSION = 1
_HEADER = struct.Struct("<4sIIIId7dII")
_FORCING_CODES = {"zero": 0, "shear": 1}


class CheckpointError(IOError):
    pass


def _opt(x: float | None) -> float:
    return math.nan if x is None else float(x)


def _unopt(x: float) -> float | None:
    return None if math.isnan(x) else x


def _lex_order(coeffs: np.ndarray) -> np.ndarray:
    # component axis first, then non-last spatial axes shifted to ascending k
    return np.fft.fftshift(coeffs, axes=tuple(range(1, coeffs.ndim - 1)))


def _storage_order(lex: np.ndarray) -> np.ndarray:
    return np.fft.ifftshift(lex, axes=tuple(range(1, lex.ndim - 1)))


def encode(state: FlowState, params: FluidParams) -> bytes:
    grid = state.grid
    f = params.forcing
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        grid.dims,
        grid.resolution,
        0 if state.tau_hat is None else 1,
        float(state.t),
        params.reynolds,
        params.weissenberg,
        params.omega,
        params.slip,
        _opt(params.delta),
        _opt(params.omega0),
        f.amplitude,
        _FORCING_CODES[f.kind],
        f.wavenumber,
    )
    fields = [state.u_hat] if state.tau_hat is None else [state.u_hat, state.tau_hat]
    payload = b"".join(_lex_order(fld.coeffs).astype("<c16").tobytes(order="C") for fld in fields)
    return header + payload


def decode(blob: bytes) -> tuple[FlowState, FluidParams]:
    if len(blob) < _HEADER.size:
        raise CheckpointError("truncated checkpoint header")
    (magic, version, dims, M, flags, t, re, eps, om, a, delta, om0, famp, fkind, fwave) = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (reader knows {VERSION})")
    kinds = {v: k for k, v in _FORCING_CODES.items()}
    if fkind not in kinds:
        raise CheckpointError(f"unknown forcing code {fkind}")
    grid = Grid(dims, M)
    params = FluidParams(re, eps, om, a, _unopt(delta), _unopt(om0), Forcing(kinds[fkind], famp, fwave))
    ranks = [VECTOR] + ([SYMMETRIC] if flags & 1 else [])
    offset = _HEADER.size
    fields = []
    for rank in ranks:
        shape = (component_count(rank, dims),) + grid.spectral_shape
        n = int(np.prod(shape))
        chunk = blob[offset : offset + 16 * n]
        if len(chunk) != 16 * n:
            raise CheckpointError("truncated checkpoint payload")
        lex = np.frombuffer(chunk, dtype="<c16").reshape(shape)
        fields.append(SpectralField(grid, rank, _storage_order(lex).astype(complex)))
        offset += 16 * n
    if offset != len(blob):
        raise CheckpointError(f"{len(blob) - offset} trailing bytes after payload")
    return FlowState(t, fields[0], fields[1] if len(fields) > 1 else None), params


def save_checkpoint(state: FlowState, params: FluidParams, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.write_bytes(encode(state, params))
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot write checkpoint: {exc.strerror}") from None
    return path


def load_checkpoint(path: str | Path) -> tuple[FlowState, FluidParams]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint: {exc.strerror}") from None
    try:
        return decode(blob)
    except CheckpointError as exc:
        raise CheckpointError(f"{path}: {exc}") from None
