"""Coupled map lattice: per-cell host-parasitoid update followed by neighbor diffusion.

One step has two phases. Phase 1 applies the local map to every cell
independently, producing "tilde" fields. Phase 2 blends each cell's tilde
value with its neighbors':

    x[m,n] <- (1 - mu_x) * tx[m,n] + (mu_x / |nbd(m,n)|) * sum tx over nbd(m,n)
    y[m,n] <- (1 - mu_y) * ty[m,n] + (mu_y / |nbd(m,n)|) * sum ty over nbd(m,n)

The neighborhood is the 4-cell (von Neumann) or 8-cell (Moore) stencil.
Toroidal boundaries wrap; reflecting and absorbing boundaries truncate the
neighborhood at edges, so |nbd| shrinks to 3 at an 8-cell corner and edge
rows lose mass (the diffusion matrix stays row-stochastic but not
column-stochastic). Phase ordering is map-then-diffuse; the reverse order is
a different dynamical system and is not offered.

The hot kernel lives in a compiled extension with a pure-numpy fallback
(see ``_backend``); both are bit-identical and single-threaded per step, so
results never depend on thread count.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from ._backend import step_kernel
from .core import nb_fixed_point
from .errors import BlowupError, DomainError, SnapshotFormatError

# Fixed neighbor scan order (row-major over the stencil); both step backends
# and the Jacobian assembly accumulate in this order.
OFFSETS_8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))
OFFSETS_4 = ((-1, 0), (0, -1), (0, 1), (1, 0))

# Toroidal grids below 3 cells per side would give duplicate neighbors.
MIN_SIDE = 3


class Neighborhood(enum.Enum):
    FOUR_CELL = 4
    EIGHT_CELL = 8

    @property
    def offsets(self):
        return OFFSETS_4 if self is Neighborhood.FOUR_CELL else OFFSETS_8


class Boundary(enum.Enum):
    TOROIDAL = "toroidal"
    REFLECTING = "reflecting"
    ABSORBING = "absorbing"


_BOUNDARY_CODES = {Boundary.TOROIDAL: 0, Boundary.REFLECTING: 1, Boundary.ABSORBING: 2}
_BOUNDARY_FROM_CODE = {v: k for k, v in _BOUNDARY_CODES.items()}
_NEIGHBORHOOD_FROM_CODE = {4: Neighborhood.FOUR_CELL, 8: Neighborhood.EIGHT_CELL}


@dataclass(frozen=True)
class ModelParams:
    """Growth rate, migration fractions, and lattice topology."""

    lam: float
    mu_x: float
    mu_y: float
    neighborhood: Neighborhood = Neighborhood.EIGHT_CELL
    boundary: Boundary = Boundary.TOROIDAL

    def __post_init__(self):
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "mu_x", float(self.mu_x))
        object.__setattr__(self, "mu_y", float(self.mu_y))
        if not (np.isfinite(self.lam) and self.lam > 0.0):
            raise DomainError(f"growth rate must be finite and > 0, got {self.lam!r}")
        for name in ("mu_x", "mu_y"):
            mu = getattr(self, name)
            if not (np.isfinite(mu) and 0.0 <= mu <= 1.0):
                raise DomainError(f"{name} must lie in [0, 1], got {mu!r}")


@dataclass(frozen=True)
class LatticeState:
    """Host field ``x``, parasitoid field ``y`` (both rows x cols float64), iterate count.

    Arrays are normalized to C-contiguous float64 and marked read-only:
    states are immutable once constructed.
    """

    x: np.ndarray
    y: np.ndarray
    generation: int = 0

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        if x.ndim != 2 or x.shape != y.shape:
            raise DomainError(f"x and y must be equal-shape 2-D arrays, got {x.shape} / {y.shape}")
        if min(x.shape) < MIN_SIDE:
            raise DomainError(f"lattice must be at least {MIN_SIDE}x{MIN_SIDE}, got {x.shape}")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "generation", int(self.generation))

    @property
    def rows(self) -> int:
        return self.x.shape[0]

    @property
    def cols(self) -> int:
        return self.x.shape[1]

    def validate(self) -> None:
        """Check the finite/non-negative cell invariant (not done per step)."""
        for name, arr in (("x", self.x), ("y", self.y)):
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"lattice field {name} contains non-finite values")
            if np.any(arr < 0.0):
                raise DomainError(f"lattice field {name} contains negative values")


def neighbors(row, col, rows, cols, neighborhood=Neighborhood.EIGHT_CELL,
              boundary=Boundary.TOROIDAL):
    """Neighbor coordinates of (row, col), in the fixed scan order.

    Toroidal boundaries wrap (always 4 or 8 neighbors); reflecting and
    absorbing boundaries drop out-of-range cells. The result never contains
    duplicates or the center cell itself.
    """
    if min(rows, cols) < MIN_SIDE:
        raise DomainError(f"lattice must be at least {MIN_SIDE}x{MIN_SIDE}")
    if not (0 <= row < rows and 0 <= col < cols):
        raise DomainError(f"cell ({row}, {col}) outside a {rows}x{cols} lattice")
    out = []
    for dr, dc in neighborhood.offsets:
        rr, cc = row + dr, col + dc
        if boundary is Boundary.TOROIDAL:
            out.append((rr % rows, cc % cols))
        elif 0 <= rr < rows and 0 <= cc < cols:
            out.append((rr, cc))
    return out


@lru_cache(maxsize=64)
def neighbor_counts(rows, cols, neighborhood, boundary):
    """Per-cell |nbd| as a read-only float64 (rows, cols) array."""
    if boundary is Boundary.TOROIDAL:
        counts = np.full((rows, cols), float(neighborhood.value))
    else:
        in_range = np.ones((rows + 2, cols + 2))
        in_range[0, :] = in_range[-1, :] = 0.0
        in_range[:, 0] = in_range[:, -1] = 0.0
        counts = np.zeros((rows, cols))
        for dr, dc in neighborhood.offsets:
            counts += in_range[1 + dr : 1 + dr + rows, 1 + dc : 1 + dc + cols]
    counts.setflags(write=False)
    return counts


@lru_cache(maxsize=16)
def _offsets_array(neighborhood: Neighborhood) -> np.ndarray:
    arr = np.array(neighborhood.offsets, dtype=np.intp)
    arr.setflags(write=False)
    return arr


def _kernel_args(rows, cols, params):
    counts = neighbor_counts(rows, cols, params.neighborhood, params.boundary)
    wx = params.mu_x / counts
    wy = params.mu_y / counts
    offsets = _offsets_array(params.neighborhood)
    wrap = params.boundary is Boundary.TOROIDAL
    return offsets, wrap, wx, wy


class _StepBuffers:
    """Reusable scratch for repeated stepping."""

    def __init__(self, rows, cols):
        self.e = np.empty((rows, cols))
        self.tx = np.empty((rows, cols))
        self.ty = np.empty((rows, cols))


def _step_arrays(x, y, params, kernel_args, buf, out_x, out_y):
    """One step from writable field arrays into out arrays (may alias x/y).

    Returns -1 or the flat index of the first overflowing cell.
    """
    offsets, wrap, wx, wy = kernel_args
    np.negative(y, out=buf.e)
    np.exp(buf.e, out=buf.e)
    return step_kernel(x, buf.e, params.lam, params.mu_x, params.mu_y,
                       offsets, wrap, wx, wy, buf.tx, buf.ty, out_x, out_y)


def step(state: LatticeState, params: ModelParams) -> LatticeState:
    """Advance the lattice one generation (map all cells, then diffuse).

    Raises :class:`BlowupError` with the offending cell coordinates if any
    post-map value exceeds the overflow limit.
    """
    rows, cols = state.rows, state.cols
    buf = _StepBuffers(rows, cols)
    out_x = np.empty((rows, cols))
    out_y = np.empty((rows, cols))
    code = _step_arrays(state.x, state.y, params, _kernel_args(rows, cols, params),
                        buf, out_x, out_y)
    if code >= 0:
        raise BlowupError(
            f"cell ({code // cols}, {code % cols}) overflowed at generation {state.generation}",
            row=code // cols, col=code % cols, generation=state.generation,
        )
    return LatticeState(out_x, out_y, state.generation + 1)


def relax(state: LatticeState, params: ModelParams, iterates: int) -> LatticeState:
    """Apply ``step`` the given number of times with no intermediate output.

    Bit-identical to composing ``step``, but ping-pongs two buffers instead
    of allocating per iterate.
    """
    if iterates < 0:
        raise DomainError(f"iterates must be >= 0, got {iterates}")
    if iterates == 0:
        return state
    rows, cols = state.rows, state.cols
    x = state.x.copy()
    y = state.y.copy()
    buf = _StepBuffers(rows, cols)
    kernel_args = _kernel_args(rows, cols, params)
    for k in range(iterates):
        code = _step_arrays(x, y, params, kernel_args, buf, x, y)
        if code >= 0:
            raise BlowupError(
                f"cell ({code // cols}, {code % cols}) overflowed at generation "
                f"{state.generation + k}",
                row=code // cols, col=code % cols, generation=state.generation + k,
            )
    return LatticeState(x, y, state.generation + iterates)


def seed_random(rows, cols, params: ModelParams, amplitude: float = 0.05,
                rng_seed: int = 0) -> LatticeState:
    """Fixed-point lattice with independent uniform perturbations.

    Every cell starts at the coexistence fixed point of ``params.lam`` plus
    U(-amplitude, +amplitude) noise on each coordinate (x field drawn first,
    then y), clamped below at zero. Deterministic for a fixed ``rng_seed``.
    """
    if amplitude < 0:
        raise DomainError(f"amplitude must be >= 0, got {amplitude}")
    fp = nb_fixed_point(params.lam)
    rng = np.random.default_rng(rng_seed)
    x = fp.x + rng.uniform(-amplitude, amplitude, (rows, cols))
    y = fp.y + rng.uniform(-amplitude, amplitude, (rows, cols))
    np.maximum(x, 0.0, out=x)
    np.maximum(y, 0.0, out=y)
    return LatticeState(x, y, generation=0)


# --- snapshot serialization ------------------------------------------------
#
# Flat binary, little-endian: magic "NBSP", version u32, rows u32, cols u32,
# generation u64, lam/mu_x/mu_y f64, neighborhood u8, boundary u8, then
# rows*cols (x, y) float64 pairs in row-major order. Round-trips bit-exactly.

SNAPSHOT_MAGIC = b"NBSP"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIIQdddBB")


def save_snapshot(path, state: LatticeState, params: ModelParams) -> None:
    header = _HEADER.pack(
        SNAPSHOT_MAGIC, SNAPSHOT_VERSION, state.rows, state.cols, state.generation,
        params.lam, params.mu_x, params.mu_y,
        params.neighborhood.value, _BOUNDARY_CODES[params.boundary],
    )
    pairs = np.empty((state.rows, state.cols, 2))
    pairs[..., 0] = state.x
    pairs[..., 1] = state.y
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pairs.astype("<f8", copy=False).tobytes())


def load_snapshot(path) -> tuple[LatticeState, ModelParams]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise SnapshotFormatError(f"{path}: truncated header")
    magic, version, rows, cols, generation, lam, mu_x, mu_y, nbhd, bound = \
        _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise SnapshotFormatError(f"{path}: unsupported version {version}")
    if nbhd not in _NEIGHBORHOOD_FROM_CODE or bound not in _BOUNDARY_FROM_CODE:
        raise SnapshotFormatError(f"{path}: bad neighborhood/boundary codes {nbhd}/{bound}")
    expected = _HEADER.size + rows * cols * 16
    if len(raw) != expected:
        raise SnapshotFormatError(f"{path}: payload is {len(raw)} bytes, expected {expected}")
    pairs = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(rows, cols, 2)
    params = ModelParams(lam, mu_x, mu_y, _NEIGHBORHOOD_FROM_CODE[nbhd],
                         _BOUNDARY_FROM_CODE[bound])
    state = LatticeState(pairs[..., 0], pairs[..., 1], generation)
    try:
        state.validate()
    except DomainError as exc:
        raise SnapshotFormatError(f"{path}: {exc}") from exc
    return state, params


def with_params(params: ModelParams, **changes) -> ModelParams:
    """Convenience: a copy of ``params`` with fields replaced."""
    return replace(params, **changes)
