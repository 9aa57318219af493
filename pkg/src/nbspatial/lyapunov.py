"""Lyapunov spectra by QR-cocycle accumulation over lattice windows.

The derivative of one lattice step factors as D @ B, where B is
block-diagonal in the per-cell 2x2 local Jacobians (evaluated at the
pre-step state) and D carries the diffusion weights: (1 - mu) on the
diagonal and mu/|nbd| toward each neighbor, with mu_x acting on x
coordinates and mu_y on y coordinates. Restricting rows and columns to the
cells of a window gives the window-forced Jacobian: derivatives with
respect to exterior cells are discarded, so the exterior acts as
time-dependent forcing with zero sensitivity and the window's edge rows sum
to less than one.

Long products of these factors are numerically explosive, so they are never
formed. Instead, with Q_0 = I and B_i = J_i Q_{i-1}, each B_i is
QR-factored (diagonal of R kept non-negative for determinism) and only the
running sums of log R[k,k] are retained; after n factors the k-th Lyapunov
exponent estimate is sum_i log R_i[k,k] / n. Convergence is monitored via a
checkpoint trace, not an automatic stopping rule.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import json
import numpy as np
import scipy.linalg
import scipy.sparse

from ._backend import step_kernel
from .core import nb_jacobian
from .errors import BlowupError, DomainError, EmptyAccumulatorError, SingularFactorError
from .lattice import (
    Boundary,
    LatticeState,
    ModelParams,
    _kernel_args,
    _StepBuffers,
    neighbor_counts,
    neighbors,
)

MIN_WINDOW_SIDE = 2

# |R[k,k]| below this poisons the accumulator (rank collapse, e.g. an
# extinct window).
SINGULAR_FLOOR = 1e-300

# Orthogonality is re-checked every this many factorizations; the defect
# bound is the accumulator's standing invariant.
ORTHOGONALITY_TOL = 1e-10
ORTHOGONALITY_CHECK_EVERY = 500


@dataclass(frozen=True)
class SubgridSpec:
    """A sampling window into a parent lattice (offsets plus extent)."""

    row_offset: int
    col_offset: int
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < MIN_WINDOW_SIDE or self.cols < MIN_WINDOW_SIDE:
            raise DomainError(f"window must be at least {MIN_WINDOW_SIDE}x{MIN_WINDOW_SIDE}")
        if self.row_offset < 0 or self.col_offset < 0:
            raise DomainError("window offsets must be non-negative")

    @property
    def cell_count(self) -> int:
        return self.rows * self.cols

    @property
    def dim(self) -> int:
        return 2 * self.rows * self.cols

    def parent_cells(self, parent_rows, parent_cols, boundary=Boundary.TOROIDAL) -> np.ndarray:
        """Flat parent indices of the window cells, window row-major order.

        Toroidal windows may wrap around the parent (they cannot
        self-overlap because the extent may not exceed the parent);
        otherwise the window must fit without wrapping.
        """
        if self.rows > parent_rows or self.cols > parent_cols:
            raise DomainError(
                f"{self.rows}x{self.cols} window exceeds {parent_rows}x{parent_cols} lattice"
            )
        wraps = (self.row_offset + self.rows > parent_rows
                 or self.col_offset + self.cols > parent_cols)
        if wraps and boundary is not Boundary.TOROIDAL:
            raise DomainError("window leaves the lattice and boundary is not toroidal")
        rr = (self.row_offset + np.arange(self.rows)) % parent_rows
        cc = (self.col_offset + np.arange(self.cols)) % parent_cols
        return (rr[:, None] * parent_cols + cc[None, :]).ravel()

    def overlaps(self, other: "SubgridSpec", parent_rows, parent_cols) -> bool:
        a = set(self.parent_cells(parent_rows, parent_cols).tolist())
        b = set(other.parent_cells(parent_rows, parent_cols).tolist())
        return bool(a & b)


@dataclass(frozen=True)
class LyapunovSpectrum:
    """Sorted exponent estimates plus the summary statistics of a run."""

    exponents: np.ndarray
    iterates: int
    mle: float
    proportion_positive: float
    mean: float

    @classmethod
    def from_log_sums(cls, log_sums: np.ndarray, iterates: int) -> "LyapunovSpectrum":
        exps = np.sort(log_sums / iterates)[::-1].copy()
        exps.setflags(write=False)
        return cls(
            exponents=exps,
            iterates=iterates,
            mle=float(exps[0]),
            proportion_positive=float(np.mean(exps > 0.0)),
            mean=float(np.mean(exps)),
        )


class TracePoint(NamedTuple):
    iterate: int
    mle: float
    prop_positive: float
    mean: float


class CocycleAccumulator:
    """Running QR factorization state for one window's Jacobian sequence.

    ``initial_q`` sets the starting orthogonal basis (identity by default);
    a relabeled window started from the correspondingly permuted basis
    reproduces the original R sequence exactly.
    """

    def __init__(self, dim: int, initial_q: np.ndarray | None = None):
        if dim < 1:
            raise DomainError(f"dimension must be positive, got {dim}")
        self.dim = dim
        if initial_q is None:
            self._q = np.eye(dim)
        else:
            q = np.array(initial_q, dtype=np.float64)
            if q.shape != (dim, dim):
                raise DomainError(f"initial_q must be {dim}x{dim}")
            defect = np.abs(q.T @ q - np.eye(dim)).max()
            if defect > ORTHOGONALITY_TOL:
                raise DomainError(f"initial_q is not orthogonal (defect {defect:.2e})")
            self._q = q
        self.log_diag_sums = np.zeros(dim)
        self.iterates_accumulated = 0
        self._poisoned_at: int | None = None

    @property
    def q_current(self) -> np.ndarray:
        return self._q

    def orthogonality_defect(self) -> float:
        return float(np.abs(self._q.T @ self._q - np.eye(self.dim)).max())

    def _check_poisoned(self):
        if self._poisoned_at is not None:
            raise SingularFactorError(
                f"accumulator was poisoned by rank collapse at iterate {self._poisoned_at}",
                iterate=self._poisoned_at,
            )

    def push(self, jacobian) -> np.ndarray:
        """Absorb one cocycle factor; returns the (sign-fixed) R factor.

        ``jacobian`` is anything supporting ``@`` with a dense (dim, dim)
        matrix: a dense array, a scipy sparse matrix, or the factored
        operator used internally. Raises :class:`SingularFactorError` and
        poisons the accumulator if any |R[k,k]| falls below the rank floor.
        """
        self._check_poisoned()
        b = jacobian @ self._q
        q, r = scipy.linalg.qr(b, overwrite_a=True, check_finite=False)
        diag = np.diagonal(r).copy()
        sign = np.where(diag < 0.0, -1.0, 1.0)
        q *= sign[None, :]
        r *= sign[:, None]
        absd = np.abs(diag)
        if absd.min() < SINGULAR_FLOOR:
            self._poisoned_at = self.iterates_accumulated + 1
            k = int(np.argmin(absd))
            raise SingularFactorError(
                f"|R[{k},{k}]| = {absd[k]:.3e} below rank floor at iterate "
                f"{self._poisoned_at}",
                iterate=self._poisoned_at,
            )
        self.log_diag_sums += np.log(absd)
        self._q = q
        self.iterates_accumulated += 1
        if self.iterates_accumulated % ORTHOGONALITY_CHECK_EVERY == 0:
            if self.orthogonality_defect() > ORTHOGONALITY_TOL:
                # One fresh factorization restores orthogonality; the
                # correction is far below the exponent sums' resolution.
                self._q, _ = scipy.linalg.qr(self._q, overwrite_a=True, check_finite=False)
        return r

    def spectrum(self) -> LyapunovSpectrum:
        self._check_poisoned()
        if self.iterates_accumulated == 0:
            raise EmptyAccumulatorError("no iterates accumulated")
        return LyapunovSpectrum.from_log_sums(self.log_diag_sums, self.iterates_accumulated)

    def partial_stats(self) -> TracePoint:
        n = self.iterates_accumulated
        if n == 0:
            raise EmptyAccumulatorError("no iterates accumulated")
        exps = self.log_diag_sums / n
        return TracePoint(n, float(exps.max()), float(np.mean(exps > 0.0)),
                          float(exps.mean()))


class FactoredStepJacobian:
    """One step's window Jacobian as D @ blockdiag(blocks), never densified.

    Multiplying by a dense matrix costs O(nnz(D) * dim) instead of dim^3.
    """

    def __init__(self, diffusion: scipy.sparse.csr_matrix, blocks: np.ndarray):
        self.diffusion = diffusion
        self.blocks = blocks

    def __matmul__(self, other: np.ndarray) -> np.ndarray:
        vec = other.ndim == 1
        v = other[:, None] if vec else other
        out = np.empty_like(v)
        vx = v[0::2]
        vy = v[1::2]
        b = self.blocks
        out[0::2] = b[:, 0, 0, None] * vx + b[:, 0, 1, None] * vy
        out[1::2] = b[:, 1, 0, None] * vx + b[:, 1, 1, None] * vy
        res = self.diffusion @ out
        return res[:, 0] if vec else res

    def toarray(self) -> np.ndarray:
        m = self.blocks.shape[0]
        base = 2 * np.arange(m)[:, None, None]
        rr = (base + np.array([[0, 0], [1, 1]])).reshape(-1)
        cc = (base + np.array([[0, 1], [0, 1]])).reshape(-1)
        b = scipy.sparse.coo_matrix((self.blocks.reshape(-1), (rr, cc)),
                                    shape=self.diffusion.shape)
        return (self.diffusion @ b.tocsr()).toarray()


@lru_cache(maxsize=32)
def _window_diffusion_cached(rows, cols, mu_x, mu_y, neighborhood, boundary, spec):
    idx = spec.parent_cells(rows, cols, boundary)
    pos = {int(p): w for w, p in enumerate(idx)}
    counts = neighbor_counts(rows, cols, neighborhood, boundary)
    data, ii, jj = [], [], []
    for w, pf in enumerate(idx):
        r, c = divmod(int(pf), cols)
        ii += [2 * w, 2 * w + 1]
        jj += [2 * w, 2 * w + 1]
        data += [1.0 - mu_x, 1.0 - mu_y]
        wxc = mu_x / counts[r, c]
        wyc = mu_y / counts[r, c]
        for rr, cc in neighbors(r, c, rows, cols, neighborhood, boundary):
            v = pos.get(rr * cols + cc)
            if v is None:
                continue  # exterior neighbor: zero sensitivity
            ii += [2 * w, 2 * w + 1]
            jj += [2 * v, 2 * v + 1]
            data += [wxc, wyc]
    mat = scipy.sparse.coo_matrix((data, (ii, jj)), shape=(spec.dim, spec.dim))
    return mat.tocsr()


def window_diffusion_matrix(rows, cols, params: ModelParams, spec: SubgridSpec):
    """Sparse diffusion-weight matrix restricted to the window (interleaved x/y)."""
    return _window_diffusion_cached(rows, cols, params.mu_x, params.mu_y,
                                    params.neighborhood, params.boundary, spec)


def _factored_jacobian(state_x_flat, exp_neg_y_flat, idx, diffusion, lam):
    xw = state_x_flat[idx]
    ew = exp_neg_y_flat[idx]
    blocks = nb_jacobian(xw, 0.0, lam, exp_neg_y=ew)
    return FactoredStepJacobian(diffusion, blocks)


def assemble_subgrid_jacobian(state: LatticeState, params: ModelParams,
                              spec: SubgridSpec) -> np.ndarray:
    """Dense window-forced step Jacobian at the current state.

    Equals the full-lattice Jacobian restricted to the window's rows and
    columns; for a window covering the whole lattice it is the full
    Jacobian itself.
    """
    idx = spec.parent_cells(state.rows, state.cols, params.boundary)
    d = window_diffusion_matrix(state.rows, state.cols, params, spec)
    e = np.exp(-state.y)
    return _factored_jacobian(state.x.ravel(), e.ravel(), idx, d, params.lam).toarray()


def assemble_full_jacobian(state: LatticeState, params: ModelParams) -> np.ndarray:
    """Dense Jacobian of one full-lattice step (2MN x 2MN; small grids only)."""
    return assemble_subgrid_jacobian(
        state, params, SubgridSpec(0, 0, state.rows, state.cols)
    )


class WindowRun(NamedTuple):
    """Outcome of one window's accumulation over a shared trajectory."""

    spec: SubgridSpec
    spectrum: LyapunovSpectrum | None
    trace: list
    error: SingularFactorError | None


def co_evolve(state: LatticeState, params: ModelParams, specs, iterates: int,
              checkpoint_every: int = 0, n_threads: int = 1):
    """Drive the lattice while every window's accumulator consumes it.

    All windows see the same trajectory: at each iterate the window
    Jacobians are evaluated at the pre-step state, pushed into their
    accumulators (optionally across threads; per-window results do not
    depend on the thread count), and the lattice is stepped once, sharing
    one exponential table between the Jacobians and the step. A window
    whose cocycle loses rank is reported in its ``WindowRun.error`` and
    stops accumulating; the remaining windows continue. Returns
    ``(list[WindowRun], final_state)``.
    """
    if iterates < 0:
        raise DomainError(f"iterates must be >= 0, got {iterates}")
    rows, cols = state.rows, state.cols
    specs = list(specs)
    idxs = [s.parent_cells(rows, cols, params.boundary) for s in specs]
    diffs = [window_diffusion_matrix(rows, cols, params, s) for s in specs]
    accs = [CocycleAccumulator(s.dim) for s in specs]
    errors: dict[int, SingularFactorError] = {}
    traces: list[list[TracePoint]] = [[] for _ in specs]

    x = state.x.copy()
    y = state.y.copy()
    buf = _StepBuffers(rows, cols)
    kernel_args = _kernel_args(rows, cols, params)

    def push_window(w: int):
        if w in errors:
            return
        try:
            jac = _factored_jacobian(xf, ef, idxs[w], diffs[w], params.lam)
            accs[w].push(jac)
        except SingularFactorError as exc:
            errors[w] = exc

    pool = ThreadPoolExecutor(max_workers=n_threads) if n_threads > 1 and len(specs) > 1 else None
    try:
        for t in range(1, iterates + 1):
            np.negative(y, out=buf.e)
            np.exp(buf.e, out=buf.e)
            xf = x.ravel()
            ef = buf.e.ravel()
            if pool is None:
                for w in range(len(specs)):
                    push_window(w)
            else:
                list(pool.map(push_window, range(len(specs))))
            code = _step_with_shared_exp(x, y, params, kernel_args, buf)
            if code >= 0:
                raise BlowupError(
                    f"cell ({code // cols}, {code % cols}) overflowed at generation "
                    f"{state.generation + t - 1}",
                    row=code // cols, col=code % cols,
                    generation=state.generation + t - 1,
                )
            if checkpoint_every and (t % checkpoint_every == 0 or t == iterates):
                for w, acc in enumerate(accs):
                    if w not in errors:
                        traces[w].append(acc.partial_stats())
    finally:
        if pool is not None:
            pool.shutdown()

    runs = []
    for w, s in enumerate(specs):
        if w in errors:
            runs.append(WindowRun(s, None, traces[w], errors[w]))
        else:
            spectrum = accs[w].spectrum() if accs[w].iterates_accumulated else None
            runs.append(WindowRun(s, spectrum, traces[w], None))
    final = LatticeState(x, y, state.generation + iterates)
    return runs, final


def _step_with_shared_exp(x, y, params, kernel_args, buf):
    """Step in place reusing buf.e, which already holds exp(-y)."""
    offsets, wrap, wx, wy = kernel_args
    return step_kernel(x, buf.e, params.lam, params.mu_x, params.mu_y,
                       offsets, wrap, wx, wy, buf.tx, buf.ty, x, y)


def run_spectrum(state: LatticeState, params: ModelParams, spec: SubgridSpec,
                 iterates: int, checkpoint_every: int = 100,
                 ) -> tuple[LyapunovSpectrum, list[TracePoint]]:
    """Accumulate one window's spectrum while stepping the lattice.

    The input state should already be relaxed onto the attractor (not
    enforced). Raises :class:`EmptyAccumulatorError` for a zero iterate
    budget and propagates blow-ups and rank collapses with their iterate
    index.
    """
    runs, _ = co_evolve(state, params, [spec], iterates,
                        checkpoint_every=checkpoint_every)
    run = runs[0]
    if run.error is not None:
        raise run.error
    if run.spectrum is None:
        raise EmptyAccumulatorError("no iterates accumulated")
    return run.spectrum, run.trace


# --- exports -----------------------------------------------------------------


def write_spectrum_csv(path, spectrum: LyapunovSpectrum) -> None:
    with open(path, "w") as fh:
        fh.write("index,exponent\n")
        for i, v in enumerate(spectrum.exponents):
            fh.write(f"{i},{float(v)!r}\n")


def write_spectrum_sidecar(path, spectrum: LyapunovSpectrum, params: ModelParams,
                           spec: SubgridSpec, rng_seed) -> None:
    payload = {
        "lambda": params.lam,
        "mu_x": params.mu_x,
        "mu_y": params.mu_y,
        "neighborhood": params.neighborhood.value,
        "boundary": params.boundary.value,
        "window": {"row_offset": spec.row_offset, "col_offset": spec.col_offset,
                   "rows": spec.rows, "cols": spec.cols},
        "iterates": spectrum.iterates,
        "mle": spectrum.mle,
        "proportion_positive": spectrum.proportion_positive,
        "mean": spectrum.mean,
        "rng_seed": rng_seed,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_trace_csv(path, trace) -> None:
    with open(path, "w") as fh:
        fh.write("iterate,mle,prop_positive,mean\n")
        for p in trace:
            fh.write(f"{p.iterate},{p.mle!r},{p.prop_positive!r},{p.mean!r}\n")
