"""Experiment protocols on top of the spectrum engine.

A sample plan seeds a lattice near the coexistence fixed point, relaxes it
onto the attractor, then accumulates Lyapunov spectra on several disjoint
windows of the same trajectory. The per-window maximum exponents (MLEs)
drive three diagnostics:

* the MLE spread (max - min across windows), which is small where the
  dynamics are spatially homogeneous and blows up near regime boundaries
  where different patches settle into different behaviors;
* a bimodality coefficient over sampled MLEs, which flags chimeric states
  (coexisting organized and chaotic regions);
* a crystal-regime classifier that distinguishes a frozen lattice, a frozen
  host-peak pattern with background waves, and transient crystalline
  islands, by probing how cells move over a short window of steps.

Desk-scale defaults (64x64 grid, 200k relax, 3000 accumulation iterates,
16x16 windows) keep runs in the minutes range; the full-scale protocol
(768x512, one million relax iterates, three 32x32 windows, 6000 iterates)
is available as a preset for long runs.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage

from .errors import BlowupError, DomainError, TooFewSamplesError
from .lattice import Boundary, LatticeState, ModelParams, relax, seed_random, step
from .lyapunov import LyapunovSpectrum, SubgridSpec, co_evolve

SEED_AMPLITUDE = 0.05

DESK_GRID = (64, 64)
DESK_RELAX = 200_000
DESK_ACCUMULATE = 3_000
DESK_WINDOW = 16

FULL_GRID = (768, 512)
FULL_RELAX = 1_000_000
FULL_ACCUMULATE = 6_000
FULL_WINDOW = 32

# Sarle's bimodality coefficient of a uniform distribution; values above
# this flag a bimodal sample.
BIMODALITY_THRESHOLD = 5.0 / 9.0


class Regime(enum.Enum):
    ALL_NEGATIVE = "all_negative"
    MIXED = "mixed"
    ALL_POSITIVE_MLE = "all_positive_mle"


class CrystalKind(enum.Enum):
    FIXED_LATTICE = "fixed_lattice"
    LATTICE_WITH_WAVES = "lattice_with_waves"
    TRANSIENT_ISLANDS = "transient_islands"
    NONE = "none"


@dataclass(frozen=True)
class SamplePlan:
    """Disjoint sampling windows plus the relax/accumulate budgets."""

    windows: tuple[SubgridSpec, ...]
    relax_iterates: int
    accumulate_iterates: int

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(self.windows))
        if not self.windows:
            raise DomainError("plan needs at least one window")
        if self.relax_iterates < 0 or self.accumulate_iterates < 0:
            raise DomainError("iterate budgets must be non-negative")

    def validate_for(self, rows: int, cols: int) -> None:
        """Windows must fit the lattice and be pairwise disjoint."""
        seen: dict[int, int] = {}
        for w, spec in enumerate(self.windows):
            for flat in spec.parent_cells(rows, cols).tolist():
                if flat in seen:
                    raise DomainError(
                        f"windows {seen[flat]} and {w} overlap at cell "
                        f"({flat // cols}, {flat % cols})"
                    )
                seen[flat] = w


def evenly_spaced_windows(rows, cols, count, win_rows, win_cols) -> tuple[SubgridSpec, ...]:
    """Place ``count`` windows along the lattice diagonal, evenly spaced."""
    specs = []
    for k in range(count):
        r = round((k + 0.5) * rows / count - win_rows / 2) % rows
        c = round((k + 0.5) * cols / count - win_cols / 2) % cols
        specs.append(SubgridSpec(int(r), int(c), win_rows, win_cols))
    return tuple(specs)


def desk_plan(rows=DESK_GRID[0], cols=DESK_GRID[1], count=3, window=DESK_WINDOW,
              relax_iterates=DESK_RELAX, accumulate_iterates=DESK_ACCUMULATE) -> SamplePlan:
    return SamplePlan(evenly_spaced_windows(rows, cols, count, window, window),
                      relax_iterates, accumulate_iterates)


def paper_scale_plan() -> SamplePlan:
    """Full-scale protocol: three disjoint 32x32 windows, 1M relax, 6000 iterates."""
    return SamplePlan(
        evenly_spaced_windows(FULL_GRID[0], FULL_GRID[1], 3, FULL_WINDOW, FULL_WINDOW),
        FULL_RELAX, FULL_ACCUMULATE,
    )


@dataclass(frozen=True)
class SampleReport:
    """Per-window spectra and the cross-window statistics of one run."""

    params: ModelParams
    rows: int
    cols: int
    rng_seed: int
    per_window: tuple[LyapunovSpectrum | None, ...]
    failures: dict[int, str]
    mle_spread: float | None
    bimodality_coefficient: float | None
    regime: Regime | None

    @property
    def mles(self) -> list[float]:
        return [s.mle for s in self.per_window if s is not None]

    def to_json_dict(self) -> dict:
        return {
            "lambda": self.params.lam,
            "mu_x": self.params.mu_x,
            "mu_y": self.params.mu_y,
            "neighborhood": self.params.neighborhood.value,
            "boundary": self.params.boundary.value,
            "rows": self.rows,
            "cols": self.cols,
            "rng_seed": self.rng_seed,
            "windows": [
                None if s is None else {
                    "exponents": [float(v) for v in s.exponents],
                    "iterates": s.iterates,
                    "mle": s.mle,
                    "proportion_positive": s.proportion_positive,
                    "mean": s.mean,
                }
                for s in self.per_window
            ],
            "failures": {str(k): v for k, v in self.failures.items()},
            "mle_spread": self.mle_spread,
            "bimodality_coefficient": self.bimodality_coefficient,
            "regime": self.regime.value if self.regime else None,
        }


def _classify(mles) -> Regime:
    if all(m < 0.0 for m in mles):
        return Regime.ALL_NEGATIVE
    if all(m > 0.0 for m in mles):
        return Regime.ALL_POSITIVE_MLE
    return Regime.MIXED


def run_plan(params: ModelParams, rows: int, cols: int, plan: SamplePlan,
             rng_seed: int = 0, n_threads: int = 1) -> SampleReport:
    """Seed, relax, and accumulate every window over one shared trajectory.

    A window whose cocycle collapses is recorded in ``failures`` without
    aborting its siblings; lattice-wide blow-ups abort the run. With zero
    ``accumulate_iterates`` there is nothing to estimate and an error is
    raised up front.
    """
    if plan.accumulate_iterates == 0:
        raise DomainError("plan has zero accumulate iterates")
    plan.validate_for(rows, cols)
    state = seed_random(rows, cols, params, SEED_AMPLITUDE, rng_seed)
    state = relax(state, params, plan.relax_iterates)
    runs, _ = co_evolve(state, params, plan.windows, plan.accumulate_iterates,
                        n_threads=n_threads)
    per_window = tuple(r.spectrum for r in runs)
    failures = {w: str(r.error) for w, r in enumerate(runs) if r.error is not None}
    mles = [s.mle for s in per_window if s is not None]
    spread = (max(mles) - min(mles)) if mles else None
    coeff = bimodality(mles) if len(mles) >= 4 else None
    regime = _classify(mles) if mles else None
    return SampleReport(params, rows, cols, rng_seed, per_window, failures,
                        spread, coeff, regime)


def mle_discrepancy_map(points, lam: float, rows: int, cols: int, plan: SamplePlan,
                        base_seed: int = 0, neighborhood=None, boundary=None,
                        n_threads: int = 1):
    """One plan run per (mu_x, mu_y) point; rows of (mu_x, mu_y, mle_spread).

    Point failures are recorded as None spreads and do not stop the scan.
    """
    points = list(points)
    if not points:
        raise DomainError("parameter grid is empty")
    kwargs = {}
    if neighborhood is not None:
        kwargs["neighborhood"] = neighborhood
    if boundary is not None:
        kwargs["boundary"] = boundary
    table = []
    for mu_x, mu_y in points:
        params = ModelParams(lam, mu_x, mu_y, **kwargs)
        try:
            report = run_plan(params, rows, cols, plan, base_seed, n_threads)
            table.append((mu_x, mu_y, report.mle_spread))
        except (BlowupError, DomainError):
            table.append((mu_x, mu_y, None))
    return table


def bimodality(values) -> float:
    """Sarle's bimodality coefficient of a sample (needs at least 4 values).

    (skewness^2 + 1) / (kurtosis + 3 (n-1)^2 / ((n-2)(n-3))), with plain
    moment estimators and excess kurtosis; above 5/9 (the uniform
    distribution's value) counts as bimodal. Values are sorted before the
    moment sums so the result is exactly permutation invariant; a
    zero-variance sample returns 0 (a point mass is maximally unimodal).
    """
    vals = np.sort(np.asarray(values, dtype=np.float64))
    n = vals.size
    if n < 4:
        raise TooFewSamplesError(f"bimodality needs >= 4 samples, got {n}")
    if not np.all(np.isfinite(vals)):
        raise DomainError("bimodality input contains non-finite values")
    centered = vals - vals.mean()
    m2 = np.mean(centered ** 2)
    if m2 == 0.0:
        return 0.0
    skew = np.mean(centered ** 3) / m2 ** 1.5
    kurt = np.mean(centered ** 4) / m2 ** 2 - 3.0
    correction = 3.0 * (n - 1) ** 2 / ((n - 2) * (n - 3))
    return float((skew ** 2 + 1.0) / (kurt + correction))


@dataclass(frozen=True)
class CrystalDiagnosis:
    kind: CrystalKind
    period1_fraction: float


# Crystalline host peaks sit on a sublattice of spacing 2, so island
# connectivity links peaks two cells apart (N/S/E/W on the sublattice); an
# island needs at least this many peaks.
ISLAND_MIN_CELLS = 4

# A persistent peak pattern counts as lattice-scale when it fills at least
# half of one parity sublattice (rows*cols/4 sites).
SKELETON_MIN_FRACTION = 0.5


def _crystalline_mask(x: np.ndarray, boundary: Boundary) -> np.ndarray:
    """Cells whose host value tops the lattice mean while all 8 neighbors sit below it."""
    mean = x.mean()
    high = x > mean
    if boundary is Boundary.TOROIDAL:
        padded = np.pad(x, 1, mode="wrap")
    else:
        padded = np.pad(x, 1, mode="constant", constant_values=-np.inf)
    rows, cols = x.shape
    all_low = np.ones_like(high)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            all_low &= padded[1 + dr: 1 + dr + rows, 1 + dc: 1 + dc + cols] < mean
    return high & all_low


def _island_cells(mask: np.ndarray, min_cells: int = ISLAND_MIN_CELLS) -> np.ndarray:
    """Peaks belonging to a 4-connected component of >= min_cells at sublattice spacing 2."""
    out = np.zeros_like(mask)
    for pr in (0, 1):
        for pc in (0, 1):
            sub = mask[pr::2, pc::2]
            if sub.sum() < min_cells:
                continue
            labels, count = scipy.ndimage.label(sub)
            if count == 0:
                continue
            sizes = np.bincount(labels.ravel())
            sizes[0] = 0
            keep = sizes[labels] >= min_cells
            out[pr::2, pc::2] |= keep
    return out


def diagnose_crystal(state: LatticeState, params: ModelParams,
                     probe_iterates: int = 200, tolerance: float = 1e-9) -> CrystalDiagnosis:
    """Classify the crystal regime by probing a relaxed state.

    Steps ``probe_iterates`` times tracking the largest per-cell change and
    the crystalline peaks (above-mean hosts with all 8 neighbors below the
    mean) of every snapshot:

    * every cell moves less than ``tolerance`` -> FIXED_LATTICE;
    * a persistent peak pattern (cells crystalline in at least half the
      snapshots) spans the lattice while cells keep fluctuating ->
      LATTICE_WITH_WAVES (the crystal holds its ground under the waves);
    * islands of grouped peaks show up in some snapshots but are absent in
      others, or never hold the same ground -> TRANSIENT_ISLANDS;
    * otherwise NONE.

    A homogeneous fixed-point lattice is FIXED_LATTICE for any parameters
    (period1_fraction 1); the chaotic bulk produces no peaks at all and
    comes out NONE.
    """
    if probe_iterates < 1:
        raise DomainError("probe_iterates must be >= 1")
    rows, cols = state.rows, state.cols
    prev = state
    max_change = np.zeros((rows, cols))
    crystalline_counts = _crystalline_mask(prev.x, params.boundary).astype(np.int64)
    island_masks = [_island_cells(_crystalline_mask(prev.x, params.boundary))]
    for _ in range(probe_iterates):
        cur = step(prev, params)
        np.maximum(max_change, np.abs(cur.x - prev.x), out=max_change)
        np.maximum(max_change, np.abs(cur.y - prev.y), out=max_change)
        mask = _crystalline_mask(cur.x, params.boundary)
        crystalline_counts += mask
        island_masks.append(_island_cells(mask))
        prev = cur
    period1_fraction = float(np.mean(max_change < tolerance))
    snapshots = probe_iterates + 1
    skeleton_cells = int(np.count_nonzero(crystalline_counts * 2 >= snapshots))
    skeleton_min = SKELETON_MIN_FRACTION * (rows * cols / 4)
    island_present = [bool(m.any()) for m in island_masks]
    islands_vary = False
    if any(island_present):
        first = island_masks[island_present.index(True)]
        islands_vary = (not all(island_present)) or any(
            not np.array_equal(m, first) for m in island_masks
        )
    if period1_fraction == 1.0:
        kind = CrystalKind.FIXED_LATTICE
    elif skeleton_cells >= skeleton_min:
        kind = CrystalKind.LATTICE_WITH_WAVES
    elif any(island_present) and islands_vary:
        kind = CrystalKind.TRANSIENT_ISLANDS
    else:
        kind = CrystalKind.NONE
    return CrystalDiagnosis(kind, period1_fraction)


def write_report_json(path, report: SampleReport) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_summary_csv(path, reports) -> None:
    """Cross-run summary: one row per report."""
    with open(path, "w") as fh:
        fh.write("mu_x,mu_y,mle_max,mle_min,mle_spread,prop_pos_mean,regime\n")
        for r in reports:
            mles = r.mles
            props = [s.proportion_positive for s in r.per_window if s is not None]
            if mles:
                fh.write(f"{r.params.mu_x!r},{r.params.mu_y!r},{max(mles)!r},"
                         f"{min(mles)!r},{r.mle_spread!r},{float(np.mean(props))!r},"
                         f"{r.regime.value}\n")
            else:
                fh.write(f"{r.params.mu_x!r},{r.params.mu_y!r},,,,,\n")
