"""Migration-rate parameter sweeps with crash-resumable journaling.

A sweep runs one sample plan per (mu_x, mu_y) grid point, each with its own
deterministic seed (base seed XOR a bit-mix of the grid indices, so adding
points never changes existing ones). Every completed point is persisted to
a JSON-lines journal via write-temp-rename before the next point starts;
restarting a killed sweep skips the journaled points and produces the same
final output as an uninterrupted run. Points are independent jobs and can
be distributed over a process pool; the journal is only ever written by the
parent, and rows are kept sorted so the files are byte-identical no matter
how many workers ran or in what order points finished.
"""

from __future__ import annotations

import json
import os
import tempfile
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BlowupError, DomainError
from .lattice import Boundary, ModelParams, Neighborhood
from .lyapunov import SubgridSpec
from .sampling import Regime, SamplePlan, run_plan

WORKERS_ENV = "NBSPATIAL_WORKERS"

_MASK64 = (1 << 64) - 1


def _mix64(v: int) -> int:
    """splitmix64 finalizer: avalanche a 64-bit value."""
    v = (v + 0x9E3779B97F4A7C15) & _MASK64
    v = ((v ^ (v >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    v = ((v ^ (v >> 27)) * 0x94D049BB133111EB) & _MASK64
    return v ^ (v >> 31)


def point_seed(base_seed: int, ix: int, iy: int) -> int:
    """Per-point RNG seed: base XOR hash of the grid indices."""
    return (base_seed ^ _mix64((ix << 32) | iy)) & _MASK64


@dataclass(frozen=True)
class SweepConfig:
    lam: float
    mu_x_values: tuple[float, ...]
    mu_y_values: tuple[float, ...]
    rows: int
    cols: int
    plan: SamplePlan
    base_seed: int
    out_dir: str
    neighborhood: Neighborhood = Neighborhood.EIGHT_CELL
    boundary: Boundary = Boundary.TOROIDAL

    def __post_init__(self):
        object.__setattr__(self, "mu_x_values", tuple(float(v) for v in self.mu_x_values))
        object.__setattr__(self, "mu_y_values", tuple(float(v) for v in self.mu_y_values))
        for name in ("mu_x_values", "mu_y_values"):
            vals = getattr(self, name)
            if not vals:
                raise DomainError(f"{name} must be non-empty")
            if any(not 0.0 <= v <= 1.0 for v in vals):
                raise DomainError(f"{name} must lie in [0, 1]")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise DomainError(f"{name} must be strictly increasing")
        self.plan.validate_for(self.rows, self.cols)

    def params_at(self, ix: int, iy: int) -> ModelParams:
        return ModelParams(self.lam, self.mu_x_values[ix], self.mu_y_values[iy],
                           self.neighborhood, self.boundary)

    def grid_points(self):
        return [(ix, iy) for ix in range(len(self.mu_x_values))
                for iy in range(len(self.mu_y_values))]

    def to_json_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "mu_x_values": list(self.mu_x_values),
            "mu_y_values": list(self.mu_y_values),
            "rows": self.rows,
            "cols": self.cols,
            "plan": {
                "windows": [
                    {"row_offset": w.row_offset, "col_offset": w.col_offset,
                     "rows": w.rows, "cols": w.cols}
                    for w in self.plan.windows
                ],
                "relax_iterates": self.plan.relax_iterates,
                "accumulate_iterates": self.plan.accumulate_iterates,
            },
            "base_seed": self.base_seed,
            "out_dir": self.out_dir,
            "neighborhood": self.neighborhood.value,
            "boundary": self.boundary.value,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SweepConfig":
        try:
            plan = SamplePlan(
                tuple(SubgridSpec(w["row_offset"], w["col_offset"], w["rows"], w["cols"])
                      for w in d["plan"]["windows"]),
                d["plan"]["relax_iterates"],
                d["plan"]["accumulate_iterates"],
            )
            return cls(
                lam=d["lambda"],
                mu_x_values=tuple(d["mu_x_values"]),
                mu_y_values=tuple(d["mu_y_values"]),
                rows=d["rows"],
                cols=d["cols"],
                plan=plan,
                base_seed=d["base_seed"],
                out_dir=d["out_dir"],
                neighborhood=Neighborhood(d.get("neighborhood", 8)),
                boundary=Boundary(d.get("boundary", "toroidal")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"bad sweep config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "SweepConfig":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass(frozen=True)
class PointRecord:
    ix: int
    iy: int
    mu_x: float
    mu_y: float
    status: str  # ok | overflow | singular | skipped
    seed: int
    mle: float | None = None
    mle_min: float | None = None
    mle_max: float | None = None
    prop_pos: float | None = None
    mean_lce: float | None = None
    mle_spread: float | None = None
    regime: str | None = None
    message: str | None = None

    def to_json_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "ix", "iy", "mu_x", "mu_y", "status", "seed", "mle", "mle_min",
            "mle_max", "prop_pos", "mean_lce", "mle_spread", "regime", "message")}

    @classmethod
    def from_json_dict(cls, d: dict) -> "PointRecord":
        return cls(**d)


@dataclass(frozen=True)
class SweepResult:
    config: SweepConfig
    records: dict

    @property
    def complete(self) -> bool:
        return all(p in self.records for p in self.config.grid_points())

    def record_at(self, ix, iy) -> PointRecord | None:
        return self.records.get((ix, iy))


def run_point(config: SweepConfig, ix: int, iy: int) -> PointRecord:
    """Run one grid point; failures become statuses, never exceptions."""
    params = config.params_at(ix, iy)
    seed = point_seed(config.base_seed, ix, iy)
    base = dict(ix=ix, iy=iy, mu_x=params.mu_x, mu_y=params.mu_y, seed=seed)
    try:
        report = run_plan(params, config.rows, config.cols, config.plan, seed)
    except BlowupError as exc:
        return PointRecord(status="overflow", message=str(exc), **base)
    except Exception as exc:  # journal must always gain a row per point
        return PointRecord(status="skipped", message=f"{type(exc).__name__}: {exc}", **base)
    mles = report.mles
    if not mles:
        return PointRecord(status="singular",
                           message="; ".join(report.failures.values()), **base)
    props = [s.proportion_positive for s in report.per_window if s is not None]
    means = [s.mean for s in report.per_window if s is not None]
    return PointRecord(
        status="ok",
        mle=float(np.mean(mles)),
        mle_min=min(mles),
        mle_max=max(mles),
        prop_pos=float(np.mean(props)),
        mean_lce=float(np.mean(means)),
        mle_spread=report.mle_spread,
        regime=report.regime.value,
        **base,
    )


def journal_path(config: SweepConfig) -> Path:
    return Path(config.out_dir) / "journal.jsonl"


def load_journal(path) -> dict:
    path = Path(path)
    records = {}
    if not path.exists():
        return records
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        rec = PointRecord.from_json_dict(json.loads(line))
        records[(rec.ix, rec.iy)] = rec
    return records


def _write_journal(path, records: dict) -> None:
    """Atomic whole-file rewrite, rows sorted by grid index."""
    path = Path(path)
    lines = [json.dumps(records[k].to_json_dict(), sort_keys=True)
             for k in sorted(records)]
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_sweep(config: SweepConfig, workers: int | None = None) -> SweepResult:
    """Execute all grid points, resuming from the journal if present.

    ``workers`` > 1 distributes points over a process pool (defaults to the
    NBSPATIAL_WORKERS environment variable, then 1). Already-journaled
    points are never recomputed, so re-running a completed sweep touches
    nothing and yields identical files.
    """
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jpath = journal_path(config)
    records = load_journal(jpath)
    pending = [pt for pt in config.grid_points() if pt not in records]

    if workers <= 1 or len(pending) <= 1:
        for ix, iy in pending:
            records[(ix, iy)] = run_point(config, ix, iy)
            _write_journal(jpath, records)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_point, config, ix, iy): (ix, iy)
                       for ix, iy in pending}
            remaining = set(futures)
            while remaining:
                done, remaining = wait(remaining, return_when=FIRST_COMPLETED)
                for fut in done:
                    rec = fut.result()
                    records[(rec.ix, rec.iy)] = rec
                    _write_journal(jpath, records)

    result = SweepResult(config, records)
    write_summary_csv(out_dir / "summary.csv", result)
    for quantity in ("mle", "prop_pos", "mean"):
        write_surface_csv(out_dir / f"surface_{quantity}.csv", result, quantity)
    return result


def write_summary_csv(path, result: SweepResult) -> None:
    """One row per grid point, sorted by grid index."""
    with open(path, "w") as fh:
        fh.write("mu_x,mu_y,mle,prop_pos,mean_lce,mle_spread,regime,status\n")
        for key in sorted(result.records):
            r = result.records[key]
            vals = [repr(v) if v is not None else "" for v in
                    (r.mle, r.prop_pos, r.mean_lce, r.mle_spread)]
            fh.write(f"{r.mu_x!r},{r.mu_y!r},{vals[0]},{vals[1]},{vals[2]},"
                     f"{vals[3]},{r.regime or ''},{r.status}\n")


_SURFACE_FIELDS = {"mle": "mle", "prop_pos": "prop_pos", "mean": "mean_lce"}


def surface_table(result: SweepResult, quantity: str):
    """Gridded values: rows are mu_y descending, columns mu_x ascending.

    Failed or missing points are None (empty CSV fields), never zero.
    """
    if quantity not in _SURFACE_FIELDS:
        raise DomainError(f"quantity must be one of {sorted(_SURFACE_FIELDS)}")
    field = _SURFACE_FIELDS[quantity]
    cfg = result.config
    table = []
    for iy in reversed(range(len(cfg.mu_y_values))):
        row = []
        for ix in range(len(cfg.mu_x_values)):
            rec = result.records.get((ix, iy))
            row.append(None if rec is None else getattr(rec, field))
        table.append(row)
    return table


def write_surface_csv(path, result: SweepResult, quantity: str) -> None:
    cfg = result.config
    table = surface_table(result, quantity)
    with open(path, "w") as fh:
        fh.write("mu_y\\mu_x," + ",".join(repr(v) for v in cfg.mu_x_values) + "\n")
        for iy, row in zip(reversed(range(len(cfg.mu_y_values))), table):
            cells = ",".join("" if v is None else repr(v) for v in row)
            fh.write(f"{cfg.mu_y_values[iy]!r},{cells}\n")
