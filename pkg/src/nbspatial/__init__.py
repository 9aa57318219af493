"""Spatial host-parasitoid lattice dynamics and Lyapunov spectrum estimation.

Simulates a two-field coupled map lattice (host/parasitoid populations with
neighborhood diffusion), computes Lyapunov spectra by QR-cocycle
accumulation on subgrid windows, classifies crystal-pattern regimes, maps
migration-rate parameter space, and analyzes the reduced six-dimensional
checkerboard ("gingham") system's fixed points and bifurcation curves.
"""

from ._backend import active_backend
from .core import FixedPoint, nb_fixed_point, nb_jacobian, nb_map
from .errors import (
    BlowupError,
    CurveNotBracketedError,
    DomainError,
    EmptyAccumulatorError,
    NBSpatialError,
    NoConvergenceError,
    SingularFactorError,
    SingularJacobianError,
    SnapshotFormatError,
    TooFewSamplesError,
)
from .gingham import (
    FixedPointResult,
    embed_crystal_pattern,
    find_crystal_fixed_point,
    find_fixed_point,
    gingham_jacobian,
    gingham_map,
    trace_pitchfork_curve,
    trace_stability_curve,
)
from .lattice import (
    Boundary,
    LatticeState,
    ModelParams,
    Neighborhood,
    load_snapshot,
    neighbors,
    relax,
    save_snapshot,
    seed_random,
    step,
)
from .lyapunov import (
    CocycleAccumulator,
    LyapunovSpectrum,
    SubgridSpec,
    assemble_full_jacobian,
    assemble_subgrid_jacobian,
    co_evolve,
    run_spectrum,
)
from .render import RenderSpec, render_rgb, render_to_ppm
from .sampling import (
    CrystalDiagnosis,
    CrystalKind,
    Regime,
    SamplePlan,
    SampleReport,
    bimodality,
    desk_plan,
    diagnose_crystal,
    mle_discrepancy_map,
    paper_scale_plan,
    run_plan,
)
from .sweep import PointRecord, SweepConfig, SweepResult, point_seed, run_sweep

__version__ = "0.1.0"

__all__ = [
    "active_backend",
    "FixedPoint",
    "nb_fixed_point",
    "nb_jacobian",
    "nb_map",
    "Boundary",
    "LatticeState",
    "ModelParams",
    "Neighborhood",
    "load_snapshot",
    "neighbors",
    "relax",
    "save_snapshot",
    "seed_random",
    "step",
    "CocycleAccumulator",
    "LyapunovSpectrum",
    "SubgridSpec",
    "assemble_full_jacobian",
    "assemble_subgrid_jacobian",
    "co_evolve",
    "run_spectrum",
    "CrystalDiagnosis",
    "CrystalKind",
    "Regime",
    "SamplePlan",
    "SampleReport",
    "bimodality",
    "desk_plan",
    "diagnose_crystal",
    "mle_discrepancy_map",
    "paper_scale_plan",
    "run_plan",
    "FixedPointResult",
    "embed_crystal_pattern",
    "find_crystal_fixed_point",
    "find_fixed_point",
    "gingham_jacobian",
    "gingham_map",
    "trace_pitchfork_curve",
    "trace_stability_curve",
    "PointRecord",
    "SweepConfig",
    "SweepResult",
    "point_seed",
    "run_sweep",
    "RenderSpec",
    "render_rgb",
    "render_to_ppm",
    "NBSpatialError",
    "BlowupError",
    "CurveNotBracketedError",
    "DomainError",
    "EmptyAccumulatorError",
    "NoConvergenceError",
    "SingularFactorError",
    "SingularJacobianError",
    "SnapshotFormatError",
    "TooFewSamplesError",
    "__version__",
]
