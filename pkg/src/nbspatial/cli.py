"""Command-line interface.

One binary, five subcommands:

    nbspatial simulate   seed/relax/step a lattice, writing binary snapshots
    nbspatial lyapunov   accumulate window spectra with a convergence trace
    nbspatial sweep      run a resumable (mu_x, mu_y) parameter sweep
    nbspatial gingham    reduced-system fixed points and bifurcation curves
    nbspatial render     convert a snapshot to a portable pixmap image

Exit codes: 0 on success, 2 for configuration/usage errors, 3 for numeric
failures (population blow-up, cocycle rank collapse, failed continuation);
blow-ups report the failing generation on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .errors import (
    BlowupError,
    CurveNotBracketedError,
    DomainError,
    EmptyAccumulatorError,
    NoConvergenceError,
    SingularFactorError,
    SingularJacobianError,
    SnapshotFormatError,
    TooFewSamplesError,
)
from .gingham import (
    find_crystal_fixed_point,
    trace_pitchfork_curve,
    trace_stability_curve,
    write_curves_csv,
)
from .lattice import (
    Boundary,
    ModelParams,
    Neighborhood,
    load_snapshot,
    relax,
    save_snapshot,
    seed_random,
)
from .lyapunov import (
    SubgridSpec,
    co_evolve,
    write_spectrum_csv,
    write_spectrum_sidecar,
    write_trace_csv,
)
from .render import RenderSpec, render_to_ppm
from .sampling import (
    DESK_ACCUMULATE,
    DESK_RELAX,
    DESK_WINDOW,
    FULL_ACCUMULATE,
    FULL_RELAX,
    FULL_WINDOW,
    evenly_spaced_windows,
)
from .sweep import SweepConfig, run_sweep

_CONFIG_ERRORS = (DomainError, SnapshotFormatError, TooFewSamplesError, ValueError)
_NUMERIC_ERRORS = (BlowupError, SingularFactorError, EmptyAccumulatorError,
                   NoConvergenceError, SingularJacobianError, CurveNotBracketedError)


def _add_model_args(p: argparse.ArgumentParser, require: bool = True):
    p.add_argument("--lambda", dest="lam", type=float, required=require,
                   help="host growth rate (> 0)")
    p.add_argument("--mu-x", type=float, required=require, help="host migration fraction")
    p.add_argument("--mu-y", type=float, required=require, help="parasitoid migration fraction")
    p.add_argument("--neighborhood", type=int, choices=(4, 8), default=8)
    p.add_argument("--boundary", choices=[b.value for b in Boundary], default="toroidal")


def _params(args) -> ModelParams:
    return ModelParams(args.lam, args.mu_x, args.mu_y,
                       Neighborhood(args.neighborhood), Boundary(args.boundary))


def _parse_window(text: str) -> SubgridSpec:
    try:
        r, c, h, w = (int(t) for t in text.split(","))
    except ValueError as exc:
        raise DomainError(f"window must be ROW,COL,ROWS,COLS, got {text!r}") from exc
    return SubgridSpec(r, c, h, w)


def cmd_simulate(args) -> int:
    params = _params(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    state = seed_random(args.rows, args.cols, params, args.amplitude, args.seed)

    def emit(st):
        path = out / f"snap_{st.generation:08d}.nbsp"
        save_snapshot(path, st, params)
        if args.render:
            render_to_ppm(path.with_suffix(".ppm"), st)

    emit(state)
    every = args.snapshot_every or args.iterates
    done = 0
    while done < args.iterates:
        chunk = min(every, args.iterates - done) if every else args.iterates
        state = relax(state, params, chunk)
        done += chunk
        emit(state)
    return 0


def cmd_lyapunov(args) -> int:
    if args.preset == "paper-scale":
        rows, cols = 768, 512
        relax_its, acc_its, win, nwin = FULL_RELAX, FULL_ACCUMULATE, FULL_WINDOW, 3
    else:
        rows, cols = 64, 64
        relax_its, acc_its, win, nwin = DESK_RELAX, DESK_ACCUMULATE, DESK_WINDOW, 3
    if args.rows:
        rows = args.rows
    if args.cols:
        cols = args.cols
    if args.relax is not None:
        relax_its = args.relax
    if args.iterates is not None:
        acc_its = args.iterates
    windows = ([_parse_window(w) for w in args.window]
               if args.window else list(evenly_spaced_windows(rows, cols, nwin, win, win)))

    params = _params(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    state = seed_random(rows, cols, params, args.amplitude, args.seed)
    state = relax(state, params, relax_its)
    runs, _ = co_evolve(state, params, windows, acc_its,
                        checkpoint_every=args.checkpoint_every, n_threads=args.threads)
    failed = []
    for k, run in enumerate(runs):
        if run.error is not None:
            failed.append((k, run.error))
            continue
        write_spectrum_csv(out / f"spectrum_w{k}.csv", run.spectrum)
        write_spectrum_sidecar(out / f"spectrum_w{k}.json", run.spectrum, params,
                               run.spec, args.seed)
        write_trace_csv(out / f"trace_w{k}.csv", run.trace)
    if failed:
        for k, err in failed:
            print(f"window {k} failed: {err}", file=sys.stderr)
        return 3
    return 0


def cmd_sweep(args) -> int:
    config = SweepConfig.load(args.config)
    if args.out_dir:
        config = SweepConfig.from_json_dict({**config.to_json_dict(), "out_dir": args.out_dir})
    run_sweep(config, workers=args.workers)
    return 0


def cmd_gingham_fixed_point(args) -> int:
    params = _params(args)
    res = find_crystal_fixed_point(params, mirror=args.mirror)
    json.dump(res.to_json_dict(), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def cmd_gingham_curves(args) -> int:
    params = ModelParams(args.lam, 0.0, 0.0)
    kwargs = dict(mu_x_start=args.mu_x_start, mu_x_stop=args.mu_x_stop,
                  resolution=args.resolution,
                  mu_y_bracket=(args.mu_y_lo, args.mu_y_hi))
    pitchfork = trace_pitchfork_curve(params, **kwargs)
    stability = trace_stability_curve(params, **kwargs)
    write_curves_csv(args.out, pitchfork, stability)
    print(f"wrote {len(pitchfork)} pitchfork and {len(stability)} stability points "
          f"to {args.out}")
    return 0


def cmd_render(args) -> int:
    state, _ = load_snapshot(args.snapshot)
    render_to_ppm(args.out, state, RenderSpec(args.p_low, args.p_high))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nbspatial",
        description="Spatial host-parasitoid lattice dynamics and Lyapunov analysis",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the lattice and write snapshots")
    _add_model_args(p)
    p.add_argument("--rows", type=int, default=256)
    p.add_argument("--cols", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--amplitude", type=float, default=0.05)
    p.add_argument("--iterates", type=int, default=1000)
    p.add_argument("--snapshot-every", type=int, default=0,
                   help="also snapshot every N iterates (0: only first and last)")
    p.add_argument("--render", action="store_true", help="write a PPM next to each snapshot")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("lyapunov", help="accumulate window Lyapunov spectra")
    _add_model_args(p)
    p.add_argument("--preset", choices=("desk", "paper-scale"), default="desk")
    p.add_argument("--rows", type=int, default=0, help="override preset grid rows")
    p.add_argument("--cols", type=int, default=0, help="override preset grid cols")
    p.add_argument("--relax", type=int, default=None)
    p.add_argument("--iterates", type=int, default=None)
    p.add_argument("--checkpoint-every", type=int, default=100)
    p.add_argument("--window", action="append", metavar="ROW,COL,ROWS,COLS",
                   help="sampling window (repeatable; default: preset placement)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--amplitude", type=float, default=0.05)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_lyapunov)

    p = sub.add_parser("sweep", help="run a parameter sweep from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=None,
                   help=f"worker processes (default: ${'{'}NBSPATIAL_WORKERS{'}'} or 1)")
    p.add_argument("--out-dir", default=None, help="override the config's output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gingham", help="reduced six-dimensional system analysis")
    gsub = p.add_subparsers(dest="gingham_command", required=True)

    g = gsub.add_parser("fixed-point", help="crystal fixed point as JSON")
    _add_model_args(g)
    g.add_argument("--mirror", action="store_true", help="kick class B instead of A")
    g.set_defaults(func=cmd_gingham_fixed_point)

    g = gsub.add_parser("curves", help="trace both bifurcation curves to CSV")
    g.add_argument("--lambda", dest="lam", type=float, required=True)
    g.add_argument("--mu-x-start", type=float, default=0.0)
    g.add_argument("--mu-x-stop", type=float, default=0.15)
    g.add_argument("--resolution", type=float, default=0.005)
    g.add_argument("--mu-y-lo", type=float, default=0.5)
    g.add_argument("--mu-y-hi", type=float, default=0.9995)
    g.add_argument("--out", required=True, help="output CSV path")
    g.set_defaults(func=cmd_gingham_curves)

    p = sub.add_parser("render", help="snapshot file to PPM image")
    p.add_argument("snapshot")
    p.add_argument("--out", required=True)
    p.add_argument("--p-low", type=float, default=2.0)
    p.add_argument("--p-high", type=float, default=98.0)
    p.set_defaults(func=cmd_render)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _NUMERIC_ERRORS as exc:
        gen = getattr(exc, "generation", None)
        suffix = f" (generation {gen})" if gen is not None else ""
        print(f"error: {exc}{suffix}", file=sys.stderr)
        return 3
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
