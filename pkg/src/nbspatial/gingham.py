"""Reduced six-dimensional system for the crystal (gingham) pattern.

A perfect crystal tiles the lattice with a 2x2 fundamental domain holding
three cell classes: A at even-even positions, B at odd-odd, and C on the two
mixed-parity sites. Under the 8-cell stencil every A cell neighbors four B
and four C cells, every B cell four A and four C, and every C cell two A,
two B, and four C (the two C sites are mutually diagonal), which closes the
dynamics on the six variables (x_a, y_a, x_b, y_b, x_c, y_c):

    x_a' = (1-mu_x) f(A) + mu_x/2 f(B) + mu_x/2 f(C)
    x_b' = (1-mu_x) f(B) + mu_x/2 f(A) + mu_x/2 f(C)
    x_c' = (1-mu_x) f(C) + mu_x/4 f(A) + mu_x/4 f(B) + mu_x/2 f(C)

(f is the host component of the local map; y components use g and mu_y).
The symmetric state with all classes at the coexistence fixed point is
always a fixed point. In the crystal corner (small mu_x, mu_y near 1) it
pitchforks into an A<->B symmetric pair of asymmetric fixed points, which
stabilize at slightly larger mu_y; both parameter loci are traced here by
bisection, since no closed form is available. Embedding an asymmetric fixed
point back onto an even-sized toroidal lattice reproduces a fixed point of
the full step (see ``embed_crystal_pattern``), which is the consistency
check tying the reduction to the lattice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import nb_fixed_point, nb_jacobian, nb_map
from .errors import (
    BlowupError,
    CurveNotBracketedError,
    DomainError,
    NoConvergenceError,
    SingularJacobianError,
)
from .lattice import LatticeState, ModelParams

STATE_LABELS = ("x_a", "y_a", "x_b", "y_b", "x_c", "y_c")

# A converged pair is called asymmetric when the A and B blocks differ by
# more than this in max norm.
ASYMMETRY_THRESHOLD = 1e-6


def _class_weights(mu: float) -> np.ndarray:
    """3x3 mixing weights (rows: output class A, B, C; columns: source class)."""
    w = np.array([
        [1.0 - mu, 0.5 * mu, 0.5 * mu],
        [0.5 * mu, 1.0 - mu, 0.5 * mu],
        [0.25 * mu, 0.25 * mu, (1.0 - mu) + 0.5 * mu],
    ])
    row_err = np.abs(w.sum(axis=1) - 1.0).max()
    if row_err > 1e-12:
        raise AssertionError(f"class weights must be row-stochastic (err {row_err:.2e})")
    return w


def symmetric_state(params: ModelParams) -> np.ndarray:
    """All three classes at the coexistence fixed point."""
    fp = nb_fixed_point(params.lam)
    return np.array([fp.x, fp.y, fp.x, fp.y, fp.x, fp.y])


def gingham_map(state, params: ModelParams) -> np.ndarray:
    """One update of the six-dimensional reduced system."""
    s = np.asarray(state, dtype=np.float64)
    if s.shape != (6,):
        raise DomainError(f"state must have six components, got shape {s.shape}")
    fx, fy = nb_map(s[0::2], s[1::2], params.lam)
    wx = _class_weights(params.mu_x)
    wy = _class_weights(params.mu_y)
    out = np.empty(6)
    out[0::2] = wx[:, 0] * fx[0] + wx[:, 1] * fx[1] + wx[:, 2] * fx[2]
    out[1::2] = wy[:, 0] * fy[0] + wy[:, 1] * fy[1] + wy[:, 2] * fy[2]
    return out


def gingham_jacobian(state, params: ModelParams) -> np.ndarray:
    """Exact 6x6 derivative of ``gingham_map`` (chain rule through the local blocks)."""
    s = np.asarray(state, dtype=np.float64)
    if s.shape != (6,):
        raise DomainError(f"state must have six components, got shape {s.shape}")
    blocks = nb_jacobian(s[0::2], s[1::2], params.lam)  # (3, 2, 2)
    wx = _class_weights(params.mu_x)
    wy = _class_weights(params.mu_y)
    jac = np.empty((6, 6))
    jac[0::2, 0::2] = wx * blocks[:, 0, 0][None, :]
    jac[0::2, 1::2] = wx * blocks[:, 0, 1][None, :]
    jac[1::2, 0::2] = wy * blocks[:, 1, 0][None, :]
    jac[1::2, 1::2] = wy * blocks[:, 1, 1][None, :]
    return jac


@dataclass(frozen=True)
class FixedPointResult:
    """A converged fixed point with its linear stability data."""

    point: np.ndarray
    residual: float
    eigenvalue_moduli: np.ndarray  # six moduli, sorted descending
    stable: bool
    iterations: int

    @property
    def max_modulus(self) -> float:
        return float(self.eigenvalue_moduli[0])

    def is_asymmetric(self, threshold: float = ASYMMETRY_THRESHOLD) -> bool:
        return bool(np.abs(self.point[0:2] - self.point[2:4]).max() > threshold)

    def mirrored(self) -> np.ndarray:
        """The A<->B twin of this fixed point."""
        p = self.point
        return np.array([p[2], p[3], p[0], p[1], p[4], p[5]])

    def to_json_dict(self) -> dict:
        return {
            "point": {k: float(v) for k, v in zip(STATE_LABELS, self.point)},
            "residual": self.residual,
            "eigenvalue_moduli": [float(v) for v in self.eigenvalue_moduli],
            "stable": self.stable,
            "iterations": self.iterations,
        }


def find_fixed_point(initial, params: ModelParams, tol: float = 1e-12,
                     max_iter: int = 100) -> FixedPointResult:
    """Newton iteration on map(s) - s with the analytic Jacobian.

    Raises :class:`NoConvergenceError` if the residual has not dropped below
    ``tol`` within ``max_iter`` steps (or the iteration blows up), and
    :class:`SingularJacobianError` if a Newton solve fails.
    """
    s = np.array(initial, dtype=np.float64)
    if s.shape != (6,):
        raise DomainError(f"initial point must have six components, got shape {s.shape}")
    eye = np.eye(6)
    for it in range(max_iter + 1):
        try:
            residual = gingham_map(s, params) - s
        except BlowupError as exc:
            raise NoConvergenceError(f"Newton iterate blew up after {it} steps") from exc
        err = np.abs(residual).max()
        if err < tol:
            jac = gingham_jacobian(s, params)
            moduli = np.sort(np.abs(np.linalg.eigvals(jac)))[::-1].copy()
            moduli.setflags(write=False)
            s = s.copy()
            s.setflags(write=False)
            return FixedPointResult(
                point=s,
                residual=float(err),
                eigenvalue_moduli=moduli,
                stable=bool(moduli[0] < 1.0),
                iterations=it,
            )
        if it == max_iter:
            break
        jac = gingham_jacobian(s, params)
        try:
            delta = np.linalg.solve(jac - eye, -residual)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobianError(f"Newton solve failed at step {it}") from exc
        s = s + delta
    raise NoConvergenceError(
        f"Newton did not reach tolerance {tol:g} in {max_iter} iterations "
        f"(last residual {err:.3e})"
    )


# Newton from a naive kick of the A class alone falls back into the basin
# of a spurious A=B root: the crystal root also needs B and C parasitoid-
# swamped, with B carrying about twice C's load (matching their mu/2 vs
# mu/4 diffusive influx from A), and near mu_y = 1 the host peak grows past
# 100 x*, so the standardized protocol is a ladder of geometrically growing
# kicks tried in order.
SEED_RUNGS = 4


def asymmetric_seed(params: ModelParams, mirror: bool = False, rung: int = 0) -> np.ndarray:
    """Standardized Newton seed for the crystal pair (ladder rung ``rung``).

    Shape at rung k (scale s = 2**k): the kicked class is host-rich at
    (1 + 10 s) x* with its parasitoids at y*, the opposite class is
    parasitoid-swamped at 6 s y* with hosts halved, and the C class carries
    half the opposite class's parasitoid load. ``mirror=True`` swaps the
    roles of A and B, giving the twin fixed point.
    """
    if rung < 0:
        raise DomainError(f"seed rung must be >= 0, got {rung}")
    fp = nb_fixed_point(params.lam)
    scale = float(2 ** rung)
    s = np.array([
        (1.0 + 10.0 * scale) * fp.x, fp.y,
        0.5 * fp.x, 6.0 * scale * fp.y,
        0.5 * fp.x, 3.0 * scale * fp.y,
    ])
    if mirror:
        s = s[[2, 3, 0, 1, 4, 5]]
    return s


def find_crystal_fixed_point(params: ModelParams, mirror: bool = False,
                             tol: float = 1e-12, max_iter: int = 100) -> FixedPointResult:
    """Newton from the standardized asymmetric seed ladder.

    Tries the ladder rungs in order and returns the first converged
    asymmetric root with non-negative populations; the first rung succeeds
    across most of the crystal region, the higher rungs only matter near
    mu_y = 1 where the host peak is extreme. Raises
    :class:`NoConvergenceError` when every rung collapses to a symmetric
    root or diverges.
    """
    last_exc = None
    for rung in range(SEED_RUNGS):
        try:
            res = find_fixed_point(asymmetric_seed(params, mirror, rung), params,
                                   tol, max_iter)
        except (NoConvergenceError, SingularJacobianError) as exc:
            last_exc = exc
            continue
        if res.is_asymmetric() and not np.any(res.point < 0.0):
            return res
    raise NoConvergenceError(
        "no asymmetric fixed point found from the standardized seed ladder"
    ) from last_exc


def _crystal_pair(params: ModelParams) -> FixedPointResult | None:
    """The asymmetric fixed point, or None when Newton fails or collapses.

    Collapse back to a symmetric root, failure to converge, and
    non-population (negative) roots all count as non-existence.
    """
    try:
        return find_crystal_fixed_point(params)
    except (NoConvergenceError, SingularJacobianError):
        return None


def _bisect_curve_point(params_base: ModelParams, mu_x: float, predicate,
                        mu_y_bracket: tuple[float, float], mu_y_tol: float) -> float:
    lo, hi = mu_y_bracket
    if not (0.0 <= lo < hi <= 1.0):
        raise DomainError(f"mu_y bracket must be inside [0, 1], got {mu_y_bracket}")

    def probe(mu_y: float) -> bool:
        return predicate(ModelParams(params_base.lam, mu_x, mu_y,
                                     params_base.neighborhood, params_base.boundary))

    if not probe(hi) or probe(lo):
        raise CurveNotBracketedError(
            f"no transition bracketed in mu_y=({lo}, {hi}) at mu_x={mu_x}"
        )
    while hi - lo > mu_y_tol:
        mid = 0.5 * (lo + hi)
        if probe(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _trace_curve(params_base, predicate, mu_x_start, mu_x_stop, resolution,
                 mu_y_bracket, mu_y_tol):
    if not (0.0 <= mu_x_start <= mu_x_stop <= 1.0) or resolution <= 0:
        raise DomainError("mu_x range must lie inside [0, 1] with positive resolution")
    points = []
    n = int(round((mu_x_stop - mu_x_start) / resolution))
    for k in range(n + 1):
        mu_x = mu_x_start + k * resolution
        try:
            mu_y = _bisect_curve_point(params_base, mu_x, predicate, mu_y_bracket, mu_y_tol)
        except CurveNotBracketedError:
            continue
        points.append((mu_x, mu_y))
    return points


def trace_pitchfork_curve(params_base: ModelParams, mu_x_start: float = 0.0,
                          mu_x_stop: float = 0.15, resolution: float = 0.005,
                          mu_y_bracket: tuple[float, float] = (0.5, 0.9995),
                          mu_y_tol: float = 1e-4):
    """Locus in (mu_x, mu_y) where the asymmetric pair comes into existence.

    For each mu_x sample, bisects mu_y between "Newton from the standardized
    seed converges to an asymmetric root" (above the curve) and "collapses
    to the symmetric root or fails" (below). Samples with no bracketed
    transition are skipped; the returned list holds the bracketed
    (mu_x, mu_y) midpoints, reproducible to the bisection tolerance.
    """
    return _trace_curve(params_base, lambda p: _crystal_pair(p) is not None,
                        mu_x_start, mu_x_stop, resolution, mu_y_bracket, mu_y_tol)


def trace_stability_curve(params_base: ModelParams, mu_x_start: float = 0.0,
                          mu_x_stop: float = 0.15, resolution: float = 0.005,
                          mu_y_bracket: tuple[float, float] = (0.5, 0.9995),
                          mu_y_tol: float = 1e-4):
    """Locus where the asymmetric pair's largest eigenvalue modulus crosses 1.

    Lies above the pitchfork curve pointwise: the pair exists (unstable)
    between the curves and is stable above this one.
    """

    def stable_pair(p: ModelParams) -> bool:
        res = _crystal_pair(p)
        return res is not None and res.stable

    return _trace_curve(params_base, stable_pair, mu_x_start, mu_x_stop,
                        resolution, mu_y_bracket, mu_y_tol)


def embed_crystal_pattern(point, rows: int, cols: int) -> LatticeState:
    """Tile a six-component state onto an even-sized lattice.

    Class A fills even-even positions, B odd-odd, C the two mixed-parity
    sublattices. For an asymmetric fixed point of the reduced system on a
    toroidal lattice this is a fixed point of the full step.
    """
    if rows % 2 or cols % 2:
        raise DomainError(f"pattern tiling needs even dimensions, got {rows}x{cols}")
    p = np.asarray(point, dtype=np.float64)
    x = np.full((rows, cols), p[4])
    y = np.full((rows, cols), p[5])
    x[0::2, 0::2] = p[0]
    y[0::2, 0::2] = p[1]
    x[1::2, 1::2] = p[2]
    y[1::2, 1::2] = p[3]
    return LatticeState(x, y)


def write_curves_csv(path, pitchfork_points, stability_points) -> None:
    """Both bifurcation curves as ``mu_x,mu_y,curve`` rows."""
    with open(path, "w") as fh:
        fh.write("mu_x,mu_y,curve\n")
        for mu_x, mu_y in pitchfork_points:
            fh.write(f"{mu_x!r},{mu_y!r},pitchfork\n")
        for mu_x, mu_y in stability_points:
            fh.write(f"{mu_x!r},{mu_y!r},stability\n")
