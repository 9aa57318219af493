"""Pointwise host-parasitoid map, its analytic Jacobian, and the coexistence fixed point.

The local dynamic on a single cell with host population x >= 0 and
parasitoid population y >= 0 is

    x' = lam * x * exp(-y)
    y' = x  * (1 - exp(-y))

where lam > 0 is the normalized host growth rate. For lam > 1 the map has a
single coexistence fixed point

    x* = lam * ln(lam) / (lam - 1)
    y* = ln(lam)

which is a repelling spiral (complex eigenvalue pair of modulus sqrt(x*) > 1),
so the uncoupled map blows up from almost every starting point; boundedness
only emerges from spatial coupling (see :mod:`nbspatial.lattice`).

All functions are vectorized: scalars or numpy arrays of matching shape are
accepted, and float64 arithmetic is used throughout. exp(-y) is the dominant
transcendental cost, so every routine accepts a precomputed ``exp_neg_y``.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import BlowupError, DomainError

# Values above this raise BlowupError rather than propagating toward inf.
OVERFLOW_LIMIT = 1e100


class FixedPoint(NamedTuple):
    x: float
    y: float


def _check_blowup(x_new, y_new):
    bad = ~(
        np.isfinite(x_new)
        & np.isfinite(y_new)
        & (np.abs(x_new) <= OVERFLOW_LIMIT)
        & (np.abs(y_new) <= OVERFLOW_LIMIT)
    )
    if np.any(bad):
        flat = int(np.argmax(np.ravel(bad)))
        raise BlowupError(
            f"population exceeded the overflow limit {OVERFLOW_LIMIT:g} "
            f"(first offending flat index {flat})"
        )


def nb_map(x, y, lam: float, exp_neg_y=None):
    """Apply the local map once. Returns ``(x_new, y_new)``.

    Raises :class:`BlowupError` if an output leaves the representable range;
    this is the expected failure mode of the uncoupled lam > 1 map far from
    equilibrium.
    """
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        e = np.exp(-np.asarray(y, dtype=np.float64)) if exp_neg_y is None else exp_neg_y
        x_new = lam * x * e
        y_new = x * (1.0 - e)
    _check_blowup(x_new, y_new)
    return x_new, y_new


def nb_jacobian(x, y, lam: float, exp_neg_y=None) -> np.ndarray:
    """Exact partial derivatives of the local map.

    For scalar inputs returns a (2, 2) matrix

        [[ lam*e, -lam*x*e ],
         [ 1 - e,      x*e ]]        with e = exp(-y);

    for array inputs of shape S returns shape S + (2, 2).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    e = np.exp(-y) if exp_neg_y is None else exp_neg_y
    jac = np.empty(np.broadcast(x, y).shape + (2, 2), dtype=np.float64)
    jac[..., 0, 0] = lam * e
    jac[..., 0, 1] = -lam * x * e
    jac[..., 1, 0] = 1.0 - e
    jac[..., 1, 1] = x * e
    return jac


def nb_fixed_point(lam: float) -> FixedPoint:
    """Coexistence fixed point (x*, y*) = (lam*ln(lam)/(lam-1), ln(lam)).

    Only exists for lam > 1; below that both populations collapse and
    :class:`DomainError` is raised.
    """
    if not np.isfinite(lam) or lam <= 1.0:
        raise DomainError(f"coexistence fixed point requires lam > 1, got {lam!r}")
    log_lam = np.log(lam)
    return FixedPoint(float(lam * log_lam / (lam - 1.0)), float(log_lam))
