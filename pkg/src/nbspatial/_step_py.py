"""Pure-numpy lattice step kernel (fallback backend).

Implements the same contract as the compiled kernel in ``_stepc.pyx``:

    step_kernel(x, e, lam, mu_x, mu_y, offsets, wrap, wx, wy,
                tx, ty, out_x, out_y) -> int

Phase 1 writes the post-map ("tilde") fields into ``tx``/``ty`` from the
pre-step hosts ``x`` and the shared exponential table ``e = exp(-y)``;
phase 2 blends each tilde value with its neighbor sum:

    out = (1 - mu) * tilde + (mu / |nbd|) * sum(neighbor tildes)

``wx``/``wy`` carry the per-cell mu/|nbd| weights, ``offsets`` the neighbor
displacements in the fixed scan order shared with the compiled kernel, and
``wrap`` selects toroidal wrap-around versus zero-truncation at edges.
Neighbor sums accumulate in offset order so both backends produce
bit-identical results. Returns the flat index of the first cell whose tilde
value left the representable range, or -1 on success. ``out_x``/``out_y``
may alias ``x`` (phase 1 finishes reading ``x`` before phase 2 writes).
"""

from __future__ import annotations

import numpy as np

from .core import OVERFLOW_LIMIT


def step_kernel(x, e, lam, mu_x, mu_y, offsets, wrap, wx, wy, tx, ty, out_x, out_y):
    rows, cols = x.shape

    np.multiply(lam, x, out=tx)
    np.multiply(tx, e, out=tx)
    np.subtract(1.0, e, out=ty)
    np.multiply(x, ty, out=ty)

    bad = ~((np.abs(tx) <= OVERFLOW_LIMIT) & (np.abs(ty) <= OVERFLOW_LIMIT))
    if bad.any():
        return int(np.argmax(bad.ravel()))

    mode = "wrap" if wrap else "constant"
    px = np.pad(tx, 1, mode=mode)
    py = np.pad(ty, 1, mode=mode)
    nsx = np.zeros_like(tx)
    nsy = np.zeros_like(ty)
    for dr, dc in offsets:
        nsx += px[1 + dr : 1 + dr + rows, 1 + dc : 1 + dc + cols]
        nsy += py[1 + dr : 1 + dr + rows, 1 + dc : 1 + dc + cols]

    np.multiply(wx, nsx, out=nsx)
    np.multiply(1.0 - mu_x, tx, out=out_x)
    out_x += nsx
    np.multiply(wy, nsy, out=nsy)
    np.multiply(1.0 - mu_y, ty, out=out_y)
    out_y += nsy
    return -1
