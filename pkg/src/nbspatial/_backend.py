"""Selects the lattice step backend at import time.

The compiled extension is preferred when present; the pure-numpy fallback is
used otherwise. Both implement the identical ``step_kernel`` contract and
produce bit-identical results (see tests/test_backends.py). Override with
the environment variable ``NBSPATIAL_KERNELS``:

    NBSPATIAL_KERNELS=compiled   require the extension, fail if missing
    NBSPATIAL_KERNELS=python     force the pure fallback
    NBSPATIAL_KERNELS=auto       default behavior
"""

from __future__ import annotations

import os

_requested = os.environ.get("NBSPATIAL_KERNELS", "auto").lower()
if _requested not in {"auto", "compiled", "python"}:
    raise ImportError(
        f"NBSPATIAL_KERNELS must be auto, compiled, or python; got {_requested!r}"
    )

_impl = None
if _requested in {"auto", "compiled"}:
    try:
        from . import _stepc as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = None
if _impl is None:
    from . import _step_py as _impl  # type: ignore[no-redef]

    BACKEND = "python"

step_kernel = _impl.step_kernel


def active_backend() -> str:
    """Name of the step backend in use: 'compiled' or 'python'."""
    return BACKEND
