"""Lattice snapshots as binary portable pixmap (P6) images.

One pixel per cell. Host density maps to a purple ramp (red and blue
channels together, green kept low) and parasitoid density to a gray level;
the two layers are combined by per-channel max, so host-rich cells glow
purple and parasitoid-rich cells gray. Each field is normalized to its own
percentile window per frame, which keeps contrast stable across wildly
different amplitude regimes. Rendering is a pure function of the cell
values and the render spec.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .lattice import LatticeState

_PURPLE_GREEN_FACTOR = 0.25


@dataclass(frozen=True)
class RenderSpec:
    """Percentile normalization bounds for both fields."""

    p_low: float = 2.0
    p_high: float = 98.0

    def __post_init__(self):
        if not 0.0 <= self.p_low < self.p_high <= 100.0:
            raise DomainError(f"percentile bounds must satisfy 0 <= low < high <= 100, "
                              f"got ({self.p_low}, {self.p_high})")


def _normalize(field: np.ndarray, spec: RenderSpec) -> np.ndarray:
    lo, hi = np.percentile(field, [spec.p_low, spec.p_high])
    if hi - lo < 1e-300:
        return np.full_like(field, 0.5)
    return np.clip((field - lo) / (hi - lo), 0.0, 1.0)


def render_rgb(state: LatticeState, spec: RenderSpec = RenderSpec()) -> np.ndarray:
    """(rows, cols, 3) uint8 image of a lattice state."""
    u = _normalize(state.x, spec)
    v = _normalize(state.y, spec)
    purple_r = u
    purple_g = _PURPLE_GREEN_FACTOR * u
    purple_b = u
    rgb = np.stack([np.maximum(purple_r, v),
                    np.maximum(purple_g, v),
                    np.maximum(purple_b, v)], axis=-1)
    return np.round(255.0 * rgb).astype(np.uint8)


def write_ppm(path, image: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 array as binary PPM (P6, 8-bit)."""
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise DomainError("image must be (H, W, 3) uint8")
    h, w = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def render_to_ppm(path, state: LatticeState, spec: RenderSpec = RenderSpec()) -> None:
    write_ppm(path, render_rgb(state, spec))


def read_ppm(path) -> np.ndarray:
    """Read back a binary P6 image (used by tests and tooling)."""
    raw = open(path, "rb").read()
    parts = raw.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P6":
        raise DomainError(f"{path}: not a binary PPM file")
    w, h = (int(t) for t in parts[1].split())
    if parts[2] != b"255":
        raise DomainError(f"{path}: unsupported maxval {parts[2]!r}")
    data = np.frombuffer(parts[3][: w * h * 3], dtype=np.uint8)
    return data.reshape(h, w, 3)
