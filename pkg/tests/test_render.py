import numpy as np
import pytest

from nbspatial import DomainError, LatticeState
from nbspatial.render import RenderSpec, read_ppm, render_rgb, render_to_ppm, write_ppm


def _state(rng, rows=10, cols=14):
    return LatticeState(rng.uniform(0.0, 30.0, (rows, cols)),
                        rng.uniform(0.0, 8.0, (rows, cols)))


def test_one_pixel_per_cell(rng):
    state = _state(rng, 11, 7)
    assert render_rgb(state).shape == (11, 7, 3)


def test_host_rich_cell_is_purple(rng):
    x = np.full((6, 6), 0.1)
    y = np.full((6, 6), 0.1)
    x[2, 3] = 50.0  # dominant host peak
    img = render_rgb(LatticeState(x, y))
    r, g, b = (int(v) for v in img[2, 3])
    assert r == b == 255
    assert g < r


def test_parasitoid_rich_cell_is_gray(rng):
    x = np.full((6, 6), 0.1)
    y = np.full((6, 6), 0.1)
    y[4, 1] = 9.0
    img = render_rgb(LatticeState(x, y))
    r, g, b = (int(v) for v in img[4, 1])
    assert r == g == b == 255


def test_uniform_lattice_renders_uniform(rng):
    state = LatticeState(np.full((5, 5), 1.4), np.full((5, 5), 0.7))
    img = render_rgb(state)
    assert (img == img[0, 0]).all()


def test_percentile_normalization_clips_outliers(rng):
    x = rng.uniform(1.0, 2.0, (20, 20))
    x[0, 0] = 1e6
    state = LatticeState(x, np.full((20, 20), 0.1))
    img = render_rgb(state, RenderSpec(2.0, 98.0))
    # the outlier saturates instead of washing out everything else
    assert img[..., 0].max() == 255
    assert np.median(img[..., 0]) > 50


def test_ppm_round_trip(tmp_path, rng):
    state = _state(rng)
    path = tmp_path / "img.ppm"
    render_to_ppm(path, state)
    img = read_ppm(path)
    assert np.array_equal(img, render_rgb(state))


def test_deterministic_bytes(tmp_path, rng):
    state = _state(rng)
    a, b = tmp_path / "a.ppm", tmp_path / "b.ppm"
    render_to_ppm(a, state)
    render_to_ppm(b, state)
    assert a.read_bytes() == b.read_bytes()


def test_bad_percentiles_rejected():
    with pytest.raises(DomainError):
        RenderSpec(98.0, 2.0)


def test_write_ppm_validates_shape(tmp_path):
    with pytest.raises(DomainError):
        write_ppm(tmp_path / "x.ppm", np.zeros((4, 4), dtype=np.uint8))
