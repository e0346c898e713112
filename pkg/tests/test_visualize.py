from __future__ import annotations

import numpy as np
import pytest

from uqbench.modelzoo import load_image
from uqbench.types import SaliencyMap
from uqbench.visualize import export_map_csv, heatmap_rgb, overlay, read_map_csv, save_png, side_by_side


def smap(values):
    values = np.asarray(values, dtype=np.float64)
    return SaliencyMap(values=values, raw=values, image_id="img", target_class=0, method="smoothgrad")


def test_heatmap_extremes_are_blue_and_red():
    heat = heatmap_rgb(np.array([[0.0, 1.0]]))
    low, high = heat[0, 0], heat[0, 1]
    assert low[2] > low[0]
    assert high[0] > high[2]


def test_overlay_alpha_endpoints(rgb_image):
    m = smap(np.linspace(0, 1, 64).reshape(8, 8))
    assert np.array_equal(overlay(m, rgb_image, alpha=0.0), rgb_image)
    full = overlay(m, rgb_image, alpha=1.0)
    assert full.shape == rgb_image.shape
    half = overlay(m, rgb_image, alpha=0.5)
    assert half.dtype == np.uint8
    assert not np.array_equal(half, rgb_image)


def test_overlay_rejects_bad_alpha(rgb_image):
    with pytest.raises(ValueError):
        overlay(smap(np.zeros((8, 8))), rgb_image, alpha=1.5)


def test_side_by_side_matches_heights(rgb_image):
    tall = np.zeros((24, 10, 3), dtype=np.uint8)
    out = side_by_side([rgb_image, tall], ["original: tabby", "rotate 180: bucket"])
    assert out.shape[0] == rgb_image.shape[0]
    assert out.shape[1] == rgb_image.shape[1] + 5
    with pytest.raises(ValueError):
        side_by_side([])


def test_png_and_csv_grid_export(tmp_path, rgb_image):
    png = tmp_path / "out" / "overlay.png"
    save_png(png, rgb_image)
    assert np.array_equal(load_image(png), rgb_image)

    grid = np.array([[0.0, 0.5, 1.0], [0.25, 0.125, 0.333333333]])
    path = tmp_path / "out" / "grid.csv"
    export_map_csv(path, grid)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "2,3"
    assert lines[1] == "0.000000,0.500000,1.000000"
    assert np.allclose(read_map_csv(path), grid, atol=1e-6)


def test_csv_grid_requires_2d(tmp_path):
    with pytest.raises(ValueError):
        export_map_csv(tmp_path / "g.csv", np.zeros(4))
    bad = tmp_path / "bad.csv"
    bad.write_text("2,2\n0,1\n", encoding="utf-8")
    with pytest.raises(ValueError, match="header says"):
        read_map_csv(bad)
