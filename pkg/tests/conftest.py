from __future__ import annotations

import json

import numpy as np
import pytest

from uqbench.labelspace import default_catalog_path, load_label_catalog

from .synthetic import TINY_SPEC, write_png


@pytest.fixture(scope="session")
def catalog():
    return load_label_catalog(default_catalog_path())


@pytest.fixture()
def tiny_spec():
    return TINY_SPEC


@pytest.fixture()
def rgb_image():
    rng = np.random.default_rng(7)
    return rng.integers(0, 256, size=(12, 16, 3), dtype=np.uint8)


@pytest.fixture()
def manifest_path(tmp_path):
    """Three small color images covering every experiment."""
    images = tmp_path / "images"
    colors = {
        "chainsaw": (200, 40, 30),
        "wheelbarrow": (30, 160, 60),
        "greenhouse": (40, 60, 220),
    }
    accepted = {
        "chainsaw": ["chain saw"],
        "wheelbarrow": ["barrow"],
        "greenhouse": ["greenhouse"],
    }
    entries = []
    for i, (image_id, color) in enumerate(colors.items()):
        rng = np.random.default_rng(i)
        img = np.clip(np.array(color)[None, None, :] + rng.integers(-30, 30, size=(12, 16, 3)), 0, 255).astype(np.uint8)
        write_png(images / f"{image_id}.png", img)
        entries.append(
            {
                "image_id": image_id,
                "path": f"images/{image_id}.png",
                "ground_truth": image_id,
                "accepted_classes": accepted[image_id],
            }
        )
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"version": "1", "entries": entries}), encoding="utf-8")
    return path
