from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .modelzoo import to_rgb
from .types import SaliencyMap


def heatmap_rgb(values: np.ndarray) -> np.ndarray:
    """JET-colored RGB uint8 rendering of a [0, 1] grid."""
    import cv2  # lazy

    grid = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    heat_bgr = cv2.applyColorMap(np.rint(grid * 255.0).astype(np.uint8), cv2.COLORMAP_JET)
    return cv2.cvtColor(heat_bgr, cv2.COLOR_BGR2RGB)


def overlay(smap: SaliencyMap, image: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """Alpha-blend the heat-colored map over the image (RGB uint8, same size as ``image``)."""
    import cv2  # lazy

    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be within [0, 1], got {alpha}")
    rgb = to_rgb(image)
    h, w = rgb.shape[:2]

    values = np.asarray(smap.values, dtype=np.float32)
    if values.shape != (h, w):
        values = cv2.resize(values, (w, h), interpolation=cv2.INTER_LINEAR)
    if values.shape != (h, w):
        raise ValueError(f"Saliency map {values.shape} does not match image {(h, w)} after resize")

    heat = heatmap_rgb(values)
    if alpha == 0.0:
        return rgb.copy()
    if alpha == 1.0:
        return heat
    blended = (1.0 - alpha) * rgb.astype(np.float64) + alpha * heat.astype(np.float64)
    return np.clip(np.rint(blended), 0, 255).astype(np.uint8)


def _draw_caption(out: np.ndarray, text: str) -> None:
    """White caption box along the top edge (RGB image, drawn in place)."""
    import cv2  # lazy

    if not text:
        return
    h, w = out.shape[:2]
    scale = max(0.35, min(0.6, w / 500.0))
    (tw, th), baseline = cv2.getTextSize(text, cv2.FONT_HERSHEY_SIMPLEX, scale, 1)
    box_h = th + baseline + 8
    overlay_img = out.copy()
    cv2.rectangle(overlay_img, (0, 0), (min(w - 1, tw + 10), min(h - 1, box_h)), (255, 255, 255), -1)
    out[:] = cv2.addWeighted(overlay_img, 0.75, out, 0.25, 0)
    cv2.putText(out, text, (5, th + 4), cv2.FONT_HERSHEY_SIMPLEX, scale, (15, 23, 42), 1, cv2.LINE_AA)


def side_by_side(panels: Sequence[np.ndarray], captions: Sequence[str] = ()) -> np.ndarray:
    """Concatenate RGB panels horizontally (resized to the first panel's height), captioned."""
    import cv2  # lazy

    if not panels:
        raise ValueError("No panels to combine")
    height = to_rgb(panels[0]).shape[0]
    out = []
    for i, panel in enumerate(panels):
        rgb = to_rgb(panel)
        if rgb.shape[0] != height:
            width = max(1, int(round(rgb.shape[1] * height / rgb.shape[0])))
            rgb = cv2.resize(rgb, (width, height), interpolation=cv2.INTER_AREA)
        rgb = rgb.copy()
        _draw_caption(rgb, captions[i] if i < len(captions) else "")
        out.append(rgb)
    return np.concatenate(out, axis=1)


def save_png(path: Path, image_rgb: np.ndarray) -> None:
    import cv2  # lazy

    path.parent.mkdir(parents=True, exist_ok=True)
    ok = cv2.imwrite(str(path), cv2.cvtColor(to_rgb(image_rgb), cv2.COLOR_RGB2BGR))
    if not ok:
        raise ValueError(f"Failed to write image: {path}")


def export_map_csv(path: Path, values: np.ndarray) -> None:
    """Row-major float grid: first line ``H,W``, then H lines of W values."""
    grid = np.asarray(values, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError(f"Expected a 2-D grid, got shape {grid.shape}")
    h, w = grid.shape
    lines = [f"{h},{w}"]
    lines.extend(",".join(f"{v:.6f}" for v in row) for row in grid)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_map_csv(path: Path) -> np.ndarray:
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"Empty saliency grid: {path}")
    h, w = (int(x) for x in lines[0].split(","))
    rows = [[float(x) for x in ln.split(",")] for ln in lines[1:]]
    grid = np.asarray(rows, dtype=np.float64)
    if grid.shape != (h, w):
        raise ValueError(f"{path}: header says {h}x{w}, found {grid.shape}")
    return grid
