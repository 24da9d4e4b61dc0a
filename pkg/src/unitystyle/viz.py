"""Qualitative comparison grids: labeled rows of images tiled into one PNG."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw


def image_grid(
    rows: list[list[np.ndarray]],
    row_labels: list[str] | None = None,
    out_path: str | Path | None = None,
    pad: int = 4,
    label_width: int = 90,
) -> Image.Image:
    """Tile rows of equal-size [0,1] images; optional caption column."""
    if not rows or not rows[0]:
        raise ValueError("image_grid needs at least one row with one image")
    n_cols = max(len(r) for r in rows)
    h, w = rows[0][0].shape[:2]
    lw = label_width if row_labels else 0
    canvas = Image.new(
        "RGB",
        (lw + n_cols * (w + pad) + pad, len(rows) * (h + pad) + pad),
        color=(255, 255, 255),
    )
    draw = ImageDraw.Draw(canvas)
    for r, row in enumerate(rows):
        y = pad + r * (h + pad)
        if row_labels:
            draw.text((4, y + h // 2 - 5), row_labels[r] if r < len(row_labels) else "", fill=(0, 0, 0))
        for c, img in enumerate(row):
            tile = Image.fromarray((np.clip(img, 0, 1) * 255 + 0.5).astype(np.uint8))
            canvas.paste(tile, (lw + pad + c * (w + pad), y))
    if out_path is not None:
        canvas.save(out_path)
    return canvas
