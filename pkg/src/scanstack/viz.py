"""Rendering helpers: tensor PNGs with box overlays."""
from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from ._io import atomic_write
from .core import DEFAULT_CONFIG, EncodingConfig, ObjectClass

CLASS_COLORS = {
    ObjectClass.CHAIR: (255, 255, 0),
    ObjectClass.BOX: (255, 0, 255),
    ObjectClass.DESK: (0, 255, 255),
    ObjectClass.DOORFRAME: (255, 255, 255),
}


def render_tensor(tensor: np.ndarray, boxes=(), scale: int = 1, cfg: EncodingConfig = DEFAULT_CONFIG) -> Image.Image:
    """RGB image of a stack (red = t-2, green = t-1, blue = t) with box outlines.

    Boxes are drawn on the pixel grid after nearest-neighbour upscaling, so an
    outline encloses exactly the cells its box covers.
    """
    tensor = np.asarray(tensor, dtype=np.uint8)
    if scale < 1:
        raise ValueError("scale must be >= 1")
    img = Image.fromarray(np.ascontiguousarray(tensor))
    if scale > 1:
        img = img.resize((img.width * scale, img.height * scale), Image.NEAREST)
    draw = ImageDraw.Draw(img)
    for box in boxes:
        x1, y1, x2, y2 = box.to_pixels(cfg)
        draw.rectangle(
            [x1 * scale, y1 * scale, x2 * scale - 1, y2 * scale - 1],
            outline=CLASS_COLORS.get(box.cls, (255, 255, 255)),
        )
    return img


def save_image(img: Image.Image, path) -> Path:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return atomic_write(path, buf.getvalue())
