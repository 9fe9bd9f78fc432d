"""Unsupervised element detection and the red/blue colormap raster."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image
from scipy import ndimage

from .geometry import BBox, Extent

BACKGROUND = 0
NONTEXT = 1
TEXT = 2

PALETTE = {
    BACKGROUND: (0xFF, 0xFF, 0xFF),
    NONTEXT: (0xFF, 0x00, 0x00),
    TEXT: (0x00, 0x00, 0xFF),
}

BINARIZE_OFFSET = 25
MIN_AREA = 16


class OCRFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TextBox:
    box: BBox
    text: str


@dataclass(frozen=True)
class ElementBoxes:
    nontext: tuple
    text: tuple
    source: str = "builtin"


@dataclass(frozen=True)
class ColorMap:
    extent: Extent
    pixels: np.ndarray  # (H, W) uint8 labels

    def count(self, label: int) -> int:
        return int(np.count_nonzero(self.pixels == label))


def to_gray(image) -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim == 3:
        rgb = arr[..., :3].astype(np.float64)
        arr = rgb @ np.array([0.299, 0.587, 0.114])
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D or 3-D image, got shape {arr.shape}")
    return np.rint(arr).astype(np.int16)


def background_shade(gray: np.ndarray) -> int:
    """Most frequent value on the one-pixel border ring."""
    ring = np.concatenate([gray[0, :], gray[-1, :], gray[:, 0], gray[:, -1]])
    values, counts = np.unique(ring, return_counts=True)
    return int(values[np.argmax(counts)])


def detect_nontext(image, min_area: int = MIN_AREA, offset: int = BINARIZE_OFFSET) -> list[BBox]:
    """Boxes of 8-connected foreground components, sorted by (y, x).

    Foreground is every pixel whose gray level differs from the border-ring
    background by more than ``offset``.
    """
    gray = to_gray(image)
    if gray.size == 0:
        raise ValueError("empty image")
    fg = np.abs(gray - background_shade(gray)) > offset
    labels, n = ndimage.label(fg, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return []
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    boxes = []
    for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None or sizes[idx] < min_area:
            continue
        ys, xs = sl
        boxes.append(BBox(xs.start, ys.start, xs.stop - xs.start, ys.stop - ys.start))
    boxes.sort(key=lambda b: (b.y, b.x))
    return boxes


def load_text_boxes(path, extent: Optional[Extent] = None) -> list[TextBox]:
    path = Path(path)
    raw = path.read_text(encoding="utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        lines = raw.splitlines()
        context = lines[exc.lineno - 1] if 0 < exc.lineno <= len(lines) else ""
        raise OCRFormatError(
            f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}: {context.strip()!r}"
        ) from exc
    if not isinstance(data, dict) or not isinstance(data.get("texts"), list):
        raise OCRFormatError(f"{path}: expected an object with a 'texts' array")
    out = []
    for i, entry in enumerate(data["texts"]):
        try:
            box = BBox.from_list(entry["box"])
            text = str(entry.get("text", ""))
        except (KeyError, TypeError, ValueError) as exc:
            raise OCRFormatError(f"{path}: texts[{i}]: {exc}") from exc
        if extent is not None and not _within(box, extent):
            raise OCRFormatError(
                f"{path}: texts[{i}] box {box.to_list()} exceeds image "
                f"{extent.width}x{extent.height}"
            )
        out.append(TextBox(box, text))
    return out


def _within(box: BBox, extent: Extent) -> bool:
    return box.x >= 0 and box.y >= 0 and box.x2 <= extent.width and box.y2 <= extent.height


def _pixel_span(box: BBox):
    return (
        int(math.floor(box.x)),
        int(math.floor(box.y)),
        int(math.ceil(box.x2)),
        int(math.ceil(box.y2)),
    )


def render_colormap(elements: ElementBoxes, extent: Extent) -> ColorMap:
    """Paint non-text boxes first, then text boxes over them."""
    width, height = int(extent.width), int(extent.height)
    pixels = np.zeros((height, width), dtype=np.uint8)
    for label, boxes in ((NONTEXT, elements.nontext), (TEXT, elements.text)):
        for box in boxes:
            if isinstance(box, TextBox):
                box = box.box
            if not _within(box, extent):
                raise ValueError(f"box {box.to_list()} lies outside {width}x{height}")
            x1, y1, x2, y2 = _pixel_span(box)
            pixels[y1:y2, x1:x2] = label
    return ColorMap(extent, pixels)


def colormap_to_rgb(cmap: ColorMap) -> np.ndarray:
    lut = np.array([PALETTE[BACKGROUND], PALETTE[NONTEXT], PALETTE[TEXT]], dtype=np.uint8)
    return lut[cmap.pixels]


def export_colormap_png(cmap: ColorMap, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(colormap_to_rgb(cmap)).save(path, format="PNG")
    except OSError as exc:
        raise OSError(f"cannot write colormap to {path}: {exc}") from exc
    return path


def import_colormap_png(path) -> ColorMap:
    rgb = np.asarray(Image.open(path).convert("RGB"))
    pixels = np.full(rgb.shape[:2], 255, dtype=np.uint8)
    for label, color in PALETTE.items():
        pixels[np.all(rgb == color, axis=-1)] = label
    if np.any(pixels == 255):
        raise ValueError(f"{path}: contains colors outside the colormap palette")
    h, w = pixels.shape
    return ColorMap(Extent(w, h), pixels)
