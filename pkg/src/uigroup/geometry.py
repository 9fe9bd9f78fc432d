"""Axis-aligned box geometry shared by every stage of the toolkit.

Boxes are stored as ``[x, y, w, h]`` with ``(x, y)`` the top-left corner.
The same type carries pixel and normalized coordinates; which one a given
box uses is up to the caller.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

ASPECT_LIMIT = 8.0

HORIZONTAL = "horizontal"
VERTICAL = "vertical"


class InvalidBoxError(ValueError):
    pass


class OutOfBoundsError(ValueError):
    pass


@dataclass(frozen=True)
class BBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InvalidBoxError(f"{name}={value!r} is not finite")
            object.__setattr__(self, name, float(value))
        if not (self.w > 0 and self.h > 0):
            raise InvalidBoxError(f"box must have positive size, got w={self.w}, h={self.h}")

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "BBox":
        if len(values) != 4:
            raise InvalidBoxError(f"expected [x, y, w, h], got {list(values)!r}")
        return cls(*values)

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "BBox":
        return cls(x1, y1, x2 - x1, y2 - y1)

    @classmethod
    def from_center(cls, xc: float, yc: float, w: float, h: float) -> "BBox":
        return cls(xc - w / 2, yc - h / 2, w, h)

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2, self.y + self.h / 2)

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class Extent:
    width: float
    height: float

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"extent must be positive, got {self.width}x{self.height}")


def intersection_area(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: BBox, b: BBox) -> float:
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    if a == b:
        return 1.0
    # corner-derived and w*h areas can disagree in the last bit
    return min(1.0, inter / (a.area + b.area - inter))


def contains(outer: BBox, inner: BBox) -> bool:
    return outer.x <= inner.x and outer.y <= inner.y and inner.x2 <= outer.x2 and inner.y2 <= outer.y2


def contains_point(box: BBox, px: float, py: float) -> bool:
    return box.x <= px <= box.x2 and box.y <= py <= box.y2


def normalize(b: BBox, screen: Extent) -> BBox:
    """Divide every coordinate by the matching screen dimension."""
    if b.x < 0 or b.y < 0 or b.x2 > screen.width or b.y2 > screen.height:
        raise OutOfBoundsError(
            f"box {b.to_list()} exceeds screen {screen.width}x{screen.height}"
        )
    return BBox(b.x / screen.width, b.y / screen.height, b.w / screen.width, b.h / screen.height)


def denormalize(b: BBox, screen: Extent) -> BBox:
    return BBox(b.x * screen.width, b.y * screen.height, b.w * screen.width, b.h * screen.height)


def aligned(a: BBox, b: BBox, tol: float = 0.0, mode: str = "edge") -> Optional[str]:
    """Return the axis along which two boxes line up, or None.

    ``mode="edge"`` compares top edge + height (rows) and left edge + width
    (columns); ``mode="center"`` compares center coordinates only. A pair
    satisfying both tests is reported as horizontal.
    """
    if tol < 0:
        raise ValueError("alignment tolerance must be non-negative")
    if mode == "edge":
        if abs(a.y - b.y) <= tol and abs(a.h - b.h) <= tol:
            return HORIZONTAL
        if abs(a.x - b.x) <= tol and abs(a.w - b.w) <= tol:
            return VERTICAL
    elif mode == "center":
        (ax, ay), (bx, by) = a.center, b.center
        if abs(ay - by) <= tol:
            return HORIZONTAL
        if abs(ax - bx) <= tol:
            return VERTICAL
    else:
        raise ValueError(f"unknown alignment mode {mode!r}")
    return None


def min_dist(a: BBox, b: BBox) -> float:
    """Smallest Euclidean distance between the two closed rectangles."""
    dx = max(0.0, b.x - a.x2, a.x - b.x2)
    dy = max(0.0, b.y - a.y2, a.y - b.y2)
    return math.hypot(dx, dy)


def clamp_aspect(b: BBox, limit: float = ASPECT_LIMIT) -> BBox:
    """Grow the short side about the center until w/h lies in [1/limit, limit]."""
    ratio = b.w / b.h
    if ratio > limit:
        h = b.w / limit
        return BBox(b.x, b.y + b.h / 2 - h / 2, b.w, h)
    if ratio < 1 / limit:
        w = b.h / limit
        return BBox(b.x + b.w / 2 - w / 2, b.y, w, b.h)
    return b


def center_form(b: BBox) -> tuple[float, float, float, float]:
    return (b.x + b.w / 2, b.y + b.h / 2, b.w, b.h)


def corner_form(b: BBox) -> tuple[float, float, float, float]:
    return (b.x, b.y, b.x2, b.y2)


def cover(boxes: Iterable[BBox]) -> BBox:
    """Tightest box containing all of ``boxes``."""
    boxes = list(boxes)
    if not boxes:
        raise ValueError("cannot cover an empty set of boxes")
    return BBox.from_corners(
        min(b.x for b in boxes),
        min(b.y for b in boxes),
        max(b.x2 for b in boxes),
        max(b.y2 for b in boxes),
    )


# -- detection / annotation files ---------------------------------------------


@dataclass
class Detections:
    """Contents of a detection or annotation JSON file."""

    image: str
    screen: Extent
    boxes: list[BBox]
    scores: list[Optional[float]] = field(default_factory=list)

    def __post_init__(self):
        if not self.scores:
            self.scores = [None] * len(self.boxes)
        if len(self.scores) != len(self.boxes):
            raise ValueError("scores and boxes differ in length")

    def normalized(self) -> list[BBox]:
        return [normalize(b, self.screen) for b in self.boxes]

    def to_dict(self) -> dict:
        boxes = []
        for b, s in zip(self.boxes, self.scores):
            entry = {"x": b.x, "y": b.y, "w": b.w, "h": b.h}
            if s is not None:
                entry["score"] = s
            boxes.append(entry)
        return {
            "image": self.image,
            "screen": {"width": _as_int(self.screen.width), "height": _as_int(self.screen.height)},
            "boxes": boxes,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Detections":
        try:
            screen = Extent(data["screen"]["width"], data["screen"]["height"])
            boxes, scores = [], []
            for entry in data["boxes"]:
                boxes.append(BBox(entry["x"], entry["y"], entry["w"], entry["h"]))
                score = entry.get("score")
                if score is not None and not 0.0 <= score <= 1.0:
                    raise ValueError(f"score {score} outside [0, 1]")
                scores.append(score)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed detection record: {exc!r}") from exc
        return cls(image=data.get("image", ""), screen=screen, boxes=boxes, scores=scores)


def _as_int(v: float):
    return int(v) if float(v).is_integer() else v


def load_detections(path) -> Detections:
    path = Path(path)
    with path.open() as fh:
        data = json.load(fh)
    try:
        return Detections.from_dict(data)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc
