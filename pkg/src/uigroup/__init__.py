"""Semantic component group tooling for GUI screenshots and design prototypes."""

from .geometry import BBox, Extent, iou, min_dist, aligned, normalize, clamp_aspect
from .grouping import GroupingConfig, perceptual_groups
from .evaluation import prf_sweep, code_availability

__all__ = [
    "BBox",
    "Extent",
    "iou",
    "min_dist",
    "aligned",
    "normalize",
    "clamp_aspect",
    "GroupingConfig",
    "perceptual_groups",
    "prf_sweep",
    "code_availability",
]

__version__ = "0.1.0"
