"""Section-level perceptual groups from component boxes.

Boxes are first clustered by size with DBSCAN, then each cluster is split
into runs of boxes that are aligned and close to one another.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .geometry import BBox, aligned, min_dist

NOISE = -1

DEFAULT_EPS = 0.0116
DEFAULT_MIN_PTS = 2
DEFAULT_CONNECTIVITY = 0.12
DEFAULT_ALIGN_TOL = 0.01


@dataclass(frozen=True)
class Cluster:
    label: int
    members: tuple


@dataclass(frozen=True)
class PerceptualGroup:
    corners: tuple  # (x1, y1, x2, y2)
    members: tuple

    @property
    def box(self) -> BBox:
        return BBox.from_corners(*self.corners)

    def to_dict(self) -> dict:
        return {"corners": list(self.corners), "members": list(self.members)}


@dataclass(frozen=True)
class GroupingConfig:
    eps: float = DEFAULT_EPS
    min_pts: int = DEFAULT_MIN_PTS
    connectivity: float = DEFAULT_CONNECTIVITY
    align_tol: float = DEFAULT_ALIGN_TOL
    align_mode: str = "edge"

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.min_pts < 1:
            raise ValueError(f"min_pts must be at least 1, got {self.min_pts}")
        if self.connectivity < 0 or self.align_tol < 0:
            raise ValueError("connectivity and alignment tolerance must be non-negative")


def dbscan_labels(points, eps: float, min_pts: int) -> np.ndarray:
    """Label every point with a cluster id or NOISE.

    Neighbourhoods include the point itself. Clusters are numbered in the
    order their first core point appears in the input; a border point goes
    to the first cluster that reaches it.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = len(pts)
    labels = np.full(n, NOISE, dtype=int)
    if n == 0:
        return labels
    diff = pts[:, None, :] - pts[None, :, :]
    neighbours = np.sqrt((diff**2).sum(-1)) <= eps
    is_core = neighbours.sum(1) >= min_pts
    visited = np.zeros(n, dtype=bool)
    next_label = 0
    for i in range(n):
        if visited[i] or not is_core[i]:
            continue
        visited[i] = True
        labels[i] = next_label
        queue = deque([i])
        while queue:
            p = queue.popleft()
            for q in np.flatnonzero(neighbours[p]):
                if labels[q] == NOISE:
                    labels[q] = next_label
                if not visited[q] and is_core[q]:
                    visited[q] = True
                    queue.append(q)
        next_label += 1
    return labels


def dbscan(points, eps: float, min_pts: int) -> list[Cluster]:
    labels = dbscan_labels(points, eps, min_pts)
    clusters = [
        Cluster(c, tuple(int(i) for i in np.flatnonzero(labels == c)))
        for c in range(labels.max() + 1 if len(labels) else 0)
    ]
    noise = tuple(int(i) for i in np.flatnonzero(labels == NOISE))
    if noise:
        clusters.append(Cluster(NOISE, noise))
    return clusters


def _linked(a: BBox, b: BBox, cfg: GroupingConfig) -> bool:
    return aligned(a, b, cfg.align_tol, cfg.align_mode) is not None and min_dist(a, b) < cfg.connectivity


def grow_run(boxes, pool, cfg: GroupingConfig) -> list[int]:
    """Pop the lowest index from ``pool`` and absorb everything linked to it, transitively."""
    seed = min(pool)
    pool.remove(seed)
    run = [seed]
    frontier = deque([seed])
    while frontier:
        m = frontier.popleft()
        for n in sorted(pool):
            if _linked(boxes[m], boxes[n], cfg):
                pool.remove(n)
                run.append(n)
                frontier.append(n)
    return sorted(run)


def perceptual_groups(boxes, cfg: GroupingConfig = GroupingConfig()) -> list[PerceptualGroup]:
    boxes = list(boxes)
    if not boxes:
        return []
    sizes = np.array([[b.w, b.h] for b in boxes])
    groups = []
    for cluster in dbscan(sizes, cfg.eps, cfg.min_pts):
        if cluster.label == NOISE:
            continue
        pool = set(cluster.members)
        while pool:
            run = grow_run(boxes, pool, cfg)
            if len(run) >= 2:
                members = [boxes[i] for i in run]
                corners = (
                    min(b.x for b in members),
                    min(b.y for b in members),
                    max(b.x2 for b in members),
                    max(b.y2 for b in members),
                )
                groups.append(PerceptualGroup(corners, tuple(run)))
    return groups
