"""Precision / recall / F1 over the IoU sweep, and the code-availability score."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import iou

THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
AVAILABILITY_CUTS = (0.80, 0.85, 0.90, 0.95)

# Averaged scores of the full trained detector on its own test split. Carried
# in every report for side-by-side reading; nothing here can reproduce them.
REFERENCE_DETECTOR = {"precision": 0.706, "recall": 0.858, "f1": 0.775}


def f1_score(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def match(preds, gts, threshold: float, scores: Optional[Sequence] = None) -> list[tuple[int, int]]:
    """Greedy one-to-one matching in descending IoU order.

    Ties go to the higher-scored prediction, then the lower prediction index,
    then the lower ground-truth index.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"IoU threshold must be in (0, 1], got {threshold}")
    if scores is None:
        scores = [None] * len(preds)
    pairs = []
    for i, p in enumerate(preds):
        s = scores[i] if scores[i] is not None else 0.0
        for j, g in enumerate(gts):
            v = iou(p, g)
            if v >= threshold:
                pairs.append((-v, -s, i, j))
    pairs.sort()
    used_p, used_g, out = set(), set(), []
    for _, _, i, j in pairs:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        out.append((i, j))
    return out


@dataclass
class ThresholdResult:
    threshold: float
    matches: int
    precision: float
    recall: float
    f1: float


@dataclass
class EvalReport:
    per_threshold: list
    precision: float
    recall: float
    f1: float
    n_preds: int
    n_gts: int
    degenerate: bool = False
    mode: str = "pooled"
    reference: dict = field(default_factory=lambda: dict(REFERENCE_DETECTOR))

    def to_dict(self) -> dict:
        return {
            "thresholds": [
                {
                    "iou": t.threshold,
                    "matches": t.matches,
                    "precision": t.precision,
                    "recall": t.recall,
                    "f1": t.f1,
                }
                for t in self.per_threshold
            ],
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "n_preds": self.n_preds,
            "n_gts": self.n_gts,
            "degenerate": self.degenerate,
            "mode": self.mode,
            "reference": self.reference,
        }


def _averaged(rows, n_preds, n_gts, degenerate=False, mode="pooled") -> EvalReport:
    k = len(rows)
    return EvalReport(
        per_threshold=rows,
        precision=sum(r.precision for r in rows) / k,
        recall=sum(r.recall for r in rows) / k,
        f1=sum(r.f1 for r in rows) / k,
        n_preds=n_preds,
        n_gts=n_gts,
        degenerate=degenerate,
        mode=mode,
    )


def prf_sweep(preds, gts, scores=None, thresholds=THRESHOLDS) -> EvalReport:
    """Sweep a single screen (or one pooled set of boxes)."""
    return prf_sweep_many([(preds, gts, scores)], thresholds=thresholds)


def prf_sweep_many(screens, thresholds=THRESHOLDS, per_image: bool = False) -> EvalReport:
    """Evaluate several screens.

    Screens are ``(preds, gts)`` or ``(preds, gts, scores)`` tuples. By default
    matches are pooled over all screens; ``per_image=True`` averages the
    per-screen metrics instead.
    """
    screens = [s if len(s) == 3 else (s[0], s[1], None) for s in screens]
    n_preds = sum(len(p) for p, _, _ in screens)
    n_gts = sum(len(g) for _, g, _ in screens)
    if per_image:
        reports = [prf_sweep(p, g, s, thresholds) for p, g, s in screens]
        if not reports:
            return _degenerate(thresholds, mode="per-image")
        rows = []
        for k, t in enumerate(thresholds):
            cells = [r.per_threshold[k] for r in reports]
            rows.append(
                ThresholdResult(
                    t,
                    sum(c.matches for c in cells),
                    float(np.mean([c.precision for c in cells])),
                    float(np.mean([c.recall for c in cells])),
                    float(np.mean([c.f1 for c in cells])),
                )
            )
        return _averaged(rows, n_preds, n_gts, all(r.degenerate for r in reports), "per-image")

    if n_preds == 0 and n_gts == 0:
        return _degenerate(thresholds)
    rows = []
    for t in thresholds:
        m = sum(len(match(p, g, t, s)) for p, g, s in screens)
        p = m / n_preds if n_preds else 0.0
        r = m / n_gts if n_gts else 0.0
        rows.append(ThresholdResult(t, m, p, r, f1_score(p, r)))
    return _averaged(rows, n_preds, n_gts)


def _degenerate(thresholds, mode="pooled") -> EvalReport:
    rows = [ThresholdResult(t, 0, 0.0, 0.0, 0.0) for t in thresholds]
    return _averaged(rows, 0, 0, degenerate=True, mode=mode)


@dataclass(frozen=True)
class AvailabilityScore:
    raw: float
    banded: int


def availability_band(raw: float) -> int:
    """1 below 0.80, then one step per left-closed interval up to 5 at >= 0.95."""
    return 1 + bisect.bisect_right(AVAILABILITY_CUTS, raw)


def code_availability(changed_lines: int, total_lines: int) -> AvailabilityScore:
    if total_lines <= 0:
        raise ValueError("total lines must be positive")
    if not 0 <= changed_lines <= total_lines:
        raise ValueError(f"changed lines ({changed_lines}) must lie in [0, {total_lines}]")
    raw = (total_lines - changed_lines) / total_lines
    return AvailabilityScore(raw, availability_band(raw))
