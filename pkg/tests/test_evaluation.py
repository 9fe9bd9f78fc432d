import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uigroup.evaluation import (
    REFERENCE_DETECTOR,
    THRESHOLDS,
    availability_band,
    code_availability,
    match,
    prf_sweep,
    prf_sweep_many,
)
from uigroup.geometry import BBox


def random_boxes(rng, n):
    return [BBox(*rng.integers(0, 80, 2), *rng.integers(5, 30, 2)) for _ in range(n)]


class TestMatch:
    def test_identical_sets(self):
        boxes = [BBox(0, 0, 10, 10), BBox(20, 20, 5, 5)]
        for t in THRESHOLDS:
            assert match(boxes, boxes, t) == [(0, 0), (1, 1)]

    def test_greedy_prefers_best_iou(self):
        pred = [BBox(0, 0, 10, 10)]
        gts = [BBox(0, 0, 10, 6), BBox(0, 0, 10, 8)]  # IoU 0.6 and 0.8
        assert match(pred, gts, 0.5) == [(0, 1)]

    def test_empty(self):
        assert match([], [BBox(0, 0, 1, 1)], 0.5) == []

    def test_score_breaks_ties(self):
        gt = [BBox(0, 0, 10, 10)]
        preds = [BBox(0, 0, 10, 8), BBox(0, 2, 10, 8)]
        assert match(preds, gt, 0.5) == [(0, 0)]
        assert match(preds, gt, 0.5, scores=[0.2, 0.9]) == [(1, 0)]

    def test_threshold_range(self):
        with pytest.raises(ValueError):
            match([], [], 0.0)

    def test_one_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p, g = random_boxes(rng, 8), random_boxes(rng, 6)
            m = match(p, g, 0.3)
            assert len({i for i, _ in m}) == len(m) == len({j for _, j in m})


class TestSweep:
    def test_perfect(self):
        boxes = [BBox(0, 0, 10, 10), BBox(30, 30, 7, 9)]
        r = prf_sweep(boxes, boxes)
        assert (r.precision, r.recall, r.f1) == (1.0, 1.0, 1.0)
        assert all(row.f1 == 1.0 for row in r.per_threshold)

    def test_single_iou_point_six(self):
        r = prf_sweep([BBox(0, 0, 6, 10)], [BBox(0, 0, 10, 10)])
        assert [row.matches for row in r.per_threshold] == [1, 1, 1, 0, 0, 0, 0, 0, 0, 0]
        assert (r.precision, r.recall, r.f1) == (0.3, 0.3, 0.3)

    def test_no_predictions(self):
        r = prf_sweep([], [BBox(0, 0, 1, 1)])
        assert (r.precision, r.recall, r.f1) == (0.0, 0.0, 0.0)
        assert not r.degenerate

    def test_degenerate(self):
        r = prf_sweep([], [])
        assert r.degenerate and r.f1 == 0.0

    def test_report_carries_reference(self):
        d = prf_sweep([BBox(0, 0, 1, 1)], [BBox(0, 0, 1, 1)]).to_dict()
        assert d["reference"] == REFERENCE_DETECTOR == {"precision": 0.706, "recall": 0.858, "f1": 0.775}
        assert [row["iou"] for row in d["thresholds"]] == [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95]

    def test_pooled_vs_per_image(self):
        a = ([BBox(0, 0, 10, 10)], [BBox(0, 0, 10, 10)])
        b = ([BBox(0, 0, 10, 10), BBox(50, 50, 5, 5)], [BBox(0, 0, 10, 10)])
        pooled = prf_sweep_many([a, b])
        per = prf_sweep_many([a, b], per_image=True)
        assert pooled.precision == pytest.approx(2 / 3)
        assert per.precision == pytest.approx(0.75)
        assert per.mode == "per-image"

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_antitone_and_bounded(self, seed):
        rng = np.random.default_rng(seed)
        r = prf_sweep(random_boxes(rng, rng.integers(0, 8)), random_boxes(rng, rng.integers(0, 8)))
        for key in ("precision", "recall", "f1"):
            vals = [getattr(row, key) for row in r.per_threshold]
            assert all(a >= b for a, b in zip(vals, vals[1:]))
            assert all(0 <= v <= 1 for v in vals)
        for row in r.per_threshold:
            p, rc = row.precision, row.recall
            assert row.f1 == (0.0 if p + rc == 0 else pytest.approx(2 * p * rc / (p + rc)))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_extra_boxes_never_help(self, seed):
        rng = np.random.default_rng(seed)
        preds, gts = random_boxes(rng, 5), random_boxes(rng, 5)
        base = prf_sweep(preds, gts)
        # spurious: placed where nothing else can overlap it
        stray = BBox(200 + rng.integers(0, 50), 200, 10, 10)
        more_preds = prf_sweep(preds + [stray], gts)
        more_gts = prf_sweep(preds, gts + [stray])
        for b, p, g in zip(base.per_threshold, more_preds.per_threshold, more_gts.per_threshold):
            assert p.precision <= b.precision + 1e-12
            assert g.recall <= b.recall + 1e-12


class TestAvailability:
    def test_untouched(self):
        s = code_availability(0, 120)
        assert (s.raw, s.banded) == (1.0, 5)

    def test_all_changed(self):
        s = code_availability(50, 50)
        assert (s.raw, s.banded) == (0.0, 1)

    def test_interior(self):
        assert code_availability(13, 100).banded == 3

    @pytest.mark.parametrize("raw, band", [(0.79, 1), (0.80, 2), (0.85, 3), (0.90, 4), (0.95, 5), (1.0, 5)])
    def test_bands(self, raw, band):
        assert availability_band(raw) == band

    def test_invalid(self):
        with pytest.raises(ValueError):
            code_availability(11, 10)
        with pytest.raises(ValueError):
            code_availability(0, 0)

    def test_monotone(self):
        raws = np.linspace(0, 1, 1001)
        bands = [availability_band(r) for r in raws]
        assert bands == sorted(bands)
