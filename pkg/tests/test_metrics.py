import math
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st
from shapely.geometry import Polygon

from boxvis.geometry import ClassLabel, ObjectBox
from boxvis.metrics import (AE_FORMAT, EvalPair, IouKind, MatchConfig, absolute_error, box_iou,
                            clip_convex, expected_random_ae, footprints, format_ae_rows,
                            format_ae_table, match_boxes, match_true_positives, random_baseline,
                            shoelace, summarize)
from boxvis.scene import Scene


def box(k, x, y, l=1.0, w=1.0, yaw=0.0, label="Car", z=0.0, h=1.0):
    return ObjectBox(k, label, (x, y, z), (l, w, h), yaw)


boxes_2d = st.builds(box, st.just(0), st.floats(-3, 3), st.floats(-3, 3), st.floats(0.2, 5),
                     st.floats(0.2, 5), st.floats(-math.pi, math.pi))


# --- IoU --------------------------------------------------------------------

def test_identical_boxes():
    a = box(0, 3, 4, 4.0, 2.0, 0.7)
    assert box_iou(a, a) == pytest.approx(1.0, abs=1e-12)
    assert box_iou(a, a, IouKind.FULL_3D) == pytest.approx(1.0, abs=1e-12)


def test_disjoint_footprints():
    assert box_iou(box(0, 0, 0), box(1, 5, 0)) == 0.0


def test_unit_squares_offset_by_half():
    assert box_iou(box(0, 0, 0), box(1, 0.5, 0)) == pytest.approx(1 / 3, rel=1e-12)


def test_vertical_offset_only_affects_3d():
    a, b = box(0, 0, 0), box(1, 0, 0, z=0.5)
    assert box_iou(a, b) == pytest.approx(1.0)
    assert box_iou(a, b, IouKind.FULL_3D) == pytest.approx(1 / 3)
    assert box_iou(a, box(1, 0, 0, z=2.0), IouKind.FULL_3D) == 0.0


@given(boxes_2d, boxes_2d)
def test_bev_iou_matches_shapely(a, b):
    fa, fb = footprints([a, b])
    pa, pb = Polygon(fa), Polygon(fb)
    want = pa.intersection(pb).area / pa.union(pb).area
    assert box_iou(a, b) == pytest.approx(want, abs=1e-9)
    assert box_iou(a, b) == pytest.approx(box_iou(b, a), abs=1e-12)


def test_clip_convex_square_in_square():
    outer = np.array([[0, 0], [4, 0], [4, 4], [0, 4]], dtype=float)
    inner = np.array([[1, 1], [2, 1], [2, 2], [1, 2]], dtype=float)
    assert shoelace(clip_convex(inner, outer)) == pytest.approx(1.0)
    assert shoelace(clip_convex(outer, inner)) == pytest.approx(1.0)
    assert shoelace(outer[::-1]) == pytest.approx(-16.0)


def test_footprints_are_counterclockwise():
    for f in footprints([box(0, 1, 2, 3, 1, 2.0), box(1, 0, 0, 1, 5, -1.0)]):
        assert shoelace(f) > 0


def test_match_config_validation():
    with pytest.raises(ValueError):
        MatchConfig(0.0)
    with pytest.raises(ValueError):
        MatchConfig(1.5)
    with pytest.raises(ValueError):
        MatchConfig(0.5, "volume")


# --- matching ---------------------------------------------------------------

def test_identical_scenes_match_everything():
    boxes = [box(k, 3 * k, 0) for k in range(5)]
    pairs = match_boxes(boxes, boxes)
    assert sorted((i, j) for i, j, _ in pairs) == [(k, k) for k in range(5)]
    assert all(iou == pytest.approx(1.0) for _, _, iou in pairs)


def test_prediction_goes_to_higher_iou_truth():
    pred = [box(0, 0.3, 0)]
    gt = [box(0, 0, 0), box(1, 0.5, 0)]
    ((i, j, iou),) = match_boxes(pred, gt)
    assert j == 1 and iou == pytest.approx(0.8 / 1.2)


def test_each_box_used_once():
    pred = [box(0, 0.0, 0), box(1, 0.1, 0)]
    gt = [box(0, 0.05, 0)]
    assert len(match_boxes(pred, gt)) == 1


def test_classes_never_cross():
    assert match_boxes([box(0, 0, 0, label="Car")], [box(0, 0, 0, label="Cyclist")]) == []


def test_threshold_discards_weak_overlaps():
    a, b = box(0, 0, 0), box(1, 0.7, 0)  # IoU 0.3 / 1.7
    assert match_boxes([a], [b], MatchConfig(0.25)) == []
    assert len(match_boxes([a], [b], MatchConfig(0.1))) == 1


def test_equal_iou_ties_break_on_ids():
    gt = [box(0, -0.25, 0), box(1, 0.25, 0)]
    pred = [box(7, 0, 0)]
    ((_, j, _),) = match_boxes(pred, gt)
    assert j == 0


@given(st.integers(0, 10_000))
def test_jittered_copies_all_match(seed):
    rng = np.random.default_rng(seed)
    gt = [box(k, x, y, 4.0, 1.8, yaw) for k, (x, y, yaw) in
          enumerate(zip(rng.uniform(-50, 50, 30), rng.uniform(-50, 50, 30),
                        rng.uniform(-math.pi, math.pi, 30)))]
    # keep true boxes apart so jitter cannot swap partners
    c = np.array([b.center[:2] for b in gt])
    d = np.linalg.norm(c[:, None] - c[None], axis=2) + np.eye(len(gt)) * 1e9
    gt = [b for k, b in enumerate(gt) if d[k].min() > 6.0]
    jit = rng.uniform(-0.2, 0.2, size=(len(gt), 2))
    pred = [box(b.id, b.center[0] + dx, b.center[1] + dy, 4.0, 1.8, b.yaw)
            for b, (dx, dy) in zip(gt, jit)]
    assert len(match_boxes(pred, gt)) == len(gt)


def test_match_true_positives_drops_degenerate_truths():
    gt = Scene((box(0, 0, 0), box(1, 5, 0)))
    pred = Scene((box(10, 0, 0), box(11, 5, 0)))
    pairs = match_true_positives(pred, gt, {10: 0.5, 11: 0.2}, {0: 0.4, 1: None})
    assert pairs == [EvalPair(10, 0, pytest.approx(1.0), 0.5, 0.4, ClassLabel.CAR)]


# --- absolute error ---------------------------------------------------------

@pytest.mark.parametrize("p,a,want", [(0.8, 0.5, 0.3), (0.0, 1.0, 1.0), (0.42, 0.42, 0.0)])
def test_absolute_error_examples(p, a, want):
    assert absolute_error(p, a) == pytest.approx(want, abs=1e-15)


def test_absolute_error_range_checked():
    with pytest.raises(ValueError):
        absolute_error(1.2, 0.5)


unit = st.floats(0.0, 1.0)


@given(unit, unit, unit)
def test_absolute_error_is_a_metric(x, y, z):
    assert absolute_error(x, y) == absolute_error(y, x)
    assert absolute_error(x, z) <= absolute_error(x, y) + absolute_error(y, z) + 1e-15
    assert absolute_error(x, x) == 0.0


def _pairs(values, label=ClassLabel.CAR):
    return [EvalPair(k, k, 1.0, p, a, label) for k, (p, a) in enumerate(values)]


def test_summary_per_class_and_overall():
    pairs = _pairs([(0.8, 0.5), (0.2, 0.2)]) + _pairs([(0.0, 1.0)], ClassLabel.CYCLIST)
    s = summarize(pairs)
    assert s.per_class[ClassLabel.CAR] == (2, pytest.approx(0.15))
    assert s.per_class[ClassLabel.CYCLIST] == (1, 1.0)
    assert ClassLabel.PEDESTRIAN not in s.per_class
    assert s.count == 3 and s.mean == pytest.approx(1.3 / 3)


def test_perfect_pairs_give_exact_zero():
    s = summarize(_pairs([(v, v) for v in np.linspace(0, 1, 17)]))
    assert s.mean == 0.0 and s.per_class[ClassLabel.CAR][1] == 0.0


def test_empty_summary():
    s = summarize([])
    assert s.count == 0 and math.isnan(s.mean) and s.per_class == {}
    assert format_ae_rows(s).splitlines() == [f"#{AE_FORMAT}:class,count,mean_ae", "all,0,"]


@given(st.lists(st.tuples(unit, unit), min_size=1, max_size=40), st.randoms())
def test_summary_ignores_pair_order(values, rnd):
    pairs = _pairs(values)
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    assert summarize(shuffled) == summarize(pairs)


def test_rows_and_table_format():
    s = summarize(_pairs([(0.8, 0.5)]) + _pairs([(0.1, 0.4)], ClassLabel.PEDESTRIAN))
    assert format_ae_rows(s).splitlines()[1:] == ["Car,1,0.300000", "Pedestrian,1,0.300000",
                                                 "all,2,0.300000"]
    assert "Pedestrian" in format_ae_table(s)


# --- random baseline --------------------------------------------------------

def test_expected_random_ae_closed_form():
    # E|U - v| integrated numerically
    u = (np.arange(200_000) + 0.5) / 200_000
    for v in (0.0, 0.3, 1.0):
        assert expected_random_ae([v]) == pytest.approx(np.abs(u - v).mean(), abs=1e-9)
    assert expected_random_ae([0.0, 1.0]) == 0.5


def test_random_baseline_is_seeded_and_uniform():
    pairs = _pairs([(0.5, v) for v in np.random.default_rng(0).random(20_000)])
    a, b = random_baseline(pairs, seed=3), random_baseline(pairs, seed=3)
    assert a == b and a != random_baseline(pairs, seed=4)
    vp = np.array([p.v_pred for p in a])
    assert abs(vp.mean() - 0.5) < 5 / math.sqrt(12 * len(vp))
    assert [p.v_algo for p in a] == [p.v_algo for p in pairs]


@pytest.mark.parametrize("dist", ["uniform", "bimodal", "ones"])
def test_random_baseline_matches_expectation(dist):
    rng = random.Random(dist)
    draw = {"uniform": lambda: rng.random(),
            "bimodal": lambda: rng.choice([0.0, 1.0, rng.random()]),
            "ones": lambda: 1.0}[dist]
    pairs = _pairs([(0.0, draw()) for _ in range(20_000)])
    got = summarize(random_baseline(pairs, seed=1)).mean
    assert got == pytest.approx(expected_random_ae([p.v_algo for p in pairs]), abs=0.01)
