import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairtrack.geometry import BBox
from fairtrack.metrics import (
    clear_mot,
    detection_ap,
    evaluate_tracking,
    idf1,
    tpr_at_far,
)


def _b(x, y=0.0, w=10.0, h=10.0):
    return BBox(x, y, x + w, y + h)


def _perfect_frames(n_frames, n_ids):
    return {f: [(i, _b(100.0 * i + 2.0 * f)) for i in range(1, n_ids + 1)]
            for f in range(1, n_frames + 1)}


# --- CLEAR / MOTA ----------------------------------------------------------

def test_mota_perfect():
    gt = _perfect_frames(10, 3)
    r = clear_mot(gt, gt)
    assert r.mota == 1.0
    assert (r.fp, r.fn, r.id_switches) == (0, 0, 0)
    assert r.num_gt == 30
    assert r.mt_ratio == 1.0 and r.ml_ratio == 0.0


def test_mota_event_arithmetic():
    # 10 gt boxes; 2 misses, 1 false positive, 1 switch -> 1 - 4/10 = 0.6
    gt = {f: [(1, _b(0.0 + 2 * f))] for f in range(1, 11)}
    pred = {}
    for f in range(1, 11):
        boxes = []
        if f not in (3, 7):            # two missed frames -> FN = 2
            pid = 1 if f < 9 else 2    # id change at frame 9 -> IDSW = 1
            boxes.append((pid, _b(0.0 + 2 * f)))
        if f == 5:                     # one stray box -> FP = 1
            boxes.append((9, _b(500.0)))
        pred[f] = boxes
    r = clear_mot(gt, pred)
    assert (r.fp, r.fn, r.id_switches) == (1, 2, 1)
    assert r.mota == pytest.approx(0.6)


def test_mota_switch_counted_across_gap():
    # matched by id A, then unmatched frames, then id B: still one switch
    gt = {f: [(1, _b(0.0))] for f in range(1, 5)}
    pred = {1: [(10, _b(0.0))], 2: [], 3: [], 4: [(20, _b(0.0))]}
    r = clear_mot(gt, pred)
    assert r.id_switches == 1
    assert r.fn == 2


def test_mota_id_flip_mid_sequence():
    gt = {f: [(1, _b(0.0)), (2, _b(100.0))] for f in range(1, 5)}
    pred = {}
    for f in range(1, 5):
        if f <= 2:
            pred[f] = [(5, _b(0.0)), (6, _b(100.0))]
        else:
            pred[f] = [(6, _b(0.0)), (5, _b(100.0))]  # both identities flip
    r = clear_mot(gt, pred)
    assert r.id_switches == 2
    assert r.fp == 0 and r.fn == 0
    assert r.mota == pytest.approx(1.0 - 2 / 8)


def test_mota_can_go_negative():
    gt = {1: [(1, _b(0.0))]}
    pred = {1: [(1, _b(500.0)), (2, _b(600.0)), (3, _b(700.0))]}
    r = clear_mot(gt, pred)
    assert r.fp == 3 and r.fn == 1
    assert r.mota == pytest.approx(-3.0)


def test_mota_persistent_correspondence_resists_hijack():
    # second pred box overlaps gt slightly better on frame 2, but the
    # established match stays as long as it clears the IoU threshold
    gt = {1: [(1, BBox(0, 0, 10, 10))], 2: [(1, BBox(0, 0, 10, 10))]}
    pred = {
        1: [(7, BBox(1, 0, 11, 10))],
        2: [(7, BBox(2, 0, 12, 10)), (8, BBox(0, 0, 10, 10))],
    }
    r = clear_mot(gt, pred)
    assert r.id_switches == 0
    assert r.fp == 1  # the would-be hijacker goes unmatched


def test_mota_mt_ml_classification():
    # id 1 covered 10/10, id 2 covered 5/10, id 3 covered 1/10
    gt = {f: [(i, _b(200.0 * i)) for i in (1, 2, 3)] for f in range(1, 11)}
    pred = {}
    for f in range(1, 11):
        boxes = [(1, _b(200.0))]
        if f <= 5:
            boxes.append((2, _b(400.0)))
        if f == 1:
            boxes.append((3, _b(600.0)))
        pred[f] = boxes
    r = clear_mot(gt, pred)
    assert r.mt_ratio == pytest.approx(1 / 3)
    assert r.ml_ratio == pytest.approx(1 / 3)


def test_mota_empty_inputs():
    r = clear_mot({}, {})
    assert r.mota == 1.0 and r.num_gt == 0


def test_mota_duplicate_id_rejected():
    gt = {1: [(1, _b(0.0)), (1, _b(50.0))]}
    with pytest.raises(ValueError):
        clear_mot(gt, {})
    with pytest.raises(ValueError):
        clear_mot({}, gt)


# --- IDF1 ------------------------------------------------------------------

def test_idf1_perfect():
    gt = _perfect_frames(10, 2)
    assert idf1(gt, gt) == 1.0


def test_idf1_midpoint_flip():
    # one gt trajectory over 10 frames, predictions switch id at halftime:
    # best single pairing explains 5 frames -> 2*5 / (10 + 10) = 0.5
    gt = {f: [(1, _b(2.0 * f))] for f in range(1, 11)}
    pred = {f: [(1 if f <= 5 else 2, _b(2.0 * f))] for f in range(1, 11)}
    assert idf1(gt, pred) == pytest.approx(0.5)


def test_idf1_partial_coverage():
    # pred follows gt for 8 of 10 frames with a single id, missing 2:
    # IDTP = 8 -> 2*8 / (10 + 8) = 8/9
    gt = {f: [(1, _b(2.0 * f))] for f in range(1, 11)}
    pred = {f: [(3, _b(2.0 * f))] for f in range(1, 9)}
    assert idf1(gt, pred) == pytest.approx(16 / 18)


def test_idf1_four_fifths():
    # two ids, one tracked perfectly, the other half-and-half:
    # IDTP = 10 + 5 + (0 for the flipped half since its id is taken)
    gt = {f: [(1, _b(0.0)), (2, _b(100.0))] for f in range(1, 11)}
    pred = {}
    for f in range(1, 11):
        second_id = 2 if f <= 5 else 3
        pred[f] = [(1, _b(0.0)), (second_id, _b(100.0))]
    # pairing (1,1)=10 frames, (2,2)=5 frames -> IDTP=15, 2*15/(20+20)=0.75
    assert idf1(gt, pred) == pytest.approx(0.75)


def test_idf1_no_overlap():
    gt = {1: [(1, _b(0.0))]}
    pred = {1: [(1, _b(500.0))]}
    assert idf1(gt, pred) == 0.0


def test_idf1_empty_both():
    assert idf1({}, {}) == 1.0


def test_idf1_prefers_globally_best_pairing():
    # pred id 7 overlaps gt 1 for 3 frames and gt 2 for 7 frames; the
    # matching must give it to gt 2 even though it met gt 1 first
    gt = {f: [(1, _b(0.0)), (2, _b(100.0))] for f in range(1, 11)}
    pred = {}
    for f in range(1, 11):
        pred[f] = [(7, _b(0.0 if f <= 3 else 100.0))]
    got = idf1(gt, pred)
    assert got == pytest.approx(2 * 7 / (20 + 10))


# --- detection AP ----------------------------------------------------------

def test_ap_perfect_detector():
    gt = {f: [_b(0.0), _b(100.0)] for f in range(1, 4)}
    preds = {f: [(0.9, _b(0.0)), (0.8, _b(100.0))] for f in range(1, 4)}
    assert detection_ap(gt, preds) == pytest.approx(1.0)


def test_ap_half_recall():
    gt = {1: [_b(0.0), _b(100.0)]}
    preds = {1: [(0.9, _b(0.0))]}
    assert detection_ap(gt, preds) == pytest.approx(0.5)


def test_ap_false_positive_after_true():
    # TP at rank 1, FP at rank 2: precision envelope gives AP = recall * 1.0
    gt = {1: [_b(0.0)]}
    preds = {1: [(0.9, _b(0.0)), (0.5, _b(500.0))]}
    assert detection_ap(gt, preds) == pytest.approx(1.0)


def test_ap_false_positive_before_true():
    # FP outranks the TP: precision at full recall is 1/2
    gt = {1: [_b(0.0)]}
    preds = {1: [(0.9, _b(500.0)), (0.5, _b(0.0))]}
    assert detection_ap(gt, preds) == pytest.approx(0.5)


def test_ap_duplicate_detections_count_once():
    gt = {1: [_b(0.0)]}
    preds = {1: [(0.9, _b(0.0)), (0.8, _b(1.0))]}  # both overlap the same gt
    ap = detection_ap(gt, preds)
    assert ap == pytest.approx(1.0)  # second one is an FP past full recall


def test_ap_empty_cases():
    assert detection_ap({1: [_b(0.0)]}, {}) == 0.0
    assert detection_ap({}, {1: [(0.9, _b(0.0))]}) == 0.0


def test_ap_interpolation_on_sawtooth():
    # ranks: TP FP TP -> precision 1, 1/2, 2/3; envelope 1, 2/3, 2/3
    gt = {1: [_b(0.0), _b(100.0)]}
    preds = {1: [(0.9, _b(0.0)), (0.8, _b(500.0)), (0.7, _b(100.0))]}
    assert detection_ap(gt, preds) == pytest.approx(0.5 * 1.0 + 0.5 * (2 / 3))


# --- verification TPR at fixed FAR -----------------------------------------

def test_tpr_worked_example():
    genuine = [0.9, 0.8, 0.6, 0.4]
    impostor = [0.7, 0.5, 0.3, 0.2, 0.1, 0.05, 0.04, 0.03, 0.02, 0.01]
    # far=0.1, 10 impostors -> k=1, cutoff=0.5; genuine above: 0.9, 0.8, 0.6
    assert tpr_at_far(genuine, impostor, far=0.1) == pytest.approx(3 / 4)


def test_tpr_fully_separated():
    genuine = [0.9, 0.8, 0.7]
    impostor = [0.3, 0.2, 0.1] * 4
    assert tpr_at_far(genuine, impostor, far=0.1) == 1.0


def test_tpr_fully_overlapping():
    genuine = [0.1] * 5
    impostor = [0.9] * 20
    assert tpr_at_far(genuine, impostor, far=0.1) == 0.0


def test_tpr_input_validation():
    with pytest.raises(ValueError):
        tpr_at_far([], [0.1], far=0.1)
    with pytest.raises(ValueError):
        tpr_at_far([0.1], [], far=0.1)
    with pytest.raises(ValueError):
        tpr_at_far([0.1], [0.1], far=0.0)


@settings(max_examples=50, deadline=None)
@given(
    genuine=st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=30),
    impostor=st.lists(st.floats(0, 1, allow_nan=False), min_size=5, max_size=50),
    far_lo=st.floats(0.01, 0.4),
    far_hi=st.floats(0.5, 0.9),
)
def test_tpr_monotone_in_far(genuine, impostor, far_lo, far_hi):
    lo = tpr_at_far(genuine, impostor, far=far_lo)
    hi = tpr_at_far(genuine, impostor, far=far_hi)
    assert 0.0 <= lo <= hi <= 1.0


# --- combined report -------------------------------------------------------

def test_evaluate_tracking_bundles_idf1():
    gt = _perfect_frames(5, 2)
    r = evaluate_tracking(gt, gt)
    assert r.mota == 1.0
    assert r.idf1 == 1.0
    assert r.ap is None and r.tpr_at_far is None
