import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairtrack.encoding import (
    MIN_SIGMA,
    GtObject,
    TargetMaps,
    encode_targets,
    gaussian_radius_sigma,
    quantize_center,
    stamp_gaussian,
)
from fairtrack.geometry import BBox, GridSpec, iou

GRID = GridSpec(1280, 720, 4)


# --- center quantization ---------------------------------------------------

def test_quantize_center_aligned():
    cx, cy, off = quantize_center(BBox(100, 40, 140, 120), GRID)
    assert (cx, cy) == (30, 20)
    assert off == (0.0, 0.0)


def test_quantize_center_fractional():
    cx, cy, off = quantize_center(BBox(101, 41, 141, 121), GRID)
    assert (cx, cy) == (30, 20)
    assert off == (0.25, 0.25)


def test_quantize_center_near_origin():
    cx, cy, off = quantize_center(BBox(0, 0, 2, 2), GRID)
    assert (cx, cy) == (0, 0)
    assert off == (0.25, 0.25)


def test_quantize_center_outside_grid():
    with pytest.raises(ValueError):
        quantize_center(BBox(1275, 0, 1287, 10), GRID)  # center x = 1281


@given(st.floats(0.1, 1279.4), st.floats(0.1, 719.4))
def test_quantize_offset_range(cx, cy):
    box = BBox(cx - 0.05, cy - 0.05, cx + 0.05, cy + 0.05)
    qx, qy, (ox, oy) = quantize_center(box, GRID)
    assert 0 <= qx < GRID.feat_w and 0 <= qy < GRID.feat_h
    assert 0.0 <= ox < 1.0 and 0.0 <= oy < 1.0


# --- size-adaptive sigma ---------------------------------------------------

def _radius_oracle(w, h, o):
    """Same three worst-case geometries, solved independently via np.roots."""
    r1 = min(np.roots([1.0, -(w + h), w * h * (1 - o) / (1 + o)]).real)
    r2 = min(np.roots([4.0, -2.0 * (w + h), (1 - o) * w * h]).real)
    r3 = max(np.roots([4.0 * o, 2.0 * o * (w + h), (o - 1.0) * w * h]).real)
    return min(r1, r2, r3)


def test_sigma_matches_root_oracle_40x80():
    r = _radius_oracle(40 / 4, 80 / 4, 0.7)
    assert gaussian_radius_sigma((40, 80), GRID) == pytest.approx(max(r / 3, MIN_SIGMA))


@pytest.mark.parametrize("w,h", [(24, 48), (100, 60), (400, 800), (12, 300)])
def test_sigma_matches_root_oracle(w, h):
    r = _radius_oracle(w / 4, h / 4, 0.7)
    expected = max(max(r, 0.0) / 3, MIN_SIGMA)
    assert gaussian_radius_sigma((w, h), GRID) == pytest.approx(expected, rel=1e-9)


def test_sigma_min_clamp_small_object():
    assert gaussian_radius_sigma((2, 2), GRID) == MIN_SIGMA


def test_sigma_monotone_in_size():
    sizes = [(10, 20), (20, 40), (40, 80), (80, 160), (160, 320)]
    sigmas = [gaussian_radius_sigma(s, GRID) for s in sizes]
    assert all(b >= a for a, b in zip(sigmas, sigmas[1:]))


def test_radius_keeps_min_overlap():
    # at the computed radius, the worst of the three displacement
    # geometries still meets the 0.7 overlap (it is exactly binding)
    for w, h in [(10, 20), (30, 30), (8, 50)]:
        r = _radius_oracle(w, h, 0.7)
        base = BBox(0, 0, w, h)
        cases = [
            iou(base, BBox(r, r, w + r, h + r)),        # translated
            iou(base, BBox(r, r, w - r, h - r)),        # shrunk
            iou(base, BBox(-r, -r, w + r, h + r)),      # grown
        ]
        assert min(cases) == pytest.approx(0.7, abs=1e-9)


# --- full-frame encoding ---------------------------------------------------

def test_encode_empty():
    maps = encode_targets([], GRID, 5)
    assert np.asarray(maps.heatmap).max() == 0.0
    assert not maps.center_mask.any()
    assert maps.num_objects == 0


def test_encode_peak_is_exactly_one():
    maps = encode_targets([GtObject(BBox(100, 40, 140, 120), 0)], GRID, 1)
    heat = np.asarray(maps.heatmap)
    assert heat[20, 30] == 1.0
    assert maps.center_mask[20, 30]
    assert maps.identity_index[20, 30] == 0
    off = np.asarray(maps.offsets)
    size = np.asarray(maps.sizes)
    assert off[0, 20, 30] == 0.0 and off[1, 20, 30] == 0.0
    assert size[0, 20, 30] == 40.0 and size[1, 20, 30] == 80.0


def test_encode_collision_keeps_larger():
    small = GtObject(BBox(101, 41, 121, 61), 0)    # center (111, 51) -> (27, 12)
    large = GtObject(BBox(91, 31, 131, 71), 1)     # center (111, 51) -> (27, 12)
    maps = encode_targets([small, large], GRID, 2)
    assert maps.collisions == 1
    assert maps.num_objects == 1
    assert maps.identity_index[12, 27] == 1
    assert np.asarray(maps.sizes)[0, 12, 27] == 40.0


def test_encode_collision_order_independent():
    small = GtObject(BBox(101, 41, 121, 61), 0)
    large = GtObject(BBox(91, 31, 131, 71), 1)
    a = encode_targets([small, large], GRID, 2)
    b = encode_targets([large, small], GRID, 2)
    assert a.identity_index[12, 27] == b.identity_index[12, 27] == 1
    assert a.collisions == b.collisions == 1


def test_encode_rejects_outside_grid():
    inside = GtObject(BBox(100, 40, 140, 120), 0)
    outside = GtObject(BBox(1275, 0, 1287, 10), 1)
    maps = encode_targets([inside, outside], GRID, 2)
    assert maps.rejected == 1
    assert maps.num_objects == 1


def test_encode_identity_out_of_range():
    with pytest.raises(ValueError):
        encode_targets([GtObject(BBox(0, 0, 8, 8), 3)], GRID, 3)


def test_gtobject_negative_identity():
    with pytest.raises(ValueError):
        GtObject(BBox(0, 0, 8, 8), -1)


def test_stamp_gaussian_max_combine():
    heat = np.zeros((40, 40))
    stamp_gaussian(heat, 10, 10, 2.0)
    between = heat[10, 15]
    stamp_gaussian(heat, 20, 10, 2.0)
    assert heat[10, 10] == 1.0 and heat[10, 20] == 1.0
    # midpoint keeps the max of the two overlapping bells, never the sum
    assert heat[10, 15] >= between
    assert heat[10, 15] <= 1.0


@st.composite
def _gt_objects(draw):
    n = draw(st.integers(1, 6))
    objs = []
    for i in range(n):
        w = draw(st.floats(8, 120))
        h = draw(st.floats(8, 120))
        cx = draw(st.floats(w / 2 + 1, 1279 - w / 2))
        cy = draw(st.floats(h / 2 + 1, 719 - h / 2))
        objs.append(GtObject(BBox(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2), i))
    return objs


@settings(max_examples=40, deadline=None)
@given(_gt_objects())
def test_encode_invariants(objs):
    maps = encode_targets(objs, GRID, len(objs))
    heat = np.asarray(maps.heatmap)
    assert heat.min() >= 0.0 and heat.max() <= 1.0
    assert maps.center_mask.sum() == maps.num_objects
    assert maps.num_objects + maps.collisions + maps.rejected == len(objs)
    ys, xs = np.nonzero(maps.center_mask)
    off = np.asarray(maps.offsets)
    for y, x in zip(ys, xs):
        assert heat[y, x] == 1.0
        assert 0.0 <= off[0, y, x] < 1.0
        assert 0.0 <= off[1, y, x] < 1.0
        assert maps.identity_index[y, x] >= 0
    assert (maps.identity_index[~maps.center_mask] == -1).all()
