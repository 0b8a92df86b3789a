import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spxtrack.imaging import RoiMask
from spxtrack.matching import MatchField
from spxtrack.metrics import (MetricsReport, boundary, contour_f_measure, default_radius, dice,
                              fwbw_consistency)
from spxtrack.slic import Segmentation

from oracles import boundary_oracle, consistency_oracle, contour_oracle, identity_field


def square(h, w, x, y, s):
    m = np.zeros((h, w), bool)
    m[y:y + s, x:x + s] = True
    return m


def test_dice_examples():
    a = square(20, 20, 2, 2, 5)
    assert dice(a, a) == 1.0
    assert dice(a, square(20, 20, 12, 12, 5)) == 0.0
    x = np.zeros(20, bool)
    y = np.zeros(20, bool)
    x[:10] = True
    y[5:15] = True
    assert dice(x, y) == 0.5
    assert dice(np.zeros((3, 3), bool), np.zeros((3, 3), bool)) == 1.0
    assert dice(RoiMask(a), RoiMask(a)) == 1.0
    with pytest.raises(ValueError):
        dice(np.zeros((2, 2), bool), np.zeros((2, 3), bool))


def test_contour_examples():
    a = square(30, 30, 5, 5, 10)
    assert contour_f_measure(a, a, 0) == (1.0, 1.0, 1.0)
    assert contour_f_measure(a, square(30, 30, 6, 5, 10), 1) == (1.0, 1.0, 1.0)
    empty = np.zeros((30, 30), bool)
    assert contour_f_measure(empty, empty, 2) == (1.0, 1.0, 1.0)
    assert contour_f_measure(a, empty, 2) == (0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        contour_f_measure(a, a, -1)


def test_contour_five_pixel_shift_oracle():
    a = square(40, 40, 8, 10, 14)
    b = square(40, 40, 13, 10, 14)
    for r in (0, 1, 2, 5):
        got = contour_f_measure(a, b, r)
        assert np.allclose(got, contour_oracle(a, b, r), atol=1e-12)


def test_boundary_includes_image_border():
    full = np.ones((4, 5), bool)
    b = boundary(full)
    assert b.sum() == 4 * 5 - 2 * 3
    assert np.array_equal(b, boundary_oracle(full))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(0, 4))
def test_contour_oracle_random_and_properties(seed, r):
    rng = np.random.default_rng(seed)
    x = rng.random((12, 13)) > 0.6
    y = rng.random((12, 13)) > 0.6
    got = contour_f_measure(x, y, r)
    assert np.array_equal(boundary(x), boundary_oracle(x))
    assert np.allclose(got, contour_oracle(x, y, r), atol=1e-12)
    p, rc, f = got
    assert 0 <= f <= 1
    assert f == pytest.approx(2 * p * rc / (p + rc) if p + rc > 0 else 0.0)
    sw = contour_f_measure(y, x, r)
    assert sw[2] == pytest.approx(f) and sw[0] == pytest.approx(rc)
    bigger = contour_f_measure(x, y, r + 1)
    assert bigger[0] >= p and bigger[1] >= rc
    d = dice(x, y)
    assert d == dice(y, x) and 0.0 <= d <= 1.0


def test_default_radius():
    assert default_radius(120, 160) == 2
    assert default_radius(10, 10) == 1
    assert default_radius(360, 640) == 6


def test_consistency_examples():
    labels = np.repeat(np.arange(4), 4).reshape(4, 4)
    seg = Segmentation(labels)
    mask = np.ones((4, 4), bool)
    assert fwbw_consistency(mask, seg, identity_field(4, 0, 1), identity_field(4, 1, 0)) == 100.0
    fw = MatchField(0, 1, np.array([2, 2, 2, 2]), 3)
    bw = MatchField(1, 0, np.array([0, 0, 3]), 4)
    m2 = np.zeros((4, 4), bool)
    m2[:2] = True  # superpixels 0 and 1; bw(2) = 3
    assert fwbw_consistency(m2, seg, fw, bw) == 0.0
    assert fwbw_consistency(np.zeros((4, 4), bool), seg, fw, bw) == 100.0
    with pytest.raises(IndexError):
        fwbw_consistency(mask, seg, MatchField(0, 1, np.array([0, 1, 2, 3]), 4),
                         MatchField(1, 0, np.array([0, 1]), 4))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_consistency_oracle(seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 6, (7, 8))
    labels.ravel()[:6] = np.arange(6)
    seg = Segmentation(labels)
    fw = MatchField(0, 1, rng.integers(0, 5, 6), 5)
    bw = MatchField(1, 0, rng.integers(0, 6, 5), 6)
    mask = rng.random((7, 8)) > 0.4
    got = fwbw_consistency(mask, seg, fw, bw)
    assert got == pytest.approx(consistency_oracle(mask, labels, fw.map, bw.map), abs=1e-12)
    assert 0.0 <= got <= 100.0


def test_report_csv(tmp_path):
    rep = MetricsReport()
    a = square(20, 20, 2, 2, 6)
    rep.add(1, a, a, 100.0)
    rep.add(2, a, square(20, 20, 12, 12, 6), 50.0)
    agg = rep.aggregate()
    assert agg["dice"] == 0.5 and agg["consistency"] == 75.0
    rep.write_csv(tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0].startswith("#")
    assert lines[1] == "frame_index,dice,precision,recall,f_measure,consistency"
    assert lines[2].startswith("1,1.000000,")
    assert lines[-1].startswith("mean,0.500000,") and lines[-1].endswith(",75.000000")
