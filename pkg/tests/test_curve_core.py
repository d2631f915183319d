import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geoprim.curve_core import (DigitalCurve, digitize, extract_contours, max_pairwise_distance,
                                point_line_distance, read_netpbm, write_pgm)
from oracles import pairwise_max, perp_distance

finite = st.floats(-1e4, 1e4, allow_nan=False)


def test_digitize_examples():
    assert digitize((1.4, 2.6)) == (1, 3)
    assert digitize((0.0, 0.0)) == (0, 0)
    assert digitize((2.5, -2.5)) == (3, -3)
    assert digitize((-0.5, 0.5)) == (-1, 1)


def test_digitize_half_integers_round_away():
    for k in range(-20, 21):
        v = k + 0.5
        expect = k + 1 if v > 0 else k
        assert digitize((v, 0))[0] == expect


def test_digitize_rejects_nan():
    with pytest.raises(ValueError):
        digitize((math.nan, 0))


@given(finite, finite)
def test_digitize_within_half_pixel(x, y):
    px, py = digitize((x, y))
    assert max(abs(px - x), abs(py - y)) <= 0.5


def test_point_line_distance_examples():
    assert point_line_distance((0, 0), (2, 0), (1, 1)) == pytest.approx(1.0)
    assert point_line_distance((0, 0), (2, 2), (5, 5)) == pytest.approx(0.0, abs=1e-12)
    assert point_line_distance((0, 0), (1, 1), (1, 0)) == pytest.approx(1 / math.sqrt(2))


def test_point_line_distance_degenerate():
    with pytest.raises(ValueError, match="degenerate line"):
        point_line_distance((1, 1), (1, 1), (0, 0))


@given(st.tuples(finite, finite), st.tuples(finite, finite), st.tuples(finite, finite),
       st.tuples(finite, finite))
def test_point_line_distance_symmetry_translation(a, b, p, shift):
    if math.dist(a, b) < 1e-3:
        return
    d = point_line_distance(a, b, p)
    assert d == pytest.approx(point_line_distance(b, a, p), rel=1e-9, abs=1e-6)
    moved = [(v[0] + shift[0], v[1] + shift[1]) for v in (a, b, p)]
    assert point_line_distance(*moved) == pytest.approx(d, rel=1e-6, abs=1e-5)
    assert d == pytest.approx(perp_distance(a, b, p), rel=1e-6, abs=1e-5)


def test_max_pairwise_examples():
    assert max_pairwise_distance(DigitalCurve([(0, 0), (3, 4)])) == 5
    assert max_pairwise_distance(DigitalCurve([(i, 0) for i in range(10)])) == 9
    assert max_pairwise_distance(DigitalCurve([(0, 0), (1, 0), (1, 1), (0, 1)])) == pytest.approx(math.sqrt(2))


@settings(max_examples=60)
@given(st.lists(st.tuples(st.integers(-50, 50), st.integers(-50, 50)), min_size=2, max_size=200))
def test_max_pairwise_matches_brute_force(pts):
    if len(set(pts)) < 2:
        return
    assert max_pairwise_distance(np.array(pts)) == pytest.approx(pairwise_max(pts), rel=1e-12)


def test_curve_needs_two_points():
    with pytest.raises(ValueError):
        DigitalCurve([(0, 0)])


def test_straight_run():
    m = np.zeros((5, 20), int)
    m[2, 3:13] = 1
    (c,) = extract_contours(m)
    assert len(c) == 10 and not c.closed
    assert c.points[0].tolist() == [3, 2]


def test_short_fragment_dropped():
    m = np.zeros((5, 5), int)
    m[1, 1:4] = 1
    assert extract_contours(m) == []
    assert extract_contours(np.zeros((0, 0))) == []
    assert extract_contours(np.zeros((4, 4))) == []


def test_plus_sign_four_arms():
    # the arm pixels next to the centre touch two other arms and go with the junction
    m = np.zeros((9, 9), int)
    m[4, :] = 1
    m[:, 4] = 1
    curves = extract_contours(m, min_length=2)
    assert len(curves) == 4 and all(not c.closed and len(c) == 3 for c in curves)
    big = np.zeros((21, 21), int)
    big[10, :] = 1
    big[:, 10] = 1
    curves = extract_contours(big)
    assert len(curves) == 4 and all(len(c) == 9 for c in curves)


def _diamond(r=6, c=8):
    m = np.zeros((2 * c + 1, 2 * c + 1), int)
    for k in range(-r, r + 1):
        h = r - abs(k)
        m[c + k, c + h] = m[c + k, c - h] = 1
    return m


def test_closed_ring_counter_clockwise():
    # every pixel of a diamond has exactly two neighbours
    (c,) = extract_contours(_diamond())
    assert c.closed and len(c) == 24
    pts = c.points
    assert pts[0].tolist() == min(map(list, pts.tolist()))
    x, y = pts[:, 0].astype(float), pts[:, 1].astype(float)
    assert np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)) > 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_contours_connected_and_disjoint(seed):
    rng = np.random.default_rng(seed)
    m = (rng.random((30, 30)) < 0.25).astype(int)
    curves = extract_contours(m, min_length=2)
    seen = set()
    for c in curves:
        pts = c.points
        assert np.all(np.abs(np.diff(pts, axis=0)).max(axis=1) == 1)
        px = {tuple(p) for p in pts.tolist()}
        assert len(px) == len(pts)
        assert not (px & seen)
        seen |= px
        for x, y in px:
            assert m[y, x]


def test_netpbm_round_trip(tmp_path):
    img = np.zeros((7, 11), np.uint8)
    img[2, 3:9] = 1
    path = tmp_path / "a.pgm"
    write_pgm(path, img)
    back = read_netpbm(path)
    assert back.shape == (7, 11)
    assert np.array_equal(back > 0, img > 0)


def test_netpbm_formats(tmp_path):
    p1 = tmp_path / "a.pbm"
    p1.write_text("P1\n# comment\n3 2\n1 0 1\n0 1 0\n")
    assert read_netpbm(p1).tolist() == [[1, 0, 1], [0, 1, 0]]
    p4 = tmp_path / "b.pbm"
    p4.write_bytes(b"P4\n3 2\n" + bytes([0b10100000, 0b01000000]))
    assert read_netpbm(p4).tolist() == [[1, 0, 1], [0, 1, 0]]
    p5 = tmp_path / "c.pgm"
    p5.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 7, 0]))
    assert read_netpbm(p5).tolist() == [[0, 255], [7, 0]]
    bad = tmp_path / "d.ppm"
    bad.write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
    with pytest.raises(ValueError):
        read_netpbm(bad)


def test_curve_json_round_trip():
    c = DigitalCurve([(0, 0), (1, 1), (2, 1)], closed=False)
    back = DigitalCurve.from_json(c.to_json())
    assert np.array_equal(back.points, c.points) and back.closed == c.closed
