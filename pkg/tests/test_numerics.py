"""Quadrature, planar geometry, lattice and random-stream utilities."""

from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from birthgrowth.geometry import ball_integral, circle_rect_length, disc_rect_area, sphere_integral
from birthgrowth.grid import Box, Grid, ScalarField
from birthgrowth.quadrature import QuadratureWarning, adaptive_simpson, fixed_gauss, gauss_legendre_rule
from birthgrowth.rng import stream


def test_gauss_legendre_integrates_polynomials_exactly():
    x, w = gauss_legendre_rule(0.0, 2.0, 8)
    assert np.dot(w, x**15) == pytest.approx(2.0**16 / 16, rel=1e-13)


def test_adaptive_simpson_smooth_and_breakpoints():
    assert adaptive_simpson(np.sin, 0.0, math.pi, tol=1e-10) == pytest.approx(2.0, abs=1e-9)
    step = lambda u: 1.0 if u > 0.3 else 0.0  # noqa: E731
    assert adaptive_simpson(step, 0.0, 1.0, tol=1e-12, breakpoints=[0.3]) == pytest.approx(0.7, abs=1e-12)


def test_adaptive_simpson_warns_when_depth_runs_out():
    with pytest.warns(QuadratureWarning):
        adaptive_simpson(lambda u: math.sqrt(abs(u - 1 / 3)) * 1e6, 0.0, 1.0, tol=1e-14, max_depth=6)


def test_empty_interval_is_zero():
    assert adaptive_simpson(np.cos, 1.0, 1.0) == 0.0
    assert fixed_gauss(np.cos, 2.0, 1.0) == 0.0


def test_disc_rect_area_cases():
    assert disc_rect_area((0.0, 0.0), 1.0, (-5, -5), (5, 5)) == pytest.approx(math.pi, rel=1e-14)
    assert disc_rect_area((0.0, 0.0), 1.0, (0, 0), (5, 5)) == pytest.approx(math.pi / 4, rel=1e-14)
    assert disc_rect_area((0.0, 0.0), 1.0, (2, 2), (3, 3)) == 0.0
    # tangent to the box from outside
    assert disc_rect_area((0.0, -1.0), 1.0, (-1, 0), (1, 1)) == pytest.approx(0.0, abs=1e-15)
    # disc covering the box
    assert disc_rect_area((0.5, 0.5), 3.0, (0, 0), (1, 1)) == pytest.approx(1.0, rel=1e-14)


@settings(max_examples=60, deadline=None)
@given(
    cx=st.floats(-1.5, 1.5), cy=st.floats(-1.5, 1.5), R=st.floats(0.05, 2.0),
)
def test_disc_rect_area_matches_polar_quadrature(cx, cy, R):
    lo, hi = (-1.0, -0.5), (1.0, 0.8)
    inside = lambda p: ((p[:, 0] >= lo[0]) & (p[:, 0] <= hi[0]) & (p[:, 1] >= lo[1]) & (p[:, 1] <= hi[1])).astype(float)  # noqa: E731
    # dense brute force by a fine lattice of cell centres
    h = 0.004
    xs = np.arange(lo[0] + h / 2, hi[0], h)
    ys = np.arange(lo[1] + h / 2, hi[1], h)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    brute = np.count_nonzero((X - cx) ** 2 + (Y - cy) ** 2 <= R * R) * h * h
    exact = disc_rect_area((cx, cy), R, lo, hi)
    # lattice error is bounded by the perimeter times a cell diagonal
    assert abs(exact - brute) <= 2 * math.pi * R * h * 1.5 + 1e-12
    assert 0.0 <= exact <= min(math.pi * R * R, 2.0 * 1.3) + 1e-12
    del inside


def test_circle_rect_length_cases():
    assert circle_rect_length((0, 0), 1.0, (-2, -2), (2, 2)) == pytest.approx(2 * math.pi, rel=1e-14)
    assert circle_rect_length((0, 0), 1.0, (0, 0), (2, 2)) == pytest.approx(math.pi / 2, rel=1e-14)
    assert circle_rect_length((0, 0), 1.0, (0, -2), (2, 2)) == pytest.approx(math.pi, rel=1e-14)


def test_sphere_and_ball_integrals_of_constants():
    one = lambda p: np.ones(len(p))  # noqa: E731
    assert sphere_integral(one, (0.3, 0.1), 0.7) == pytest.approx(2 * math.pi * 0.7, rel=1e-12)
    assert ball_integral(one, (0.0, 0.0), 0.7) == pytest.approx(math.pi * 0.49, rel=1e-12)
    assert ball_integral(one, (0.0, 0.0, 0.0), 1.0) == pytest.approx(4 * math.pi / 3, rel=1e-10)


def test_grid_layout_and_binary_roundtrip(tmp_path):
    g = Grid(Box((0.0, -1.0), (2.0, 1.0)), 0.25)
    assert g.shape == (8, 8)
    assert g.axes()[0][0] == pytest.approx(0.125)
    vals = np.arange(64, dtype=float).reshape(8, 8)
    f = ScalarField(g, vals)
    p = tmp_path / "f.bgsf"
    f.to_binary(p)
    back = ScalarField.from_binary(p)
    assert back.grid == g
    assert np.array_equal(back.values, vals)
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_grid_rejects_off_lattice_extent():
    with pytest.raises(ValueError):
        Grid(Box((0.0,), (1.0,)), 0.3)


def test_streams_are_reproducible_and_distinct():
    a = stream(7, 3).random(5)
    assert np.array_equal(a, stream(7, 3).random(5))
    assert not np.array_equal(a, stream(7, 4).random(5))
    assert not np.array_equal(a, stream(8, 3).random(5))
    with pytest.raises(ValueError):
        stream(-1)


def test_no_warning_for_jump_on_breakpoint():
    with warnings.catch_warnings():
        warnings.simplefilter("error", QuadratureWarning)
        v = adaptive_simpson(lambda u: 2.0 if u < 0.5 else 1.0, 0.0, 1.0, tol=1e-12, breakpoints=[0.5])
    assert v == pytest.approx(1.5, abs=1e-12)
