import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from birthgrowth import eikonal
from birthgrowth.errors import DomainError
from birthgrowth.families import ConstantSpeed, LinearSpeed
from birthgrowth.grid import Grid, ScalarField
from birthgrowth.growth import (
    GrowthField,
    arrival_field,
    dilate,
    grain_capture_time,
    grain_indicator,
    radius,
)
from birthgrowth.nucleation import MarkedPoint


def ramp_speed():
    # G(t) = t, zero only at t = 0
    return GrowthField.time_only(LinearSpeed(0.0, 1.0), 6.0)


def const_space(value, lo=(-2.0, -2.0), hi=(2.0, 2.0), h=0.02):
    g = Grid.over(lo, hi, h)
    return GrowthField.space_only(ScalarField(g, np.full(g.shape, value)))


# radius -----------------------------------------------------------------


def test_radius_examples(unit_speed):
    assert radius(unit_speed, 0.0, 2.0) == pytest.approx(2.0, abs=1e-12)
    assert radius(unit_speed, 3.5, 3.5) == 0.0
    assert radius(ramp_speed(), 1.0, 2.0) == pytest.approx(1.5, abs=1e-10)
    assert radius(ramp_speed(), 5.0, 5.0) == 0.0


def test_radius_rejects_reversed_times(unit_speed):
    with pytest.raises(DomainError):
        radius(unit_speed, 1.0, 0.5)


@given(st.floats(0.0, 2.5), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
@settings(max_examples=60, deadline=None)
def test_radius_strictly_monotone(s, dt, ds):
    g = ramp_speed()
    t = s + dt
    assert radius(g, s, t + ds) > radius(g, s, t)
    if s + ds < t:
        assert radius(g, s + ds, t) < radius(g, s, t)


# capture times ----------------------------------------------------------


def test_capture_time_examples(unit_speed):
    assert grain_capture_time(unit_speed, MarkedPoint(0.0, (0.0, 0.0), 0), (0.7, 0.0))[0] == pytest.approx(0.7)
    assert grain_capture_time(unit_speed, MarkedPoint(2.0, (0.0, 0.0), 0), (0.0, 0.0))[0] == pytest.approx(2.0)
    t = grain_capture_time(ramp_speed(), MarkedPoint(1.0, (0.0, 0.0), 0), (0.0, 1.5))[0]
    assert t == pytest.approx(2.0, abs=1e-9)


def test_capture_beyond_table_is_infinite():
    g = GrowthField.time_only(ConstantSpeed(1.0), 1.0)
    assert np.isinf(grain_capture_time(g, MarkedPoint(0.5, (0.0, 0.0), 0), (0.9, 0.0))[0])


@given(st.floats(0.0, 2.0), st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
@settings(max_examples=60, deadline=None)
def test_constant_speed_bounds_exact(T, x, y):
    g = GrowthField.time_only(ConstantSpeed(1.5), 6.0)
    cap = grain_capture_time(g, MarkedPoint(T, (0.0, 0.0), 0), (x, y))[0]
    assert cap - T == pytest.approx(np.hypot(x, y) / 1.5, abs=1e-9)


# indicators -------------------------------------------------------------


def test_indicator_empty_before_birth(unit_speed):
    g = Grid.over((-1, -1), (1, 1), 0.05)
    ind = grain_indicator(unit_speed, MarkedPoint(0.5, (0.0, 0.0), 0), 0.4, g)
    assert not ind.values.any()


def test_indicator_unit_disc_area(unit_speed):
    h = 0.01
    g = Grid.over((-2, -2), (2, 2), h)
    ind = grain_indicator(unit_speed, MarkedPoint(0.0, (0.0, 0.0), 0), 1.0, g)
    assert abs(ind.integral() - np.pi) <= 2 * np.pi * h


def test_indicator_nesting(unit_speed):
    g = Grid.over((-2, -2), (2, 2), 0.05)
    p = MarkedPoint(0.2, (0.13, -0.4), 0)
    prev = None
    for t in np.linspace(0.0, 1.8, 10):
        cur = grain_indicator(unit_speed, p, t, g).values
        if prev is not None:
            assert np.all(prev <= cur)
        prev = cur


def test_dilate_examples(unit_speed):
    h = 0.01
    g = Grid.over((-2, -2), (2, 2), h)
    ind = grain_indicator(unit_speed, MarkedPoint(0.0, (0.0, 0.0), 0), 1.0, g)
    assert np.array_equal(dilate(ind, 0.0).values, ind.values)
    big = dilate(ind, 0.5)
    assert abs(big.integral() - np.pi * 1.5**2) <= 2 * np.pi * 1.5 * h
    empty = ScalarField.zeros(g)
    assert not dilate(empty, 0.3).values.any()
    with pytest.raises(DomainError):
        dilate(ind, -0.1)


# eikonal ----------------------------------------------------------------


def test_arrival_constant_speed_vs_distance():
    gr = const_space(1.0)
    h = gr.grid.h
    arr = arrival_field(gr, (0.01, 0.01))
    nodes = gr.grid.nodes()
    err = np.abs(arr.values.ravel() - np.linalg.norm(nodes - (0.01, 0.01), axis=1))
    # along an axis ray, then everywhere
    axis = np.abs(nodes[:, 1] - 0.01) < h
    assert err[axis].max() <= 2 * h
    assert err.max() <= 5 * h * 2


def test_arrival_speed_scaling_exact():
    a1 = arrival_field(const_space(1.0), (0.3, -0.2)).values
    a2 = arrival_field(const_space(2.0), (0.3, -0.2)).values
    assert np.array_equal(a2, a1 / 2)


def test_arrival_zero_at_source_and_nonnegative():
    gr = const_space(1.0)
    src = (gr.grid.axes()[0][100], gr.grid.axes()[1][100])
    arr = arrival_field(gr, src)
    assert arr.values[100, 100] == 0.0
    assert arr.values.min() >= 0.0


def test_arrival_rejects_outside_source():
    with pytest.raises(DomainError):
        arrival_field(const_space(1.0), (3.0, 0.0))


def test_two_halfspace_straight_rays():
    h = 0.02
    g = Grid.over((-2, -2), (2, 2), h)
    X = g.mesh()[0]
    gr = GrowthField.space_only(ScalarField(g, np.where(X < 0, 1.0, 2.0)))
    src = (0.0, 0.01)
    arr = arrival_field(gr, src)
    left, right = arr.at([(-1.5, 0.01)])[0], arr.at([(1.5, 0.01)])[0]
    assert left == pytest.approx(1.5, abs=2 * h)
    assert right == pytest.approx(0.75, abs=2 * h)


def test_arrival_monotone_in_speed(rng):
    g = Grid.over((-1, -1), (1, 1), 0.04)
    slow = 1.0 + rng.random(g.shape)
    fast = slow + rng.random(g.shape)
    a = arrival_field(GrowthField.space_only(ScalarField(g, slow)), (0.1, 0.2)).values
    b = arrival_field(GrowthField.space_only(ScalarField(g, fast)), (0.1, 0.2)).values
    assert np.all(b <= a + 1e-12)


def test_eikonal_residual_small(rng):
    g = Grid.over((-1, -1), (1, 1), 0.02)
    speed = 1.0 + 0.5 * np.sin(3 * g.mesh()[0]) ** 2
    arr = arrival_field(GrowthField.space_only(ScalarField(g, speed)), (0.05, -0.07))
    res = eikonal.eikonal_residual(arr.values, speed, g.h, arr.source_mask())
    assert np.nanmax(res) <= 1e-9


def test_eikonal_symmetry(rng):
    g = Grid.over((-1, -1), (1, 1), 0.02)
    speed = 1.0 + 0.5 * (g.mesh()[0] > 0.2)
    gr = GrowthField.space_only(ScalarField(g, speed))
    pts = rng.uniform(-0.9, 0.9, size=(100, 2, 2))
    # documented error bound for this lattice, from the constant-speed examples
    bound = 5 * g.h * 2 / speed.min()
    cache = {}
    for y, x in pts:
        ay = cache.setdefault(tuple(y), arrival_field(gr, y))
        ax = cache.setdefault(tuple(x), arrival_field(gr, x))
        assert abs(ay.at([x])[0] - ax.at([y])[0]) <= 2 * bound


def eikonal_error(h):
    g = Grid.over((-1, -1), (1, 1), h)
    gr = GrowthField.space_only(ScalarField(g, np.ones(g.shape)))
    src = (0.0123, -0.0071)
    arr = arrival_field(gr, src)
    return np.abs(arr.values.ravel() - np.linalg.norm(g.nodes() - src, axis=1)).max()


def test_eikonal_convergence_halves():
    e1, e2 = eikonal_error(0.02), eikonal_error(0.01)
    assert 0.4 <= e2 / e1 <= 0.6


@given(st.floats(-0.8, 0.8), st.floats(-0.8, 0.8))
@settings(max_examples=25, deadline=None)
def test_space_speed_bounds(x, y):
    g = Grid.over((-1, -1), (1, 1), 0.04)
    speed = 1.0 + 0.5 * (g.mesh()[1] > 0.0)
    gr = GrowthField.space_only(ScalarField(g, speed))
    T = 0.3
    cap = grain_capture_time(gr, MarkedPoint(T, (0.05, 0.02), 0), (x, y))[0]
    dist = np.hypot(x - 0.05, y - 0.02)
    slack = 5 * g.h / gr.g0
    assert dist / gr.G0 - slack <= cap - T <= dist / gr.g0 + slack
