import numpy as np
import pytest
from conftest import SQUARE4

from birthgrowth import causal_cone as cc
from birthgrowth.errors import ConfigError, DomainError
from birthgrowth.estimators import (
    CaptureTimeSample,
    SurveySpec,
    atom_test,
    box_integrals,
    estimate_Sex,
    estimate_SV,
    estimate_Vex,
    estimate_VV,
    mean_se,
    sample_capture_time,
    survey,
)
from birthgrowth.families import ConstantSpeed, Deterministic, PointMark, Uniform, UniformBox
from birthgrowth.grid import Box, Grid
from birthgrowth.growth import GrowthField
from birthgrowth.nucleation import NucleationModel
from birthgrowth.simulate import Ensemble, union_indicator

GROWTH = GrowthField.time_only(ConstantSpeed(1.0), 2.0)
WIDE = Box((-2.0, -2.0), (6.0, 6.0))


def kjma_ensemble(n, seed=1, h=0.1):
    model = NucleationModel.homogeneous_poisson(0.5, WIDE)
    return Ensemble(model, GROWTH, 1.5, seed, n, Grid.over((0, 0), (4, 4), h))


def single_ensemble(n=50, h=0.05):
    model = NucleationModel.single_nucleus(Uniform(0.0, 1.0), UniformBox(SQUARE4), SQUARE4)
    return Ensemble(model, GROWTH, 1.5, 4, n, Grid.over((0, 0), (4, 4), h))


def test_bounds_and_ordering():
    ens = kjma_ensemble(60)
    prev_vv = prev_vex = None
    for t in (0.0, 0.5, 1.0, 1.5):
        vv, vex = estimate_VV(ens, t), estimate_Vex(ens, t)
        assert vv.estimate.values.min() >= 0 and vv.estimate.values.max() <= 1
        assert np.all(vex.estimate.values >= vv.estimate.values)
        if t == 0.0:
            assert not vv.estimate.values.any() and not vex.estimate.values.any()
        else:
            assert np.all(vv.estimate.values >= prev_vv) and np.all(vex.estimate.values >= prev_vex)
        prev_vv, prev_vex = vv.estimate.values, vex.estimate.values


def test_single_nucleus_volume_and_surface_agree():
    ens = single_ensemble()
    for t in (0.5, 1.2):
        assert np.array_equal(estimate_VV(ens, t).estimate.values, estimate_Vex(ens, t).estimate.values)
        assert np.array_equal(estimate_SV(ens, t, 0.15).estimate.values, estimate_Sex(ens, t, 0.15).estimate.values)


def test_kjma_point_estimate():
    # 1 - exp(-0.5 pi / 3) = 0.4076 at t = 1 deep inside the window
    ens = kjma_ensemble(800, seed=2)
    est = estimate_VV(ens, 1.0)
    i = est.estimate.grid.nearest_index((2.0, 2.0))
    p, se = est.estimate.values[i], est.stderr.values[i]
    assert abs(p - 0.4076) <= 3 * se
    vex = estimate_Vex(ens, 1.0)
    assert abs(vex.estimate.values[i] - 0.5 * np.pi / 3) <= 3 * vex.stderr.values[i]


def test_se_scales_with_root_n():
    a = estimate_VV(kjma_ensemble(200, seed=5), 1.0).stderr.values
    b = estimate_VV(kjma_ensemble(400, seed=5), 1.0).stderr.values
    ratio = np.median(a[a > 0]) / np.median(b[b > 0])
    assert ratio == pytest.approx(np.sqrt(2), rel=0.1)


def test_surface_of_deterministic_disc():
    # one grain born at t = 0 in the centre: a unit disc at t = 1
    h = 0.01
    model = NucleationModel.single_nucleus(Deterministic(0.0), PointMark((2.0, 2.0)), SQUARE4)
    ens = Ensemble(model, GROWTH, 1.5, 0, 1, Grid.over((0, 0), (4, 4), h))
    sv = estimate_SV(ens, 1.0, 5 * h)
    assert sv.integral() == pytest.approx(2 * np.pi, rel=0.02)
    assert estimate_Sex(ens, 1.0, 5 * h).integral() == sv.integral()


def test_surface_limit_stable_under_refinement():
    model = NucleationModel.single_nucleus(Deterministic(0.0), PointMark((2.0, 2.0)), SQUARE4)
    vals = []
    for h in (0.02, 0.01):
        ens = Ensemble(model, GROWTH, 1.5, 0, 1, Grid.over((0, 0), (4, 4), h))
        vals.append(estimate_SV(ens, 1.0, 5 * h).integral())
    # the annulus quotient (pi (1 + r)^2 - pi) / r = 2 pi + pi r itself moves with r
    annulus = [2 * np.pi + np.pi * 5 * h for h in (0.02, 0.01)]
    for v, a in zip(vals, annulus):
        assert v == pytest.approx(a, rel=0.02)
    assert vals[0] / vals[1] == pytest.approx(annulus[0] / annulus[1], rel=0.01)


def test_overlapping_grains_sum_exceeds_union():
    ens = kjma_ensemble(30, h=0.05)
    box = Box((0.5, 0.5), (3.5, 3.5))
    sv = box_integrals(ens, "S_V", 1.2, box, 0.15)
    sex = box_integrals(ens, "S_ex", 1.2, box, 0.15)
    assert sex.mean() >= sv.mean()


def test_radius_guard():
    ens = kjma_ensemble(2)
    with pytest.raises(ConfigError, match="2h"):
        estimate_SV(ens, 1.0, 0.1)


def test_empty_process_all_censored():
    model = NucleationModel.homogeneous_poisson(1e-300, WIDE)
    ens = Ensemble(model, GROWTH, 1.5, 0, 20, Grid.over((0, 0), (4, 4), 0.1))
    s = sample_capture_time(ens, (2.0, 2.0))
    assert s.censored == 20 and s.times.size == 0
    assert estimate_SV(ens, 1.0, 0.3).integral() == 0.0


def test_capture_sample_bookkeeping_and_duality():
    ens = kjma_ensemble(40, h=0.2)
    x = tuple(ens.grid.nodes()[137])
    s = sample_capture_time(ens, x)
    assert np.all(np.diff(s.times) >= 0)
    assert s.censored + s.times.size == s.n_realizations
    assert s.cdf(ens.horizon) == pytest.approx(1 - s.censored / s.n_realizations)
    idx = np.unravel_index(137, ens.grid.shape)
    raw = [float(cc_time) for cc_time in _union_times(ens, x)]
    for t in (0.3, 0.9, 1.5):
        for real, tx in zip(ens, raw):
            assert union_indicator(real, t, ens.grid).values[idx] == float(tx <= t)


def _union_times(ens, x):
    from birthgrowth.simulate import union_capture_time

    return [union_capture_time(r, x) for r in ens]


def test_atom_test_cases():
    rng = np.random.default_rng(0)
    cont = CaptureTimeSample((0.0, 0.0), rng.random(500), 0, 500, 1.0)
    assert atom_test(cont).passed
    atom = CaptureTimeSample((0.0, 0.0), np.full(500, 0.2), 0, 500, 1.0)
    rep = atom_test(atom)
    assert not rep.passed and rep.max_repeat_fraction == 1.0
    few = atom_test(CaptureTimeSample((0.0, 0.0), rng.random(10), 0, 10, 1.0))
    assert few.inconclusive and not few.passed


def test_constructed_atom_model_fails():
    model = NucleationModel.single_nucleus(Deterministic(0.2), PointMark((1.0, 1.0)), SQUARE4)
    ens = Ensemble(model, GROWTH, 1.5, 0, 200, Grid.over((0, 0), (4, 4), 0.1))
    assert not atom_test(sample_capture_time(ens, (1.3, 1.1))).passed


def test_ks_distance_matches_definition():
    rng = np.random.default_rng(1)
    t = rng.random(300) * 0.8
    s = CaptureTimeSample((0.0,), t, 100, 400, 1.0)
    grid = np.linspace(0, 1, 20001)
    brute = np.max(np.abs(s.cdf(grid) - grid))
    assert s.ks_distance(lambda u: np.asarray(u)) == pytest.approx(brute, abs=1e-4)


def test_parallel_survey_identical():
    ens = kjma_ensemble(16, h=0.1)
    spec = SurveySpec(ens.grid, (0.5, 1.0), (0.3,), (Box((1, 1), (3, 3)),), ((2.0, 2.0),))
    a, b = survey(ens, spec, workers=1), survey(ens, spec, workers=3)
    for name in ("vv", "vex", "vex2", "sv", "sex", "sex2", "box_vv", "box_sex", "point_capture", "point_ext"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_mean_se():
    m, se = mean_se(np.array([1.0, 2.0, 3.0, 4.0]))
    assert m == 2.5 and se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)


def test_empty_ensemble_rejected():
    ens = kjma_ensemble(0)
    with pytest.raises(DomainError):
        sample_capture_time(ens, (2.0, 2.0))
    with pytest.raises(DomainError):
        estimate_VV(ens, 1.0)


def test_kjma_vex_matches_cone_oracle():
    ens = kjma_ensemble(400, seed=9)
    c = cc.CausalCone((2.0, 2.0), 1.2, GROWTH)
    lam = cc.cone_measure(c, ens.model)
    vex = estimate_Vex(ens, 1.2)
    i = vex.estimate.grid.nearest_index((2.0, 2.0))
    assert abs(vex.estimate.values[i] - lam) <= 3 * vex.stderr.values[i]
