import math

import numpy as np
import pytest
from sklearn.base import clone

from runtumble import ChemoField
from runtumble._validation import FitError, InputError
from runtumble.convergence import (Binning, DecayCurve, H_sqrt, RateModel, envelope_constant, fit_rate,
                                   moment_Mf0, noise_floor, subgeometric_rate_calculus, weighted_tv)
from runtumble.estimators import DecayRateRegressor
from runtumble.pdmp import EnsembleSnapshot

BINS = Binning.phase_space([np.linspace(-4, 4, 33)], [np.linspace(-4, 4, 33)])


def _gauss(n, seed, shift=0.0):
    g = np.random.default_rng(seed)
    return EnsembleSnapshot(0.0, g.standard_normal((n, 1)) + shift, g.standard_normal((n, 1)))


def test_tv_identity_and_disjoint():
    a = _gauss(10_000, 0)
    assert weighted_tv(a, a, bins=BINS) == 0.0
    b = EnsembleSnapshot(0.0, np.full((10, 1), 2.0), np.zeros((10, 1)))
    c = EnsembleSnapshot(0.0, np.full((10, 1), -2.0), np.zeros((10, 1)))
    assert weighted_tv(b, c, bins=BINS) == pytest.approx(1.0)


def test_tv_out_of_bin_mass_counts():
    b = EnsembleSnapshot(0.0, np.zeros((4, 1)), np.zeros((4, 1)))
    c = EnsembleSnapshot(0.0, np.full((4, 1), 50.0), np.zeros((4, 1)))
    assert weighted_tv(b, c, bins=BINS) == pytest.approx(1.0)


def test_tv_two_large_samples_small():
    a, b = _gauss(1_000_000, 1), _gauss(1_000_000, 2)
    d = weighted_tv(a, b, bins=BINS)
    assert d < 0.02
    p = np.histogramdd(np.column_stack([a.x, a.v]), bins=BINS.edges)[0].ravel() / a.n
    # two independent samples: about sqrt(2) times the single-sample floor
    assert d == pytest.approx(math.sqrt(2) * noise_floor(p, a.n), rel=0.15)


def test_tv_metric_properties():
    a, b, c = _gauss(20_000, 3), _gauss(20_000, 4, 0.5), _gauss(20_000, 5, 1.0)
    assert weighted_tv(a, b, bins=BINS) == pytest.approx(weighted_tv(b, a, bins=BINS))
    assert weighted_tv(a, c, bins=BINS) <= weighted_tv(a, b, bins=BINS) + weighted_tv(b, c, bins=BINS) + 1e-12


def test_weighted_tv_constant_weight():
    a, b = _gauss(20_000, 3), _gauss(20_000, 4, 0.5)
    w = weighted_tv(a, b, weight=lambda X, V: np.full(X.shape[0], 3.0), bins=BINS)
    assert w == pytest.approx(6.0 * weighted_tv(a, b, bins=BINS), rel=1e-3)


def test_tv_needs_bins():
    with pytest.raises(InputError):
        weighted_tv(_gauss(10, 0), _gauss(10, 1))


def test_exponential_fit():
    t = np.linspace(0, 20, 41)
    f = fit_rate(DecayCurve(t, 2 * np.exp(-0.3 * t), "Plain-TV"), "Exponential")
    assert f.sigma == pytest.approx(0.3, abs=1e-6)
    assert f.C == pytest.approx(2.0, rel=1e-6)
    assert f.residual < 1e-10
    assert envelope_constant(DecayCurve(t, 2 * np.exp(-0.3 * t), "Plain-TV"), f) == pytest.approx(2.0)


def test_algebraic_fit():
    t = np.linspace(1, 50, 50)
    f = fit_rate(DecayCurve(t, 5 / t, "Plain-TV"), RateModel.ALGEBRAIC_INVERSE)
    assert f.intercept == pytest.approx(math.log(5))
    assert f.free_slope == pytest.approx(-1.0)
    assert math.isnan(f.sigma)


def test_fit_drops_floor_points():
    t = np.arange(10.0)
    d = np.exp(-t)
    with pytest.raises(FitError):
        fit_rate(DecayCurve(t, d, "Plain-TV", noise_floor=np.exp(-2.5)), "Exponential")
    with pytest.raises(FitError):
        fit_rate(DecayCurve(t[:3], d[:3], "Plain-TV"), "Exponential")


def test_curve_validation():
    with pytest.raises(InputError):
        DecayCurve([1.0, 0.0], [1.0, 1.0], "Plain-TV")


def test_moment_point_mass_at_origin():
    f = ChemoField(dim=2)
    delta = EnsembleSnapshot(0.0, np.zeros((1, 2)), np.array([[1.0, 0.0]]))
    M0 = -f.value(np.zeros((1, 2)))[0]
    assert moment_Mf0(delta, f, 0.5, lambda z: np.sign(z), 1.0) == pytest.approx(1 + M0**2 + 1.0)


def test_subgeometric_calculus():
    assert subgeometric_rate_calculus(0.0) == (1.0, 1.0)
    assert subgeometric_rate_calculus(2.0) == (4.0, 2.0)
    for t in (0.5, 3.0, 10.0):
        u, h = subgeometric_rate_calculus(t)
        assert H_sqrt(u) == pytest.approx(t)
        assert h == pytest.approx(math.sqrt(u))
    with pytest.raises(InputError):
        subgeometric_rate_calculus(-1.0)


def test_regressor_sklearn_contract():
    r = DecayRateRegressor(model="Exponential", floor_factor=2.0)
    c = clone(r)
    assert c.get_params() == r.get_params()
    t = np.linspace(0, 10, 21)
    c.fit(t[::-1, None], 2 * np.exp(-0.3 * t[::-1]))
    assert c.rate_ == pytest.approx(0.3, abs=1e-9)
    assert np.exp(c.intercept_) == pytest.approx(2.0)
    assert c.score(t[:, None], 2 * np.exp(-0.3 * t)) == pytest.approx(1.0)
    np.testing.assert_allclose(c.predict([[1.0]]), [2 * math.exp(-0.3)])
