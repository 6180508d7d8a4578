import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from runtumble import ChemoField, check_hypotheses, field_eval
from runtumble._validation import InputError


def test_sqrt_radial_origin():
    M, g, H = field_eval(ChemoField(dim=2), [0.0, 0.0])
    assert M == pytest.approx(-1.0)
    np.testing.assert_allclose(g, [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(H, -np.eye(2), atol=1e-15)


def test_sqrt_radial_plug():
    M, g, _ = field_eval(ChemoField(dim=2), [3.0, 4.0])
    assert M == pytest.approx(-math.sqrt(26), rel=1e-14)
    np.testing.assert_allclose(g, -np.array([3.0, 4.0]) / math.sqrt(26), rtol=1e-14)


def test_shell_gradient_minimum():
    rep = check_hypotheses(ChemoField(dim=2), 1000.0, shell_inner=10.0)
    assert rep.m_star == pytest.approx(10 / math.sqrt(101), rel=1e-9)
    assert rep.sup_hess >= 1.0
    assert rep.pass_H3 and rep.pass_MHess_bounded


def test_bad_scale():
    with pytest.raises(InputError):
        ChemoField(scale=0.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=2))
def test_gradient_matches_finite_difference(x):
    f = ChemoField(dim=2, m0=0.3, scale=1.7)
    x = np.asarray(x)
    _, g, H = field_eval(f, x)
    h = 1e-6
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (f.value(x + e) - f.value(x - e)) / (2 * h)
        assert fd == pytest.approx(g[i], abs=1e-7)
        gfd = (f.grad(x + e) - f.grad(x - e)) / (2 * h)
        np.testing.assert_allclose(gfd.reshape(-1), H[:, i], atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1e4))
def test_gradient_bounded_by_scale(r):
    f = ChemoField(dim=1, scale=2.0)
    _, g, _ = field_eval(f, [r])
    assert abs(g[0]) <= 2.0 + 1e-12
