import numpy as np
import pytest
from hypothesis import given, strategies as st

from runtumble import PsiSpec, RateSpec, check_H2, psi_derived_constants, tumbling_rate
from runtumble._validation import InputError


def test_sign_rate_values():
    r = RateSpec(0.5, PsiSpec("Sign"))
    np.testing.assert_allclose(tumbling_rate(r, np.array([2.0, 0.0, -2.0])), [0.5, 1.0, 1.5])


def test_tanh_rate_at_zero():
    assert tumbling_rate(RateSpec(0.5, PsiSpec("Tanh", 1.0)), np.array([0.0]))[0] == pytest.approx(1.0)


def test_h2_sign():
    res = check_H2(PsiSpec("Sign"), 1.0)
    assert (res.b, res.c) == (1, pytest.approx(1.0))


def test_h2_tanh():
    res = check_H2(PsiSpec("Tanh", 1.0), 1.0)
    assert res.b == 2
    assert res.c == pytest.approx(np.tanh(1.0), rel=1e-6)


def test_h2_tanh_b1_fails():
    assert not check_H2(PsiSpec("Tanh", 1.0), 1.0, b_candidates=(1,)).ok


def test_sign_derived_constants():
    sup_zpp, lip = psi_derived_constants(PsiSpec("Sign"))
    assert sup_zpp == 0.0
    assert lip == pytest.approx(1.0)


def test_tanh_derived_constants():
    # independent bounded maximisation: sup z sech^2 z = 0.447743..., sup |tanh z + z sech^2 z| = 1.199679...
    sup_zpp, lip = psi_derived_constants(PsiSpec("Tanh", 1.0))
    assert sup_zpp == pytest.approx(0.4477425, abs=2e-6)
    assert lip == pytest.approx(1.1996786, abs=2e-6)


def test_chi_range():
    with pytest.raises(InputError):
        RateSpec(1.0)


@given(st.floats(0, 0.99), st.floats(-1e3, 1e3))
def test_rate_within_band(chi, m):
    lam = tumbling_rate(RateSpec(chi, PsiSpec("Tanh", 2.0)), np.array([m]))[0]
    assert 1 - chi - 1e-12 <= lam <= 1 + chi + 1e-12
