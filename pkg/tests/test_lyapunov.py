import math
from dataclasses import replace

import numpy as np
import pytest

from runtumble import ChemoField, KernelSpec, PsiSpec, RateSpec, check_hypotheses
from runtumble._validation import CertificationError, InputError
from runtumble.fields import HypothesisReport
from runtumble.lyapunov import (A_cap, A_unbounded, CallableWeight, LyapunovSpec, LyapunovWeight,
                                QuadratureConfig, ablated, apply_adjoint, bounded_constants_for,
                                gamma_cap, martingale_check, phi, select_constants, verify_drift,
                                zeta_from_integral)

F2 = ChemoField(dim=2)
F1 = ChemoField(dim=1)
BOX = KernelSpec("AngleDependent", alpha=math.pi / 3)
MAXW1 = KernelSpec("Maxwellian", dim=1)
RATE = RateSpec(0.5)


@pytest.fixture(scope="module")
def report2():
    return check_hypotheses(F2, 1000.0, shell_inner=10.0)


@pytest.fixture(scope="module")
def bounded(report2):
    return bounded_constants_for(F2, RATE, BOX, report2, 1, 1.0)


def _rand(dim, n, seed, speed=1.0):
    g = np.random.default_rng(seed)
    X = 30 * g.standard_normal((n, dim))
    V = g.standard_normal((n, dim))
    if speed is not None:
        V = speed * V / np.linalg.norm(V, axis=1, keepdims=True)
    return X, V


def test_caps():
    assert gamma_cap(1.0, 1.0, 0.0, 0.5) == pytest.approx(3 / 16)
    assert A_cap(0.5) == pytest.approx(1 / 3)


def test_A_unbounded_plug(report2):
    H, G = report2.sup_M_hess, report2.sup_grad
    assert A_unbounded(0.5, 1.0, H, G) == pytest.approx(1 + 2 * ((2 + 2 / 3) * H + (2 + 2 / 3) * G**2))


def test_bounded_phi_at_flat_point():
    s = LyapunovSpec("BoundedAngle", 0.1, 0.3, 0.2, 1, 0.9, 0.5)
    assert phi(s, F2, [0.0, 0.0], [1.0, 0.0]) == pytest.approx(math.exp(0.1 * -F2.value(np.zeros((1, 2)))[0]))


def test_bounded_phi_half_lower_bound_at_cap():
    Ck = 0.0
    s = LyapunovSpec("BoundedAngle", gamma_cap(1.0, 1.0, Ck, 0.5), A_cap(0.5), Ck, 1, 0.9, 0.5)
    X, V = _rand(2, 20_000, 1)
    val = LyapunovWeight(s, F2).value(X, V)
    assert np.all(val >= 0.5 * np.exp(-s.gamma * F2.value(X)) - 1e-12)


def test_unbounded_phi_zero_velocity():
    s = LyapunovSpec("UnboundedMaxwellian", 0.0, 5.0, 0.0, 1, 0.9, 0.5)
    X = np.array([[0.0], [2.0], [-7.0]])
    np.testing.assert_allclose(LyapunovWeight(s, F1).value(X, np.zeros_like(X)), F1.value(X) ** 2)


def test_adjoint_of_exp_weight():
    g = 0.2
    w = CallableWeight(lambda X, V: np.exp(-g * F2.value(X)),
                       lambda X, V: (-g * np.exp(-g * F2.value(X)))[:, None] * F2.grad(X))
    X, V = _rand(2, 500, 2)
    z = np.sum(V * F2.grad(X), axis=1)
    np.testing.assert_allclose(apply_adjoint(w, F2, RATE, BOX, X, V), -g * z * np.exp(-g * F2.value(X)),
                               rtol=1e-10, atol=1e-12)


def test_adjoint_of_M_squared():
    w = CallableWeight(lambda X, V: F1.value(X) ** 2, lambda X, V: 2 * F1.value(X)[:, None] * F1.grad(X))
    X, V = _rand(1, 500, 3, speed=None)
    z = np.sum(V * F1.grad(X), axis=1)
    np.testing.assert_allclose(apply_adjoint(w, F1, RATE, MAXW1, X, V), 2 * z * F1.value(X), rtol=1e-9, atol=1e-9)


def test_fd_matches_analytic(bounded):
    w = LyapunovWeight(bounded.spec, F2)
    X, V = _rand(2, 300, 4)
    a = apply_adjoint(w, F2, RATE, BOX, X, V)
    b = apply_adjoint(w, F2, RATE, BOX, X, V, QuadratureConfig(finite_differences=True))
    np.testing.assert_allclose(b, a, rtol=1e-5, atol=1e-7)


def test_adjoint_linear(bounded):
    w1 = LyapunovWeight(bounded.spec, F2)
    w2 = CallableWeight(lambda X, V: F2.value(X) ** 2, lambda X, V: 2 * F2.value(X)[:, None] * F2.grad(X))
    comb = CallableWeight(lambda X, V: 2 * w1.value(X, V) - 3 * w2.value(X, V),
                          lambda X, V: 2 * w1.grad_x(X, V) - 3 * w2.grad_x(X, V))
    X, V = _rand(2, 200, 5)
    lhs = apply_adjoint(comb, F2, RATE, BOX, X, V)
    rhs = 2 * apply_adjoint(w1, F2, RATE, BOX, X, V) - 3 * apply_adjoint(w2, F2, RATE, BOX, X, V)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


def test_bounded_certificate_holds(bounded):
    assert bounded.zeta > 0
    rep = verify_drift(bounded.spec, F2, RATE, BOX, bounded, n_probes=20_000, seed=1)
    assert rep.violations == 0


def test_ablation_breaks_far_field(bounded):
    rep = verify_drift(ablated(bounded.spec), F2, RATE, BOX, bounded, n_probes=20_000, seed=1)
    assert rep.violations > 0
    assert rep.violations_by_stratum["far"] > 0


def test_zero_m_star_refused(report2):
    flat = replace(report2, m_star=0.0)
    with pytest.raises(CertificationError):
        bounded_constants_for(F2, RATE, BOX, flat, 1, 1.0)


def test_unbounded_constants_positive():
    rep = check_hypotheses(F1, 1000.0, shell_inner=10.0)
    c = select_constants("UnboundedMaxwellian", rep, 0.0, 0.0, RATE, 1, F1, MAXW1)
    assert c.C > 0 and c.Lambda > 0
    assert c.details["phi_lower_eps"] > 0


def test_zeta_conversion():
    zeta, tau = 0.07, 2.0
    assert zeta_from_integral(math.exp(-zeta * tau), tau) == pytest.approx(zeta, rel=0.1)
    with pytest.raises(InputError):
        zeta_from_integral(1.5, 1.0)


def test_martingale_link_small(bounded):
    def f0(g, n):
        th = g.uniform(-math.pi, math.pi, n)
        return 20 * g.standard_normal((n, 2)), np.column_stack([np.cos(th), np.sin(th)])

    rep = martingale_check(bounded.spec, F2, RATE, BOX, f0, 20_000, [1.0, 3.0], seed=8)
    assert rep.passes
