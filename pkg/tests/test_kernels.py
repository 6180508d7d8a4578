import math

import numpy as np
import pytest
from scipy.special import iv
from scipy.stats import kstest

from runtumble import KernelSpec, compute_C_kappa, compute_lambda_tilde
from runtumble._validation import InputError
from runtumble.kernels import kernel_density, sample_post_velocities


def test_uniform_sphere_density():
    k = KernelSpec("UniformSphere", V0=2.0, dim=2)
    assert kernel_density(k, [2.0, 0.0], [0.0, -2.0]) == pytest.approx(1 / (2 * math.pi * 2.0))


def test_maxwellian_peak():
    k = KernelSpec("Maxwellian", dim=2)
    assert kernel_density(k, [1.0, 1.0], [0.0, 0.0]) == pytest.approx(1 / (2 * math.pi))


def test_boxcar_cone_density_integrates_to_one():
    a = math.pi / 2
    k = KernelSpec("AngleDependent", 1.0, 2, alpha=a)
    th = np.linspace(-math.pi, math.pi, 200001)
    V = np.column_stack([np.cos(th), np.sin(th)])
    dens = np.array([kernel_density(k, [1.0, 0.0], v) for v in V[::1000]])
    inside = np.abs(th[::1000]) < a - 1e-9
    outside = np.abs(th[::1000]) > a + 1e-9
    np.testing.assert_allclose(dens[inside], 1 / (2 * a))
    assert np.all(dens[outside] == 0)
    full = np.array([kernel_density(k, [1.0, 0.0], v) for v in V])
    assert np.trapezoid(full, th) == pytest.approx(1.0, abs=1e-4)


def test_C_kappa_values():
    assert compute_C_kappa(KernelSpec("UniformSphere")) == pytest.approx(0.0, abs=1e-12)
    assert compute_C_kappa(KernelSpec("AngleDependent", alpha=math.pi / 2)) == pytest.approx(2 / math.pi, rel=1e-10)
    ec = KernelSpec("AngleDependent", shape="ExpCosine", concentration=1.0, alpha=math.pi / 2)
    assert compute_C_kappa(ec) == pytest.approx(iv(1, 1) / iv(0, 1), rel=1e-8)


def test_lambda_tilde_values():
    k = KernelSpec("AngleDependent", alpha=math.pi / 2)
    assert compute_lambda_tilde(k, 1, 1.0) == pytest.approx(2 / math.pi, rel=1e-10)
    k = KernelSpec("AngleDependent", alpha=math.pi / 3)
    expect = 0.5 - math.sin(2 * math.pi / 3) / (4 * math.pi / 3)
    assert compute_lambda_tilde(k, 2, 1.0) == pytest.approx(expect, rel=1e-10)
    assert expect == pytest.approx(0.29325, abs=1e-5)


def test_maxwellian_sample_moments():
    k = KernelSpec("Maxwellian", dim=2)
    V = sample_post_velocities(k, np.zeros((1_000_000, 2)), seed=4)
    assert np.all(np.abs(V.mean(axis=0)) < 0.005)
    np.testing.assert_allclose(np.cov(V.T), np.eye(2), atol=0.01)


def test_uniform_sphere_angles():
    k = KernelSpec("UniformSphere", dim=2)
    V = sample_post_velocities(k, np.tile([1.0, 0.0], (1_000_000, 1)), seed=5)
    th = np.arctan2(V[:, 1], V[:, 0])
    assert kstest(th, "uniform", args=(-math.pi, 2 * math.pi)).statistic < 0.002


def test_boxcar_samples_stay_in_cone():
    k = KernelSpec("AngleDependent", alpha=math.pi / 3)
    V = sample_post_velocities(k, np.tile([0.0, 1.0], (100_000, 1)), seed=6)
    d = np.arctan2(V[:, 1], V[:, 0]) - math.pi / 2
    assert np.all(np.abs(d) <= math.pi / 3 + 1e-12)
    np.testing.assert_allclose(np.linalg.norm(V, axis=1), 1.0, rtol=1e-12)


def test_alpha_out_of_range():
    with pytest.raises(InputError):
        KernelSpec("AngleDependent", alpha=2.0)
