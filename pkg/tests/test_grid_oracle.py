import numpy as np
import pytest

from runtumble import ChemoField, KernelSpec, RateSpec
from runtumble._validation import ConfigError
from runtumble.grid_oracle import GridConfig, density_from_function, extrapolated_stationary, solve

FLAT = ChemoField(kind="Custom-coefficients", dim=1, coefficients=(0.0,))
MAXW = KernelSpec("Maxwellian", dim=1)


def test_flat_field_equilibrium_is_stationary():
    cfg = GridConfig([(-10.0, 10.0)], [80], 0.03, nv=60, boundary="Periodic")
    f0 = density_from_function(cfg, MAXW, lambda X, V: np.exp(-0.5 * V[:, 0] ** 2))
    f = solve(f0, 10.0, cfg, FLAT, RateSpec(0.5), MAXW)
    assert f.l1_distance(f0) < 1e-6


def test_periodic_mass_conserved():
    cfg = GridConfig([(-5.0, 5.0), (-5.0, 5.0)], [40, 40], 0.2, n_theta=24, boundary="Periodic")
    k = KernelSpec("AngleDependent", alpha=np.pi / 3)
    f0 = density_from_function(cfg, k, lambda X, V: np.exp(-np.sum((X - 1) ** 2, axis=1)))
    f = solve(f0, 5.0, cfg, ChemoField(dim=2), RateSpec(0.5), k)
    assert f.mass() - f.audit["clipped_mass"] == pytest.approx(1.0, abs=1e-10)


def test_cfl_violation():
    cfg = GridConfig([(-5.0, 5.0)], [10], 1.0, nv=20)
    f0 = density_from_function(cfg, MAXW, lambda X, V: np.ones(len(X)))
    with pytest.raises(ConfigError):
        solve(f0, 1.0, cfg, FLAT, RateSpec(0.5), MAXW)


def test_extrapolated_reference_is_probability():
    cfg = GridConfig([(-15.0, 15.0)], [60], 0.5 * 0.9 * 0.5, boundary="Absorbing-with-mass-audit")
    k = KernelSpec("UniformSphere", dim=1)
    ref = extrapolated_stationary(cfg, ChemoField(dim=1), RateSpec(0.5), k, 300.0, 1e-6)
    assert ref.mass() == pytest.approx(1.0, rel=1e-12)
    assert np.all(ref.values >= 0)
    X, V = ref.sampler()(np.random.default_rng(0), 10_000)
    assert np.all(np.abs(X) <= 15.0)
    np.testing.assert_array_equal(np.abs(V), 1.0)
