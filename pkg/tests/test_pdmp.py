import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from runtumble import ChemoField, KernelSpec, RateSpec
from runtumble._validation import InputError
from runtumble.pdmp import (EnsembleSnapshot, ParticleState, advance_particle, simulate_ensemble,
                            simulate_forced_chain, simulate_forced_chains)
from runtumble.rng import CounterStream

FIELD2 = ChemoField(dim=2)
SPHERE = KernelSpec("UniformSphere", dim=2)


def sphere_f0(g, n):
    th = g.uniform(-math.pi, math.pi, n)
    return g.standard_normal((n, 2)), np.column_stack([np.cos(th), np.sin(th)])


def test_unit_rate_poisson_count():
    snap = simulate_ensemble(sphere_f0, 10_000, [100.0], FIELD2, RateSpec(0.0), SPHERE, seed=1)[-1]
    assert snap.meta["mean_tumbles"] == pytest.approx(100.0, abs=0.3)


def test_free_transport_between_events():
    hits = 0
    for s in range(200):
        st0 = ParticleState([0.3, -0.2], [0.6, 0.8])
        new, ev = advance_particle(st0, 0.05, FIELD2, RateSpec(0.5), SPHERE, CounterStream(9, s))
        if not ev[:, 1].any():
            hits += 1
            np.testing.assert_allclose(new.x, st0.x + 0.05 * st0.v, rtol=0, atol=1e-15)
            np.testing.assert_array_equal(new.v, st0.v)
    assert hits > 150


def test_snapshot_at_zero_matches_initial_law():
    a = simulate_ensemble(sphere_f0, 50_000, [0.0], FIELD2, RateSpec(0.5), SPHERE, seed=3)[0]
    g = np.random.default_rng(77)
    x, _ = sphere_f0(g, 50_000)
    assert ks_2samp(a.x[:, 0], x[:, 0]).pvalue > 0.01


def test_chunked_equals_whole():
    g = np.random.default_rng(0)
    X, V = sphere_f0(g, 1000)
    whole = simulate_ensemble((X, V), 1000, [2.0], FIELD2, RateSpec(0.5), SPHERE, seed=4)[-1]
    part = simulate_ensemble((X, V), 400, [2.0], FIELD2, RateSpec(0.5), SPHERE, seed=4, stream_offset=600)[-1]
    np.testing.assert_array_equal(whole.x[600:], part.x)


def test_speed_preserved_on_sphere():
    snap = simulate_ensemble(sphere_f0, 5000, [7.0], FIELD2, RateSpec(0.5),
                             KernelSpec("AngleDependent", alpha=math.pi / 3), seed=5)[-1]
    np.testing.assert_allclose(np.linalg.norm(snap.v, axis=1), 1.0, rtol=1e-12)


def test_unsorted_times_rejected():
    with pytest.raises(InputError):
        simulate_ensemble(sphere_f0, 10, [2.0, 1.0], FIELD2, RateSpec(0.5), SPHERE, seed=0)


def test_forced_chain_no_jumps_is_transport():
    st0 = ParticleState([1.0, 2.0], [0.0, 1.0])
    out = simulate_forced_chain(st0, np.zeros((0, 2)), 0.5, 0, CounterStream(1), t_final=3.0)
    np.testing.assert_allclose(out.x, [1.0, 5.0], atol=1e-14)
    assert out.weight == 1.0


def test_single_forced_jump_heading_uniform_in_cone():
    a = math.pi / 3
    X, TH, w = simulate_forced_chains(np.zeros((200_000, 2)), 0.0, [[0.0, 1.0]], a, 1.0, 1.0, seed=2)
    assert np.all(np.abs(TH) <= a + 1e-12)
    assert ks_2samp(TH, np.random.default_rng(1).uniform(-a, a, 200_000)).pvalue > 0.01
    assert w == pytest.approx(2 * a)


def test_snapshot_roundtrip(tmp_path):
    g = np.random.default_rng(2)
    s = EnsembleSnapshot(1.5, g.standard_normal((20, 2)), g.standard_normal((20, 2)), g.random(20))
    s.to_csv(tmp_path / "s.csv")
    s.to_binary(tmp_path / "s.bin")
    for r in (EnsembleSnapshot.from_csv(tmp_path / "s.csv"), EnsembleSnapshot.from_binary(tmp_path / "s.bin")):
        assert r.time == 1.5
        np.testing.assert_array_equal(r.x, s.x)
        np.testing.assert_array_equal(r.weight, s.weight)
