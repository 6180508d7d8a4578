import numpy as np
from scipy.stats import kstest

from runtumble.rng import CounterStream, particle_keys


def test_stream_replay():
    a = CounterStream(7, 3)
    first = a.uniform(5)
    b = CounterStream(7, 3, counter=2)
    np.testing.assert_array_equal(b.uniform(3), first[2:])


def test_streams_differ():
    assert not np.array_equal(CounterStream(7, 0).uniform(4), CounterStream(7, 1).uniform(4))
    assert not np.array_equal(CounterStream(7, 0).uniform(4), CounterStream(8, 0).uniform(4))


def test_keys_chunk_consistent():
    np.testing.assert_array_equal(particle_keys(1, 10)[4:], particle_keys(1, 6, start=4))


def test_uniformity():
    u = CounterStream(123).uniform(200_000)
    assert np.all((u > 0) & (u < 1))
    assert kstest(u, "uniform").pvalue > 1e-3


_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def test_matches_pure_python_splitmix():
    seed, sid = 2024, 17
    key = _mix(seed ^ _mix(((sid + 1) * _GOLDEN) & _MASK))
    expect = [((_mix((key + (i + 1) * _GOLDEN) & _MASK) >> 11) + 0.5) / 2.0**53 for i in range(6)]
    np.testing.assert_array_equal(CounterStream(seed, sid).uniform(6), expect)
    assert int(particle_keys(seed, 1, start=sid)[0]) == key
