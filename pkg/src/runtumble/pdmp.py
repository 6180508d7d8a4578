"""Exact event-driven simulation of the run-and-tumble jump process.

Tumble candidates arrive at the constant rate 1 + chi, which dominates lambda.  A candidate at
state (x, v) is kept with probability lambda(v . grad M(x)) / (1 + chi); the velocity is then
redrawn from kappa(v, .).  Between candidates the motion is straight, so positions are exact.

Every particle owns the counter-based stream ``(seed, particle index)``; ensembles are therefore
bit-identical for any thread count or chunking.
"""

import struct
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import _jit
from ._validation import InputError, SimulationError, as_points, check_positive
from .rng import particle_keys, numpy_generator

MAGIC = b"RTK1"


@dataclass
class ParticleState:
    x: np.ndarray
    v: np.ndarray
    t: float = 0.0
    weight: float = 1.0

    def __post_init__(self):
        self.x = np.array(self.x, dtype=float).reshape(-1)
        self.v = np.array(self.v, dtype=float).reshape(-1)
        if self.x.shape != self.v.shape:
            raise InputError("x and v must have the same length")

    @property
    def dim(self):
        return self.x.shape[0]


@dataclass
class EnsembleSnapshot:
    """Weighted empirical measure of N walkers at one time, stored column-wise."""

    time: float
    x: np.ndarray
    v: np.ndarray
    weight: np.ndarray = None
    seed: int = 0
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.v = np.atleast_2d(np.asarray(self.v, dtype=float))
        if self.weight is None:
            self.weight = np.ones(self.x.shape[0])
        self.weight = np.asarray(self.weight, dtype=float)
        if self.x.shape != self.v.shape or self.weight.shape != (self.x.shape[0],):
            raise InputError("inconsistent snapshot column shapes")

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def dim(self):
        return self.x.shape[1]

    @property
    def total_weight(self):
        return float(self.weight.sum())

    @property
    def particles(self):
        return [ParticleState(self.x[i], self.v[i], self.time, self.weight[i]) for i in range(self.n)]

    def to_csv(self, path):
        d = self.dim
        header = ["t"] + [f"x{i}" for i in range(d)] + [f"v{i}" for i in range(d)] + ["weight"]
        data = np.column_stack([np.full(self.n, self.time), self.x, self.v, self.weight])
        np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path, seed=0):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        d = (data.shape[1] - 2) // 2
        t = float(data[0, 0]) if data.shape[0] else 0.0
        return cls(t, data[:, 1:1 + d], data[:, 1 + d:1 + 2 * d], data[:, -1], seed)

    def to_binary(self, path):
        write_columnar(path, self.time, np.column_stack([self.x, self.v, self.weight]), self.dim)

    @classmethod
    def from_binary(cls, path, seed=0):
        t, d, cols = read_columnar(path)
        return cls(t, cols[:, :d], cols[:, d:2 * d], cols[:, 2 * d], seed)


def write_columnar(path, time, columns, dim):
    """Little-endian layout: b"RTK1", u32 d, u64 N, f64 time, then each column as N f64."""
    columns = np.asarray(columns, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQd", int(dim), columns.shape[0], float(time)))
        fh.write(np.asfortranarray(columns).tobytes(order="F"))


def read_columnar(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise InputError(f"{path}: not an RTK1 file")
    d, n, t = struct.unpack_from("<IQd", raw, 4)
    body = np.frombuffer(raw, dtype="<f8", offset=4 + struct.calcsize("<IQd"))
    if n == 0:
        return t, d, body.reshape(0, -1)
    return t, d, body.reshape(-1, n).T.copy()


def _packs(field, rate, kernel):
    if not (field.dim == kernel.dim):
        raise InputError(f"field dimension {field.dim} differs from kernel dimension {kernel.dim}")
    return field.packed(), rate.packed(), kernel.packed(), kernel.table


def advance_particle(state, dt_max, field, rate, kernel, rng, max_events=100_000):
    """Advance one particle exactly over [t, t + dt_max].

    ``rng`` is a CounterStream whose counter is advanced.  Returns the new state and the event
    log, one row per clock event: (time, accepted, x..., v after the event...).
    """
    dt_max = check_positive("dt_max", dt_max)
    fp, rp, kp, table = _packs(field, rate, kernel)
    x = state.x.copy()
    v = state.v.copy()
    d = x.shape[0]
    if d != field.dim:
        raise InputError(f"state dimension {d} differs from field dimension {field.dim}")
    ev = np.empty((max_events, 2 + 2 * d))
    t, ctr, n_clock, _, ok = _jit.advance(x, v, float(state.t), float(state.t) + dt_max, rng.key, rng.counter,
                                          fp, rp, kp, table, np.empty(d), ev, max_events)
    rng.counter = int(ctr)
    events = ev[:min(n_clock, max_events)].copy()
    if not ok:
        raise SimulationError(f"non-finite particle state at t={t}", events=events)
    return ParticleState(x, v, t, state.weight), events


def _initial(f0_sampler, n, seed, offset, dim):
    if callable(f0_sampler):
        X, V = f0_sampler(numpy_generator(seed, f"f0:{offset}"), n)
    else:
        X, V = f0_sampler
        X = np.asarray(X, dtype=float)[offset:offset + n]
        V = np.asarray(V, dtype=float)[offset:offset + n]
    X, _ = as_points(X, dim)
    V, _ = as_points(V, dim)
    if X.shape[0] != n or V.shape[0] != n:
        raise InputError(f"initial sampler returned {X.shape[0]} positions / {V.shape[0]} velocities, expected {n}")
    # the compiled loop advances these in place; never hand it the caller's arrays
    return np.array(X, order="C", copy=True), np.array(V, order="C", copy=True)


def simulate_ensemble(f0_sampler, N, times, field, rate, kernel, seed, stream_offset=0):
    """Snapshots of N independent paths at the sorted ``times``.

    ``f0_sampler`` is either ``callable(generator, n) -> (X, V)`` or a pair of arrays.  Particle
    ``i`` uses stream ``stream_offset + i``, so a large run can be split into chunks with
    consecutive offsets and reproduce the unchunked particles exactly (array samplers only;
    callables are reseeded per offset).
    """
    N = int(N)
    if N < 1:
        raise InputError("N must be >= 1")
    times = [float(t) for t in times]
    if any(t < 0 for t in times) or any(b < a for a, b in zip(times[:-1], times[1:])):
        raise InputError("snapshot times must be sorted and non-negative")
    fp, rp, kp, table = _packs(field, rate, kernel)
    X, V = _initial(f0_sampler, N, seed, stream_offset, field.dim)
    keys = particle_keys(seed, N, stream_offset)
    ctrs = np.zeros(N, dtype=np.int64)
    n_acc = np.zeros(N, dtype=np.int64)
    t = 0.0
    out = []
    for tk in times:
        if tk > t:
            bad = _jit.advance_ensemble(X, V, keys, ctrs, t, tk, fp, rp, kp, table, n_acc)
            if bad.any():
                i = int(np.nonzero(bad)[0][0])
                raise SimulationError(f"particle {stream_offset + i} left the finite range before t={tk}")
            t = tk
        out.append(EnsembleSnapshot(t, X.copy(), V.copy(), np.ones(N), int(seed),
                                    {"stream_offset": int(stream_offset), "mean_tumbles": float(n_acc.mean())}))
    return out


def _check_windows(windows):
    w = np.asarray(windows, dtype=float).reshape(-1, 2)
    if np.any(w[:, 1] < w[:, 0]) or np.any(w[:, 0] < 0):
        raise InputError("each jump window must be an interval [a, b] with 0 <= a <= b")
    if np.any(w[1:, 0] < w[:-1, 1]):
        raise InputError("jump windows must be disjoint and increasing")
    return np.ascontiguousarray(w)


def forced_chain_weight(windows, angle_cap):
    """(2 alpha)^n times the product of window lengths."""
    w = _check_windows(windows)
    return float((2.0 * angle_cap) ** w.shape[0] * np.prod(w[:, 1] - w[:, 0]))


def simulate_forced_chains(X0, theta0, windows, angle_cap, V0, t_final, seed, start=0):
    """Vectorised forced chains in d=2.  Returns (X, theta, weight) with one common weight."""
    w = _check_windows(windows)
    t_final = float(t_final)
    if w.shape[0] and t_final < w[-1, 1]:
        raise InputError("t_final precedes the last jump window")
    X0, _ = as_points(X0, 2)
    th0 = np.broadcast_to(np.asarray(theta0, dtype=float), (X0.shape[0],)).copy()
    keys = particle_keys(seed, X0.shape[0], start)
    X, TH = _jit.forced_chains(np.ascontiguousarray(X0), th0, w, float(angle_cap), float(V0), t_final, keys)
    return X, TH, forced_chain_weight(w, angle_cap)


def simulate_forced_chain(state0, jump_windows, angle_cap, n_jumps, rng, t_final=None):
    """One forced chain: exactly ``n_jumps`` tumbles, one uniform in each window.

    Heading increments are uniform on (-angle_cap, angle_cap).  The returned state carries the
    importance weight (2 angle_cap)^n * prod |window|, so weighted endpoints integrate the
    n-jump Duhamel term with the Boxcar kernel replaced by its unnormalised indicator.
    """
    w = _check_windows(jump_windows)
    if w.shape[0] != int(n_jumps):
        raise InputError(f"{w.shape[0]} windows given for {n_jumps} jumps")
    if state0.dim != 2:
        raise InputError("forced chains are defined in d = 2")
    V0 = float(np.linalg.norm(state0.v))
    check_positive("|v0|", V0)
    if t_final is None:
        t_final = w[-1, 1] if w.shape[0] else float(state0.t)
    t_rel = float(t_final) - float(state0.t)
    th0 = np.arctan2(state0.v[1], state0.v[0])
    # a fresh sub-stream per call, so repeated calls on one stream give independent chains
    sub = np.uint64(_jit.stream_key(rng.key, np.uint64(rng.counter)))
    rng.counter += 1
    X, TH = _jit.forced_chains(state0.x[None, :].copy(), np.array([th0]), w - float(state0.t),
                               float(angle_cap), V0, t_rel, np.array([sub], dtype=np.uint64))
    v = V0 * np.array([np.cos(TH[0]), np.sin(TH[0])])
    return ParticleState(X[0], v, float(t_final), state0.weight * forced_chain_weight(w, angle_cap))
