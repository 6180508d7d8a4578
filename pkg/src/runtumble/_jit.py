"""Compiled kernels: counter-based RNG, field gradients, psi, kernel samplers,
the thinning loop and forced jump chains.

Parameter packing (float64 arrays, so one compiled signature serves all specs):

field  fp = [kind, m0, scale, ncoef, c_0 .. c_{ncoef-1}]
       kind 0 SqrtRadial  M = m0 - scale * sqrt(1 + |x|^2)
       kind 1 LogGaussian M = m0 - |x|^2 / (2 scale^2)
       kind 2 Custom      M = m0 + sum_k c_k s^k,  s = sqrt(1 + |x|^2)
rate   rp = [chi, psi_kind, slope]     psi_kind 0 Sign, 1 Tanh, 2 ScaledArctan
kernel kp = [kind, V0, dim, alpha, shape, concentration, theta_max]
       kind 0 UniformSphere, 1 AngleDependent, 2 Maxwellian
       shape 0 Boxcar, 1 RaisedCosine, 2 ExpCosine
table  (n_nodes, 2): angle nodes and normalised CDF of the angular law on [0, theta_max]
"""

import math

import numba as nb
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

# 8-point Gauss-Legendre on [-1, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


@nb.njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(cache=True)
def stream_key(master_seed, stream_id):
    return mix64(np.uint64(master_seed) ^ mix64(np.uint64(stream_id) * GOLDEN + GOLDEN))


@nb.njit(cache=True, inline="always")
def uniform(key, ctr):
    """Draw number ``ctr`` of stream ``key``; open interval (0, 1)."""
    z = mix64(key + (np.uint64(ctr) + np.uint64(1)) * GOLDEN)
    return (float(z >> _S11) + 0.5) * _INV53


@nb.njit(cache=True)
def uniform_block(key, ctr0, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = uniform(key, ctr0 + i)
    return out


@nb.njit(cache=True, inline="always")
def std_normal(key, ctr):
    u1 = uniform(key, ctr)
    u2 = uniform(key, ctr + 1)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


# ---------------------------------------------------------------- field / rate


@nb.njit(cache=True)
def grad_M(fp, x, g):
    kind = int(fp[0])
    d = x.shape[0]
    r2 = 0.0
    for i in range(d):
        r2 += x[i] * x[i]
    if kind == 0:
        s = math.sqrt(1.0 + r2)
        c = -fp[2] / s
    elif kind == 1:
        c = -1.0 / (fp[2] * fp[2])
    else:
        s = math.sqrt(1.0 + r2)
        ncoef = int(fp[3])
        dg = 0.0
        for k in range(1, ncoef):
            dg += k * fp[4 + k] * s ** (k - 1)
        c = dg / s
    for i in range(d):
        g[i] = c * x[i]


@nb.njit(cache=True, inline="always")
def psi(kind, slope, m):
    if kind == 0:
        if m > 0.0:
            return 1.0
        elif m < 0.0:
            return -1.0
        return 0.0
    elif kind == 1:
        return math.tanh(slope * m)
    return 2.0 / math.pi * math.atan(slope * m)


@nb.njit(cache=True, inline="always")
def tumble_rate(rp, m):
    return 1.0 - rp[0] * psi(int(rp[1]), rp[2], m)


# ---------------------------------------------------------------- kernels


@nb.njit(cache=True, inline="always")
def angular_profile(shape, theta, alpha, conc, dim):
    """Unnormalised angular law of the turning angle on [0, pi] (includes sin for d=3)."""
    a = abs(theta)
    if shape == 0:
        val = 1.0 if a < alpha else 0.0
    elif shape == 1:
        val = 0.5 * (1.0 + math.cos(math.pi * a / (2.0 * alpha))) if a < 2.0 * alpha else 0.0
    else:
        val = math.exp(conc * math.cos(a))
    if dim == 3:
        val *= math.sin(a)
    return val


@nb.njit(cache=True)
def _partial_integral(shape, alpha, conc, dim, a, b):
    h = 0.5 * (b - a)
    m = 0.5 * (b + a)
    acc = 0.0
    for j in range(8):
        acc += _GL_W[j] * angular_profile(shape, m + h * _GL_X[j], alpha, conc, dim)
    return acc * h


@nb.njit(cache=True)
def build_cdf_table(shape, alpha, conc, dim, theta_max, n_nodes):
    table = np.empty((n_nodes, 2))
    table[0, 0] = 0.0
    table[0, 1] = 0.0
    h = theta_max / (n_nodes - 1)
    for k in range(1, n_nodes):
        a = (k - 1) * h
        b = k * h
        table[k, 0] = b
        table[k, 1] = table[k - 1, 1] + _partial_integral(shape, alpha, conc, dim, a, b)
    total = table[n_nodes - 1, 1]
    for k in range(n_nodes):
        table[k, 1] /= total
    table[n_nodes - 1, 1] = 1.0
    return table, total


@nb.njit(cache=True)
def sample_angle(kp, table, u):
    """Inverse CDF of |theta| on [0, theta_max]: table bracket, then Newton on the exact integral."""
    shape = int(kp[4])
    alpha = kp[3]
    if shape == 0:
        return alpha * u
    conc = kp[5]
    dim = int(kp[2])
    n = table.shape[0]
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if table[mid, 1] <= u:
            lo = mid
        else:
            hi = mid
    a = table[lo, 0]
    b = table[hi, 0]
    # normalising constant of the table in profile units
    span = table[hi, 1] - table[lo, 1]
    seg = _partial_integral(shape, alpha, conc, dim, a, b)
    if span <= 0.0 or seg <= 0.0:
        return a
    scale = seg / span
    target = (u - table[lo, 1]) * scale
    th = a + (b - a) * (u - table[lo, 1]) / span
    for _ in range(30):
        f = _partial_integral(shape, alpha, conc, dim, a, th) - target
        p = angular_profile(shape, th, alpha, conc, dim)
        if p <= 0.0:
            break
        step = f / p
        th_new = th - step
        if th_new < a:
            th_new = 0.5 * (a + th)
        elif th_new > b:
            th_new = 0.5 * (b + th)
        if abs(th_new - th) < 1e-15 * (1.0 + abs(th)):
            th = th_new
            break
        th = th_new
    return th


@nb.njit(cache=True)
def sample_velocity(v, key, ctr, kp, table):
    """Replace ``v`` in place by a draw from kappa(v, .); returns the advanced counter."""
    kind = int(kp[0])
    V0 = kp[1]
    d = v.shape[0]
    if kind == 2:
        i = 0
        while i < d:
            u1 = uniform(key, ctr)
            u2 = uniform(key, ctr + 1)
            ctr += 2
            rad = math.sqrt(-2.0 * math.log(u1))
            v[i] = rad * math.cos(2.0 * math.pi * u2)
            if i + 1 < d:
                v[i + 1] = rad * math.sin(2.0 * math.pi * u2)
            i += 2
        return ctr
    if d == 1:
        u = uniform(key, ctr)
        ctr += 1
        v[0] = V0 if u < 0.5 else -V0
        return ctr
    if kind == 0:
        if d == 2:
            phi = math.pi * (2.0 * uniform(key, ctr) - 1.0)
            ctr += 1
            v[0] = V0 * math.cos(phi)
            v[1] = V0 * math.sin(phi)
            return ctr
        nrm = 0.0
        while nrm < 1e-12:
            nrm = 0.0
            i = 0
            while i < d:
                u1 = uniform(key, ctr)
                u2 = uniform(key, ctr + 1)
                ctr += 2
                rad = math.sqrt(-2.0 * math.log(u1))
                v[i] = rad * math.cos(2.0 * math.pi * u2)
                if i + 1 < d:
                    v[i + 1] = rad * math.sin(2.0 * math.pi * u2)
                i += 2
            for i in range(d):
                nrm += v[i] * v[i]
        nrm = math.sqrt(nrm)
        for i in range(d):
            v[i] *= V0 / nrm
        return ctr
    # angle-dependent
    theta = sample_angle(kp, table, uniform(key, ctr))
    ctr += 1
    if d == 2:
        if uniform(key, ctr) < 0.5:
            theta = -theta
        ctr += 1
        c = math.cos(theta)
        s = math.sin(theta)
        vx = v[0]
        vy = v[1]
        v[0] = c * vx - s * vy
        v[1] = s * vx + c * vy
        nrm = math.sqrt(v[0] * v[0] + v[1] * v[1])
        v[0] *= V0 / nrm
        v[1] *= V0 / nrm
        return ctr
    # d == 3: polar angle theta about v, uniform azimuth
    phi = 2.0 * math.pi * uniform(key, ctr)
    ctr += 1
    nv = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    e0 = v[0] / nv
    e1 = v[1] / nv
    e2 = v[2] / nv
    # any unit vector orthogonal to e
    if abs(e0) < 0.9:
        a0, a1, a2 = 1.0, 0.0, 0.0
    else:
        a0, a1, a2 = 0.0, 1.0, 0.0
    dot = a0 * e0 + a1 * e1 + a2 * e2
    p0 = a0 - dot * e0
    p1 = a1 - dot * e1
    p2 = a2 - dot * e2
    pn = math.sqrt(p0 * p0 + p1 * p1 + p2 * p2)
    p0 /= pn
    p1 /= pn
    p2 /= pn
    q0 = e1 * p2 - e2 * p1
    q1 = e2 * p0 - e0 * p2
    q2 = e0 * p1 - e1 * p0
    c = math.cos(theta)
    s = math.sin(theta)
    cp = math.cos(phi)
    sp = math.sin(phi)
    w0 = c * e0 + s * (cp * p0 + sp * q0)
    w1 = c * e1 + s * (cp * p1 + sp * q1)
    w2 = c * e2 + s * (cp * p2 + sp * q2)
    wn = math.sqrt(w0 * w0 + w1 * w1 + w2 * w2)
    v[0] = V0 * w0 / wn
    v[1] = V0 * w1 / wn
    v[2] = V0 * w2 / wn
    return ctr


@nb.njit(cache=True, parallel=True)
def sample_velocities(V, keys, kp, table):
    out = V.copy()
    for p in nb.prange(V.shape[0]):
        sample_velocity(out[p], keys[p], 0, kp, table)
    return out


# ---------------------------------------------------------------- thinning loop


@nb.njit(cache=True)
def advance(x, v, t, t_end, key, ctr, fp, rp, kp, table, g, ev, max_ev):
    """Exact thinning simulation of one particle on [t, t_end].

    Clock events at rate 1 + chi; an event at state (x, v) is accepted with
    probability lambda(v . grad M(x)) / (1 + chi).  Event rows written to ``ev``
    are (time, accepted, x..., v_after...).  Returns (t, ctr, n_clock, n_accepted, ok).
    """
    majorant = 1.0 + rp[0]
    d = x.shape[0]
    n_clock = 0
    n_acc = 0
    while True:
        u = uniform(key, ctr)
        ctr += 1
        tau = -math.log(u) / majorant
        if t + tau >= t_end:
            dt = t_end - t
            for i in range(d):
                x[i] += v[i] * dt
            t = t_end
            break
        for i in range(d):
            x[i] += v[i] * tau
        t += tau
        grad_M(fp, x, g)
        z = 0.0
        for i in range(d):
            z += v[i] * g[i]
        lam = tumble_rate(rp, z)
        w = majorant * uniform(key, ctr)
        ctr += 1
        accepted = w <= lam
        if accepted:
            ctr = sample_velocity(v, key, ctr, kp, table)
            n_acc += 1
        if n_clock < max_ev:
            ev[n_clock, 0] = t
            ev[n_clock, 1] = 1.0 if accepted else 0.0
            for i in range(d):
                ev[n_clock, 2 + i] = x[i]
                ev[n_clock, 2 + d + i] = v[i]
        n_clock += 1
        finite = math.isfinite(t)
        for i in range(d):
            finite = finite and math.isfinite(x[i]) and math.isfinite(v[i])
        if not finite:
            return t, ctr, n_clock, n_acc, False
    ok = True
    for i in range(d):
        ok = ok and math.isfinite(x[i])
    return t, ctr, n_clock, n_acc, ok


@nb.njit(cache=True, parallel=True)
def advance_ensemble(X, V, keys, ctrs, t0, t1, fp, rp, kp, table, n_acc_out):
    """Advance every particle from t0 to t1 in place; per-particle streams make the result
    independent of the thread count."""
    n, d = X.shape
    bad = np.zeros(n, dtype=np.bool_)
    ev = np.empty((0, 2 + 2 * d))
    for p in nb.prange(n):
        g = np.empty(d)
        _, c, _, na, ok = advance(X[p], V[p], t0, t1, keys[p], ctrs[p], fp, rp, kp, table, g, ev, 0)
        ctrs[p] = c
        n_acc_out[p] += na
        bad[p] = not ok
    return bad


# ---------------------------------------------------------------- forced chains


@nb.njit(cache=True, parallel=True)
def forced_chains(X0, TH0, windows, alpha, V0, t_final, keys):
    """Run one forced chain per row: a jump uniform in each window, each heading increment
    uniform on (-alpha, alpha), free transport at speed V0 in between, stop at t_final."""
    n = X0.shape[0]
    X = np.empty((n, 2))
    TH = np.empty(n)
    nw = windows.shape[0]
    for p in nb.prange(n):
        key = keys[p]
        ctr = 0
        x = X0[p, 0]
        y = X0[p, 1]
        th = TH0[p]
        t = 0.0
        for k in range(nw):
            tk = windows[k, 0] + (windows[k, 1] - windows[k, 0]) * uniform(key, ctr)
            ctr += 1
            x += V0 * math.cos(th) * (tk - t)
            y += V0 * math.sin(th) * (tk - t)
            t = tk
            th += alpha * (2.0 * uniform(key, ctr) - 1.0)
            ctr += 1
        x += V0 * math.cos(th) * (t_final - t)
        y += V0 * math.sin(th) * (t_final - t)
        X[p, 0] = x
        X[p, 1] = y
        TH[p] = math.atan2(math.sin(th), math.cos(th))
    return X, TH


@nb.njit(cache=True, parallel=True)
def stream_keys(master_seed, start, n):
    out = np.empty(n, dtype=np.uint64)
    for i in nb.prange(n):
        out[i] = stream_key(master_seed, start + i)
    return out
