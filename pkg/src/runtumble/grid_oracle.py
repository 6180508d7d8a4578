"""Deterministic grid solver for the kinetic equation, used as an independent oracle.

Supported phase spaces:
  d=1 with the truncated Maxwellian kernel (cell-centred v grid on [-v_max, v_max]),
  d=1 with the two-speed sphere {-V0, V0},
  d=2 with a sphere kernel on a cell-centred heading grid of V0 S^1.

One step is Strang splitting: half collision, full transport, half collision.  Transport is
semi-Lagrangian along exact characteristics (per velocity node the shift is constant, so a
4-point cubic Lagrange stencil per axis does it); negatives are clipped and the clipped mass
is logged.  The collision step over time h at every (x, v) is

    f(v) <- exp(-lam(v) h) f(v) + sum_v' w_v' K(v, v') (1 - exp(-lam(v') h)) f(v')

with K column-normalised on the grid, so it conserves mass exactly.
"""

import math
import dataclasses
from dataclasses import dataclass, field as dc_field
from enum import Enum

import numpy as np

from ._validation import ConfigError, InputError, ToleranceError, check_positive
from .kernels import KernelKind
from .pdmp import EnsembleSnapshot, write_columnar
from .quadrature import gauss_legendre


class Boundary(str, Enum):
    ABSORBING = "Absorbing-with-mass-audit"
    LARGE_BOX = "LargeBox"
    PERIODIC = "Periodic"


@dataclass(frozen=True)
class GridConfig:
    x_box: tuple
    nx: tuple
    dt: float
    n_theta: int = 48
    nv: int = 120
    v_max: float = 6.0
    boundary: Boundary = Boundary.ABSORBING

    def __post_init__(self):
        box = tuple((float(a), float(b)) for a, b in np.atleast_2d(np.asarray(self.x_box, dtype=float)))
        nx = tuple(int(n) for n in np.atleast_1d(self.nx))
        if len(box) != len(nx) or len(box) not in (1, 2):
            raise ConfigError("x_box and nx must describe a 1-D or 2-D box")
        if any(b <= a for a, b in box) or any(n < 4 for n in nx):
            raise ConfigError("empty box or fewer than 4 cells per axis")
        object.__setattr__(self, "x_box", box)
        object.__setattr__(self, "nx", nx)
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        check_positive("dt", self.dt)

    @property
    def dim(self):
        return len(self.nx)

    @property
    def dx(self):
        return tuple((b - a) / n for (a, b), n in zip(self.x_box, self.nx))

    def x_centres(self):
        return [a + (np.arange(n) + 0.5) * h for (a, _), n, h in zip(self.x_box, self.nx, self.dx)]

    def check_cfl(self, vmax):
        limit = 0.9 * min(self.dx) / vmax
        if self.dt > limit * (1 + 1e-12):
            raise ConfigError(f"dt={self.dt} violates dt <= 0.9 min(dx) / v_max = {limit}")


@dataclass
class VelocityGrid:
    nodes: np.ndarray       # (nv, d) velocity vectors
    weight: float           # reference measure of one velocity cell
    K: np.ndarray           # (nv, nv) gain matrix, K[i, j] = kappa(v_j -> v_i), columns sum to 1 / weight
    labels: np.ndarray      # v (d=1) or heading theta (d=2)


def velocity_grid(cfg, kernel):
    d = cfg.dim
    if kernel.dim != d:
        raise ConfigError(f"kernel dimension {kernel.dim} differs from grid dimension {d}")
    if kernel.kind is KernelKind.MAXWELLIAN:
        if d != 1:
            raise ConfigError("Maxwellian grids are implemented for d = 1 only")
        dv = 2 * cfg.v_max / cfg.nv
        v = -cfg.v_max + (np.arange(cfg.nv) + 0.5) * dv
        m = np.exp(-0.5 * v**2)
        m /= m.sum() * dv
        K = np.repeat(m[:, None], cfg.nv, axis=1)
        return VelocityGrid(v[:, None], dv, K, v)
    if d == 1:
        v = np.array([-kernel.V0, kernel.V0])
        return VelocityGrid(v[:, None], 1.0, np.full((2, 2), 0.5), v)
    n = int(cfg.n_theta)
    dth = 2 * np.pi / n
    th = -np.pi + (np.arange(n) + 0.5) * dth
    nodes = kernel.V0 * np.column_stack([np.cos(th), np.sin(th)])
    w = kernel.V0 * dth
    if kernel.kind is KernelKind.UNIFORM_SPHERE:
        K = np.full((n, n), 1.0 / (n * w))
    else:
        # cell average of kappa_1 over the offset cell, then exact column normalisation
        x, gw = gauss_legendre(16)
        sub = 8
        k = np.arange(n)
        off = np.minimum(k, n - k) * dth
        acc = np.zeros(n)
        for s in range(sub):
            lo = off - dth / 2 + s * dth / sub
            pts = lo[:, None] + (x + 1) / 2 * dth / sub
            acc += (gw * kernel.profile(np.abs(pts))).sum(axis=1) / 2 / sub
        col = acc / (acc.sum() * w)
        K = col[(k[:, None] - k[None, :]) % n]
    return VelocityGrid(nodes, w, K, th)


@dataclass
class GridDensity:
    values: np.ndarray
    cfg: GridConfig
    vgrid: VelocityGrid
    time: float = 0.0
    audit: dict = dc_field(default_factory=lambda: {"clipped_mass": 0.0, "max_clip_step": 0.0, "boundary_loss": 0.0})

    @property
    def cell_measure(self):
        return float(np.prod(self.cfg.dx) * self.vgrid.weight)

    def mass(self):
        return float(self.values.sum() * self.cell_measure)

    def copy(self):
        return GridDensity(self.values.copy(), self.cfg, self.vgrid, self.time, dict(self.audit))

    def to_points(self):
        """Cell centres (X, V) and cell masses, in C order of ``values``."""
        axes = self.cfg.x_centres()
        mesh = np.meshgrid(*axes, np.arange(self.vgrid.nodes.shape[0]), indexing="ij")
        X = np.column_stack([m.ravel() for m in mesh[:-1]])
        V = self.vgrid.nodes[mesh[-1].ravel()]
        return X, V, self.values.ravel() * self.cell_measure

    def to_snapshot(self):
        X, V, w = self.to_points()
        return EnsembleSnapshot(self.time, X, V, w, 0, {"source": "grid"})

    def to_binary(self, path):
        X, V, w = self.to_points()
        write_columnar(path, self.time, np.column_stack([X, V, w]), self.cfg.dim)

    def to_csv(self, path):
        self.to_snapshot().to_csv(path)

    def l1_distance(self, other):
        return float(np.abs(self.values - other.values).sum() * self.cell_measure)

    def sampler(self):
        """``callable(generator, n) -> (X, V)`` drawing from the piecewise-constant density.

        Positions are uniform within the chosen cell; headings (d=2) or speeds (d=1 Maxwellian)
        are uniform within their velocity cell.  The two-speed d=1 grid keeps its nodes exactly.
        """
        X, V, w = self.to_points()
        p = w / w.sum()
        dx = np.asarray(self.cfg.dx)
        labels = self.vgrid.labels
        nv = labels.shape[0]
        dl = (labels[-1] - labels[0]) / (nv - 1) if nv > 2 else 0.0
        d = self.cfg.dim

        def draw(g, n):
            i = g.choice(p.size, size=n, p=p)
            x = X[i] + g.uniform(-0.5, 0.5, (n, d)) * dx
            if d == 2:
                th = np.arctan2(V[i, 1], V[i, 0]) + g.uniform(-0.5, 0.5, n) * dl
                r = np.linalg.norm(V[i], axis=1)
                return x, np.column_stack([r * np.cos(th), r * np.sin(th)])
            return x, V[i] + g.uniform(-0.5, 0.5, (n, 1)) * dl
        return draw


def density_from_function(cfg, kernel, func, time=0.0, normalise=True):
    """Evaluate ``func(X, V)`` (rows of cell centres) on the grid; optionally normalise to mass 1."""
    vg = velocity_grid(cfg, kernel)
    g = GridDensity(np.zeros(cfg.nx + (vg.nodes.shape[0],)), cfg, vg, time)
    X, V, _ = g.to_points()
    vals = np.asarray(func(X, V), dtype=float).reshape(g.values.shape)
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise InputError("initial density must be finite and non-negative")
    g.values = vals
    if normalise:
        g.values /= g.mass()
    return g


def _cubic_weights(t):
    return np.array([
        -t * (t - 1) * (t - 2) / 6,
        (t + 1) * (t - 1) * (t - 2) / 2,
        -(t + 1) * t * (t - 2) / 2,
        (t + 1) * t * (t - 1) / 6,
    ])


def _shift(f, s, axis, periodic):
    """Values at (index - s) along ``axis`` by 4-point Lagrange interpolation; zero inflow."""
    if s == 0.0:
        return f
    p = -s
    base = math.floor(p)
    w = _cubic_weights(p - base)
    n = f.shape[axis]
    out = np.zeros_like(f)
    for j, wj in zip(range(-1, 3), w):
        k = base + j
        if wj == 0.0:
            continue
        if periodic:
            out += wj * np.roll(f, -k, axis=axis)
            continue
        if abs(k) >= n:
            continue
        src = [slice(None)] * f.ndim
        dst = [slice(None)] * f.ndim
        if k >= 0:
            src[axis] = slice(k, n)
            dst[axis] = slice(0, n - k)
        else:
            src[axis] = slice(0, n + k)
            dst[axis] = slice(-k, n)
        out[tuple(dst)] += wj * f[tuple(src)]
    return out


class _Stepper:
    def __init__(self, cfg, vgrid, field, rate, dt):
        self.cfg = cfg
        self.vg = vgrid
        self.dt = dt
        X = np.stack(np.meshgrid(*cfg.x_centres(), indexing="ij"), axis=-1)
        g = field.grad(X.reshape(-1, cfg.dim)).reshape(X.shape)
        m = np.einsum("...i,vi->...v", g, vgrid.nodes)
        self.lam = rate(m)
        self.periodic = cfg.boundary is Boundary.PERIODIC
        self.shifts = vgrid.nodes * dt / np.asarray(cfg.dx)
        self.KT = vgrid.K.T * vgrid.weight
        self.rank_one = np.allclose(vgrid.K, vgrid.K[:, :1])

    def collide(self, f, h):
        e = np.exp(-self.lam * h)
        jumped = (1.0 - e) * f
        if self.rank_one:
            gain = (jumped.sum(axis=-1, keepdims=True) * self.vg.weight) * self.vg.K[:, 0]
        else:
            gain = jumped @ self.KT
        return e * f + gain

    def transport(self, f):
        out = np.empty_like(f)
        for j in range(f.shape[-1]):
            fj = f[..., j]
            for ax in range(self.cfg.dim):
                fj = _shift(fj, self.shifts[j, ax], ax, self.periodic)
            out[..., j] = fj
        return out


def solve(f0, T, cfg, field, rate, kernel, callback=None):
    """Integrate from ``f0`` over [f0.time, f0.time + T]; returns a new GridDensity with its audit."""
    if np.any(f0.values < 0):
        raise InputError("negative initial density")
    if field.dim != cfg.dim:
        raise ConfigError("field and grid dimensions differ")
    vg = f0.vgrid
    vmax = float(np.max(np.linalg.norm(vg.nodes, axis=1)))
    cfg.check_cfl(vmax)
    T = float(T)
    n = max(1, math.ceil(T / cfg.dt - 1e-12)) if T > 0 else 0
    dt = T / n if n else cfg.dt
    st = _Stepper(cfg, vg, field, rate, dt)
    f = f0.values.copy()
    audit = dict(f0.audit)
    meas = f0.cell_measure
    for k in range(n):
        f = st.collide(f, dt / 2)
        before = f.sum()
        f = st.transport(f)
        neg = f < 0
        clip = float(-f[neg].sum() * meas)
        f[neg] = 0.0
        audit["clipped_mass"] += clip
        audit["max_clip_step"] = max(audit["max_clip_step"], clip)
        if not st.periodic:
            audit["boundary_loss"] += float((before - f.sum()) * meas - clip)
        f = st.collide(f, dt / 2)
        if callback is not None:
            callback(f0.time + (k + 1) * dt, f)
    audit["steps"] = audit.get("steps", 0) + n
    audit["dt"] = dt
    return GridDensity(f, cfg, vg, f0.time + T, audit)


def stationary_estimate(cfg, field, rate, kernel, T_long, tol, f0=None, weight=None):
    """Late-time profile: integrate in unit blocks until ||f(t+1) - f(t)|| < tol.

    The norm is the (optionally weighted) L1 distance of the mass-normalised profiles; ``weight``
    is a callable on (X, V) rows.  The returned density has mass 1 and carries the residual curve
    in ``audit["residuals"]``.  Raises ToleranceError with the residuals if T_long is exhausted.
    """
    if f0 is None:
        def gauss(X, V):
            return np.exp(-0.5 * np.sum(X**2, axis=1) / 4.0) * np.ones(V.shape[0])
        f0 = density_from_function(cfg, kernel, gauss)
    w = None
    if weight is not None:
        X, V, _ = f0.to_points()
        w = np.asarray(weight(X, V)).reshape(f0.values.shape)
    cur = f0
    residuals = []
    t = 0.0
    while t < T_long:
        nxt = solve(cur, 1.0, cfg, field, rate, kernel)
        diff = np.abs(nxt.values / nxt.mass() - cur.values / cur.mass())
        if w is not None:
            diff = diff * w
        r = float(diff.sum() * cur.cell_measure)
        residuals.append(r)
        cur = nxt
        t += 1.0
        if r < tol:
            out = cur.copy()
            out.audit["mass_before_normalisation"] = out.mass()
            out.values /= out.mass()
            out.audit["residuals"] = residuals
            return out
    raise ToleranceError(f"no stationary profile within T_long={T_long} (last residual {residuals[-1]:.3e})", residuals)



def extrapolated_stationary(cfg, field, rate, kernel, T_long, tol, weight=None):
    """Richardson combination 2 f(dt/2) - f(dt) of two stationary estimates.

    The splitting error is first order in dt where the rate jumps, so the plain estimate carries
    a bias that the combination removes to leading order.  Negative cells are clipped and the
    result renormalised; the clipped mass is recorded in the audit.
    """
    coarse = stationary_estimate(cfg, field, rate, kernel, T_long, tol, weight=weight)
    fine_cfg = dataclasses.replace(cfg, dt=cfg.dt / 2)
    fine = stationary_estimate(fine_cfg, field, rate, kernel, T_long, tol, f0=coarse, weight=weight)
    out = fine.copy()
    v = 2.0 * fine.values - coarse.values
    neg = v < 0
    out.audit["extrapolation_clipped"] = float(-v[neg].sum() * fine.cell_measure)
    v[neg] = 0.0
    out.values = v
    out.values /= out.mass()
    out.audit["extrapolated_from_dt"] = [cfg.dt, fine_cfg.dt]
    return out
