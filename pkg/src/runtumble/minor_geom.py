"""Minorisation machinery in d = 2: the ball-chain geometry and Monte Carlo density bounds.

Headings are angles; a forced chain turns by a uniform increment in (-alpha, alpha) at each
jump.  The bounded check follows the schedule of the ball-to-ball argument (about n_tilde jumps
with inter-jump times near (r1, r2, r3), then n_star quick jumps within total time l) and bins
weighted endpoints over B(0, R_hat/4) x headings.  The unbounded check runs plain paths from a
worst-case delta and compares binned densities with the closed-form lower bound.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.stats import norm

from ._validation import DegenerateGeometryError, InputError, check_positive
from .convergence import Binning
from .fields import ChemoField
from .kernels import KernelSpec
from .pdmp import simulate_ensemble, simulate_forced_chains
from .rates import RateSpec

CHUNK = 1_000_000


def _ceil(x):
    # ceil that ignores float noise such as 4 pi / (pi / 3) = 12.000000000000002
    return int(math.ceil(x * (1.0 - 1e-12)))


def _unit(a):
    return np.array([math.cos(a), math.sin(a)])


@dataclass
class GeometryReport:
    r1: float
    r2: float
    r3: float
    alpha: float
    x0: float
    y0: float
    theta0: float
    x_star: float
    y_star: float
    r: float
    delta_theta: float
    R_big: float
    R_hat: float = None
    centre: tuple = None
    circle_centre: tuple = None
    circle_radius: float = None
    n_tilde: int = None
    n_star: int = None
    gamma_step: float = None
    duhamel_prefactor: float = None
    log_duhamel_prefactor: float = None
    swap_indices: bool = False

    def as_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def crescent_params(r1, r2, r3, alpha, x0=0.0, y0=0.0, theta0=0.0, swap_indices=False):
    """Inscribed ball (x_*, y_*, r), heading increment and two-leg reach of the 3-jump set.

    ``swap_indices`` uses s3 sin / (s2 + s3 cos) for the heading increment instead of
    r2 sin / (r3 + r2 cos); the two agree when r2 = r3.
    """
    for name, val in (("r1", r1), ("r2", r2), ("r3", r3)):
        check_positive(name, val)
    alpha = float(alpha)
    if not 0 < alpha < math.pi / 2:
        raise InputError(f"alpha must lie in (0, pi/2), got {alpha}")
    h = alpha / 2
    r = r2 * r3 * (1 - math.cos(h))
    R = math.sqrt(r2**2 + r3**2 + 2 * r2 * r3 * math.cos(h))
    a, b = (r3, r2) if swap_indices else (r2, r3)
    dth = math.atan(a * math.sin(h) / (b + a * math.cos(h)))
    L = r1 + R
    return GeometryReport(r1, r2, r3, alpha, float(x0), float(y0), float(theta0),
                          x0 + L * math.cos(theta0), y0 + L * math.sin(theta0), r, dth, R,
                          swap_indices=bool(swap_indices))


def ball_map_F(x0, y0, theta0, report):
    """One step of the centre map: back by r1 + R along theta0 + delta_theta, turn by delta_theta."""
    L = report.r1 + report.R_big
    th = theta0 + report.delta_theta
    return x0 - L * math.cos(th), y0 - L * math.sin(th), th


def F_iterates(report, k, x0=None, y0=None, theta0=None):
    """(k+1, 3) array of the starting point and its first k images under F, in closed form."""
    x0 = report.x0 if x0 is None else x0
    y0 = report.y0 if y0 is None else y0
    theta0 = report.theta0 if theta0 is None else theta0
    L = report.r1 + report.R_big
    th = theta0 + report.delta_theta * np.arange(k + 1)
    steps = np.zeros((k + 1, 2))
    steps[1:, 0] = -L * np.cos(th[1:])
    steps[1:, 1] = -L * np.sin(th[1:])
    xy = np.array([x0, y0]) + np.cumsum(steps, axis=0)
    return np.column_stack([xy, th])


def enclosing_circle(r1, R_big, delta_theta, x0=0.0, y0=0.0, theta0=0.0):
    """R_hat = (r1 + R) / sin(delta_theta/2) and the displayed centre C.

    R_hat bounds |p_k - p_0| for every iterate p_k; it is the diameter of the circle through
    the iterates (see ``iterate_circle`` for that circle's true centre and radius).
    """
    if delta_theta == 0:
        raise DegenerateGeometryError("delta_theta = 0: the chain is a straight line")
    R_hat = (r1 + R_big) / math.sin(abs(delta_theta) / 2)
    a = math.pi / 2 - (theta0 + delta_theta / 2)
    C = (x0 - R_hat * math.cos(a), y0 - R_hat * math.sin(a))
    return R_hat, C


def iterate_circle(r1, R_big, delta_theta, x0=0.0, y0=0.0, theta0=0.0):
    """Centre and radius of the circle through all F-iterates."""
    if delta_theta == 0:
        raise DegenerateGeometryError("delta_theta = 0: the chain is a straight line")
    L = r1 + R_big
    rho = L / (2 * math.sin(delta_theta / 2))
    # first chord heading; the centre sits at angle (pi - delta)/2 from it, on the turning side
    phi1 = theta0 + delta_theta + math.pi
    c = np.array([x0, y0]) + rho * _unit(phi1 + math.pi / 2 - delta_theta / 2)
    return (float(c[0]), float(c[1])), abs(rho)


def step_counts(R_hat, r, alpha):
    """(n_tilde, n_star) = (ceil(24 R_hat / r), ceil(4 pi / alpha))."""
    for name, val in (("R_hat", R_hat), ("r", r), ("alpha", alpha)):
        check_positive(name, val)
    return _ceil(24 * R_hat / r), _ceil(4 * math.pi / alpha)


def gamma_step(r1, r2, r3, alpha, R_big=None):
    """Rough per-3-jump mass factor pi r2^2 r3^2 alpha^2 / (32 (r1 + R))."""
    if R_big is None:
        R_big = math.sqrt(r2**2 + r3**2 + 2 * r2 * r3 * math.cos(alpha / 2))
    return math.pi * r2**2 * r3**2 * alpha**2 / (32 * (r1 + R_big))


def duhamel_prefactor(n, chi, beta, t):
    """beta^n (1 - chi)^n e^{-(1 + chi) t}."""
    return float(beta) ** int(n) * (1.0 - chi) ** int(n) * math.exp(-(1.0 + chi) * t)


def log_duhamel_prefactor(n, chi, beta, t):
    """Natural log of the prefactor; the value itself underflows for long schedules."""
    return int(n) * (math.log(beta) + math.log1p(-chi)) - (1.0 + chi) * t


# ---------------------------------------------------------------- schedule


@dataclass
class MinorisationConfig:
    r1: float = 1.0
    r2: float = 1.0
    r3: float = 1.0
    alpha: float = math.pi / 3
    chi: float = 0.5
    beta: float = None
    epsilon: float = None
    l: float = None
    V0: float = 1.0

    def __post_init__(self):
        if self.beta is None:
            # Boxcar in angle: kappa = 1/(2 alpha) on |theta' - theta| <= alpha
            self.beta = 1.0 / (2.0 * self.alpha)
        if self.epsilon is None:
            self.epsilon = min(self.r1, self.r2, self.r3) / 10.0


def geometry_report(cfg, x0=0.0, y0=0.0, theta0=0.0, swap_indices=False):
    """Every constant of the bounded chain for ``cfg``, including the schedule's prefactor."""
    rep = crescent_params(cfg.r1, cfg.r2, cfg.r3, cfg.alpha, x0, y0, theta0, swap_indices)
    R_hat, C = enclosing_circle(cfg.r1, rep.R_big, rep.delta_theta, x0, y0, theta0)
    cc, rho = iterate_circle(cfg.r1, rep.R_big, rep.delta_theta, x0, y0, theta0)
    n_tilde, n_star = step_counts(R_hat, rep.r, cfg.alpha)
    rep.R_hat, rep.centre, rep.circle_centre, rep.circle_radius = R_hat, C, cc, rho
    rep.n_tilde, rep.n_star = n_tilde, n_star
    rep.gamma_step = gamma_step(cfg.r1, cfg.r2, cfg.r3, cfg.alpha, rep.R_big)
    windows, t_final = schedule(cfg, rep)
    rep.duhamel_prefactor = duhamel_prefactor(windows.shape[0], cfg.chi, cfg.beta, t_final)
    rep.log_duhamel_prefactor = log_duhamel_prefactor(windows.shape[0], cfg.chi, cfg.beta, t_final)
    return rep


def schedule(cfg, report):
    """Jump windows and final time.

    ceil(n_tilde/3) cycles of (r1, r2, r3): jump k falls in a window of width epsilon around
    the k-th nominal time, so each inter-jump time is within epsilon of its r_i.  Then n_star
    consecutive windows split [T, T + l] with l = R_hat/8 by default.
    """
    eps = cfg.epsilon
    n_cyc = _ceil(report.n_tilde / 3.0)
    gaps = np.tile([cfg.r1, cfg.r2, cfg.r3], n_cyc)
    nominal = np.cumsum(gaps) / cfg.V0
    if eps >= gaps.min() / cfg.V0:
        raise InputError("epsilon must be smaller than every r_i")
    w1 = np.column_stack([nominal - eps / 2, nominal + eps / 2])
    l = report.R_hat / 8.0 if cfg.l is None else float(cfg.l)
    T = w1[-1, 1]
    edges = T + l * np.linspace(0.0, 1.0, report.n_star + 1)
    w2 = np.column_stack([edges[:-1], edges[1:]])
    return np.vstack([w1, w2]), T + l


# ---------------------------------------------------------------- crescent oracle


def crescent_contains(points, s1, s2, s3, alpha, x0=0.0, y0=0.0, theta0=0.0):
    """Whether each point is x0 + s1 u(theta0) + s2 u(theta0+t1) + s3 u(theta0+t1+t2) with |t1|, |t2| < alpha."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    w = P - (np.array([x0, y0]) + s1 * _unit(theta0))
    rho2 = np.sum(w**2, axis=1)
    c2 = (rho2 - s2**2 - s3**2) / (2 * s2 * s3)
    ok_r = (c2 <= 1.0) & (c2 > math.cos(alpha))
    t2 = np.arccos(np.clip(c2, -1.0, 1.0))
    omega = np.arctan2(w[:, 1], w[:, 0])
    inside = np.zeros(P.shape[0], dtype=bool)
    for sgn in (1.0, -1.0):
        t1 = omega - theta0 - np.arctan2(s3 * np.sin(sgn * t2), s2 + s3 * np.cos(t2))
        t1 = np.angle(np.exp(1j * t1))
        inside |= np.abs(t1) < alpha
    return inside & ok_r


def ball_coverage(report, n=200_000, seed=0):
    """Fraction of the inscribed ball B((x_*, y_*), r) lying in the nominal 3-jump set."""
    rng = np.random.default_rng(seed)
    rad = report.r * np.sqrt(rng.random(n))
    ang = 2 * np.pi * rng.random(n)
    P = np.column_stack([report.x_star + rad * np.cos(ang), report.y_star + rad * np.sin(ang)])
    return float(np.mean(crescent_contains(P, report.r1, report.r2, report.r3, report.alpha,
                                           report.x0, report.y0, report.theta0)))


def measured_gamma_step(report, N=1_000_000, seed=0, r_tilde=None, n_cells=8):
    """Empirical per-3-jump mass factor.

    Starts uniformly on B((x0, y0), r_tilde) x {|theta - theta0| < alpha/2} (density 1), runs
    three forced jumps at the nominal times and returns the smallest cell density of the image
    on B((x_*, y_*), r_tilde + r/4) x {|theta - theta0 - delta_theta| < alpha/2}.
    """
    rt = report.r if r_tilde is None else float(r_tilde)
    rng = np.random.default_rng(seed)
    rad = rt * np.sqrt(rng.random(N))
    ang = 2 * np.pi * rng.random(N)
    X0 = np.column_stack([report.x0 + rad * np.cos(ang), report.y0 + rad * np.sin(ang)])
    th0 = report.theta0 + report.alpha * (rng.random(N) - 0.5)
    mass0 = math.pi * rt**2 * report.alpha
    times = np.cumsum([report.r1, report.r2, report.r3])
    windows = np.column_stack([times, times])
    X, TH, _ = simulate_forced_chains(X0, th0, windows, report.alpha, 1.0, times[-1], seed)
    # point windows: the weight is (2 alpha)^3 per unit starting mass
    w = (2 * report.alpha) ** 3 * mass0 / N
    # transport pushes mass forward, so the image ball sits at the crescent centre (x_*, y_*)
    th_t = report.theta0 + report.delta_theta
    R_t = rt + report.r / 4
    dx = X[:, 0] - report.x_star
    dy = X[:, 1] - report.y_star
    d2 = dx**2 + dy**2
    dth = np.angle(np.exp(1j * (TH - th_t)))
    sel = (d2 < R_t**2) & (np.abs(dth) < report.alpha / 2)
    pts = np.column_stack([d2[sel], np.arctan2(dy[sel], dx[sel]), dth[sel]])
    edges = [np.linspace(0, R_t**2, n_cells + 1), np.linspace(-np.pi, np.pi, n_cells + 1),
             np.linspace(-report.alpha / 2, report.alpha / 2, n_cells + 1)]
    H, _ = np.histogramdd(pts, bins=edges)
    vol = math.pi * R_t**2 * report.alpha / n_cells**3
    return float(H.min() * w / vol)


# ---------------------------------------------------------------- Monte Carlo bounds


def wilson_lower(k, n, confidence=0.99):
    """One-sided Wilson score lower bound for a binomial proportion."""
    z = norm.ppf(confidence)
    k = np.asarray(k, dtype=float)
    p = k / n
    den = 1 + z**2 / n
    mid = p + z**2 / (2 * n)
    half = z * np.sqrt(p * (1 - p) / n + z**2 / (4 * n**2))
    return np.maximum((mid - half) / den, 0.0)


@dataclass
class EmpiricalLowerBound:
    kind: str
    ball_centre: tuple
    ball_radius: float
    shape: tuple
    N: int
    cell_volume: float
    weight_per_sample: float
    counts: np.ndarray
    confidence: float = 0.99
    analytic_bound: float = None
    alt_bound: float = None
    log_prefactor: float = 0.0
    meta: dict = dc_field(default_factory=dict)

    @property
    def density(self):
        return self.counts * self.weight_per_sample / (self.N * self.cell_volume)

    @property
    def density_lower(self):
        return wilson_lower(self.counts, self.N, self.confidence) * self.weight_per_sample / self.cell_volume

    @property
    def mass_fraction(self):
        return float(self.counts.sum() / self.N)

    @property
    def min_density(self):
        return float(self.density.min())

    @property
    def min_density_lower(self):
        return float(self.density_lower.min())

    @property
    def all_positive(self):
        return bool(np.all(self.counts > 0))

    @property
    def inconclusive(self):
        """Some empty cell has every face neighbour non-empty (sampling noise, not geometry)."""
        c = self.counts.reshape(self.shape)
        empty = c == 0
        if not empty.any():
            return False
        nb_ok = np.ones_like(empty)
        for ax in range(c.ndim):
            for step in (1, -1):
                nb_ok &= np.roll(c, step, axis=ax) > 0
        return bool(np.any(empty & nb_ok))

    @property
    def passes(self):
        if self.analytic_bound is None:
            return self.all_positive
        return bool(self.min_density_lower >= self.analytic_bound)

    @property
    def status(self):
        if self.passes:
            return "pass"
        return "inconclusive" if self.inconclusive else "fail"

    def summary(self):
        out = {"kind": self.kind, "status": self.status, "N": self.N, "shape": list(self.shape),
               "ball_centre": list(self.ball_centre), "ball_radius": self.ball_radius,
               "mass_fraction": self.mass_fraction, "min_density": self.min_density,
               "min_density_lower": self.min_density_lower, "all_positive": self.all_positive,
               "empty_cells": int(np.sum(self.counts == 0)), "confidence": self.confidence,
               "cell_volume": self.cell_volume, "weight_per_sample": self.weight_per_sample,
               "analytic_bound": self.analytic_bound, "alt_bound": self.alt_bound,
               "log_prefactor": self.log_prefactor, "meta": self.meta}
        if self.min_density_lower > 0:
            out["log_min_density_lower"] = math.log(self.min_density_lower) + self.log_prefactor
        if self.analytic_bound is not None:
            out["margin_ratio"] = self.min_density_lower / self.analytic_bound
        if self.alt_bound:
            out["alt_margin_ratio"] = self.min_density_lower / self.alt_bound
        return out

    def to_json(self):
        return json.dumps(self.summary(), indent=2, sort_keys=True)

    def to_csv(self, path):
        idx = np.array(np.unravel_index(np.arange(self.counts.size), self.shape)).T
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([f"i{k}" for k in range(len(self.shape))] + ["count", "density", "density_lower"])
            for row, k, d, lo in zip(idx, self.counts, self.density, self.density_lower):
                wr.writerow(list(map(int, row)) + [int(k), repr(float(d)), repr(float(lo))])


def _target_binning(radius, n_r, n_angle, n_theta):
    r2 = np.linspace(0.0, radius**2, n_r + 1)
    ang = np.linspace(-np.pi, np.pi, n_angle + 1)
    th = np.linspace(-np.pi, np.pi, n_theta + 1)

    def chart(X, TH):
        return np.column_stack([np.sum(X**2, axis=1), np.arctan2(X[:, 1], X[:, 0]), TH])

    b = Binning([r2, ang, th], chart, None, "disk_heading")
    b.phase_volume = math.pi * radius**2 / (n_r * n_angle) * 2 * math.pi / n_theta
    return b


def verify_minorisation_bounded(x0, y0, theta0, cfg, N, seed=0, bins=(16, 16, 8), ball_fraction=0.25,
                                chunk=CHUNK):
    """Forced chains on the ball-chain schedule, binned over B(0, ball_fraction R_hat) x headings.

    Each chain carries the weight (2 alpha)^n prod|window|; the Duhamel prefactor is kept
    apart as ``log_prefactor`` because it underflows.  Cell densities times the prefactor
    estimate a lower bound of f(t, ., .) on the target ball.
    """
    rep = geometry_report(cfg)
    if math.hypot(x0, y0) >= rep.R_hat / 2:
        raise InputError("the starting point must lie in B(0, R_hat/2)")
    windows, t_final = schedule(cfg, rep)
    radius = ball_fraction * rep.R_hat
    b = _target_binning(radius, *bins)
    counts = np.zeros(int(np.prod(bins)))
    N = int(N)
    for start in range(0, N, chunk):
        n = min(chunk, N - start)
        X0 = np.tile([float(x0), float(y0)], (n, 1))
        X, TH, w = simulate_forced_chains(X0, theta0, windows, cfg.alpha, cfg.V0, t_final, seed, start)
        H, _ = np.histogramdd(b.chart(X, TH), bins=b.edges)
        counts += H.ravel()
    meta = {"geometry": rep.as_dict(), "n_jumps": int(windows.shape[0]), "t_final": float(t_final),
            "start": [float(x0), float(y0), float(theta0)], "seed": int(seed)}
    return EmpiricalLowerBound("bounded", (0.0, 0.0), radius, tuple(bins), N, b.phase_volume, w,
                               counts.astype(np.int64), log_prefactor=rep.log_duhamel_prefactor, meta=meta)


def unbounded_bound(R_star, V0, chi, d, squared=False):
    """(1 - chi^2) e^{-(1+chi) t} / (t^d |B(V0)|) at t = 3 + R_*/V0; ``squared`` uses (1 - chi)^2."""
    t = 3.0 + R_star / V0
    vol = math.pi ** (d / 2) / gamma_fn(d / 2 + 1) * V0**d
    pre = (1 - chi) ** 2 if squared else 1 - chi**2
    return pre * math.exp(-(1 + chi) * t) / (t**d * vol)


def verify_minorisation_unbounded(R_star, V0, chi, d, N, seed=0, field=None, x0=None, v0=None,
                                  n_r=8, n_angle=8, chunk=CHUNK):
    """Plain paths from delta(x0, v0) to t = 3 + R_*/V0, binned over {|x| <= V0} x {|v| <= V0}.

    Default start is the worst case x0 = (R_*, 0, ...) with v0 pointing outward at speed V0.
    d = 2 uses equal-area polar cells (n_r x n_angle per disk); d = 1 uses n_r x n_r intervals.
    """
    if d not in (1, 2):
        raise InputError("the unbounded minorisation check supports d = 1, 2")
    R_star, V0 = check_positive("R_star", R_star), check_positive("V0", V0)
    t = 3.0 + R_star / V0
    field = ChemoField(dim=d) if field is None else field
    rate = RateSpec(chi)
    kernel = KernelSpec("Maxwellian", dim=d)
    if x0 is None:
        x0 = np.zeros(d)
        x0[0] = R_star
    if v0 is None:
        v0 = np.zeros(d)
        v0[0] = V0
    x0, v0 = np.asarray(x0, dtype=float), np.asarray(v0, dtype=float)
    if np.linalg.norm(x0) > R_star * (1 + 1e-12) or np.linalg.norm(v0) > V0 * (1 + 1e-12):
        raise InputError("the start must lie in {|x| <= R_*} x B(0, V0)")
    if d == 2:
        b = Binning.polar_disks(V0, V0, n_r, n_angle)
        vol = b.phase_volume
    else:
        e = np.linspace(-V0, V0, n_r + 1)
        b = Binning.phase_space([e], [e])
        vol = (2 * V0 / n_r) ** 2
    counts = np.zeros(b.n_cells)
    N = int(N)
    for start in range(0, N, chunk):
        n = min(chunk, N - start)
        snap = simulate_ensemble(lambda g, k: (np.tile(x0, (k, 1)), np.tile(v0, (k, 1))), n, [t], field, rate,
                                 kernel, seed, stream_offset=start)[-1]
        H, _ = np.histogramdd(b.chart(snap.x, snap.v), bins=b.edges)
        counts += H.ravel()
    meta = {"t": t, "x0": x0.tolist(), "v0": v0.tolist(), "d": d, "R_star": R_star, "V0": V0, "chi": chi,
            "seed": int(seed), "field": field.as_dict() if hasattr(field, "as_dict") else str(field)}
    return EmpiricalLowerBound("unbounded", tuple([0.0] * d), V0, b.shape, N, vol, 1.0, counts.astype(np.int64),
                               analytic_bound=unbounded_bound(R_star, V0, chi, d),
                               alt_bound=unbounded_bound(R_star, V0, chi, d, squared=True), meta=meta)
