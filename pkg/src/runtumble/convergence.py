"""Binned (weighted) total-variation distances, decay curves and rate fits."""

import csv
import json
from dataclasses import asdict, dataclass, field as dc_field
from enum import Enum

import numpy as np

from ._validation import CertificationError, ConfigError, FitError, InputError
from .fields import field_eval
from .pdmp import EnsembleSnapshot, simulate_ensemble


class WeightKind(str, Enum):
    PLAIN_TV = "Plain-TV"
    NORM1 = "Norm1-weight"
    PHI_UNBOUNDED = "Phi-unbounded"


class Binning:
    """Rectangular cells in a coordinate chart of phase space.

    ``chart(X, V)`` maps particles to (n, k) coordinates, ``edges`` holds k edge arrays and
    ``inverse(C)`` maps cell-centre coordinates back to representative (X, V) rows.
    """

    def __init__(self, edges, chart, inverse, name="custom"):
        self.edges = tuple(np.asarray(e, dtype=float) for e in edges)
        self.chart = chart
        self.inverse = inverse
        self.name = name

    @property
    def shape(self):
        return tuple(len(e) - 1 for e in self.edges)

    @property
    def n_cells(self):
        return int(np.prod(self.shape))

    def centres(self):
        mids = [0.5 * (e[1:] + e[:-1]) for e in self.edges]
        mesh = np.meshgrid(*mids, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def cell_volumes(self):
        widths = np.meshgrid(*[np.diff(e) for e in self.edges], indexing="ij")
        return np.prod(widths, axis=0).ravel()

    def centre_points(self):
        return self.inverse(self.centres())

    def describe(self):
        return {"name": self.name, "shape": list(self.shape),
                "ranges": [[float(e[0]), float(e[-1])] for e in self.edges]}

    @classmethod
    def phase_space(cls, x_edges, v_edges):
        """Cells in (x_1..x_d, v_1..v_d)."""
        d = len(x_edges)

        def chart(X, V):
            return np.column_stack([X, V])

        def inverse(C):
            return C[:, :d], C[:, d:]

        return cls(list(x_edges) + list(v_edges), chart, inverse, "phase_space")

    @classmethod
    def position_heading(cls, x_edges, y_edges, n_theta, V0=1.0):
        """d=2 sphere velocities: cells in (x, y, heading) with heading on (-pi, pi]."""
        th = np.linspace(-np.pi, np.pi, int(n_theta) + 1)

        def chart(X, V):
            return np.column_stack([X[:, 0], X[:, 1], np.arctan2(V[:, 1], V[:, 0])])

        def inverse(C):
            return C[:, :2], V0 * np.column_stack([np.cos(C[:, 2]), np.sin(C[:, 2])])

        return cls([x_edges, y_edges, th], chart, inverse, "position_heading")

    @classmethod
    def polar_disks(cls, x_radius, v_radius, n_r, n_angle):
        """d=2: cells in (|x|^2, arg x, |v|^2, arg v) over two disks.

        Uniform in |x|^2 and |v|^2 so that all cells of one disk have equal area.
        """
        ang = np.linspace(-np.pi, np.pi, int(n_angle) + 1)
        rx = np.linspace(0.0, x_radius**2, int(n_r) + 1)
        rv = np.linspace(0.0, v_radius**2, int(n_r) + 1)

        def chart(X, V):
            return np.column_stack([np.sum(X**2, axis=1), np.arctan2(X[:, 1], X[:, 0]),
                                    np.sum(V**2, axis=1), np.arctan2(V[:, 1], V[:, 0])])

        def inverse(C):
            rx_, ax, rv_, av = (np.sqrt(C[:, 0]), C[:, 1], np.sqrt(C[:, 2]), C[:, 3])
            return (np.column_stack([rx_ * np.cos(ax), rx_ * np.sin(ax)]),
                    np.column_stack([rv_ * np.cos(av), rv_ * np.sin(av)]))

        b = cls([rx, ang, rv, ang], chart, inverse, "polar_disks")
        # phase-space volume of a cell: (pi r^2 / (n_r n_angle)) per disk
        b.phase_volume = (np.pi * x_radius**2 / (n_r * n_angle)) * (np.pi * v_radius**2 / (n_r * n_angle))
        return b


def _as_weighted_points(obj):
    if isinstance(obj, EnsembleSnapshot):
        return obj.x, obj.v, obj.weight
    if hasattr(obj, "to_points"):
        return obj.to_points()
    raise InputError(f"cannot bin object of type {type(obj).__name__}")


def histogram(obj, bins):
    """Cell probabilities (flattened, C order) and the out-of-bin mass fraction."""
    X, V, w = _as_weighted_points(obj)
    total = float(np.sum(w))
    if X.shape[0] == 0 or total <= 0:
        raise InputError("empty measure")
    C = bins.chart(X, V)
    H, _ = np.histogramdd(C, bins=bins.edges, weights=w)
    p = H.ravel() / total
    return p, max(0.0, 1.0 - float(p.sum()))


def _cell_weights(weight, bins):
    if weight is None:
        return None
    X, V = bins.centre_points()
    return np.asarray(weight(X, V), dtype=float)


def weighted_tv(a, b, weight=None, bins=None, return_audit=False):
    """Binned distance between two measures (normalised to probability).

    Unit weight: half the L1 distance of the cell probabilities, counting the out-of-bin mass
    as one extra cell.  With a weight phi: sum over cells of phi(centre) |p_a - p_b|, unhalved.
    """
    if bins is None:
        raise InputError("a Binning is required")
    if a is b:
        val = 0.0
        pa, oa = histogram(a, bins)
        ob = oa
    else:
        pa, oa = histogram(a, bins)
        pb, ob = histogram(b, bins)
        w = _cell_weights(weight, bins)
        if w is None:
            val = 0.5 * (float(np.abs(pa - pb).sum()) + abs(oa - ob))
        else:
            val = float(np.sum(w * np.abs(pa - pb)))
    if return_audit:
        return val, {"out_of_bin_a": oa, "out_of_bin_b": ob, "coverage_ok": max(oa, ob) < 1e-3}
    return val


def noise_floor(reference_probs, N, weight_cells=None, halved=True):
    """Expected binned distance between an N-sample and the exact cell law (normal approximation)."""
    p = np.asarray(reference_probs, dtype=float)
    e = np.sqrt(2.0 * p * (1 - p) / (np.pi * N))
    if weight_cells is not None:
        e = e * weight_cells
    return float(0.5 * e.sum() if halved else e.sum())


@dataclass
class DecayCurve:
    times: np.ndarray
    distances: np.ndarray
    weight_kind: WeightKind
    noise_floor: np.ndarray = None
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.distances = np.asarray(self.distances, dtype=float)
        self.weight_kind = WeightKind(self.weight_kind)
        if self.noise_floor is None:
            self.noise_floor = np.zeros_like(self.distances)
        self.noise_floor = np.broadcast_to(np.asarray(self.noise_floor, dtype=float), self.times.shape).copy()
        if self.times.shape != self.distances.shape or not np.all(np.isfinite(self.distances)):
            raise InputError("times and distances must have equal length and finite values")
        if np.any(np.diff(self.times) < 0):
            raise InputError("times must be sorted")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "distance", "noise_floor"])
            for row in zip(self.times, self.distances, self.noise_floor):
                wr.writerow([repr(float(x)) for x in row])


@dataclass
class SimPlan:
    """Everything needed to regenerate an ensemble: initial law, size, model, seed."""

    f0_sampler: object
    N: int
    field: object
    rate: object
    kernel: object
    seed: int = 0


def decay_curve(plan, reference, times, weight_kind, bins, weight=None):
    """Distances between the simulated law at ``times`` and ``reference`` (grid or snapshot)."""
    weight_kind = WeightKind(weight_kind)
    if weight_kind is not WeightKind.PLAIN_TV and weight is None:
        raise ConfigError(f"weight kind {weight_kind.value} needs a weight function")
    ref_dim = reference.dim if isinstance(reference, EnsembleSnapshot) else reference.cfg.dim
    if ref_dim != plan.field.dim:
        raise ConfigError("reference and simulation dimensions differ")
    w = weight if weight_kind is not WeightKind.PLAIN_TV else None
    pref, oref = histogram(reference, bins)
    if oref > 1e-3:
        raise ConfigError(f"reference has {oref:.2e} of its mass outside the bins")
    snaps = simulate_ensemble(plan.f0_sampler, plan.N, times, plan.field, plan.rate, plan.kernel, plan.seed)
    dist = [weighted_tv(s, reference, w, bins) for s in snaps]
    nf = noise_floor(pref, plan.N, _cell_weights(w, bins), halved=w is None)
    return DecayCurve(times, dist, weight_kind, nf, {"bins": bins.describe(), "N": int(plan.N), "seed": int(plan.seed)})


class RateModel(str, Enum):
    EXPONENTIAL = "Exponential"
    ALGEBRAIC_INVERSE = "AlgebraicInverse"


@dataclass
class RateFit:
    model: RateModel
    rate: float            # sigma (Exponential) or C_alg = exp(intercept) (AlgebraicInverse)
    intercept: float       # log C in log d = log C - sigma t   or   log d = log C - log t
    window: tuple
    residual: float        # RMS of the log-space residuals
    free_slope: float      # log-log slope with the slope left free (diagnostic)
    n_points: int

    @property
    def sigma(self):
        return self.rate if self.model is RateModel.EXPONENTIAL else float("nan")

    @property
    def C(self):
        return float(np.exp(self.intercept))

    def predict(self, t):
        t = np.asarray(t, dtype=float)
        if self.model is RateModel.EXPONENTIAL:
            return np.exp(self.intercept - self.rate * t)
        return np.exp(self.intercept) / t

    def to_json(self):
        d = asdict(self)
        d["model"] = self.model.value
        d["window"] = [float(x) for x in self.window]
        return json.dumps(d, indent=2, sort_keys=True)


def _usable(curve, window, floor_factor):
    lo, hi = (float(window[0]), float(window[1])) if window is not None else (curve.times[0], curve.times[-1])
    m = (curve.times >= lo) & (curve.times <= hi) & (curve.distances > floor_factor * curve.noise_floor)
    m &= curve.distances > 0
    return m, (lo, hi)


def fit_rate(curve, model, window=None, floor_factor=1.0):
    """Least squares in log space over the window, on points above ``floor_factor`` x noise floor."""
    model = RateModel(model)
    m, win = _usable(curve, window, floor_factor)
    if model is RateModel.ALGEBRAIC_INVERSE:
        m &= curve.times > 0
    t = curve.times[m]
    y = np.log(curve.distances[m])
    if t.size < 4:
        raise FitError(f"only {t.size} usable points in window {win}")
    free_slope = float(np.polyfit(np.log(t), y, 1)[0]) if np.all(t > 0) else float("nan")
    if model is RateModel.EXPONENTIAL:
        slope, icpt = np.polyfit(t, y, 1)
        res = y - (icpt + slope * t)
        rate = float(-slope)
    else:
        icpt = float(np.mean(y + np.log(t)))
        res = y - (icpt - np.log(t))
        rate = float(np.exp(icpt))
    return RateFit(model, rate, float(icpt), win, float(np.sqrt(np.mean(res**2))), free_slope, int(t.size))


def envelope_constant(curve, fit, window=None):
    """Smallest C with d(t) <= C e^{-sigma t} (or C / t) on the window."""
    lo, hi = window if window is not None else fit.window
    m = (curve.times >= lo) & (curve.times <= hi)
    t = curve.times[m]
    if fit.model is RateModel.EXPONENTIAL:
        return float(np.max(curve.distances[m] * np.exp(fit.rate * t)))
    return float(np.max(curve.distances[m] * t))


def moment_Mf0(f0, field, chi, psi, A):
    """Weighted mean of 1 + M^2 + 2 z M (1 + chi/(1+chi) psi(z)) + A |v|^2, z = v . grad M."""
    X, V, w = _as_weighted_points(f0)
    M, g, _ = field_eval(field, X)
    z = np.sum(V * g, axis=1)
    bracket = 1.0 + M**2 + 2.0 * z * M * (1.0 + chi / (1.0 + chi) * psi(z)) + A * np.sum(V**2, axis=1)
    val = float(np.sum(w * bracket) / np.sum(w))
    if not val > 0:
        raise CertificationError(f"M_f0 = {val} is not positive; increase A")
    return val


def H_sqrt(u):
    """H_h(u) = int_1^u ds / sqrt(s) = 2 (sqrt(u) - 1)."""
    return 2.0 * (np.sqrt(u) - 1.0)


def subgeometric_rate_calculus(t):
    """For h(u) = sqrt(u): (H_h^{-1}(t), h(H_h^{-1}(t))) = ((t/2 + 1)^2, t/2 + 1)."""
    t = float(t)
    if t < 0:
        raise InputError("t must be >= 0")
    s = t / 2.0 + 1.0
    return s * s, s
