"""Chemoattractant landscapes M(x) with analytic gradient and Hessian."""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ._validation import InputError, as_points, check_positive


class FieldKind(str, Enum):
    SQRT_RADIAL = "SqrtRadial"
    LOG_GAUSSIAN = "LogGaussian"
    CUSTOM = "Custom-coefficients"


@dataclass(frozen=True)
class ChemoField:
    """Signal landscape on R^d.

    SqrtRadial   M = m0 - scale * sqrt(1 + |x|^2)
    LogGaussian  M = m0 - |x|^2 / (2 scale^2)   (log of a Gaussian signal; unbounded gradient)
    Custom       M = m0 + sum_k coefficients[k] * s^k with s = sqrt(1 + |x|^2)
    """

    kind: FieldKind = FieldKind.SQRT_RADIAL
    m0: float = 0.0
    scale: float = 1.0
    dim: int = 2
    coefficients: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "kind", FieldKind(self.kind))
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        check_positive("scale", self.scale)
        if int(self.dim) < 1:
            raise InputError("dim must be >= 1")
        object.__setattr__(self, "dim", int(self.dim))
        if self.kind is FieldKind.CUSTOM and not self.coefficients:
            raise InputError("Custom-coefficients field needs at least one coefficient")

    def packed(self):
        kind = list(FieldKind).index(self.kind)
        return np.array([kind, self.m0, self.scale, len(self.coefficients), *self.coefficients], dtype=float)

    def _radial(self, r2):
        """Return (M, a, b) with grad = a x and Hess = a I + b x x^T."""
        if self.kind is FieldKind.SQRT_RADIAL:
            s = np.sqrt(1.0 + r2)
            return self.m0 - self.scale * s, -self.scale / s, self.scale / s**3
        if self.kind is FieldKind.LOG_GAUSSIAN:
            a = -1.0 / self.scale**2
            return self.m0 + a * r2 / 2.0, np.full_like(r2, a), np.zeros_like(r2)
        s = np.sqrt(1.0 + r2)
        c = np.asarray(self.coefficients)
        k = np.arange(len(c))
        g = np.polynomial.polynomial.polyval(s, c)
        dg = np.polynomial.polynomial.polyval(s, (k * c)[1:]) if len(c) > 1 else np.zeros_like(s)
        d2g = np.polynomial.polynomial.polyval(s, (k * (k - 1) * c)[2:]) if len(c) > 2 else np.zeros_like(s)
        return self.m0 + g, dg / s, d2g / s**2 - dg / s**3

    def value(self, x):
        pts, single = as_points(x, self.dim)
        M, _, _ = self._radial(np.sum(pts**2, axis=1))
        return M[0] if single else M

    def grad(self, x):
        pts, single = as_points(x, self.dim)
        _, a, _ = self._radial(np.sum(pts**2, axis=1))
        g = a[:, None] * pts
        return g[0] if single else g

    def hess(self, x):
        pts, single = as_points(x, self.dim)
        _, a, b = self._radial(np.sum(pts**2, axis=1))
        H = a[:, None, None] * np.eye(self.dim) + b[:, None, None] * pts[:, :, None] * pts[:, None, :]
        return H[0] if single else H


def field_eval(field, x):
    """Return (M, grad M, Hess M) at ``x`` (a single point or an (n, d) array)."""
    pts, single = as_points(x, field.dim)
    M, a, b = field._radial(np.sum(pts**2, axis=1))
    g = a[:, None] * pts
    H = a[:, None, None] * np.eye(field.dim) + b[:, None, None] * pts[:, :, None] * pts[:, None, :]
    if single:
        return M[0], g[0], H[0]
    return M, g, H


@dataclass(frozen=True)
class HypothesisReport:
    sup_grad: float
    m_star: float
    R: float
    sup_hess: float
    sup_M_hess: float
    pass_H3: bool
    pass_MHess_bounded: bool

    def as_dict(self):
        return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else float(v)) for k, v in self.__dict__.items()}


def _probe_points(dim, radii, n_dirs):
    """Deterministic probes: every radius crossed with a low-discrepancy set of directions."""
    if dim == 1:
        dirs = np.array([[1.0], [-1.0]])
    elif dim == 2:
        ang = np.linspace(-np.pi, np.pi, n_dirs, endpoint=False)
        dirs = np.column_stack([np.cos(ang), np.sin(ang)])
    else:
        from scipy.special import erfinv
        from scipy.stats import qmc

        u = qmc.Halton(d=dim, scramble=False).random(n_dirs + 1)[1:]
        z = erfinv(np.clip(2.0 * u - 1.0, -1 + 1e-12, 1 - 1e-12))
        dirs = z / np.linalg.norm(z, axis=1, keepdims=True)
    return radii[:, None, None] * dirs[None, :, :]


def check_hypotheses(field, probe_radius, grid_resolution=200, shell_inner=None, n_dirs=64, growth_window=1e3):
    """Sample (H3) and the M*Hess(M) boundedness clause on a deterministic probe set.

    Radii are log-spaced in [1e-3, probe_radius] (plus the origin).  ``m_star`` is the minimum
    of |grad M| over the shell ``|x| in [R, probe_radius]`` where ``R`` is ``shell_inner`` if
    given, else the smallest sampled radius with positive minimum gradient.  The sup_* entries
    are maxima over the sampled ball.  Boundedness of M Hess(M) is judged by the growth of
    its sampled maximum on ``[probe_radius / growth_window, probe_radius]``.
    """
    probe_radius = check_positive("probe_radius", probe_radius)
    n = max(int(grid_resolution), 8)
    radii = np.concatenate([[0.0], np.geomspace(min(1e-3, probe_radius / 10), probe_radius, n)])
    if shell_inner is not None:
        radii = np.unique(np.append(radii, float(shell_inner)))
    pts = _probe_points(field.dim, radii, n_dirs)
    shape = pts.shape[:2]
    flat = pts.reshape(-1, field.dim)
    M, g, H = field_eval(field, flat)
    gnorm = np.linalg.norm(g, axis=1).reshape(shape)
    hnorm = np.linalg.norm(H, ord=2, axis=(1, 2)).reshape(shape)
    mh = (np.abs(M) * np.linalg.norm(H, ord=2, axis=(1, 2))).reshape(shape)
    min_g_at_r = gnorm.min(axis=1)
    sup_grad = float(gnorm.max())
    sup_hess = float(hnorm.max())
    sup_mh = float(mh.max())

    if shell_inner is not None:
        R = float(shell_inner)
    else:
        positive = np.nonzero(min_g_at_r > 0)[0]
        R = float(radii[positive[0]]) if positive.size else float(probe_radius)
    shell = radii >= R - 1e-12
    m_star = float(min_g_at_r[shell].min()) if shell.any() else 0.0
    if not np.isfinite(m_star) or m_star < 0:
        m_star = 0.0

    # (H3): M -> -inf (sampled monotone trend), bounded gradient, m_star > 0, Hess -> 0
    M_r = M.reshape(shape).max(axis=1)
    outer = radii >= probe_radius / growth_window
    tail = radii >= probe_radius / 10
    grad_bounded = bool(gnorm[-1].max() <= 1.5 * gnorm[tail][0].max() + 1e-12)
    far_M_decreasing = bool(M_r[-1] < M_r[outer][0] and np.all(np.diff(M_r[tail]) <= 1e-12))
    hess_decay = bool(hnorm[-1].max() <= 0.5 * hnorm[outer][0].max() + 1e-12) if hnorm[outer][0].max() > 0 else True
    pass_H3 = bool(m_star > 0 and grad_bounded and far_M_decreasing and hess_decay)
    mh_outer = mh[outer].max(axis=1)
    pass_mh = bool(np.isfinite(sup_mh) and mh_outer[-1] <= 1.01 * mh_outer.max() and mh_outer[-1] <= 2.0 * mh_outer[0] + 1e-12)
    return HypothesisReport(
        sup_grad=sup_grad,
        m_star=m_star,
        R=R,
        sup_hess=sup_hess,
        sup_M_hess=sup_mh,
        pass_H3=pass_H3,
        pass_MHess_bounded=pass_mh,
    )
