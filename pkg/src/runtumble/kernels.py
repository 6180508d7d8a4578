"""Tumbling kernels kappa(v, v'): densities, exact samplers, C_kappa and lambda-tilde.

Sphere kinds live on V0 S^{d-1} and depend on (v, v') only through the turning angle
theta = angle(v, v').  The AngleDependent law is built from an unnormalised profile
p(|theta|); densities are with respect to arc length (d=2) or surface measure (d=3).
"""

from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np
from scipy.special import gamma as gamma_fn

from . import _jit
from ._validation import InputError, NotApplicableError, as_points, check_positive
from .quadrature import adaptive_gl, gauss_hermite_normal
from .rng import CounterStream, particle_keys

_TABLE_NODES = 2049
_SPHERE_TOL = 1e-12


class KernelKind(str, Enum):
    UNIFORM_SPHERE = "UniformSphere"
    ANGLE_DEPENDENT = "AngleDependent"
    MAXWELLIAN = "Maxwellian"


class KernelShape(str, Enum):
    BOXCAR = "BoxcarInAngle"
    RAISED_COSINE = "RaisedCosine"
    EXP_COSINE = "ExpCosine"


def _profile(shape, theta, alpha, conc):
    """Unnormalised turning-angle profile, even and non-increasing in |theta|."""
    a = np.abs(np.asarray(theta, dtype=float))
    if shape is KernelShape.BOXCAR:
        return np.where(a < alpha, 1.0, 0.0)
    if shape is KernelShape.RAISED_COSINE:
        return np.where(a < 2 * alpha, 0.5 * (1.0 + np.cos(np.pi * np.minimum(a, 2 * alpha) / (2 * alpha))), 0.0)
    return np.exp(conc * np.cos(a))


def sphere_area(dim, radius=1.0):
    """Surface measure of radius * S^{dim-1}; for dim=1 the counting measure of {-r, r}."""
    if dim == 1:
        return 2.0
    return 2.0 * np.pi ** (dim / 2) / gamma_fn(dim / 2) * radius ** (dim - 1)


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind = KernelKind.UNIFORM_SPHERE
    V0: float = 1.0
    dim: int = 2
    alpha: float = np.pi / 3
    shape: KernelShape = KernelShape.BOXCAR
    concentration: float = 1.0
    beta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        object.__setattr__(self, "shape", KernelShape(self.shape))
        object.__setattr__(self, "dim", int(self.dim))
        check_positive("V0", self.V0)
        if self.dim < 1:
            raise InputError("dim must be >= 1")
        if self.kind is KernelKind.ANGLE_DEPENDENT:
            if self.dim not in (2, 3):
                raise InputError("AngleDependent kernels are implemented for d = 2 and d = 3")
            if not 0.0 < float(self.alpha) <= np.pi / 2:
                raise InputError(f"alpha must lie in (0, pi/2], got {self.alpha}")
            check_positive("concentration", self.concentration, strict=False)
            if self.beta is not None and not 0.0 < float(self.beta) <= self.beta_lower + 1e-12:
                raise InputError(f"beta={self.beta} is not a lower bound of kappa_1 on |theta| < alpha "
                                 f"(min there is {self.beta_lower})")

    @property
    def is_sphere(self):
        return self.kind is not KernelKind.MAXWELLIAN

    @property
    def theta_max(self):
        if self.shape is KernelShape.BOXCAR:
            return float(self.alpha)
        if self.shape is KernelShape.RAISED_COSINE:
            return float(min(2 * self.alpha, np.pi))
        return float(np.pi)

    def profile(self, theta):
        return _profile(self.shape, theta, self.alpha, self.concentration)

    @cached_property
    def normaliser(self):
        """Integral of the profile against the angular reference measure on [0, theta_max]."""
        if self.shape is KernelShape.BOXCAR and self.dim == 2:
            return float(self.alpha)
        if self.dim == 2:
            f = self.profile
        else:
            f = lambda th: self.profile(th) * np.sin(th)  # noqa: E731
        bps = (float(self.alpha),) if self.shape is KernelShape.BOXCAR else ()
        return adaptive_gl(f, 0.0, self.theta_max, tol=1e-13, breakpoints=bps)

    def kappa1(self, theta):
        """Density of kappa as a function of the turning angle (reference measure of the sphere)."""
        th = np.asarray(theta, dtype=float)
        if self.kind is KernelKind.MAXWELLIAN:
            raise NotApplicableError("kappa_1 is defined for sphere kernels only")
        if self.kind is KernelKind.UNIFORM_SPHERE:
            return np.full_like(th, 1.0 / sphere_area(self.dim, self.V0))
        if self.dim == 2:
            return self.profile(th) / (2.0 * self.normaliser * self.V0)
        return self.profile(th) / (2.0 * np.pi * self.normaliser * self.V0**2)

    def angle_density(self, theta):
        """Density of the signed turning angle on (-pi, pi] (d=2) or of the polar angle on [0, pi] (d=3)."""
        th = np.asarray(theta, dtype=float)
        if self.dim == 2:
            return self.profile(th) / (2.0 * self.normaliser)
        return self.profile(th) * np.sin(np.abs(th)) / self.normaliser

    @cached_property
    def beta_lower(self):
        """inf of kappa_1 over |theta| < alpha (the profile is non-increasing, so its value at alpha^-)."""
        if self.kind is KernelKind.UNIFORM_SPHERE:
            return float(self.kappa1(0.0))
        if self.kind is KernelKind.MAXWELLIAN:
            raise NotApplicableError("beta is defined for sphere kernels only")
        return float(self.kappa1(np.nextafter(float(self.alpha), 0.0)))

    @property
    def beta_value(self):
        return float(self.beta) if self.beta is not None else self.beta_lower

    @cached_property
    def table(self):
        if self.kind is not KernelKind.ANGLE_DEPENDENT:
            return np.zeros((2, 2))
        code = list(KernelShape).index(self.shape)
        tab, _ = _jit.build_cdf_table(code, float(self.alpha), float(self.concentration), self.dim,
                                      self.theta_max, _TABLE_NODES)
        return tab

    def packed(self):
        return np.array([
            list(KernelKind).index(self.kind), self.V0, self.dim, self.alpha,
            list(KernelShape).index(self.shape), self.concentration, self.theta_max,
        ], dtype=float)

    def max_speed(self, truncation=6.0):
        return float(self.V0) if self.is_sphere else float(truncation)


def _check_on_sphere(spec, pts):
    r = np.linalg.norm(pts, axis=1)
    if np.any(np.abs(r - spec.V0) > _SPHERE_TOL * max(1.0, spec.V0)):
        raise InputError(f"velocity off the sphere |v| = {spec.V0}")


def kernel_density(spec, v, v_prime):
    """kappa(v, v') with respect to the kind's reference measure; broadcasts over rows."""
    d = spec.dim
    vp, single = as_points(v_prime, d)
    if spec.kind is KernelKind.MAXWELLIAN:
        out = np.exp(-0.5 * np.sum(vp**2, axis=1)) / (2 * np.pi) ** (d / 2)
        return float(out[0]) if single else out
    vv, single_v = as_points(v, d)
    _check_on_sphere(spec, vv)
    _check_on_sphere(spec, vp)
    if spec.kind is KernelKind.UNIFORM_SPHERE:
        out = np.full(np.broadcast_shapes((vv.shape[0],), (vp.shape[0],)), 1.0 / sphere_area(d, spec.V0))
    else:
        cos = np.clip(np.sum(vv * vp, axis=1) / spec.V0**2, -1.0, 1.0)
        out = spec.kappa1(np.arccos(cos))
    return float(out[0]) if (single and single_v) else out


def sample_post_velocity(spec, v, rng):
    """One draw from kappa(v, .) using (and advancing) a CounterStream."""
    vv = np.array(v, dtype=float).reshape(-1)
    if vv.shape[0] != spec.dim:
        raise InputError(f"velocity must have length {spec.dim}")
    if spec.is_sphere:
        _check_on_sphere(spec, vv[None, :])
    rng.counter = int(_jit.sample_velocity(vv, rng.key, rng.counter, spec.packed(), spec.table))
    return vv


def sample_post_velocities(spec, V, seed, start=0):
    """Independent draws from kappa(V[i], .), stream i + start of ``seed`` for row i."""
    pts, _ = as_points(V, spec.dim)
    if spec.is_sphere:
        _check_on_sphere(spec, pts)
    keys = particle_keys(seed, pts.shape[0], start)
    return _jit.sample_velocities(pts, keys, spec.packed(), spec.table)


def _angle_breakpoints(spec):
    return tuple(b for b in (float(spec.alpha), 2 * float(spec.alpha)) if b < spec.theta_max)


def compute_C_kappa(spec):
    """E[v . v'] / V0^2 under kappa(v, .), which is the constant with int kappa v' = C_kappa v."""
    if spec.kind is not KernelKind.ANGLE_DEPENDENT:
        return 0.0
    if spec.shape is KernelShape.BOXCAR and spec.dim == 2:
        return float(np.sin(spec.alpha) / spec.alpha)
    lim = spec.theta_max
    f = lambda th: spec.angle_density(th) * np.cos(th)  # noqa: E731
    val = adaptive_gl(f, 0.0, lim, tol=1e-12, breakpoints=_angle_breakpoints(spec))
    return float(2.0 * val if spec.dim == 2 else val)


def compute_lambda_tilde(spec, b, c):
    """c V0^b E[|e . v'/V0|^b] minimised over unit e orthogonal to v.

    This is the constant with int kappa(v, v') m' psi(m') dv' >= lambda_tilde |grad M|^b for
    v . grad M = 0.  In d=2 it reduces to c V0^b int q(theta) |sin theta|^b dtheta; in d=3 the
    azimuth averages |cos|^b.
    """
    if spec.kind is KernelKind.MAXWELLIAN:
        raise NotApplicableError("lambda_tilde is defined for sphere kernels; the unbounded case uses FL2")
    b = int(b)
    c = float(c)
    scale = c * spec.V0**b
    if spec.dim == 1:
        return scale
    if spec.kind is KernelKind.UNIFORM_SPHERE:
        # E|w_1|^b for w uniform on S^{d-1}
        d = spec.dim
        val = gamma_fn((b + 1) / 2) * gamma_fn(d / 2) / (np.sqrt(np.pi) * gamma_fn((b + d) / 2))
        return float(scale * val)
    bps = _angle_breakpoints(spec)
    if spec.dim == 2:
        f = lambda th: spec.angle_density(th) * np.abs(np.sin(th)) ** b  # noqa: E731
        return float(scale * 2.0 * adaptive_gl(f, 0.0, spec.theta_max, tol=1e-12, breakpoints=bps))
    azim = adaptive_gl(lambda p: np.abs(np.cos(p)) ** b, 0.0, 2 * np.pi, breakpoints=(np.pi / 2, 3 * np.pi / 2))
    f = lambda th: spec.angle_density(th) * np.abs(np.sin(th)) ** b  # noqa: E731
    polar = adaptive_gl(f, 0.0, spec.theta_max, tol=1e-12, breakpoints=bps)
    return float(scale * azim / (2 * np.pi) * polar)


def maxwellian_moment(func, dim, n=40):
    """E[func(V)] for V ~ N(0, I_dim) by tensor Gauss-Hermite (vectorised func on (k, dim) rows)."""
    x, w = gauss_hermite_normal(n)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    wts = np.prod(np.meshgrid(*([w] * dim), indexing="ij"), axis=0)
    pts = np.stack([g.ravel() for g in grids], axis=1)
    return float(np.sum(wts.ravel() * func(pts)))


def kernel_from_config(cfg):
    return KernelSpec(**cfg)


__all__ = [
    "KernelKind",
    "KernelShape",
    "KernelSpec",
    "CounterStream",
    "kernel_density",
    "sample_post_velocity",
    "sample_post_velocities",
    "compute_C_kappa",
    "compute_lambda_tilde",
    "maxwellian_moment",
    "sphere_area",
]
