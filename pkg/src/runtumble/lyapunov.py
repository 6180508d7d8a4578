"""Lyapunov weights, the generator adjoint and numerical drift certification.

Bounded case (sphere kernel with an angular cone):
    phi = (1 - gamma z / (1 - C_kappa) - gamma A z psi(z)) exp(-gamma M),   z = v . grad M
Unbounded case (Maxwellian kernel):
    phi = M^2 + 2 z M (1 + chi/(1+chi) psi(z)) + A |v|^2

The adjoint is L* phi = v . grad_x phi + lambda(z) (int kappa(v, v') phi(x, v') dv' - phi).
The kernel average is computed by Gauss-Legendre panels whose breakpoints sit at the support
edges of kappa_1 and at the headings where v' . grad M changes sign (psi may jump there).
"""

import json
import math
from dataclasses import asdict, dataclass, field as dc_field
from enum import Enum

import numpy as np

from ._validation import CertificationError, InputError, as_points
from .fields import field_eval
from .kernels import KernelKind, KernelShape, compute_C_kappa, compute_lambda_tilde
from .quadrature import gauss_hermite_normal, gauss_legendre, piecewise_gl_nodes
from .rates import PsiSpec, psi_derived_constants
from .rng import numpy_generator


class LyapunovCase(str, Enum):
    BOUNDED = "BoundedAngle"
    UNBOUNDED = "UnboundedMaxwellian"


@dataclass(frozen=True)
class LyapunovSpec:
    case: LyapunovCase
    gamma: float
    A: float
    C_kappa: float
    b: int
    m_star: float
    chi: float
    psi: PsiSpec = PsiSpec()
    ablate_psi_term: bool = False

    def __post_init__(self):
        object.__setattr__(self, "case", LyapunovCase(self.case))
        if isinstance(self.psi, dict):
            object.__setattr__(self, "psi", PsiSpec(**self.psi))
        if self.A <= 0 or (self.case is LyapunovCase.BOUNDED and self.gamma <= 0):
            raise InputError("gamma and A must be positive")
        if self.C_kappa >= 1:
            raise InputError("C_kappa must be < 1")

    def as_dict(self):
        d = asdict(self)
        d["case"] = self.case.value
        d["psi"] = {"kind": self.psi.kind.value, "slope": self.psi.slope}
        return d


class LyapunovWeight:
    """phi of a LyapunovSpec with its analytic x-gradient; rows of (X, V) are evaluated together."""

    def __init__(self, spec, field):
        self.spec = spec
        self.field = field

    def _parts(self, X, V):
        M, g, H = field_eval(self.field, X)
        z = np.sum(V * g, axis=1)
        Hv = np.einsum("nij,nj->ni", H, V)
        return M, g, z, Hv

    def value(self, X, V):
        s = self.spec
        M, g, z, _ = self._parts(X, V)
        psi = s.psi(z)
        if s.case is LyapunovCase.BOUNDED:
            a_term = 0.0 if s.ablate_psi_term else s.gamma * s.A * z * psi
            return (1.0 - s.gamma / (1.0 - s.C_kappa) * z - a_term) * np.exp(-s.gamma * M)
        k = s.chi / (1.0 + s.chi)
        return M**2 + 2.0 * z * M * (1.0 + k * psi) + s.A * np.sum(V**2, axis=1)

    def grad_x(self, X, V):
        s = self.spec
        M, g, z, Hv = self._parts(X, V)
        psi = s.psi(z)
        dpsi = s.psi.derivative(z)
        if s.case is LyapunovCase.BOUNDED:
            e = np.exp(-s.gamma * M)
            A = 0.0 if s.ablate_psi_term else s.A
            pre = 1.0 - s.gamma / (1.0 - s.C_kappa) * z - s.gamma * A * z * psi
            dpre = -(s.gamma / (1.0 - s.C_kappa) + s.gamma * A * (psi + z * dpsi))[:, None] * Hv
            return (dpre - s.gamma * pre[:, None] * g) * e[:, None]
        k = s.chi / (1.0 + s.chi)
        return (2.0 * M[:, None] * g + 2.0 * (M * (1.0 + k * psi + k * z * dpsi))[:, None] * Hv
                + 2.0 * (z * (1.0 + k * psi))[:, None] * g)


class CallableWeight:
    """Wrap ``value(X, V)`` (and optionally ``grad_x(X, V)``) as a phi-evaluator."""

    def __init__(self, value, grad_x=None):
        self.value = value
        if grad_x is not None:
            self.grad_x = grad_x


def phi(spec, field, x, v):
    """Lyapunov weight at one point or at rows of points; non-positive values raise."""
    X, single = as_points(x, field.dim)
    V, _ = as_points(v, field.dim)
    val = LyapunovWeight(spec, field).value(X, V)
    if np.any(val <= 0):
        raise CertificationError(f"phi is not positive at {int(np.sum(val <= 0))} points")
    return float(val[0]) if single else val


@dataclass(frozen=True)
class QuadratureConfig:
    n_gl: int = 24
    n_hermite: int = 8
    gauss_range: float = 9.0
    gauss_panels: int = 3
    finite_differences: bool = False
    fd_step: float = 1e-5
    chunk: int = 2048


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def _sphere2_nodes(kernel, V, g, q):
    """Offsets, weights (density included) and post-jump velocities for d=2 sphere kernels."""
    n = V.shape[0]
    th_v = np.arctan2(V[:, 1], V[:, 0])
    th_g = np.arctan2(g[:, 1], g[:, 0])
    if kernel.kind is KernelKind.UNIFORM_SPHERE:
        lim = np.pi
        fixed = [0.0]
    else:
        lim = kernel.theta_max
        fixed = [0.0] + ([-kernel.alpha, kernel.alpha] if kernel.shape is not KernelShape.BOXCAR and kernel.alpha < lim else [])
    kinks = np.column_stack([_wrap(th_g + np.pi / 2 - th_v), _wrap(th_g - np.pi / 2 - th_v)])
    kinks = np.clip(kinks, -lim, lim)
    edges = np.column_stack([np.full(n, -lim), np.full(n, lim), np.tile(fixed, (n, 1)), kinks])
    edges.sort(axis=1)
    off, w = piecewise_gl_nodes(edges, q.n_gl)
    if kernel.kind is KernelKind.UNIFORM_SPHERE:
        dens = np.full_like(off, 1.0 / (2 * np.pi))
    else:
        dens = kernel.angle_density(off)
    ang = th_v[:, None] + off
    Vp = kernel.V0 * np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    return Vp, w * dens


def _sphere3_nodes(kernel, V, q):
    n = V.shape[0]
    lim = np.pi if kernel.kind is KernelKind.UNIFORM_SPHERE else kernel.theta_max
    x, w = gauss_legendre(4 * q.n_gl)
    th = 0.5 * lim * (x + 1)
    wth = 0.5 * lim * w
    if kernel.kind is KernelKind.UNIFORM_SPHERE:
        dth = np.sin(th) / 2.0
    else:
        dth = kernel.angle_density(th)
    ph = np.pi * (x + 1)
    wph = np.pi * w / (2 * np.pi)
    e = V / np.linalg.norm(V, axis=1, keepdims=True)
    a = np.where(np.abs(e[:, :1]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    p = a - np.sum(a * e, axis=1, keepdims=True) * e
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    qv = np.cross(e, p)
    c, s = np.cos(th)[:, None], np.sin(th)[:, None]
    cp, sp = np.cos(ph)[None, :], np.sin(ph)[None, :]
    dirs = (c[None, :, :, None] * e[:, None, None, :]
            + (s[None, :, :, None]) * (cp[None, :, :, None] * p[:, None, None, :] + sp[None, :, :, None] * qv[:, None, None, :]))
    Vp = kernel.V0 * dirs.reshape(n, -1, 3)
    W = (wth * dth)[:, None] * wph[None, :]
    return Vp, np.broadcast_to(W.ravel(), (n, W.size))


def _maxwell_nodes(kernel, g, q):
    """Post-jump velocities v' = Z1 e_g + Z_perp with a kink-aware rule in Z1."""
    n, d = g.shape
    gn = np.linalg.norm(g, axis=1)
    e = np.where(gn[:, None] > 0, g / np.where(gn > 0, gn, 1.0)[:, None], np.eye(d)[0])
    edges = np.concatenate([np.linspace(-q.gauss_range, 0, q.gauss_panels + 1), np.linspace(0, q.gauss_range, q.gauss_panels + 1)[1:]])
    z1, w1 = piecewise_gl_nodes(edges[None, :], q.n_gl)
    z1, w1 = z1[0], w1[0] * np.exp(-0.5 * z1[0] ** 2) / np.sqrt(2 * np.pi)
    if d == 1:
        Vp = z1[None, :, None] * e[:, None, :]
        return Vp, np.broadcast_to(w1, (n, w1.size))
    # Householder reflection sending e_1 to e; its other columns span e-perp
    e1 = np.zeros(d)
    e1[0] = 1.0
    u = e1[None, :] - e
    un = np.linalg.norm(u, axis=1, keepdims=True)
    u = np.where(un > 1e-12, u / np.where(un > 1e-12, un, 1.0), 0.0)
    Hh = np.eye(d)[None] - 2.0 * u[:, :, None] * u[:, None, :]
    perp = Hh[:, :, 1:]
    xh, wh = gauss_hermite_normal(q.n_hermite)
    grids = np.meshgrid(*([xh] * (d - 1)), indexing="ij")
    Zp = np.stack([m.ravel() for m in grids], axis=1)
    Wp = np.prod(np.meshgrid(*([wh] * (d - 1)), indexing="ij"), axis=0).ravel()
    Vp = (z1[None, :, None, None] * e[:, None, None, :]
          + np.einsum("nij,kj->nki", perp, Zp)[:, None, :, :])
    W = (w1[:, None] * Wp[None, :]).ravel()
    return Vp.reshape(n, -1, d), np.broadcast_to(W, (n, W.size))


def kernel_average(phi_eval, field, kernel, X, V, quad=QuadratureConfig()):
    """int kappa(v, v') phi(x, v') dv' for every row (x, v)."""
    n, d = X.shape
    if kernel.kind is KernelKind.MAXWELLIAN:
        g = field.grad(X)
        Vp, W = _maxwell_nodes(kernel, g, quad)
    elif d == 1:
        Vp = np.stack([-np.full((n, 1), kernel.V0), np.full((n, 1), kernel.V0)], axis=1)
        W = np.full((n, 2), 0.5)
    elif d == 2:
        Vp, W = _sphere2_nodes(kernel, V, field.grad(X), quad)
    elif d == 3:
        Vp, W = _sphere3_nodes(kernel, V, quad)
    else:
        raise InputError("sphere kernel averages are implemented for d <= 3")
    k = Vp.shape[1]
    vals = phi_eval.value(np.repeat(X, k, axis=0), Vp.reshape(-1, d)).reshape(n, k)
    return np.sum(W * vals, axis=1)


def _fd_grad(phi_eval, X, V, h):
    G = np.empty_like(X)
    for i in range(X.shape[1]):
        step = h * (1.0 + np.abs(X[:, i]))
        Xp = X.copy()
        Xm = X.copy()
        Xp[:, i] += step
        Xm[:, i] -= step
        G[:, i] = (phi_eval.value(Xp, V) - phi_eval.value(Xm, V)) / (2 * step)
    return G


def apply_adjoint(phi_eval, field, rate, kernel, x, v, quad=QuadratureConfig()):
    """L* phi at one point or at rows of points."""
    X, single = as_points(x, field.dim)
    V, _ = as_points(v, field.dim)
    out = np.empty(X.shape[0])
    for s in range(0, X.shape[0], quad.chunk):
        Xc, Vc = X[s:s + quad.chunk], V[s:s + quad.chunk]
        if quad.finite_differences or not hasattr(phi_eval, "grad_x"):
            G = _fd_grad(phi_eval, Xc, Vc, quad.fd_step)
        else:
            G = phi_eval.grad_x(Xc, Vc)
        z = np.sum(Vc * field.grad(Xc), axis=1)
        avg = kernel_average(phi_eval, field, kernel, Xc, Vc, quad)
        out[s:s + quad.chunk] = np.sum(Vc * G, axis=1) + rate(z) * (avg - phi_eval.value(Xc, Vc))
    if not np.all(np.isfinite(out)):
        raise CertificationError("non-finite adjoint values")
    return float(out[0]) if single else out


# ---------------------------------------------------------------- constants


@dataclass
class ConstantSelection:
    spec: LyapunovSpec
    R_star: float
    zeta: float = float("nan")
    D: float = float("nan")
    C: float = float("nan")
    Lambda: float = float("nan")
    details: dict = dc_field(default_factory=dict)

    def as_dict(self):
        out = {k: getattr(self, k) for k in ("R_star", "zeta", "D", "C", "Lambda")}
        out = {k: float(v) for k, v in out.items() if not (isinstance(v, float) and math.isnan(v))}
        out["spec"] = self.spec.as_dict()
        out["details"] = self.details
        return out


def gamma_cap(V0, sup_grad, C_kappa, chi):
    return 1.0 / (4.0 * V0 * sup_grad) / (1.0 / (1.0 - C_kappa) + chi / (1.0 + chi))


def A_cap(chi):
    return chi / (1.0 + chi)


def A_unbounded(chi, lip, sup_M_hess, sup_grad):
    k = 2.0 * chi / (1.0 + chi)
    return 1.0 + ((2.0 + k * lip) * sup_M_hess + (2.0 + k) * sup_grad**2) / (1.0 - chi)


def _probe_dirs(dim, n):
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        a = np.linspace(-np.pi, np.pi, n, endpoint=False)
        return np.column_stack([np.cos(a), np.sin(a)])
    rng = numpy_generator(0, "dirs")
    z = rng.standard_normal((n, dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _velocity_grid(kernel, n_dir, n_speed, v_max=6.0):
    d = kernel.dim
    dirs = _probe_dirs(d, n_dir)
    if kernel.is_sphere:
        return kernel.V0 * dirs
    # a tiny speed samples both one-sided limits of lambda at z = 0
    speeds = np.concatenate([[1e-7], np.linspace(0.0, v_max, n_speed)[1:]])
    return (speeds[:, None, None] * dirs[None]).reshape(-1, d)


def _phase_grid(field, kernel, radii, n_xdir, n_vdir, n_speed=25, v_max=6.0):
    xd = _probe_dirs(field.dim, n_xdir)
    Xs = (radii[:, None, None] * xd[None]).reshape(-1, field.dim)
    Vs = _velocity_grid(kernel, n_vdir, n_speed, v_max)
    X = np.repeat(Xs, Vs.shape[0], axis=0)
    V = np.tile(Vs, (Xs.shape[0], 1))
    return X, V


def find_R_star(field, r_min, r_max, m_star, hess_bound, n=400, n_dirs=32):
    """Smallest sampled radius beyond which |grad M| >= m_star and |Hess M| <= hess_bound."""
    radii = np.geomspace(max(r_min, 1e-3), r_max, n)
    dirs = _probe_dirs(field.dim, n_dirs)
    P = (radii[:, None, None] * dirs[None]).reshape(-1, field.dim)
    _, g, H = field_eval(field, P)
    gn = np.linalg.norm(g, axis=1).reshape(n, -1).min(axis=1)
    hn = np.linalg.norm(H, ord=2, axis=(1, 2)).reshape(n, -1).max(axis=1)
    ok = (gn >= m_star * (1 - 1e-12)) & (hn <= hess_bound)
    bad = np.nonzero(~ok)[0]
    if bad.size == 0:
        return float(radii[0])
    if bad[-1] == n - 1:
        raise CertificationError(f"far-field conditions fail up to radius {r_max}")
    return float(radii[bad[-1] + 1])


def select_constants(case, report, C_kappa, lambda_tilde, rate, b, field, kernel, *, A_fraction=1.0,
                     use_lambda_tilde=True, margin=0.05, grid=None, quad=QuadratureConfig(),
                     R_far_factor=10.0):
    """Feasible constants for (FL1) or (FL2).

    Bounded: A = A_fraction * chi/(1+chi); gamma = min(cap, T / (C_2 V0^2)) with the far-field
    target T = A (1-chi) lambda_tilde m_*^b / 4; R_* is where C_1 V0^2 |Hess M| <= T and
    |grad M| >= m_*; zeta = 4 T / 3 * gamma (one third of the far-field decay rate against
    phi <= (5/4) e^{-gamma M}); D = max over |x| <= R_* of L*phi + zeta phi, plus a margin.
    With ``use_lambda_tilde=False`` the factor lambda_tilde is dropped as in the closed-form
    statement (zeta = gamma A (1-chi) m_*^b).

    Unbounded: A from the displayed lower bound; with C_ref = A (1+chi) d, Lambda is half the
    minimum of (C_ref - L*phi) / sqrt(phi) over grid points outside {|x| <= R_*, |v| <= 1}, and
    C is the grid maximum of L*phi + Lambda sqrt(phi) (at least C_ref), plus 0.1%.

    ``grid`` is (radii, position directions, velocity directions); the unbounded default is
    coarser because it also scans 27 speeds.
    """
    case = LyapunovCase(case)
    chi = float(rate.chi)
    m_star = float(report.m_star)
    if not m_star > 0:
        raise CertificationError("m_star = 0: (H3) fails, no drift certificate")
    sup_zpp, lip = psi_derived_constants(rate.psi)
    b = int(b)
    if grid is None:
        grid = (160, 16, 48) if case is LyapunovCase.BOUNDED else (60, 8, 12)
    n_r, n_xdir, n_vdir = grid
    if case is LyapunovCase.BOUNDED:
        if not kernel.is_sphere:
            raise CertificationError("the bounded Lyapunov weight needs a sphere kernel")
        V0 = kernel.V0
        A = A_fraction * A_cap(chi)
        lt = lambda_tilde if use_lambda_tilde else 1.0
        T = A * (1 - chi) * lt * m_star**b / 4.0
        C1 = 1.0 / (1.0 - C_kappa) + A * (1.0 + sup_zpp)
        C2 = 1.0 / (1.0 - C_kappa) + A
        cap = gamma_cap(V0, report.sup_grad, C_kappa, chi)
        gamma = min(cap, T / (C2 * V0**2))
        R_star = max(find_R_star(field, report.R, 1e6, m_star, T / (C1 * V0**2)), report.R)
        spec = LyapunovSpec(case, gamma, A, C_kappa, b, m_star, chi, rate.psi)
        zeta = gamma * 4.0 * T / 3.0 if use_lambda_tilde else gamma * A * (1 - chi) * m_star**b
        w = LyapunovWeight(spec, field)
        X, V = _phase_grid(field, kernel, np.linspace(0.0, R_star, n_r), n_xdir, n_vdir)
        Lphi = apply_adjoint(w, field, rate, kernel, X, V, quad)
        ph = w.value(X, V)
        top = float(np.max(Lphi + zeta * ph))
        D = max(top, 0.0) * (1 + margin) + margin * float(np.max(ph)) * zeta
        details = {"gamma_cap": cap, "A_cap": A_cap(chi), "T_far": T, "C1": C1, "C2": C2,
                   "lambda_tilde": lambda_tilde, "zeta_closed_form": gamma * A * (1 - chi) * m_star**b,
                   "sup_z_psi_prime": sup_zpp, "grid_max": top, "use_lambda_tilde": use_lambda_tilde}
        return ConstantSelection(spec, R_star, zeta=zeta, D=D, details=details)

    if kernel.kind is not KernelKind.MAXWELLIAN:
        raise CertificationError("the unbounded Lyapunov weight needs the Maxwellian kernel")
    A_min = A_unbounded(chi, lip, report.sup_M_hess, report.sup_grad)
    A = A_min * A_fraction
    spec = LyapunovSpec(case, 0.0, A, 0.0, b, m_star, chi, rate.psi)
    w = LyapunovWeight(spec, field)
    R_star = float(report.R)
    C_ref = A * (1 + chi) * field.dim
    # the supremum of L*phi + Lambda sqrt(phi) sits at x -> 0, v -> 0 with z < 0
    radii = np.concatenate([[1e-6], np.linspace(0.0, 2 * R_star, n_r // 2), np.geomspace(2 * R_star, 1.2 * R_far_factor * R_star, n_r // 2)])
    X, V = _phase_grid(field, kernel, radii, n_xdir, n_vdir, n_speed=27, v_max=6.5)
    Lphi = apply_adjoint(w, field, rate, kernel, X, V, quad)
    ph = w.value(X, V)
    if np.any(ph <= 0):
        raise CertificationError("phi is not positive on the selection grid; increase A")
    sq = np.sqrt(ph)
    outside = (np.linalg.norm(X, axis=1) > R_star) | (np.linalg.norm(V, axis=1) > 1.0)
    ratio = (C_ref - Lphi[outside]) / sq[outside]
    rmin = float(ratio.min())
    if rmin <= 0:
        raise CertificationError(f"L*phi exceeds A(1+chi)d outside the compact set (min ratio {rmin})")
    Lam = 0.5 * rmin
    C = max(C_ref, float(np.max(Lphi + Lam * sq))) * (1 + 1e-3)
    eps = float(np.min(ph / (field.value(X) ** 2 + np.sum(V**2, axis=1))))
    details = {"A_min": A_min, "lip_z_psi": lip, "C_ref": C_ref, "min_ratio": rmin,
               "phi_lower_eps": eps, "sup_M_hess": report.sup_M_hess, "sup_grad": report.sup_grad}
    return ConstantSelection(spec, R_star, C=C, Lambda=Lam, details=details)


# ---------------------------------------------------------------- verification


@dataclass
class DriftReport:
    case: str
    constants: dict
    n_probes: int
    strata: dict
    violations: int
    worst_margin: float
    worst_probe: dict
    violations_by_stratum: dict = dc_field(default_factory=dict)
    max_probe_speed: float = None

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def sample_probes(dim, kernel, R_star, n, seed, far_factor=10.0, v_max=6.0):
    """Stratified probes: half in the core |x| <= 2 R_*, half in 2 R_* < |x| <= far_factor R_*."""
    rng = numpy_generator(seed, "drift-probes")
    n_core = n // 2
    n_far = n - n_core
    def dirs(k):
        z = rng.standard_normal((k, dim))
        return z / np.linalg.norm(z, axis=1, keepdims=True)
    r_core = 2 * R_star * rng.random(n_core) ** (1.0 / dim)
    r_far = 2 * R_star + (far_factor - 2) * R_star * rng.random(n_far)
    X = np.concatenate([r_core[:, None] * dirs(n_core), r_far[:, None] * dirs(n_far)])
    if kernel.is_sphere:
        V = kernel.V0 * dirs(n)
    else:
        V = (v_max * rng.random(n))[:, None] * dirs(n)
    return X, V, np.array(["core"] * n_core + ["far"] * n_far)


def verify_drift(spec, field, rate, kernel, constants, n_probes=100_000, seed=0, far_factor=10.0,
                 quad=QuadratureConfig(), probes=None):
    """Count probes where the drift inequality fails.

    FL1 margin = D - zeta phi - L*phi; FL2 margin = C - Lambda sqrt(phi) - L*phi.  A probe
    violates when its margin is below -1e-9 times the scale of the terms.
    """
    if probes is None:
        X, V, lab = sample_probes(field.dim, kernel, constants.R_star, int(n_probes), seed, far_factor)
    else:
        X, V = probes
        lab = np.array(["given"] * X.shape[0])
    w = LyapunovWeight(spec, field)
    ph = w.value(X, V)
    Lphi = apply_adjoint(w, field, rate, kernel, X, V, quad)
    if spec.case is LyapunovCase.BOUNDED:
        rhs = constants.D - constants.zeta * ph
        scale = np.abs(constants.D) + np.abs(constants.zeta * ph) + np.abs(Lphi)
        cst = {"zeta": constants.zeta, "D": constants.D, "R_star": constants.R_star}
    else:
        rhs = constants.C - constants.Lambda * np.sqrt(np.maximum(ph, 0.0))
        scale = np.abs(constants.C) + np.abs(rhs) + np.abs(Lphi)
        cst = {"C": constants.C, "Lambda": constants.Lambda, "R_star": constants.R_star}
    cst["spec"] = spec.as_dict()
    margin = rhs - Lphi
    viol = (margin < -1e-9 * scale) | (ph <= 0)
    i = int(np.argmin(margin))
    strata = {str(k): int(np.sum(lab == k)) for k in np.unique(lab)}
    by = {str(k): int(np.sum(viol & (lab == k))) for k in np.unique(lab)}
    worst = {"x": X[i].tolist(), "v": V[i].tolist(), "phi": float(ph[i]), "L_phi": float(Lphi[i])}
    return DriftReport(spec.case.value, cst, int(X.shape[0]), strata, int(viol.sum()), float(margin[i]), worst, by,
                       float(np.max(np.linalg.norm(V, axis=1))))


def ablated(spec):
    """The bounded weight without its -gamma A z psi(z) term."""
    return LyapunovSpec(spec.case, spec.gamma, spec.A, spec.C_kappa, spec.b, spec.m_star, spec.chi, spec.psi, True)


def zeta_from_integral(alpha_dec, tau):
    """Differential rate from E phi(tau) <= alpha E phi(0) + C: zeta = |log alpha| / tau."""
    if not 0 < alpha_dec < 1 or tau <= 0:
        raise InputError("need 0 < alpha < 1 and tau > 0")
    return abs(math.log(alpha_dec)) / tau


def D_from_integral(C_int, alpha_dec, tau):
    """D with L*phi <= D - zeta phi integrating to E phi(tau) <= alpha E phi(0) + C_int."""
    z = zeta_from_integral(alpha_dec, tau)
    return C_int * z / (1.0 - alpha_dec)


def bounded_constants_for(field, rate, kernel, report, b, c, **kw):
    """Convenience: kernel constants plus select_constants for the bounded case."""
    Ck = compute_C_kappa(kernel)
    lt = compute_lambda_tilde(kernel, b, c)
    return select_constants(LyapunovCase.BOUNDED, report, Ck, lt, rate, b, field, kernel, **kw)


# ---------------------------------------------------------------- martingale link


@dataclass
class MartingaleReport:
    case: str
    times: list
    h: float
    N: int
    d_mean_phi: list        # central difference of E phi per time
    mean_L_phi: list        # Simpson average of E L*phi over [t - h, t + h]
    gap: list
    std_error: list
    n_sigma: float = 3.0

    @property
    def passes(self):
        return all(abs(g) <= self.n_sigma * s for g, s in zip(self.gap, self.std_error))

    def to_json(self):
        d = asdict(self)
        d["passes"] = self.passes
        return json.dumps(d, indent=2, sort_keys=True)


def martingale_check(spec, field, rate, kernel, f0_sampler, N, times, seed, h=0.05,
                     quad=QuadratureConfig(), n_sigma=3.0):
    """Compare d/dt E phi(X_t, V_t) with E L*phi(X_t, V_t) along simulated paths.

    Per path, (phi(t+h) - phi(t-h)) / 2h minus the Simpson average of L*phi at t-h, t, t+h has
    mean zero up to O(h^4) by Dynkin's formula; the gap and its standard error come from
    the same paths, so the comparison is paired.
    """
    from .pdmp import simulate_ensemble

    times = sorted(float(t) for t in times)
    if times[0] - h < 0:
        raise InputError("every check time must be >= h")
    grid = sorted({round(t + s * h, 12) for t in times for s in (-1, 0, 1)})
    snaps = {round(s.time, 12): s for s in simulate_ensemble(f0_sampler, N, grid, field, rate, kernel, seed)}
    w = LyapunovWeight(spec, field)
    cache = {}

    def at(t):
        key = round(t, 12)
        if key not in cache:
            s = snaps[key]
            cache[key] = (w.value(s.x, s.v), apply_adjoint(w, field, rate, kernel, s.x, s.v, quad))
        return cache[key]

    dphi, lphi, gap, se = [], [], [], []
    for t in times:
        (pm, lm), (_, l0), (pp, lp) = at(t - h), at(t), at(t + h)
        diff = (pp - pm) / (2 * h)
        simpson = (lm + 4 * l0 + lp) / 6
        delta = diff - simpson
        dphi.append(float(diff.mean()))
        lphi.append(float(simpson.mean()))
        gap.append(float(delta.mean()))
        se.append(float(delta.std(ddof=1) / math.sqrt(delta.size)))
    return MartingaleReport(spec.case.value, times, float(h), int(N), dphi, lphi, gap, se, float(n_sigma))
