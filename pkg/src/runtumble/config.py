"""Run configuration: one TOML file plus ``key.path=value`` overrides.

Grammar (all sections are tables; only those an experiment needs must be present)::

    experiment = "simulate" | "drift-check" | "minorise-check" | "rate-fit" | "geometry"
    seed = <int>                       # mandatory

    [field]    kind, dim, m0, scale, coefficients
    [rate]     chi, psi, slope
    [kernel]   kind, V0, dim, alpha | alpha_over_pi, shape, concentration, beta
    [ensemble] N, times | {start, stop, step}, write = "csv" | "binary" | "none"
    [ensemble.f0]  position = "delta" | "gaussian" | "uniform_ball", x | mean, std | radius
                   velocity = "sphere" | "maxwellian" | "fixed" | "zero", v
    [grid]     x_box, nx, dt | cfl, n_theta, nv, v_max, boundary, T_long, tol
    [compare]  tolerance, bins
    [lyapunov] case, probe_radius, shell_inner, n_probes, far_factor, use_lambda_tilde, ablate
    [minorise] case, ...
    [decay]    weight, model, window, floor_factor, bins, bias_check
    [geometry] r1, r2, r3, alpha | alpha_over_pi, x0, y0, theta0, iterates

Values given as ``alpha_over_pi`` are multiplied by pi.  Overrides are parsed as TOML values
(``--set rate.chi=0.8``), falling back to a bare string.
"""

import copy
import hashlib
import json
import math
from importlib import resources

import numpy as np
import tomli

from ._validation import ConfigError
from .fields import ChemoField
from .kernels import KernelSpec
from .rates import PsiSpec, RateSpec

EXPERIMENTS = ("simulate", "drift-check", "minorise-check", "rate-fit", "geometry")


def shipped_config(name):
    """Path-like handle of a config shipped with the package (``name`` without .toml)."""
    return resources.files("runtumble") / "configs" / f"{name}.toml"


def _parse_value(text):
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def apply_override(cfg, item):
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, text = item.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r}: {p!r} is not a table")
    node[parts[-1]] = _parse_value(text.strip())


def _resolve_angles(node):
    if isinstance(node, dict):
        for k in list(node):
            if k.endswith("_over_pi"):
                node[k[: -len("_over_pi")]] = float(node.pop(k)) * math.pi
            else:
                _resolve_angles(node[k])


def load_config(path, overrides=(), experiment=None):
    """Parse, apply overrides, resolve angles and validate; ``experiment`` overrides the file."""
    try:
        with open(path, "rb") as fh:
            cfg = tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found")
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}")
    for item in overrides:
        apply_override(cfg, item)
    _resolve_angles(cfg)
    if experiment is not None:
        cfg["experiment"] = experiment
    if "seed" not in cfg:
        raise ConfigError("missing key: seed")
    if cfg.get("experiment") not in EXPERIMENTS:
        raise ConfigError(f"missing or unknown key: experiment (one of {', '.join(EXPERIMENTS)})")
    return cfg


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def section(cfg, name):
    if name not in cfg or not isinstance(cfg[name], dict):
        raise ConfigError(f"missing section: [{name}]")
    return cfg[name]


def require(node, key, where):
    if key not in node:
        raise ConfigError(f"missing key: {where}.{key}")
    return node[key]


def _build(cls, node, where):
    try:
        return cls(**node)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}")


def build_field(cfg):
    return _build(ChemoField, dict(section(cfg, "field")), "field")


def build_rate(cfg):
    node = dict(section(cfg, "rate"))
    psi = PsiSpec(node.pop("psi", "Sign"), node.pop("slope", 1.0))
    return _build(RateSpec, {**node, "psi": psi}, "rate")


def build_kernel(cfg):
    node = copy.deepcopy(section(cfg, "kernel"))
    require(node, "kind", "kernel")
    if "dim" not in node and "field" in cfg:
        node["dim"] = cfg["field"].get("dim", 2)
    return _build(KernelSpec, node, "kernel")


def build_model(cfg):
    field, rate, kernel = build_field(cfg), build_rate(cfg), build_kernel(cfg)
    if field.dim != kernel.dim:
        raise ConfigError(f"field.dim = {field.dim} but kernel.dim = {kernel.dim}")
    return field, rate, kernel


def build_times(node, where):
    t = require(node, "times", where)
    if isinstance(t, dict):
        start, stop, step = (float(require(t, k, f"{where}.times")) for k in ("start", "stop", "step"))
        n = int(round((stop - start) / step))
        return [start + i * step for i in range(n + 1)]
    return [float(x) for x in t]


def build_f0(node, dim, kernel):
    """``callable(generator, n) -> (X, V)`` from an [ensemble.f0]-style table."""
    pos = node.get("position", "delta")
    vel = node.get("velocity", "sphere")
    V0 = getattr(kernel, "V0", 1.0)

    def vec(key, default):
        v = np.asarray(node.get(key, default), dtype=float).reshape(-1)
        if v.size != dim:
            raise ConfigError(f"f0.{key} must have {dim} components")
        return v

    if pos not in ("delta", "gaussian", "uniform_ball"):
        raise ConfigError(f"unknown f0.position {pos!r}")
    if vel not in ("sphere", "maxwellian", "fixed", "zero"):
        raise ConfigError(f"unknown f0.velocity {vel!r}")
    centre = vec("x" if pos == "delta" else "mean", np.zeros(dim))
    std = float(node.get("std", 1.0))
    radius = float(node.get("radius", 1.0))
    v_fixed = vec("v", np.zeros(dim)) if vel == "fixed" else None

    def sampler(g, n):
        if pos == "delta":
            X = np.tile(centre, (n, 1))
        elif pos == "gaussian":
            X = centre + std * g.standard_normal((n, dim))
        else:
            z = g.standard_normal((n, dim))
            z /= np.linalg.norm(z, axis=1, keepdims=True)
            X = centre + radius * g.random(n)[:, None] ** (1.0 / dim) * z
        if vel == "sphere":
            z = g.standard_normal((n, dim))
            V = V0 * z / np.linalg.norm(z, axis=1, keepdims=True)
        elif vel == "maxwellian":
            V = g.standard_normal((n, dim))
        elif vel == "fixed":
            V = np.tile(v_fixed, (n, 1))
        else:
            V = np.zeros((n, dim))
        return X, V

    return sampler


def build_density_f0(node, dim):
    """``func(X, V)`` proportional to the density of the same [ensemble.f0] table (for the grid)."""
    pos = node.get("position", "delta")
    vel = node.get("velocity", "sphere")
    if pos not in ("gaussian", "uniform_ball") or vel not in ("sphere", "maxwellian"):
        raise ConfigError("the grid needs f0.position in {gaussian, uniform_ball} and f0.velocity in {sphere, maxwellian}")
    centre = np.asarray(node.get("mean", np.zeros(dim)), dtype=float).reshape(-1)
    std = float(node.get("std", 1.0))
    radius = float(node.get("radius", 1.0))

    def func(X, V):
        r2 = np.sum((X - centre) ** 2, axis=1)
        px = np.exp(-0.5 * r2 / std**2) if pos == "gaussian" else (r2 <= radius**2).astype(float)
        pv = np.exp(-0.5 * np.sum(V**2, axis=1)) if vel == "maxwellian" else np.ones(V.shape[0])
        return px * pv

    return func


def build_edges(spec, where):
    if isinstance(spec, dict):
        start, stop, step = (float(require(spec, k, where)) for k in ("start", "stop", "step"))
        n = int(round((stop - start) / step))
        return np.linspace(start, stop, n + 1)
    return np.asarray(spec, dtype=float)


def build_binning(node, dim, V0=1.0):
    """[*.bins]: x_edges (+ y_edges, n_theta for d=2) or x_edges + v_edges for d=1."""
    from .convergence import Binning

    x = build_edges(require(node, "x_edges", "bins"), "bins.x_edges")
    if dim == 2:
        y = build_edges(node.get("y_edges", node["x_edges"]), "bins.y_edges")
        return Binning.position_heading(x, y, int(node.get("n_theta", 8)), V0)
    v = build_edges(require(node, "v_edges", "bins"), "bins.v_edges")
    return Binning.phase_space([x], [v])


def build_grid(cfg, kernel):
    """GridConfig from [grid]; ``cfl`` (fraction of the CFL limit) may replace ``dt``."""
    from .grid_oracle import GridConfig

    node = dict(section(cfg, "grid"))
    box = require(node, "x_box", "grid")
    nx = require(node, "nx", "grid")
    box = np.atleast_2d(np.asarray(box, dtype=float))
    nx = np.atleast_1d(nx)
    if "dt" in node:
        dt = float(node["dt"])
    else:
        dx = min((b - a) / n for (a, b), n in zip(box, nx))
        vmax = kernel.V0 if kernel.is_sphere else float(node.get("v_max", 6.0))
        dt = 0.9 * float(node.get("cfl", 1.0)) * dx / vmax * (1 - 1e-9)
    kw = {k: node[k] for k in ("n_theta", "nv", "v_max", "boundary") if k in node}
    try:
        return GridConfig(tuple(map(tuple, box)), tuple(int(n) for n in nx), dt, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[grid]: {exc}")
