"""One function per CLI subcommand.  Each writes its artifacts into ``out`` and returns an
ExperimentResult; nothing here depends on the thread count or the wall clock."""

import csv
import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from ._validation import CertificationError, ConfigError
from .config import (build_binning, build_density_f0, build_f0, build_field, build_grid, build_model,
                     build_times, require, section)
from .convergence import RateModel, SimPlan, WeightKind, decay_curve, moment_Mf0, weighted_tv
from .estimators import DecayRateRegressor
from .fields import check_hypotheses
from .grid_oracle import density_from_function, extrapolated_stationary, solve, stationary_estimate
from .lyapunov import (LyapunovCase, LyapunovWeight, ablated, bounded_constants_for, martingale_check,
                       select_constants, verify_drift)
from .minor_geom import (F_iterates, MinorisationConfig, geometry_report, verify_minorisation_bounded,
                         verify_minorisation_unbounded)
from .pdmp import simulate_ensemble
from .rates import check_H2


@dataclass
class ExperimentResult:
    experiment: str
    status: str                      # "pass", "fail" or "inconclusive"
    artifacts: list
    summary: dict = dc_field(default_factory=dict)

    @property
    def passed(self):
        return self.status != "fail"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def write_json(out, name, obj):
    Path(out, name).write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")
    return name


def _status(ok):
    return "pass" if ok else "fail"


# ---------------------------------------------------------------- simulate


def run_simulate(cfg, out):
    field, rate, kernel = build_model(cfg)
    ens = section(cfg, "ensemble")
    N = int(require(ens, "N", "ensemble"))
    times = build_times(ens, "ensemble")
    f0node = ens.get("f0", {})
    snaps = simulate_ensemble(build_f0(f0node, field.dim, kernel), N, times, field, rate, kernel, cfg["seed"])
    names = []
    with open(Path(out, "simulate_moments.csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        d = field.dim
        wr.writerow(["t"] + [f"mean_x{i}" for i in range(d)] + ["mean_x2", "mean_v2", "mean_tumbles"])
        for s in snaps:
            row = [s.time, *s.x.mean(axis=0), np.sum(s.x**2, axis=1).mean(), np.sum(s.v**2, axis=1).mean(),
                   s.meta["mean_tumbles"]]
            wr.writerow([repr(float(x)) for x in row])
    names.append("simulate_moments.csv")
    write = ens.get("write", "none")
    if write == "csv":
        snaps[-1].to_csv(Path(out, "snapshot.csv"))
        names.append("snapshot.csv")
    elif write == "binary":
        snaps[-1].to_binary(Path(out, "snapshot.bin"))
        names.append("snapshot.bin")
    elif write != "none":
        raise ConfigError(f"ensemble.write must be csv, binary or none, got {write!r}")

    status, summary = "pass", {"N": N, "times": times}
    if "compare" in cfg:
        cmp_ = section(cfg, "compare")
        tol = float(require(cmp_, "tolerance", "compare"))
        gcfg = build_grid(cfg, kernel)
        g0 = density_from_function(gcfg, kernel, build_density_f0(f0node, field.dim))
        g = solve(g0, times[-1], gcfg, field, rate, kernel)
        bins = build_binning(require(cmp_, "bins", "compare"), field.dim, kernel.V0)
        tv, audit = weighted_tv(snaps[-1], g, None, bins, return_audit=True)
        status = _status(tv < tol and audit["coverage_ok"])
        summary.update({"tv": tv, "tolerance": tol, "coverage": audit, "grid_audit": g.audit,
                        "bins": bins.describe(), "t": times[-1]})
        names.append(write_json(out, "compare.json", summary))
    return ExperimentResult("simulate", status, names, summary)


# ---------------------------------------------------------------- drift-check


def _constants(cfg, field, rate, kernel, case, ly):
    report = check_hypotheses(field, float(ly.get("probe_radius", 1000.0)), shell_inner=ly.get("shell_inner"))
    h2 = check_H2(rate.psi, kernel.max_speed() * report.sup_grad)
    if h2.b is None:
        raise CertificationError("(H2) fails for every candidate exponent b")
    kw = {"A_fraction": float(ly.get("A_fraction", 1.0))}
    if case is LyapunovCase.BOUNDED:
        cons = bounded_constants_for(field, rate, kernel, report, h2.b, h2.c,
                                     use_lambda_tilde=bool(ly.get("use_lambda_tilde", True)), **kw)
    else:
        cons = select_constants(case, report, 0.0, 0.0, rate, h2.b, field, kernel, **kw)
    return cons, report, h2


def run_drift_check(cfg, out):
    field, rate, kernel = build_model(cfg)
    ly = section(cfg, "lyapunov")
    case = LyapunovCase(require(ly, "case", "lyapunov"))
    cons, report, h2 = _constants(cfg, field, rate, kernel, case, ly)
    spec = ablated(cons.spec) if ly.get("ablate", False) else cons.spec
    dr = verify_drift(spec, field, rate, kernel, cons, int(ly.get("n_probes", 100_000)), cfg["seed"],
                      float(ly.get("far_factor", 10.0)))
    names = [write_json(out, "constants.json", {"hypotheses": report.as_dict(), "H2": {"b": h2.b, "c": h2.c},
                                                 **cons.as_dict()})]
    Path(out, "drift_report.json").write_text(dr.to_json() + "\n")
    names.append("drift_report.json")
    ok = dr.violations == 0
    summary = {"violations": dr.violations, "worst_margin": dr.worst_margin, "n_probes": dr.n_probes}
    if "martingale" in ly:
        mg = ly["martingale"]
        sampler = build_f0(mg.get("f0", {}), field.dim, kernel)
        rep = martingale_check(spec, field, rate, kernel, sampler, int(mg.get("N", 100_000)),
                               [float(t) for t in require(mg, "times", "lyapunov.martingale")], cfg["seed"],
                               h=float(mg.get("h", 0.05)))
        Path(out, "martingale.json").write_text(rep.to_json() + "\n")
        names.append("martingale.json")
        ok = ok and rep.passes
        summary["martingale_passes"] = rep.passes
    return ExperimentResult("drift-check", _status(ok), names, summary)


# ---------------------------------------------------------------- minorise-check


def run_minorise_check(cfg, out):
    mn = section(cfg, "minorise")
    case = require(mn, "case", "minorise")
    N = int(require(mn, "N", "minorise"))
    if case == "bounded":
        keys = ("r1", "r2", "r3", "alpha", "chi", "beta", "epsilon", "l", "V0")
        mcfg = MinorisationConfig(**{k: mn[k] for k in keys if k in mn})
        rep = geometry_report(mcfg)
        x0 = float(mn.get("x0", mn.get("x0_over_R_hat", 0.0) * rep.R_hat))
        y0 = float(mn.get("y0", mn.get("y0_over_R_hat", 0.0) * rep.R_hat))
        res = verify_minorisation_bounded(x0, y0, float(mn.get("theta0", 0.0)), mcfg, N, cfg["seed"],
                                          bins=tuple(mn.get("bins", (16, 16, 8))),
                                          ball_fraction=float(mn.get("ball_fraction", 0.25)))
    elif case == "unbounded":
        d = int(mn.get("d", 2))
        field = build_field(cfg) if "field" in cfg else None
        res = verify_minorisation_unbounded(float(require(mn, "R_star", "minorise")), float(mn.get("V0", 1.0)),
                                            float(require(mn, "chi", "minorise")), d, N, cfg["seed"], field=field,
                                            n_r=int(mn.get("n_r", 8)), n_angle=int(mn.get("n_angle", 8)))
    else:
        raise ConfigError(f"minorise.case must be bounded or unbounded, got {case!r}")
    Path(out, "minorisation.json").write_text(res.to_json() + "\n")
    res.to_csv(Path(out, "minorisation_cells.csv"))
    return ExperimentResult("minorise-check", res.status, ["minorisation.json", "minorisation_cells.csv"],
                            res.summary())


# ---------------------------------------------------------------- rate-fit


def _first_half_envelope(t, d, lo, hi, shape):
    """Largest d / shape(t) on the first half of the window."""
    m = (t >= lo) & (t <= 0.5 * (lo + hi))
    return float(np.max(d[m] / shape(t[m])))


def run_rate_fit(cfg, out):
    field, rate, kernel = build_model(cfg)
    dc = section(cfg, "decay")
    gnode = section(cfg, "grid")
    gcfg = build_grid(cfg, kernel)
    T_long, tol = float(gnode.get("T_long", 600.0)), float(gnode.get("tol", 1e-5))
    if gnode.get("extrapolate", True):
        ref = extrapolated_stationary(gcfg, field, rate, kernel, T_long, tol)
    else:
        ref = stationary_estimate(gcfg, field, rate, kernel, T_long, tol)
    kind = WeightKind(dc.get("weight", "Plain-TV"))
    model = RateModel(dc.get("model", "Exponential"))

    weight, cons = None, None
    need_unbounded = kind is WeightKind.PHI_UNBOUNDED or model is RateModel.ALGEBRAIC_INVERSE
    if kind is WeightKind.NORM1 or need_unbounded:
        ly = cfg.get("lyapunov", {})
        case = LyapunovCase.BOUNDED if kind is WeightKind.NORM1 else LyapunovCase.UNBOUNDED
        cons, _, _ = _constants(cfg, field, rate, kernel, case, ly)
        if kind is not WeightKind.PLAIN_TV:
            weight = LyapunovWeight(cons.spec, field).value

    ens = section(cfg, "ensemble")
    N = int(require(ens, "N", "ensemble"))
    times = np.asarray(build_times(ens, "ensemble"))
    f0node = ens.get("f0", {})
    sampler = ref.sampler() if f0node.get("position") == "reference" else build_f0(f0node, field.dim, kernel)
    bins = build_binning(require(dc, "bins", "decay"), field.dim, kernel.V0)
    seed = cfg["seed"]
    curve = decay_curve(SimPlan(sampler, N, field, rate, kernel, seed), ref, times, kind, bins, weight)

    # the reference is itself approximate: a run started on it measures noise + reference bias
    budget = float(curve.noise_floor.max())
    bias = None
    if dc.get("bias_check", True):
        t_b = float(dc.get("bias_time", times[-1]))
        b_curve = decay_curve(SimPlan(ref.sampler(), N, field, rate, kernel, seed + 1), ref, [t_b], kind, bins, weight)
        bias = float(b_curve.distances[-1])
        budget = max(budget, bias)

    window = dc.get("window")
    window = (float(window[0]), float(window[1])) if window is not None else (float(times[0]), float(times[-1]))
    floor_factor = float(dc.get("floor_factor", 2.0))
    est = DecayRateRegressor(model.value, window, budget, floor_factor).fit(times[:, None], curve.distances)
    fit = est.fit_
    lo, hi = window
    inwin = (times >= lo) & (times <= hi)
    t, d = times[inwin], curve.distances[inwin]
    summary = {"fit": json.loads(fit.to_json()), "budget": budget, "reference_bias": bias,
               "noise_floor": float(curve.noise_floor.max()), "floor_factor": floor_factor,
               "weight": kind.value, "N": N, "bins": bins.describe(), "score_r2": est.score(t[d > 0, None], d[d > 0])
               if np.all(d > 0) else None,
               "reference_audit": {k: v for k, v in ref.audit.items() if k != "residuals"},
               "reference_residual_steps": len(ref.audit.get("residuals", []))}
    if model is RateModel.EXPONENTIAL:
        sigma = fit.rate
        C_env = _first_half_envelope(t, d, lo, hi, lambda s: np.exp(-sigma * s))
        bound = C_env * np.exp(-sigma * t) + budget
        ok_env = bool(np.all(d <= bound))
        ok = sigma > 0 and fit.residual < float(dc.get("max_residual", 0.1)) and ok_env
        summary.update({"sigma": sigma, "C_envelope": C_env, "envelope_holds": ok_env})
    else:
        M = moment_Mf0(simulate_ensemble(sampler, min(N, 200_000), [0.0], field, rate, kernel, seed)[0],
                       field, rate.chi, rate.psi, cons.spec.A)
        C_fit = _first_half_envelope(t, d, lo, hi, lambda s: M / s)
        bound = C_fit * M / t + budget
        ok_env = bool(np.all(d <= bound))
        ok_slope = fit.free_slope <= float(dc.get("max_free_slope", -0.7))
        ok = ok_env and ok_slope
        summary.update({"M_f0": M, "A": cons.spec.A, "C_fit": C_fit, "envelope_holds": ok_env,
                        "free_slope": fit.free_slope, "free_slope_ok": ok_slope})
    summary["worst_envelope_ratio"] = float(np.max(d / bound))
    with open(Path(out, "decay_curve.csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "distance", "noise_floor", "budget", "envelope"])
        env = np.full(times.shape, np.nan)
        env[inwin] = bound
        for row in zip(times, curve.distances, curve.noise_floor, np.full(times.shape, budget), env):
            wr.writerow([repr(float(x)) for x in row])
    names = ["decay_curve.csv", write_json(out, "rate_fit.json", summary)]
    return ExperimentResult("rate-fit", _status(ok), names, summary)


# ---------------------------------------------------------------- geometry


def run_geometry(cfg, out):
    g = section(cfg, "geometry")
    r = [float(require(g, k, "geometry")) for k in ("r1", "r2", "r3")]
    alpha = float(require(g, "alpha", "geometry"))
    x0, y0, th0 = (float(g.get(k, 0.0)) for k in ("x0", "y0", "theta0"))
    rep = geometry_report(MinorisationConfig(*r, alpha=alpha), x0, y0, th0, bool(g.get("swap_indices", False)))
    k = int(g.get("iterates", 1000))
    P = F_iterates(rep, k)[:, :2]
    dev = np.abs(np.linalg.norm(P - np.asarray(rep.circle_centre), axis=1) - rep.circle_radius)
    to_start = np.linalg.norm(P - np.array([x0, y0]), axis=1)
    to_paper = np.linalg.norm(P - np.asarray(rep.centre), axis=1)
    tol = float(g.get("tolerance", 1e-10))
    checks = {"max_circle_deviation": float(dev.max()), "tolerance": tol,
              "max_distance_from_start": float(to_start.max()),
              "inside_R_hat_ball": bool(to_start.max() <= rep.R_hat * (1 + 1e-12)),
              "printed_centre_distance_range": [float(to_paper.min()), float(to_paper.max())]}
    ok = checks["max_circle_deviation"] <= tol and checks["inside_R_hat_ball"]
    with open(Path(out, "iterates.csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k", "x", "y"])
        for i, (a, b) in enumerate(P):
            wr.writerow([i, repr(float(a)), repr(float(b))])
    names = [write_json(out, "geometry.json", {"report": rep.as_dict(), "checks": checks}), "iterates.csv"]
    return ExperimentResult("geometry", _status(ok), names, checks)


RUNNERS = {
    "simulate": run_simulate,
    "drift-check": run_drift_check,
    "minorise-check": run_minorise_check,
    "rate-fit": run_rate_fit,
    "geometry": run_geometry,
}
