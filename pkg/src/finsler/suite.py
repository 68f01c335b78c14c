"""Named experiment suites over one metric, with pass/fail records."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .charts import Chart, ChartPoint, SigmaPoint, chordal_distance, transition_point
from .coframe import CoframeEngine, grid_sigma_points, spray_duality, structure_grid
from .errors import FinslerError, NotConstantCurvature, NotPeriodic
from .flow import conservation_many, flow_many, pullback_rotation_many
from .global_maps import (
    alpha_many,
    alpha2_classify,
    angle_measure,
    fibonacci_points,
    is_geodesically_reversible,
    is_reversible,
    polar_grid_report,
    polar_jacobian_check,
    random_base_points,
    random_sigma_points,
)
from .lambda_space import (
    beta_involution_check,
    free_action_check,
    g_invariance,
    require_periodic,
    rho_curvature,
    rho_invariance,
    x3_orbit_closure,
)
from .metrics import FinslerMetric, resolve_metric

DEFAULT_TOLERANCES = {
    "structure": 1e-6,
    "duality": 1e-8,
    "invariant": 1e-5,
    "global": 1e-5,
    "classify": 1e-4,
    "conserve": 1e-6,
    "reversible": 1e-10,
    "geodesic-reversible": 1e-5,
    "identity": 1e-5,
}

SUITE_ORDER = [
    "validate", "structure", "invariants", "bianchi", "rotation",
    "antipodal", "fixed-points", "polar", "reversibility", "conserve",
    "lambda",
]


@dataclass
class ExperimentConfig:
    metric_spec: str
    checks: list[str] = field(default_factory=lambda: list(SUITE_ORDER))
    seed: int = 0
    grid: int = 16
    n_fiber: int = 32
    tolerances: dict = field(default_factory=dict)
    out: str | None = None
    csv_dir: str | None = None
    timing: bool = True

    def tol(self, name: str) -> float:
        return self.tolerances.get(name, DEFAULT_TOLERANCES[name])

    def rng(self, index: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, index])


class _Ctx:
    def __init__(self, metric: FinslerMetric, config: ExperimentConfig):
        self.metric = metric
        self.config = config
        self.engine = CoframeEngine(metric)


def _record(name, status, residuals=None, values=None, failure=None):
    return {
        "name": name,
        "status": status,
        "residuals": residuals or {},
        "values": values or {},
        "failure_point": failure,
        "runtime": 0.0,
    }


# -- individual checks -------------------------------------------------------

def _check_validate(ctx: _Ctx):
    ctx.metric.validate()
    gap, witness = ctx.metric.reversibility_gap()
    return _record("validate", "pass", values={
        "reversibility_gap": gap,
        "kind": ctx.metric.kind,
    })


def _check_structure(ctx: _Ctx):
    cfg = ctx.config
    rep = structure_grid(ctx.metric, cfg.grid, cfg.grid, cfg.n_fiber)
    rng = cfg.rng(1)
    us = random_sigma_points(rng, 64)
    dual = 0.0
    for u in us[:16]:
        dual = max(dual, float(np.max(np.abs(
            spray_duality(ctx.metric, u, ctx.engine) - np.array([1.0, 0, 0])))))
    ok = (rep["structure_residual_max"] <= cfg.tol("structure")
          and dual <= cfg.tol("duality"))
    return _record("structure", "pass" if ok else "fail", residuals={
        "structure_residual_max": rep["structure_residual_max"],
        "eq1": rep["res_eq1_max"], "eq2": rep["res_eq2_max"],
        "eq3": rep["res_eq3_max"], "spray_duality_max": dual,
    }, values={"charts": rep["charts"]})


def _check_invariants(ctx: _Ctx):
    cfg = ctx.config
    rows = []
    stats = {}
    worst = 0.0
    for chart in (Chart.NORTH, Chart.SOUTH):
        x1, x2, s = grid_sigma_points(chart, cfg.grid, cfg.grid, cfg.n_fiber)
        d = ctx.engine.invariants_fields(chart, x1, x2, s)
        worst = max(worst, float(max(np.max(d["res_eq1"]), np.max(d["res_eq2"]),
                                     np.max(d["res_eq3"]))))
        stats[chart.value] = {
            "I_max_abs": float(np.max(np.abs(d["I"]))),
            "J_max_abs": float(np.max(np.abs(d["J"]))),
            "K_min": float(np.min(d["K"])),
            "K_max": float(np.max(d["K"])),
        }
        for i in range(x1.size):
            rows.append((chart.value, x1[i], x2[i], s[i],
                         d["I"].ravel()[i], d["J"].ravel()[i], d["K"].ravel()[i],
                         d["res_eq1"].ravel()[i], d["res_eq2"].ravel()[i],
                         d["res_eq3"].ravel()[i]))
    k_dev = max(abs(stats[c]["K_min"] - 1.0) for c in stats)
    k_dev = max(k_dev, max(abs(stats[c]["K_max"] - 1.0) for c in stats))
    i_max = max(stats[c]["I_max_abs"] for c in stats)
    status = "pass"
    residuals = {"extraction_residual_max": worst, "K_dev_max": k_dev}
    if ctx.metric.kind == "round":
        if max(i_max, k_dev) > 1e-6 or worst > ctx.config.tol("structure"):
            status = "fail"
    elif ctx.metric.kind == "zermelo" and getattr(ctx.metric, "eps", 0.0) > 0:
        if k_dev > ctx.config.tol("invariant") or i_max <= 0.01:
            status = "fail"
    elif worst > ctx.config.tol("structure"):
        status = "fail"
    rec = _record("invariants", status, residuals=residuals, values={
        "stats": stats, "I_max_abs": i_max, "constant_curvature": bool(
            k_dev <= ctx.config.tol("invariant")),
    })
    rec["series"] = {"rows": rows}
    return rec


def _check_bianchi(ctx: _Ctx):
    rng = ctx.config.rng(3)
    us = random_sigma_points(rng, 6)
    worst = {"X1I_minus_J": 0.0, "X1J_plus_K3_plus_KI": 0.0, "K_grad": 0.0}
    failure = None
    k_const = True
    for u in us:
        coeffs, res, inv = ctx.engine.bianchi(u)
        for k in ("X1I_minus_J", "X1J_plus_K3_plus_KI"):
            if res[k] > worst[k]:
                worst[k] = res[k]
                failure = u
        if abs(inv.K - 1.0) <= 1e-4:
            worst["K_grad"] = max(worst["K_grad"], abs(coeffs.K1),
                                  abs(coeffs.K2), abs(coeffs.K3))
        else:
            k_const = False
    tol = ctx.config.tol("invariant")
    ok = worst["X1I_minus_J"] <= tol and worst["X1J_plus_K3_plus_KI"] <= tol
    if k_const:
        ok = ok and worst["K_grad"] <= tol
    return _record("bianchi", "pass" if ok else "fail", residuals=worst,
                   values={"constant_curvature": k_const},
                   failure=None if ok else _point_info(failure))


def _check_rotation(ctx: _Ctx, n_points: int = 100):
    rng = ctx.config.rng(4)
    us = random_sigma_points(rng, n_points)
    out = {}
    worst = 0.0
    for t in (math.pi / 2.0, math.pi, 2.0 * math.pi):
        res = pullback_rotation_many(ctx.metric, us, t, ctx.engine)
        out[f"t={t:.6f}"] = float(np.max(res))
        worst = max(worst, float(np.max(res)))
    ok = worst <= ctx.config.tol("global")
    return _record("rotation", "pass" if ok else "fail",
                   residuals={"max": worst, **out})


def _check_antipodal(ctx: _Ctx, n_points: int = 50):
    rng = ctx.config.rng(5)
    pts = random_base_points(rng, n_points)
    results = alpha_many(ctx.metric, pts, ctx.config.n_fiber)
    spread = max(sp for _, sp in results)
    values = {"spread_max": float(spread)}
    residuals = {"spread_max": float(spread)}
    ok = spread <= ctx.config.tol("global")
    if ctx.metric.kind == "round":
        worst = 0.0
        for p, (c, _) in zip(pts, results):
            expect = _round_antipode(p)
            worst = max(worst, chordal_distance(c, expect))
        residuals["round_antipode_dev"] = worst
        ok = ok and worst <= 1e-6
    k = int(np.argmax([sp for _, sp in results]))
    return _record("antipodal", "pass" if ok else "fail", residuals=residuals,
                   values=values,
                   failure=None if ok else _point_info(pts[k]))


def _round_antipode(p: ChartPoint) -> ChartPoint:
    r2 = p.x1 ** 2 + p.x2 ** 2
    if r2 == 0.0:
        return ChartPoint(Chart.SOUTH if p.chart == Chart.NORTH else Chart.NORTH,
                          0.0, 0.0)
    return ChartPoint(p.chart, -p.x1 / r2, -p.x2 / r2)


def _check_fixed_points(ctx: _Ctx):
    cls = alpha2_classify(ctx.metric, n_fiber=ctx.config.n_fiber,
                          identity_tol=ctx.config.tol("identity"))
    values = {
        "identity": cls.identity,
        "max_displacement": cls.max_displacement,
        "basin_count": cls.basin_count,
        "count_mismatch": cls.count_mismatch,
    }
    residuals = {}
    ok = True
    if not cls.identity:
        ok = not cls.count_mismatch
        if cls.theta_sum is not None:
            residuals["theta_sum_dev"] = abs(cls.theta_sum - 2.0 * math.pi)
            ok = ok and residuals["theta_sum_dev"] <= ctx.config.tol("classify")
        values["fixed_points"] = [
            {"chart": r.n.chart.value, "x1": r.n.x1, "x2": r.n.x2,
             "theta": r.theta, "invariance_residual": r.invariance_residual}
            for r in cls.fixed_points]
        for r in cls.fixed_points:
            residuals[f"Q_invariance_{r.n.chart.value}"] = r.invariance_residual
            ok = ok and r.invariance_residual <= ctx.config.tol("global")
        if ctx.metric.kind == "zermelo":
            eps = ctx.metric.eps
            for r in cls.fixed_points:
                pole_dev = math.hypot(r.n.x1, r.n.x2)
                residuals[f"pole_dev_{r.n.chart.value}"] = pole_dev
                ok = ok and pole_dev <= ctx.config.tol("classify")
                expect = (2.0 * math.pi * eps if r.n.chart == Chart.NORTH
                          else 2.0 * math.pi * (1.0 - eps))
                residuals[f"theta_dev_{r.n.chart.value}"] = abs(r.theta - expect)
                ok = ok and abs(r.theta - expect) <= ctx.config.tol("classify")
    return _record("fixed-points", "pass" if ok else "fail",
                   residuals=residuals, values=values)


def _check_polar(ctx: _Ctx):
    p = ChartPoint(Chart.NORTH, 0.5, 0.0)
    am = angle_measure(ctx.metric, p, engine=ctx.engine)
    rep = polar_grid_report(ctx.metric, p, measure=am)
    jac = polar_jacobian_check(ctx.metric, p, theta=1.0, t=math.pi / 2.0,
                               measure=am, engine=ctx.engine)
    ok = rep["injective"] and rep["winding"] == 1
    residuals = {
        "min_separation": rep["min_separation"],
        "jacobian_mismatch": jac["mismatch"],
    }
    if ctx.metric.kind == "round":
        ok = ok and jac["mismatch"] <= ctx.config.tol("classify")
    rec = _record("polar", "pass" if ok else "fail", residuals=residuals,
                  values={"r": am.r, "winding": rep["winding"],
                          "jacobian": {k: jac[k] for k in
                                       ("measured", "expected")}})
    rec["series"] = {
        "theta": rep["thetas"].tolist(),
        "t": rep["ts"].tolist(),
        "points": rep["points3d"].tolist(),
    }
    return rec


def _check_reversibility(ctx: _Ctx):
    cfg = ctx.config
    rev = is_reversible(ctx.metric, tol=cfg.tol("reversible"))
    geo = is_geodesically_reversible(
        ctx.metric, seed=cfg.seed + 101, tol=cfg.tol("geodesic-reversible"))
    try:
        require_periodic(ctx.metric, seed=cfg.seed + 7)
        alpha2_identity = True
    except NotPeriodic:
        alpha2_identity = False
    # reversible => geodesically reversible => alpha^2 = id
    consistent = ((not rev["reversible"] or geo["geodesically_reversible"])
                  and (not geo["geodesically_reversible"] or alpha2_identity))
    values = {
        "reversible": rev["reversible"],
        "gap": rev["gap"],
        "geodesically_reversible": geo["geodesically_reversible"],
        "deviation": geo["deviation"],
        "alpha2_identity_probe": alpha2_identity,
        "implications_consistent": consistent,
    }
    witness = rev["witness"]
    return _record(
        "reversibility", "pass" if consistent else "fail", values=values,
        failure=None if witness is None else {
            "chart": witness.point.chart.value,
            "x1": witness.point.x1, "x2": witness.point.x2,
            "y1": witness.y1, "y2": witness.y2, "gap": rev["gap"]})


def _check_conserve(ctx: _Ctx, n_geodesics: int = 20):
    cfg = ctx.config
    rng = cfg.rng(8)
    us = random_sigma_points(rng, n_geodesics)
    rep = conservation_many(ctx.metric, us, 2.0 * math.pi, engine=ctx.engine)
    k_dev = float(np.max(rep["K_dev"]))
    residuals = {
        "drift_max": float(np.max(rep["drift"])),
        "dI_minus_J_max": float(np.max(rep["dI_minus_J"])),
        "dJ_plus_I_max": float(np.max(rep["dJ_plus_I"])),
        "K_dev_max": k_dev,
    }
    if k_dev > 1e-4:
        rec = _record("conserve", "fail", residuals=residuals, values={
            "reason": "curvature is not constantly 1 along sampled geodesics"})
    else:
        ok = (residuals["drift_max"] <= cfg.tol("conserve")
              and residuals["dI_minus_J_max"] <= cfg.tol("invariant")
              and residuals["dJ_plus_I_max"] <= cfg.tol("invariant"))
        rec = _record("conserve", "pass" if ok else "fail", residuals=residuals)
    k = int(np.argmax(rep["drift"]))
    rec["series"] = {
        "t": rep["times"].tolist(),
        "I": rep["I"][:, k].tolist(),
        "J": rep["J"][:, k].tolist(),
    }
    return rec


def _check_lambda(ctx: _Ctx):
    cfg = ctx.config
    try:
        require_periodic(ctx.metric, seed=cfg.seed + 7)
    except NotPeriodic as exc:
        return _record("lambda", "skip",
                       values={"reason": str(exc)})
    u = SigmaPoint(ChartPoint(Chart.NORTH, 0.3, -0.2), 0.7)
    fa = free_action_check(ctx.metric, seed=cfg.seed + 31)
    gi = g_invariance(ctx.metric, u, [1.0, 0.2, -0.1], [0.0, 1.0, 0.5],
                      [math.pi / 3.0, 1.5, math.pi], engine=ctx.engine)
    ri = rho_invariance(ctx.metric, u, [1.0, -0.3, 0.4],
                        [math.pi / 4.0, 2.0], engine=ctx.engine)
    rc = rho_curvature(ctx.metric, u, engine=ctx.engine)
    x3 = x3_orbit_closure(ctx.metric, u, engine=ctx.engine)
    bi = beta_involution_check(ctx.metric, n_orbits=100, seed=cfg.seed + 53)
    tol = cfg.tol("global")
    ok = (fa["free"] and gi["deviation"] <= tol
          and gi["area_deviation"] <= tol
          and ri["w1_deviation"] <= tol and ri["IJ_deviation"] <= tol
          and x3["closes"] and x3["base_drift"] <= 1e-7
          and bi["involution_ok"] and bi["fixed_point_free"])
    if ctx.metric.kind == "round":
        ok = ok and abs(rc["K_g"] - 1.0) <= 1e-4
    return _record("lambda", "pass" if ok else "fail", residuals={
        "g_invariance": gi["deviation"],
        "area_invariance": gi["area_deviation"],
        "rho_w1": ri["w1_deviation"],
        "rho_IJ": ri["IJ_deviation"],
        "x3_return_gap": x3["return_gap"],
        "x3_base_drift": x3["base_drift"],
        "beta_involution_gap": bi["involution_gap"],
    }, values={
        "free_action": fa,
        "orbit_curvature": rc["K_g"],
        "r": x3["r"],
        "beta_min_move": bi["min_orbit_move"],
    })


def _point_info(u):
    if u is None:
        return None
    return {"chart": u.point.chart.value, "x1": u.point.x1,
            "x2": u.point.x2, "s": u.s}


_CHECKS = {
    "validate": _check_validate,
    "structure": _check_structure,
    "invariants": _check_invariants,
    "bianchi": _check_bianchi,
    "rotation": _check_rotation,
    "antipodal": _check_antipodal,
    "fixed-points": _check_fixed_points,
    "polar": _check_polar,
    "reversibility": _check_reversibility,
    "conserve": _check_conserve,
    "lambda": _check_lambda,
}


def run_suite(config: ExperimentConfig, metric: FinslerMetric | None = None) -> dict:
    """Execute the selected checks; exit code 0 iff none failed."""
    unknown = [c for c in config.checks if c not in _CHECKS]
    if unknown:
        raise FinslerError(f"unknown checks: {unknown}; "
                           f"available: {sorted(_CHECKS)}")
    if metric is None:
        metric = resolve_metric(config.metric_spec, validate=True)
    ctx = _Ctx(metric, config)

    def run_one(name):
        t0 = time.perf_counter()
        try:
            rec = _CHECKS[name](ctx)
        except NotConstantCurvature as exc:
            rec = _record(name, "fail", values={"reason": str(exc)})
        except NotPeriodic as exc:
            rec = _record(name, "skip", values={"reason": str(exc)})
        rec["runtime"] = (time.perf_counter() - t0) if config.timing else 0.0
        return rec

    workers = int(os.environ.get("FINSLER_THREADS", "1") or "1")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run_one, config.checks))
    else:
        records = [run_one(name) for name in config.checks]

    n_pass = sum(1 for r in records if r["status"] == "pass")
    n_fail = sum(1 for r in records if r["status"] == "fail")
    n_skip = sum(1 for r in records if r["status"] == "skip")
    return {
        "metric": metric.describe(),
        "seed": config.seed,
        "tolerances": {k: config.tol(k) for k in DEFAULT_TOLERANCES},
        "grid": config.grid,
        "checks": records,
        "summary": {"pass": n_pass, "fail": n_fail, "skip": n_skip,
                    "all_pass": n_fail == 0},
        "exit_code": 0 if n_fail == 0 else 1,
    }
