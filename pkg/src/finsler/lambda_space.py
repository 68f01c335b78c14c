"""Checks on the space of oriented geodesics.

When the square of the quasi-antipodal map is the identity the geodesic
flow is 2*pi-periodic and its orbit space is a smooth surface carrying the
induced metric with pullback w2^2 + w3^2.  Orbits are represented by a
bundle point plus a cached trajectory; no global charts on the orbit space
are ever constructed.  Every operation here refuses metrics whose flow
fails the periodicity probe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .charts import Chart, ChartPoint, SigmaPoint, sigma_distance
from .coframe import CoframeEngine, _diff_field, _wedge_coeffs
from .errors import NotGeodesicallyReversible, NotPeriodic
from .flow import FlowBatch, flow_differential, flow_many
from .global_maps import random_sigma_points, _segment_distances
from .metrics import FinslerMetric

TWO_PI = 2.0 * math.pi
_CHARTS = (Chart.NORTH, Chart.SOUTH)


def require_periodic(metric: FinslerMetric, n_probe: int = 4, seed: int = 3,
                     tol: float = 1e-4) -> float:
    """Probe that the flow is 2*pi-periodic; returns the worst return gap."""
    rng = np.random.default_rng(seed)
    us = random_sigma_points(rng, n_probe)
    batch = flow_many(metric, us, TWO_PI)
    finals = batch.finals()
    worst = max(sigma_distance(u.wrapped(), v) for u, v in zip(us, finals))
    if worst > tol:
        raise NotPeriodic(
            f"flow return gap {worst:.3e} at period 2*pi; orbit space "
            "operations need closed geodesics")
    return worst


@dataclass
class OrientedGeodesic:
    """Flow orbit represented by a point of the unit tangent bundle."""

    representative: SigmaPoint
    period: float = TWO_PI
    _batch: FlowBatch | None = field(default=None, repr=False)
    _n_cache: int = 512

    def trajectory(self, metric: FinslerMetric) -> FlowBatch:
        if self._batch is None:
            self._batch = flow_many(metric, [self.representative], self.period)
        return self._batch


def orbit_distance(metric: FinslerMetric, g: OrientedGeodesic,
                   h: OrientedGeodesic, n_samples: int = 512) -> float:
    """min over t of the bundle distance between g's orbit and h's marker.

    Dense sampling of the cached trajectory followed by golden-section
    refinement around the best sample.
    """
    batch = g.trajectory(metric)
    target = h.representative.wrapped()
    ts = np.linspace(0.0, g.period, n_samples, endpoint=False)
    dists = np.array([sigma_distance(batch.sigma_at(float(t), 0), target)
                      for t in ts])
    k = int(np.argmin(dists))
    lo = ts[k] - g.period / n_samples
    hi = ts[k] + g.period / n_samples

    def f(t):
        return sigma_distance(batch.sigma_at(float(t % g.period), 0), target)

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(48):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return min(fc, fd)


def orbit_equivalent(metric: FinslerMetric, g: OrientedGeodesic,
                     h: OrientedGeodesic, tol: float = 1e-6) -> bool:
    return orbit_distance(metric, g, h) <= tol


# -- freeness of the circle action -------------------------------------------

def free_action_check(metric: FinslerMetric, n_samples: int = 6,
                      seed: int = 11, return_tol: float = 1e-5,
                      separation: float = 0.1) -> dict:
    """Ensure period 2*pi with no sub-period returns at fractions 2*pi/k."""
    require_periodic(metric)
    rng = np.random.default_rng(seed)
    us = random_sigma_points(rng, n_samples)
    batch = flow_many(metric, us, TWO_PI)
    fractions = {k: TWO_PI / k for k in (2, 3, 4, 5)}
    sub_min = math.inf
    for k, t in fractions.items():
        for i, u in enumerate(us):
            d = sigma_distance(batch.sigma_at(t, i), u.wrapped())
            sub_min = min(sub_min, d)
    returns = max(sigma_distance(batch.sigma_at(TWO_PI, i), u.wrapped())
                  for i, u in enumerate(us))
    return {
        "free": bool(returns <= return_tol and sub_min > separation),
        "return_gap_max": float(returns),
        "subperiod_distance_min": float(sub_min),
        "n_samples": n_samples,
    }


# -- flow invariance of the induced metric data -------------------------------

def g_invariance(metric: FinslerMetric, u: SigmaPoint, v, w,
                 t_list, engine: CoframeEngine | None = None) -> dict:
    """Deviation of w2(v)w2(w) + w3(v)w3(w) and of the area pairing under
    simultaneous flow transport of the point and both vectors."""
    require_periodic(metric)
    eng = engine or CoframeEngine(metric)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    cf0 = eng.coframe(u).matrix()
    val0 = _g_value(cf0, v, w)
    area0 = _area_value(cf0, v, w)
    dev = 0.0
    area_dev = 0.0
    values = []
    for t in t_list:
        m, end = flow_differential(metric, u, float(t))
        cft = eng.coframe(end).matrix()
        val = _g_value(cft, m @ v, m @ w)
        area = _area_value(cft, m @ v, m @ w)
        values.append({"t": float(t), "g": float(val), "area": float(area)})
        dev = max(dev, abs(val - val0))
        area_dev = max(area_dev, abs(area - area0))
    return {
        "initial": float(val0),
        "area_initial": float(area0),
        "deviation": float(dev),
        "area_deviation": float(area_dev),
        "values": values,
    }


def _g_value(cf, v, w):
    return cf[1] @ v * (cf[1] @ w) + cf[2] @ v * (cf[2] @ w)


def _area_value(cf, v, w):
    return cf[2] @ v * (cf[1] @ w) - cf[2] @ w * (cf[1] @ v)


# -- connection form -----------------------------------------------------------

def rho_value(metric: FinslerMetric, u: SigmaPoint, v,
              engine: CoframeEngine | None = None) -> float:
    """Connection form -w1 + I*w2 + J*w3 evaluated on a coordinate vector."""
    eng = engine or CoframeEngine(metric)
    inv = eng.invariants(u)
    cf = eng.coframe(u).matrix()
    v = np.asarray(v, dtype=float)
    return float(-cf[0] @ v + inv.I * (cf[1] @ v) + inv.J * (cf[2] @ v))


def rho_invariance(metric: FinslerMetric, u: SigmaPoint, v, t_list,
                   engine: CoframeEngine | None = None) -> dict:
    """Both summands of the connection form are flow invariant separately."""
    require_periodic(metric)
    eng = engine or CoframeEngine(metric)
    v = np.asarray(v, dtype=float)

    def parts(point, vec):
        inv = eng.invariants(point)
        cf = eng.coframe(point).matrix()
        return float(-cf[0] @ vec), float(inv.I * (cf[1] @ vec)
                                          + inv.J * (cf[2] @ vec))

    p0, q0 = parts(u, v)
    dev_w1 = dev_ij = 0.0
    for t in t_list:
        m, end = flow_differential(metric, u, float(t))
        p, q = parts(end, m @ v)
        dev_w1 = max(dev_w1, abs(p - p0))
        dev_ij = max(dev_ij, abs(q - q0))
    return {"w1_part": p0, "IJ_part": q0,
            "w1_deviation": float(dev_w1), "IJ_deviation": float(dev_ij)}


def rho_curvature(metric: FinslerMetric, u: SigmaPoint,
                  engine: CoframeEngine | None = None,
                  step: float = 2e-3) -> dict:
    """Gauss curvature of the orbit-space metric from d(rho).

    Expands the numerically differentiated connection form in the wedge
    basis; d(rho) = -K_g * (w3 ^ w2) determines K_g from the w2^ds
    coefficient, with the w1^ds coefficient as a consistency residual.
    """
    eng = engine or CoframeEngine(metric)
    p = u.point

    def field(x1, x2, s):
        d = eng.invariants_fields(p.chart, x1, x2, s, chunk=4096)
        o = eng.omega3_fields(p.chart, x1, x2, s)
        rp = -o["P1"] + d["I"] * o["P2"] + d["J"] * o["P3"]
        rq = -o["Q1"] + d["I"] * o["Q2"] + d["J"] * o["Q3"]
        rr = d["J"] * o["R3"]
        return rp, rq, rr

    x1 = np.array([p.x1])
    x2 = np.array([p.x2])
    s = np.array([u.s])
    centers, derivs = _diff_field(field, x1, x2, s, step, richardson=False)
    o = eng.omega3_fields(p.chart, x1, x2, s)
    A, B, C = _wedge_coeffs(derivs[0], derivs[1], derivs[2],
                            o["P1"], o["Q1"], o["P2"], o["Q2"])
    a, c = float(o["a"][0]), float(o["c"][0])
    kg = float(C[0]) / c
    return {
        "K_g": kg,
        "res_w1w2": abs(float(A[0]) + kg * a),
        "res_w1ds": abs(float(B[0])),
    }


# -- fiber orbits of the vertical frame field ----------------------------------

def x3_orbit_closure(metric: FinslerMetric, u: SigmaPoint,
                     engine: CoframeEngine | None = None,
                     n_samples: int = 64) -> dict:
    """Integrate the third frame field; the orbit must stay in the fiber
    and close after parameter length 2*pi*r(p)."""
    from .global_maps import angle_measure

    require_periodic(metric)
    eng = engine or CoframeEngine(metric)
    p = u.point
    am = angle_measure(metric, p, engine=eng)
    total = TWO_PI * am.r

    def rhs(t, y):
        d = eng.omega3_fields(p.chart, np.array([y[0]]), np.array([y[1]]),
                              np.array([y[2]]))
        m = np.array([
            [d["P1"][0], d["Q1"][0], 0.0],
            [d["P2"][0], d["Q2"][0], 0.0],
            [d["P3"][0], d["Q3"][0], d["R3"][0]],
        ])
        return np.linalg.solve(m, np.array([0.0, 0.0, 1.0]))

    # classic RK4 with fine fixed steps; the field is one-dimensional in
    # essence so the cost stays modest
    n_steps = 2048
    h = total / n_steps
    y = np.array([p.x1, p.x2, u.s])
    drift = 0.0
    samples = [y.copy()]
    for k in range(n_steps):
        k1 = rhs(0, y)
        k2 = rhs(0, y + 0.5 * h * k1)
        k3 = rhs(0, y + 0.5 * h * k2)
        k4 = rhs(0, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if k % (n_steps // n_samples) == 0:
            samples.append(y.copy())
        drift = max(drift, math.hypot(y[0] - p.x1, y[1] - p.x2))
    end = SigmaPoint(ChartPoint(p.chart, float(y[0]), float(y[1])),
                     float(y[2]) % TWO_PI)
    return_gap = sigma_distance(end, u.wrapped())
    return {
        "r": am.r,
        "orbit_length": total,
        "base_drift": float(drift),
        "return_gap": float(return_gap),
        "closes": bool(return_gap <= 1e-5),
        "endpoint_orbit_equivalent": bool(return_gap <= 1e-5),
    }


# -- reversal involution --------------------------------------------------------

def reversed_representative(metric: FinslerMetric, u: SigmaPoint) -> SigmaPoint:
    """Bundle point of the reversed oriented geodesic through pi(u)."""
    return SigmaPoint(u.point, (u.s + math.pi) % TWO_PI)


def _reversal_deviation(metric: FinslerMetric, u: SigmaPoint,
                        arc: float = math.pi - 0.1,
                        n_coarse: int = 65, n_dense: int = 1025) -> float:
    """Trace deviation of the reversed arc from the forward arc (one orbit)."""
    from .charts import embed

    fwd = flow_many(metric, [u], arc)
    tc = np.linspace(0.0, arc, n_coarse)
    td = np.linspace(0.0, arc, n_dense)

    def embed_traj(batch, times, lengths=None):
        pts = np.empty((len(times), 3))
        for k, t in enumerate(times):
            sp = batch.sigma_at(float(t), 0)
            pts[k] = embed(sp.point.chart, sp.point.x1, sp.point.x2)
        return pts

    fwd_c = embed_traj(fwd, tc)
    fwd_d = embed_traj(fwd, td)
    ys, cs = fwd.sample(tc)
    speed = np.empty(n_coarse)
    for ci, chart in enumerate(_CHARTS):
        mask = cs[:, 0] == ci
        if not np.any(mask):
            continue
        e1, e2 = np.cos(ys[mask, 0, 2]), np.sin(ys[mask, 0, 2])
        fpos = np.asarray(metric.norm_values(chart, ys[mask, 0, 0],
                                             ys[mask, 0, 1], e1, e2))
        fneg = np.asarray(metric.norm_values(chart, ys[mask, 0, 0],
                                             ys[mask, 0, 1], -e1, -e2))
        speed[mask] = fneg / fpos
    length = float(np.trapezoid(speed, tc))
    end = fwd.sigma_at(arc, 0)
    rev = flow_many(metric, [reversed_representative(metric, end)], length)
    rev_c = embed_traj(rev, np.linspace(0.0, length, n_coarse))
    rev_d = embed_traj(rev, np.linspace(0.0, length, n_dense))
    d1 = _segment_distances(fwd_c, rev_d)
    d2 = _segment_distances(rev_c, fwd_d)
    return float((np.mean(d1) + np.mean(d2)) / 2.0)


def beta(metric: FinslerMetric, g: OrientedGeodesic,
         check: bool = True, tol: float = 1e-5) -> OrientedGeodesic:
    """Reversal involution on oriented geodesics.

    Verifies (unless told not to) that reversing this particular orbit
    really produces a geodesic again before handing back the reversed
    representative.
    """
    if check:
        dev = _reversal_deviation(metric, g.representative)
        if dev > tol:
            raise NotGeodesicallyReversible(
                f"reversed trace deviates by {dev:.3e} > {tol:.1e}")
    return OrientedGeodesic(reversed_representative(metric, g.representative),
                            g.period)


def _sigma_embed(ys: np.ndarray, cs: np.ndarray):
    """Base point and direction of bundle states as vectors in R^3."""
    from .charts import embed, embed_jacobian

    shape = ys.shape[:-1]
    P = np.empty(shape + (3,))
    V = np.empty(shape + (3,))
    for ci, chart in enumerate(_CHARTS):
        mask = cs == ci
        if not np.any(mask):
            continue
        x1, x2, s = ys[..., 0][mask], ys[..., 1][mask], ys[..., 2][mask]
        a, b, c3 = embed(chart, x1, x2)
        P[mask] = np.stack([a, b, c3], axis=-1)
        r2 = x1 * x1 + x2 * x2
        d = 1.0 + r2
        e1, e2 = np.cos(s), np.sin(s)
        # embedding differential applied to e(s), then normalized
        v1 = (2.0 / d - 4.0 * x1 * x1 / d ** 2) * e1 - 4.0 * x1 * x2 / d ** 2 * e2
        v2 = -4.0 * x1 * x2 / d ** 2 * e1 + (2.0 / d - 4.0 * x2 * x2 / d ** 2) * e2
        v3 = (-4.0 * x1 / d ** 2 * e1 - 4.0 * x2 / d ** 2 * e2)
        if chart == Chart.SOUTH:
            v3 = -v3
        vv = np.stack([v1, v2, v3], axis=-1)
        V[mask] = vv / np.linalg.norm(vv, axis=-1, keepdims=True)
    return P, V


def _orbit_point_distances(batch: FlowBatch, targets: list[SigmaPoint],
                           n_samples: int = 512):
    """For each batch row i, min over the orbit of the embedded bundle
    distance to targets[i]; golden-section refinement per row."""
    ts = np.linspace(0.0, TWO_PI, n_samples, endpoint=False)
    ys, cs = batch.sample(ts)
    P, V = _sigma_embed(ys, cs)
    ty = np.array([[t.point.x1, t.point.x2, t.s] for t in targets])
    tc = np.array([_CHARTS.index(t.point.chart) for t in targets], dtype=np.int8)
    TP, TV = _sigma_embed(ty, tc)
    dist = (np.linalg.norm(P - TP[None], axis=-1)
            + np.linalg.norm(V - TV[None], axis=-1))
    best = np.argmin(dist, axis=0)
    out = np.empty(len(targets))
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    dt = TWO_PI / n_samples
    for i, k in enumerate(best):
        def f(t):
            y, c = batch.states_at(float(t % TWO_PI))
            p, v = _sigma_embed(y[i:i + 1], c[i:i + 1])
            return float(np.linalg.norm(p[0] - TP[i])
                         + np.linalg.norm(v[0] - TV[i]))
        a, b = ts[k] - dt, ts[k] + dt
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        fc, fd = f(c), f(d)
        for _ in range(40):
            if fc < fd:
                b, d, fd = d, c, fc
                c = b - invphi * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, d, fd
                d = a + invphi * (b - a)
                fd = f(d)
        out[i] = min(fc, fd)
    return out


def beta_involution_check(metric: FinslerMetric, n_orbits: int = 100,
                          seed: int = 23, tol: float = 1e-5) -> dict:
    """Well-definedness of the reversal on orbit classes and freeness.

    The representative-level square is the identity by construction, so the
    involution content is tested as independence of the representative:
    reversing a flow-shifted representative of the same orbit must land on
    the same reversed orbit.  Freeness asks every orbit to stay far from
    its reversal.  All trajectories integrate as two batches.
    """
    require_periodic(metric)
    rng = np.random.default_rng(seed)
    reps = random_sigma_points(rng, n_orbits)
    shifts = TWO_PI * rng.random(n_orbits)
    fwd = flow_many(metric, reps, TWO_PI)
    breps = [reversed_representative(metric, u) for u in reps]
    bfwd = flow_many(metric, breps, TWO_PI)
    shifted = [fwd.sigma_at(float(shifts[i]), i) for i in range(n_orbits)]
    b_shifted = [reversed_representative(metric, u) for u in shifted]
    well_defined = _orbit_point_distances(bfwd, b_shifted)
    moves = _orbit_point_distances(fwd, breps)
    return {
        "involution_gap": float(np.max(well_defined)),
        "min_orbit_move": float(np.min(moves)),
        "involution_ok": bool(np.max(well_defined) <= tol),
        "fixed_point_free": bool(np.min(moves) > 0.1),
        "n_orbits": n_orbits,
    }
