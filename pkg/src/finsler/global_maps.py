"""Global consequences of unit flag curvature: refocusing, the
quasi-antipodal map, its square, fiber angle measures, geodesic polar
coordinates, and the two reversibility notions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .charts import (
    Chart,
    ChartPoint,
    SigmaPoint,
    canonical_sigma,
    chordal_distance,
    embed,
    embed_point,
    orientation_sign,
    sigma_in_chart,
    transition_point,
    unembed,
)
from .coframe import CoframeEngine
from .errors import FixedPointCountMismatch, NonOrientedFiber, RefocusingFailure
from .flow import flow_many
from .metrics import FinslerMetric

TWO_PI = 2.0 * math.pi


# -- point sampling ---------------------------------------------------------

def fibonacci_points(n: int) -> list[ChartPoint]:
    """Quasi-uniform points on the sphere via the golden spiral."""
    golden = (1.0 + math.sqrt(5.0)) / 2.0
    pts = []
    for i in range(n):
        z = 1.0 - (2.0 * i + 1.0) / n
        phi = TWO_PI * i / golden
        rho = math.sqrt(max(0.0, 1.0 - z * z))
        pts.append(unembed((rho * math.cos(phi), rho * math.sin(phi), z)))
    return pts


def random_base_points(rng: np.random.Generator, n: int,
                       radius: float = 1.05) -> list[ChartPoint]:
    charts = rng.integers(0, 2, size=n)
    r = radius * np.sqrt(rng.random(n))
    phi = TWO_PI * rng.random(n)
    return [ChartPoint(Chart.NORTH if c == 0 else Chart.SOUTH,
                       float(ri * np.cos(pi)), float(ri * np.sin(pi)))
            for c, ri, pi in zip(charts, r, phi)]


def random_sigma_points(rng: np.random.Generator, n: int,
                        radius: float = 1.05) -> list[SigmaPoint]:
    return [SigmaPoint(p, float(s)) for p, s in
            zip(random_base_points(rng, n, radius), TWO_PI * rng.random(n))]


# -- quasi-antipodal map ------------------------------------------------------

@dataclass
class AntipodalReport:
    p: ChartPoint
    alpha_p: ChartPoint
    spread: float
    alpha2_displacement: float | None = None
    n_fiber: int = 32


def _cluster_center(points: list[ChartPoint]):
    """Centroid and max pairwise distance of a tight cluster, in the chart
    of its first member."""
    ref = points[0].chart
    coords = []
    for q in points:
        if q.chart != ref:
            q = transition_point(q)
        coords.append((q.x1, q.x2))
    arr = np.asarray(coords)
    center = ChartPoint(ref, float(arr[:, 0].mean()), float(arr[:, 1].mean()))
    d = arr[:, None, :] - arr[None, :, :]
    spread = float(np.max(np.hypot(d[..., 0], d[..., 1])))
    return center, spread


def alpha_many(metric: FinslerMetric, points: list[ChartPoint],
               n_fiber: int = 32):
    """pi(flow_pi(Sigma_p)) clusters for many base points in one batch."""
    starts = [SigmaPoint(p, TWO_PI * j / n_fiber)
              for p in points for j in range(n_fiber)]
    batch = flow_many(metric, starts, math.pi)
    finals = batch.finals()
    out = []
    for k in range(len(points)):
        group = [f.point for f in finals[k * n_fiber:(k + 1) * n_fiber]]
        out.append(_cluster_center(group))
    return out


def alpha(metric: FinslerMetric, p: ChartPoint, n_fiber: int = 32,
          spread_tol: float = 1e-4) -> AntipodalReport:
    """Refocusing point of all unit-speed geodesics leaving p at distance pi."""
    (center, spread), = alpha_many(metric, [p], n_fiber)
    if spread > spread_tol:
        raise RefocusingFailure(
            f"spread {spread:.3e} > {spread_tol:.1e} at {p}: curvature is "
            "not constant or tolerances are too loose")
    (center2, _), = alpha_many(metric, [center], n_fiber)
    return AntipodalReport(p, center, spread,
                           alpha2_displacement=chordal_distance(center2, p),
                           n_fiber=n_fiber)


def alpha2_many(metric: FinslerMetric, points: list[ChartPoint],
                n_fiber: int = 8) -> list[ChartPoint]:
    mids = [c for c, _ in alpha_many(metric, points, n_fiber)]
    return [c for c, _ in alpha_many(metric, mids, n_fiber)]


# -- classification of alpha^2 ------------------------------------------------

@dataclass
class FixedPointReport:
    n: ChartPoint
    alpha_n: ChartPoint
    L: np.ndarray
    inner_product: np.ndarray
    theta: float
    invariance_residual: float
    residual_displacement: float


@dataclass
class Alpha2Classification:
    identity: bool
    max_displacement: float
    identity_tol: float
    fixed_points: list[FixedPointReport] = field(default_factory=list)
    basin_count: int = 0
    count_mismatch: bool = False
    theta_sum: float | None = None


def _alpha2_local(metric, points_chart: list[ChartPoint], n_fiber=8):
    """alpha^2 expressed in each query point's own chart."""
    imgs = alpha2_many(metric, points_chart, n_fiber)
    out = []
    for p, q in zip(points_chart, imgs):
        if q.chart != p.chart:
            q = transition_point(q)
        out.append(q)
    return out


def _newton_fixed_points(metric, starts, n_fiber=8, max_iter=12,
                         step_tol=1e-11):
    """Damped Newton descent on the alpha^2 displacement from many starts."""
    active = [canonical_sigma(SigmaPoint(p, 0.0)).point for p in starts]
    fd = 1e-2
    solutions = []
    for _ in range(max_iter):
        if not active:
            break
        queries = []
        for p in active:
            queries.append(p)
            queries.append(ChartPoint(p.chart, p.x1 + fd, p.x2))
            queries.append(ChartPoint(p.chart, p.x1 - fd, p.x2))
            queries.append(ChartPoint(p.chart, p.x1, p.x2 + fd))
            queries.append(ChartPoint(p.chart, p.x1, p.x2 - fd))
        imgs = _alpha2_local(metric, queries, n_fiber)
        nxt = []
        for k, p in enumerate(active):
            c, xp, xm, yp, ym = imgs[5 * k: 5 * k + 5]
            v = np.array([c.x1 - p.x1, c.x2 - p.x2])
            Jm = np.array([
                [(xp.x1 - xm.x1) / (2 * fd), (yp.x1 - ym.x1) / (2 * fd)],
                [(xp.x2 - xm.x2) / (2 * fd), (yp.x2 - ym.x2) / (2 * fd)],
            ]) - np.eye(2)
            try:
                delta = np.linalg.solve(Jm, -v)
            except np.linalg.LinAlgError:
                continue
            if np.linalg.norm(delta) > 0.5:
                delta *= 0.5 / np.linalg.norm(delta)
            q = ChartPoint(p.chart, p.x1 + float(delta[0]), p.x2 + float(delta[1]))
            if q.r > 1.2:
                q = transition_point(q)
            if np.linalg.norm(delta) < step_tol:
                solutions.append(q)
            else:
                nxt.append(q)
        active = nxt
    solutions.extend(active)
    # merge duplicate basins
    merged: list[ChartPoint] = []
    for q in solutions:
        if all(chordal_distance(q, m) > 1e-3 for m in merged):
            merged.append(q)
    return merged


def invariant_inner_product(metric: FinslerMetric, p: ChartPoint,
                            n_quad: int = 512) -> np.ndarray:
    """Average of the quadratic monomials over the convex body bounded by
    the indicatrix at p, normalized to unit Frobenius norm.

    The area integral reduces to a boundary quadrature in the polar radius
    R(phi) = 1/F(p, e(phi)); any overall scale is immaterial for the
    invariance statement, so a unit-norm representative is returned.
    """
    phi = TWO_PI * np.arange(n_quad) / n_quad
    e1, e2 = np.cos(phi), np.sin(phi)
    f = np.asarray(metric.norm_values(p.chart, np.full(n_quad, p.x1),
                                      np.full(n_quad, p.x2), e1, e2))
    r4 = (1.0 / f) ** 4 / 4.0
    q11 = np.mean(e1 * e1 * r4)
    q12 = np.mean(e1 * e2 * r4)
    q22 = np.mean(e2 * e2 * r4)
    q = np.array([[q11, q12], [q12, q22]])
    return q / np.linalg.norm(q)


def _rotation_angle(L: np.ndarray, Q: np.ndarray, chart: Chart) -> float:
    """Angle of L as a Q-rotation, counterclockwise for the surface
    orientation."""
    c = np.linalg.cholesky(Q)
    lt = c.T @ L @ np.linalg.inv(c.T)
    ang = math.atan2(lt[1, 0], lt[0, 0])
    return (ang * orientation_sign(chart)) % TWO_PI


def fixed_point_report(metric: FinslerMetric, n: ChartPoint,
                       n_fiber: int = 32, fd: float = 1e-2) -> FixedPointReport:
    queries = [n,
               ChartPoint(n.chart, n.x1 + fd, n.x2),
               ChartPoint(n.chart, n.x1 - fd, n.x2),
               ChartPoint(n.chart, n.x1, n.x2 + fd),
               ChartPoint(n.chart, n.x1, n.x2 - fd)]
    c, xp, xm, yp, ym = _alpha2_local(metric, queries, n_fiber)
    L = np.array([
        [(xp.x1 - xm.x1) / (2 * fd), (yp.x1 - ym.x1) / (2 * fd)],
        [(xp.x2 - xm.x2) / (2 * fd), (yp.x2 - ym.x2) / (2 * fd)],
    ])
    Q = invariant_inner_product(metric, n)
    inv = float(np.linalg.norm(L.T @ Q @ L - Q))
    theta = _rotation_angle(L, Q, n.chart)
    (alpha_n, _), = alpha_many(metric, [n], n_fiber)
    return FixedPointReport(
        n=n, alpha_n=alpha_n, L=L, inner_product=Q, theta=theta,
        invariance_residual=inv,
        residual_displacement=chordal_distance(c, n),
    )


def alpha2_classify(metric: FinslerMetric, grid: list[ChartPoint] | None = None,
                    n_grid: int = 20, n_fiber: int = 32,
                    identity_tol: float = 1e-5) -> Alpha2Classification:
    """Decide whether the square of the quasi-antipodal map is the identity;
    if not, locate its two fixed points and their rotation data."""
    pts = grid if grid is not None else fibonacci_points(n_grid)
    imgs = alpha2_many(metric, pts, n_fiber)
    disp = [chordal_distance(p, q) for p, q in zip(pts, imgs)]
    max_disp = float(max(disp))
    if max_disp <= identity_tol:
        return Alpha2Classification(True, max_disp, identity_tol)
    order = np.argsort(disp)
    starts = [pts[i] for i in order[:min(len(pts), 20)]]
    basins = _newton_fixed_points(metric, starts)
    reports = [fixed_point_report(metric, b, n_fiber=n_fiber) for b in basins]
    reports = [r for r in reports if r.residual_displacement < 1e-6]
    mismatch = len(reports) != 2
    theta_sum = None
    if len(reports) == 2:
        theta_sum = reports[0].theta + reports[1].theta
    return Alpha2Classification(
        False, max_disp, identity_tol, reports, len(reports), mismatch,
        theta_sum)


# -- angle measure -------------------------------------------------------------

@dataclass
class AngleMeasure:
    """Fiber parametrization pulling the rotation form back to r * d(theta)."""

    p: ChartPoint
    r: float
    s0: float
    theta_table: np.ndarray
    s_table: np.ndarray
    _interp_s: np.ndarray = field(repr=False, default=None)

    def fiber_angle(self, theta) -> np.ndarray:
        """s(theta), vectorized, periodic in 2*pi."""
        th = np.asarray(theta, dtype=float) % TWO_PI
        n = self.theta_table.size
        idx = th / TWO_PI * n
        i0 = np.floor(idx).astype(int) % n
        frac = idx - np.floor(idx)
        s_ext = self._interp_s
        return s_ext[i0] + frac * (s_ext[i0 + 1] - s_ext[i0])

    def sigma(self, theta: float) -> SigmaPoint:
        return SigmaPoint(self.p, float(self.fiber_angle(theta)) % TWO_PI)


def angle_measure(metric: FinslerMetric, p: ChartPoint, s0: float = 0.0,
                  n: int = 512, n_table: int = 1024,
                  engine: CoframeEngine | None = None) -> AngleMeasure:
    """Normalized fiber length r(p) of the rotation form and the angle table.

    r(p) is the fiber average of the ds-component c(s) of w3 (512-point
    periodic quadrature is spectrally accurate); the parametrization solves
    ds/d(theta) = r / c(s) through the antiderivative of c built from its
    Fourier series, inverted by Newton on each table node.
    """
    eng = engine or CoframeEngine(metric)
    s = TWO_PI * np.arange(n) / n
    x1 = np.full(n, p.x1)
    x2 = np.full(n, p.x2)
    c = np.asarray(eng.fiber_rotation_component(p.chart, x1, x2, s))
    if np.min(c) < 0.0 < np.max(c):
        raise NonOrientedFiber(f"w3(d/ds) changes sign on the fiber over {p}")
    mean = float(np.mean(c))
    r = abs(mean)
    sign = 1.0 if mean > 0 else -1.0

    # spectral antiderivative of the fluctuating part
    ck = np.fft.rfft(c - mean) / n
    k = np.arange(ck.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        ak = np.where(k > 0, ck / (1j * k), 0.0)

    def antider(sv):
        sv = np.asarray(sv, dtype=float)
        fluct = 2.0 * np.real(
            np.exp(1j * np.outer(sv, k)) @ ak)
        return mean * sv + fluct

    def cval(sv):
        sv = np.asarray(sv, dtype=float)
        return mean + 2.0 * np.real(np.exp(1j * np.outer(sv, k)) @ (ak * (1j * k)))

    a0 = antider(np.array([s0]))[0]
    theta = TWO_PI * np.arange(n_table) / n_table
    target = a0 + r * sign * theta
    sv = s0 + sign * theta  # first guess: unit-speed fiber motion
    for _ in range(40):
        res = antider(sv) - target
        sv = sv - res / cval(sv)
        if np.max(np.abs(res)) < 1e-13:
            break
    # extended table for periodic linear interpolation
    s_ext = np.empty(n_table + 1)
    s_ext[:-1] = sv
    s_ext[-1] = sv[0] + sign * TWO_PI
    am = AngleMeasure(p, r, s0, theta, sv)
    am._interp_s = s_ext
    return am


# -- geodesic polar coordinates -------------------------------------------------

def exp_polar(metric: FinslerMetric, p: ChartPoint, theta: float, t: float,
              measure: AngleMeasure | None = None) -> ChartPoint:
    """Base point of the geodesic leaving p at fiber angle theta, time t."""
    am = measure or angle_measure(metric, p)
    batch = flow_many(metric, [am.sigma(theta)], t)
    return batch.finals()[0].point


def polar_grid_report(metric: FinslerMetric, p: ChartPoint,
                      n_theta: int = 64, n_t: int = 31,
                      measure: AngleMeasure | None = None,
                      min_separation: float = 1e-4) -> dict:
    """Injectivity and degree data for the polar map on (0, pi).

    Samples the image grid, asserts pairwise distinctness with a margin,
    and measures the winding of a small circle around p for the degree.
    """
    am = measure or angle_measure(metric, p)
    thetas = TWO_PI * np.arange(n_theta) / n_theta
    ts = math.pi * (np.arange(n_t) + 1.0) / (n_t + 1.0)
    starts = [am.sigma(float(th)) for th in thetas]
    batch = flow_many(metric, starts, float(ts[-1]))
    ys, cs = batch.sample(ts)
    pts3d = np.empty((n_t, n_theta, 3))
    for ci, chart in enumerate((Chart.NORTH, Chart.SOUTH)):
        mask = cs == ci
        if np.any(mask):
            a, b, c3 = embed(chart, ys[..., 0][mask], ys[..., 1][mask])
            pts3d[mask] = np.stack([a, b, c3], axis=-1)
    flat = pts3d.reshape(-1, 3)
    d2 = np.sum((flat[:, None, :] - flat[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    min_sep = float(np.sqrt(np.min(d2)))

    # winding of the innermost circle around p, in p's chart
    inner = []
    for j in range(n_theta):
        q = batch.sigma_at(float(ts[0]), j).point
        if q.chart != p.chart:
            q = transition_point(q)
        inner.append((q.x1 - p.x1, q.x2 - p.x2))
    inner = np.asarray(inner)
    ang = np.arctan2(inner[:, 1], inner[:, 0])
    steps = np.diff(np.concatenate([ang, ang[:1]]))
    steps = np.angle(np.exp(1j * steps))  # wrap increments to (-pi, pi]
    winding = round(float(np.sum(steps) / TWO_PI))

    # endpoint convergence
    start_cluster, start_spread = _cluster_center(
        [batch.sigma_at(1e-6, j).point for j in range(n_theta)])
    end_cluster, end_spread = _cluster_center(
        [batch.sigma_at(float(ts[-1]), j).point for j in range(n_theta)])
    return {
        "r": am.r,
        "min_separation": min_sep,
        "injective": bool(min_sep > min_separation),
        "winding": int(winding),
        "start_spread": float(start_spread),
        "theta_count": n_theta,
        "t_count": n_t,
        "points3d": pts3d,
        "ts": ts,
        "thetas": thetas,
    }


def polar_jacobian_check(metric: FinslerMetric, p: ChartPoint, theta: float,
                         t: float, measure: AngleMeasure | None = None,
                         h: float = 1e-4,
                         engine: CoframeEngine | None = None) -> dict:
    """Compare the polar-map area distortion with r(p) * sin(t).

    d(E)/dt is the unit velocity of the trajectory (no differencing);
    d(E)/d(theta) is a central difference across neighbouring fiber angles.
    The area scale is the coefficient of the two horizontal coframe entries
    on the chart area at the image bundle point.
    """
    am = measure or angle_measure(metric, p)
    eng = engine or CoframeEngine(metric)
    starts = [am.sigma(theta), am.sigma(theta - h), am.sigma(theta + h)]
    batch = flow_many(metric, starts, t)
    center, minus, plus = batch.finals()
    minus = sigma_in_chart(minus, center.point.chart)
    plus = sigma_in_chart(plus, center.point.chart)
    d_theta = np.array([(plus.point.x1 - minus.point.x1) / (2 * h),
                        (plus.point.x2 - minus.point.x2) / (2 * h)])
    v = metric.indicatrix(center.point, center.s)
    d_t = np.array([v.y1, v.y2])
    cross = d_theta[0] * d_t[1] - d_theta[1] * d_t[0]
    cf = eng.coframe(center)
    density = cf.w1[0] * cf.w2[1] - cf.w1[1] * cf.w2[0]
    measured = float(density * cross)
    expected = -am.r * math.sin(t)
    return {
        "theta": theta, "t": t,
        "measured": measured,
        "expected": expected,
        "mismatch": abs(measured - expected),
    }


# -- reversibility ---------------------------------------------------------------

def is_reversible(metric: FinslerMetric, n_base: int = 24, n_fiber: int = 48,
                  tol: float = 1e-10) -> dict:
    gap, witness = metric.reversibility_gap(n_base, n_fiber)
    return {
        "reversible": bool(gap <= tol),
        "gap": gap,
        "witness": witness if gap > tol else None,
        "tol": tol,
    }


def _segment_distances(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Min distance from each point to a polyline, vectorized."""
    a = poly[:-1]
    ab = poly[1:] - a
    denom = np.maximum(np.sum(ab * ab, axis=1), 1e-300)
    ap = points[:, None, :] - a[None, :, :]
    tt = np.clip(np.sum(ap * ab[None, :, :], axis=2) / denom[None, :], 0.0, 1.0)
    closest = a[None, :, :] + tt[:, :, None] * ab[None, :, :]
    d = np.linalg.norm(points[:, None, :] - closest, axis=2)
    return np.min(d, axis=1)


def is_geodesically_reversible(metric: FinslerMetric, n_samples: int = 12,
                               seed: int = 7, arc: float = math.pi - 0.1,
                               n_coarse: int = 129, n_dense: int = 2049,
                               tol: float = 1e-5) -> dict:
    """Test whether reversed geodesic arcs are again geodesics.

    For each sampled arc, run the geodesic backwards from its endpoint with
    the reversed (renormalized) velocity for the matching F-length of the
    reversed curve, then compare the two traces as point sets in R^3 by
    projecting samples of each onto a dense polyline of the other.
    """
    rng = np.random.default_rng(seed)
    starts = random_sigma_points(rng, n_samples)
    fwd = flow_many(metric, starts, arc)
    t_coarse = np.linspace(0.0, arc, n_coarse)
    t_dense = np.linspace(0.0, arc, n_dense)

    def embed_states(ys, cs):
        out = np.empty(ys.shape[:-1] + (3,))
        for ci, chart in enumerate((Chart.NORTH, Chart.SOUTH)):
            mask = cs == ci
            if np.any(mask):
                a, b, c3 = embed(chart, ys[..., 0][mask], ys[..., 1][mask])
                out[mask] = np.stack([a, b, c3], axis=-1)
        return out

    ys_c, cs_c = fwd.sample(t_coarse)
    ys_d, cs_d = fwd.sample(t_dense)
    fwd_coarse = embed_states(ys_c, cs_c)
    fwd_dense = embed_states(ys_d, cs_d)

    # F-length of each reversed arc: integrate F(x, -y) over the forward arc
    rev_speed = np.empty((n_coarse, n_samples))
    for ci, chart in enumerate((Chart.NORTH, Chart.SOUTH)):
        mask = cs_c == ci
        if not np.any(mask):
            continue
        e1 = np.cos(ys_c[..., 2][mask])
        e2 = np.sin(ys_c[..., 2][mask])
        fpos = np.asarray(metric.norm_values(
            chart, ys_c[..., 0][mask], ys_c[..., 1][mask], e1, e2))
        fneg = np.asarray(metric.norm_values(
            chart, ys_c[..., 0][mask], ys_c[..., 1][mask], -e1, -e2))
        rev_speed[mask] = fneg / fpos
    lengths = np.trapezoid(rev_speed, t_coarse, axis=0)

    rev_starts = []
    for i in range(n_samples):
        end = fwd.sigma_at(arc, i)
        rev_starts.append(SigmaPoint(end.point, (end.s + math.pi) % TWO_PI))
    rev = flow_many(metric, rev_starts, float(np.max(lengths)))

    per_arc = []
    for i in range(n_samples):
        tc = np.linspace(0.0, lengths[i], n_coarse)
        td = np.linspace(0.0, lengths[i], n_dense)
        yc, cc = rev.sample(tc)
        yd, cd = rev.sample(td)
        rc = embed_states(yc[:, i], cc[:, i])
        rdense = embed_states(yd[:, i], cd[:, i])
        d1 = _segment_distances(fwd_coarse[:, i], rdense)
        d2 = _segment_distances(rc, fwd_dense[:, i])
        per_arc.append({
            "mean": float((np.mean(d1) + np.mean(d2)) / 2.0),
            "max": float(max(np.max(d1), np.max(d2))),
            "rev_length": float(lengths[i]),
        })
    deviation = max(a["mean"] for a in per_arc)
    return {
        "geodesically_reversible": bool(deviation <= tol),
        "deviation": float(deviation),
        "max_pointwise": float(max(a["max"] for a in per_arc)),
        "per_arc": per_arc,
        "tol": tol,
        "n_samples": n_samples,
    }


def refocusing_spreads(metric: FinslerMetric, points: list[ChartPoint],
                       n_fiber: int = 32) -> np.ndarray:
    """Spread of the time-pi image of each fiber (vectorized over points)."""
    return np.array([spread for _, spread in alpha_many(metric, points, n_fiber)])
