"""Geodesic flow on the unit tangent bundle.

The integrator is an embedded Dormand-Prince 5(4) pair stepping a whole
batch of trajectories with one shared adaptive step.  State per trajectory
is (x1, x2, s) plus a chart flag; the fiber angle parametrizes the F-unit
velocity, so the speed constraint holds by construction and never drifts.
Chart hand-off happens at step nodes once a base point leaves the disk of
radius :data:`finsler.charts.SWITCH_RADIUS` (the transition is exact, so no
event localization is needed; steps are capped well inside the validity
radius of the charts).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .charts import (
    Chart,
    ChartPoint,
    R_SWITCH,
    SWITCH_RADIUS,
    SigmaPoint,
    sigma_in_chart,
    transition_jacobian,
)
from .coframe import CoframeEngine
from .errors import ChartEscape, IntegratorFailure, NotConstantCurvature
from .metrics import FinslerMetric

T_MAX_DEFAULT = 100.0 * math.pi

_CHARTS = (Chart.NORTH, Chart.SOUTH)

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_ERR = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
                 -17253 / 339200, 22 / 525, -1 / 40])


@dataclass
class _Step:
    t0: float
    t1: float
    y0: np.ndarray        # (n, 3) state at t0, post hand-off
    f0: np.ndarray
    y1: np.ndarray        # (n, 3) state at t1 in the same charts as y0
    f1: np.ndarray
    charts: np.ndarray    # (n,) int8 chart flags valid on [t0, t1]


@dataclass
class FlowBatch:
    """Dense result of one batched integration."""

    direction: float
    t_final: float
    steps: list[_Step]
    end_state: np.ndarray
    end_charts: np.ndarray
    stats: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.end_state.shape[0]

    def _locate(self, t: float) -> _Step:
        ts = t * self.direction
        lo, hi = 0, len(self.steps) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if self.steps[mid].t1 * self.direction < ts:
                lo = mid + 1
            else:
                hi = mid
        return self.steps[lo]

    def states_at(self, t: float):
        """Hermite-interpolated states: (n,3) array plus chart flags."""
        if t == 0.0 and self.steps:
            st = self.steps[0]
            return st.y0.copy(), st.charts.copy()
        if abs(t) >= abs(self.t_final):
            return self.end_state.copy(), self.end_charts.copy()
        st = self._locate(t)
        h = st.t1 - st.t0
        tau = (t - st.t0) / h
        h00 = (1 + 2 * tau) * (1 - tau) ** 2
        h10 = tau * (1 - tau) ** 2
        h01 = tau * tau * (3 - 2 * tau)
        h11 = tau * tau * (tau - 1)
        y = (h00 * st.y0 + h10 * h * st.f0 + h01 * st.y1 + h11 * h * st.f1)
        return y, st.charts.copy()

    def sigma_at(self, t: float, i: int) -> SigmaPoint:
        y, charts = self.states_at(t)
        chart = _CHARTS[int(charts[i])]
        return SigmaPoint(ChartPoint(chart, float(y[i, 0]), float(y[i, 1])),
                          float(y[i, 2]) % (2 * math.pi))

    def finals(self) -> list[SigmaPoint]:
        return [self.sigma_at(self.t_final, i) for i in range(self.n)]

    def sample(self, t_values):
        """States at many times: arrays (nt, n, 3) and charts (nt, n)."""
        ys = np.empty((len(t_values), self.n, 3))
        cs = np.empty((len(t_values), self.n), dtype=np.int8)
        for k, t in enumerate(t_values):
            y, c = self.states_at(float(t))
            ys[k] = y
            cs[k] = c
        return ys, cs


def _rhs(metric: FinslerMetric, y: np.ndarray, charts: np.ndarray) -> np.ndarray:
    out = np.empty_like(y)
    for ci, chart in enumerate(_CHARTS):
        mask = charts == ci
        if not np.any(mask):
            continue
        d1, d2, ds, _ = metric.spray_values(
            chart, y[mask, 0], y[mask, 1], y[mask, 2])
        out[mask, 0] = d1
        out[mask, 1] = d2
        out[mask, 2] = ds
    return out


def _hand_off(y: np.ndarray, charts: np.ndarray) -> bool:
    """Move rows outside the switch radius to the other chart, in place."""
    r2 = y[:, 0] ** 2 + y[:, 1] ** 2
    if np.any(r2 > R_SWITCH ** 2):
        raise ChartEscape("trajectory left the chart validity disk")
    mask = r2 > SWITCH_RADIUS ** 2
    if not np.any(mask):
        return False
    x1, x2, s = y[mask, 0], y[mask, 1], y[mask, 2]
    rr = r2[mask]
    j11, j12, j21, j22 = transition_jacobian(x1, x2)
    e1, e2 = np.cos(s), np.sin(s)
    w1 = j11 * e1 + j12 * e2
    w2 = j21 * e1 + j22 * e2
    y[mask, 0] = x1 / rr
    y[mask, 1] = x2 / rr
    y[mask, 2] = np.arctan2(w2, w1)
    charts[mask] ^= 1
    return True


def flow_many(metric: FinslerMetric, starts, t_final: float,
              rtol: float = 1e-11, atol: float = 1e-11,
              h_max: float = 0.15, t_max: float = T_MAX_DEFAULT,
              t_checkpoints=None) -> FlowBatch:
    """Integrate the geodesic flow from a batch of bundle points.

    ``t_checkpoints`` lists times the stepper must land on exactly, making
    the states there integration nodes rather than interpolants.
    """
    if abs(t_final) > t_max:
        raise IntegratorFailure(f"|t| = {abs(t_final)} exceeds T_max = {t_max}")
    n = len(starts)
    y = np.empty((n, 3))
    charts = np.empty(n, dtype=np.int8)
    for i, u in enumerate(starts):
        if u.point.r > SWITCH_RADIUS:
            u = sigma_in_chart(u, _CHARTS[1 - _CHARTS.index(u.point.chart)])
        y[i] = (u.point.x1, u.point.x2, u.s)
        charts[i] = _CHARTS.index(u.point.chart)
    direction = 1.0 if t_final >= 0.0 else -1.0
    T = abs(t_final)
    marks = np.array([], dtype=float)
    if t_checkpoints is not None:
        marks = np.unique(np.abs(np.asarray(t_checkpoints, dtype=float)))
        marks = marks[(marks > 1e-15) & (marks < T - 1e-15)]
    mark_idx = 0

    def f(state, ch):
        return direction * _rhs(metric, state, ch)

    steps: list[_Step] = []
    t = 0.0
    h_prop = min(h_max, 1e-2, T if T > 0 else 1e-2)
    k1 = f(y, charts)
    n_accept = n_reject = 0
    while t < T:
        while mark_idx < marks.size and marks[mark_idx] <= t + 1e-14:
            mark_idx += 1
        h = min(h_prop, T - t)
        if mark_idx < marks.size:
            h = min(h, marks[mark_idx] - t)
        if h < 1e-13 * max(1.0, T):
            raise IntegratorFailure(f"step size underflow at t = {t}")
        ks = [k1]
        for stage in range(1, 7):
            yi = y + h * np.tensordot(_A[stage], ks[:stage], axes=(0, 0))
            ks.append(f(yi, charts))
        y5 = y + h * np.tensordot(_B5, ks, axes=(0, 0))
        err_vec = h * np.tensordot(_ERR, ks, axes=(0, 0))
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
        err = float(np.sqrt(np.max(np.mean((err_vec / scale) ** 2, axis=1))))
        if err <= 1.0:
            f_end = ks[6]
            steps.append(_Step(direction * t, direction * (t + h),
                               y.copy(), direction * k1.copy(),
                               y5.copy(), direction * f_end.copy(),
                               charts.copy()))
            t += h
            y = y5
            k1 = f_end
            switched = _hand_off(y, charts)
            if switched:
                k1 = f(y, charts)
            n_accept += 1
        else:
            n_reject += 1
        factor = 0.9 * err ** -0.2 if err > 0.0 else 5.0
        h_prop = h * min(5.0, max(0.2, factor))
        h_prop = min(h_prop, h_max)

    stats = {"n_accept": n_accept, "n_reject": n_reject, "rtol": rtol,
             "atol": atol}
    return FlowBatch(direction, t_final, steps, y, charts, stats)


def flow(metric: FinslerMetric, u: SigmaPoint, t: float, **kw) -> SigmaPoint:
    """Time-t geodesic flow of one bundle point."""
    if t == 0.0:
        return u.wrapped()
    return flow_many(metric, [u], t, **kw).finals()[0]


@dataclass
class GeodesicPath:
    """Sampled unit-speed geodesic with integrator statistics."""

    times: np.ndarray
    points: list[SigmaPoint]
    stats: dict


def geodesic_path(metric: FinslerMetric, u: SigmaPoint, t_final: float,
                  n_samples: int = 257, **kw) -> GeodesicPath:
    times = np.linspace(0.0, t_final, n_samples)
    batch = flow_many(metric, [u], t_final, t_checkpoints=times, **kw)
    pts = [batch.sigma_at(float(t), 0) for t in times]
    return GeodesicPath(times, pts, batch.stats)


# -- transported frames ------------------------------------------------------

def flow_differential(metric: FinslerMetric, u: SigmaPoint, t: float,
                      h_fd: float = 5e-3, **kw):
    """Differential of the time-t flow map in bundle coordinates.

    Fourth-order differencing of the flow map itself; the thirteen
    trajectories integrate as one batch, so their local errors cancel in
    the differences.  Returns (M, end) with M the 3x3 Jacobian expressed in
    the charts of u and of the unperturbed endpoint.
    """
    offs = np.array([-2.0, -1.0, 1.0, 2.0]) * h_fd
    wts = np.array([1.0, -8.0, 8.0, -1.0]) / (12.0 * h_fd)
    starts = [u]
    for axis in range(3):
        for off in offs:
            dx = [u.point.x1, u.point.x2, u.s]
            dx[axis] += off
            starts.append(SigmaPoint(ChartPoint(u.point.chart, dx[0], dx[1]), dx[2]))
    batch = flow_many(metric, starts, t, **kw)
    finals = batch.finals()
    center = finals[0]
    aligned = [sigma_in_chart(v, center.point.chart) for v in finals]
    coords = np.array([[v.point.x1, v.point.x2, v.s] for v in aligned])
    # unwrap fiber angles around the centre value
    coords[:, 2] = center.s + np.angle(np.exp(1j * (coords[:, 2] - center.s)))
    M = np.empty((3, 3))
    for axis in range(3):
        block = coords[1 + 4 * axis: 5 + 4 * axis]
        M[:, axis] = wts @ block
    return M, center


def pullback_rotation_many(metric: FinslerMetric, us: list[SigmaPoint],
                           t: float, engine: CoframeEngine | None = None,
                           h_fd: float = 5e-3, **kw) -> np.ndarray:
    """Rotation-law residual for many bundle points in one flow batch."""
    from .coframe import coframe_matrices

    eng = engine or CoframeEngine(metric)
    offs = np.array([-2.0, -1.0, 1.0, 2.0]) * h_fd
    wts = np.array([1.0, -8.0, 8.0, -1.0]) / (12.0 * h_fd)
    starts = []
    for u in us:
        starts.append(u)
        for axis in range(3):
            for off in offs:
                dx = [u.point.x1, u.point.x2, u.s]
                dx[axis] += off
                starts.append(SigmaPoint(
                    ChartPoint(u.point.chart, dx[0], dx[1]), dx[2]))
    batch = flow_many(metric, starts, t, **kw)
    finals = batch.finals()
    block = 13
    centers = [finals[i * block] for i in range(len(us))]
    cf0 = coframe_matrices(eng, list(us))
    cf1 = coframe_matrices(eng, centers)
    ct, st = math.cos(t), math.sin(t)
    rot = np.array([[1.0, 0.0, 0.0], [0.0, ct, st], [0.0, -st, ct]])
    residuals = np.empty(len(us))
    for i, center in enumerate(centers):
        group = finals[i * block: (i + 1) * block]
        aligned = [sigma_in_chart(v, center.point.chart) for v in group]
        coords = np.array([[v.point.x1, v.point.x2, v.s] for v in aligned])
        coords[:, 2] = center.s + np.angle(
            np.exp(1j * (coords[:, 2] - center.s)))
        M = np.empty((3, 3))
        for axis in range(3):
            M[:, axis] = wts @ coords[1 + 4 * axis: 5 + 4 * axis]
        residuals[i] = np.max(np.abs(cf1[i] @ M - rot @ cf0[i]))
    return residuals


def pullback_rotation_check(metric: FinslerMetric, u: SigmaPoint, t: float,
                            engine: CoframeEngine | None = None, **kw) -> dict:
    """Transport a coordinate basis by the flow and test the rotation law.

    The pulled-back pair (w2, w3) must rotate by angle t while w1 stays
    fixed on all of the transported directions.
    """
    eng = engine or CoframeEngine(metric)
    M, end = flow_differential(metric, u, t, **kw)
    cf0 = eng.coframe(u).matrix()
    cf1 = eng.coframe(end).matrix()
    pushed = cf1 @ M           # rows: w_i at the endpoint on transported basis
    ct, st = math.cos(t), math.sin(t)
    expected = np.vstack([
        cf0[0],
        ct * cf0[1] + st * cf0[2],
        -st * cf0[1] + ct * cf0[2],
    ])
    res = np.abs(pushed - expected)
    return {
        "t": t,
        "residual_max": float(np.max(res)),
        "residual_w1": float(np.max(res[0])),
        "residual_w2": float(np.max(res[1])),
        "residual_w3": float(np.max(res[2])),
    }


def conservation_check(metric: FinslerMetric, u: SigmaPoint, t_final: float,
                       n_samples: int = 256,
                       engine: CoframeEngine | None = None,
                       curvature_tol: float = 1e-4) -> dict:
    """Drift of I^2 + J^2 along a geodesic, gated on K staying at 1.

    Also reports how well (I, J) follow the unit-frequency rotation that
    the flow imposes on them.
    """
    eng = engine or CoframeEngine(metric)
    batch = flow_many(metric, [u], t_final)
    times = np.linspace(0.0, t_final, n_samples)
    ys, cs = batch.sample(times)
    I = np.empty(n_samples)
    J = np.empty(n_samples)
    K = np.empty(n_samples)
    for ci, chart in enumerate(_CHARTS):
        mask = cs[:, 0] == ci
        if not np.any(mask):
            continue
        d = eng.invariants_fields(chart, ys[mask, 0, 0], ys[mask, 0, 1],
                                  ys[mask, 0, 2])
        I[mask], J[mask], K[mask] = d["I"], d["J"], d["K"]
    k_dev = float(np.max(np.abs(K - 1.0)))
    if k_dev > curvature_tol:
        raise NotConstantCurvature(
            f"max |K - 1| = {k_dev:.3e} along the geodesic")
    value = I * I + J * J
    pred_i = I[0] * np.cos(times) + J[0] * np.sin(times)
    pred_j = -I[0] * np.sin(times) + J[0] * np.cos(times)
    return {
        "times": times,
        "I": I,
        "J": J,
        "K": K,
        "conserved": value,
        "drift": float(np.max(np.abs(value - value[0]))),
        "K_dev_max": k_dev,
        "harmonic_residual": float(max(np.max(np.abs(I - pred_i)),
                                       np.max(np.abs(J - pred_j)))),
    }


def conservation_many(metric: FinslerMetric, us: list[SigmaPoint],
                      t_final: float = 2.0 * math.pi, n_samples: int = 256,
                      engine: CoframeEngine | None = None) -> dict:
    """Conservation and derivative-identity residuals for many geodesics.

    One batched flow; the invariant sweep runs over all samples of all
    trajectories at once.  Returns per-geodesic arrays.
    """
    eng = engine or CoframeEngine(metric)
    n = len(us)
    batch = flow_many(metric, us, t_final)
    times = np.linspace(0.0, t_final, n_samples)
    ys, cs = batch.sample(times)
    I = np.empty((n_samples, n))
    J = np.empty((n_samples, n))
    K = np.empty((n_samples, n))
    for ci, chart in enumerate(_CHARTS):
        mask = cs == ci
        if not np.any(mask):
            continue
        d = eng.invariants_fields(chart, ys[..., 0][mask], ys[..., 1][mask],
                                  ys[..., 2][mask])
        I[mask], J[mask], K[mask] = d["I"], d["J"], d["K"]
    value = I * I + J * J
    drift = np.max(np.abs(value - value[0]), axis=0)
    k_dev = np.max(np.abs(K - 1.0), axis=0)
    dt = times[1] - times[0]

    def ddt(v):
        return (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12.0 * dt)

    res_i = np.max(np.abs(ddt(I) - J[2:-2]), axis=0)
    res_j = np.max(np.abs(ddt(J) + I[2:-2]), axis=0)
    return {
        "times": times, "I": I, "J": J, "K": K,
        "drift": drift, "K_dev": k_dev,
        "dI_minus_J": res_i, "dJ_plus_I": res_j,
    }


def derivative_identity_residuals(metric: FinslerMetric, u: SigmaPoint,
                                  t_final: float = 2.0 * math.pi,
                                  n_samples: int = 256,
                                  engine: CoframeEngine | None = None) -> dict:
    """Residuals of dI/dt = J and dJ/dt = -I along one geodesic.

    Derivatives come from spectral differentiation of the sampled series
    when the span is a full period, otherwise from interior central
    differences of fourth order.
    """
    rep = conservation_check(metric, u, t_final, n_samples, engine)
    times, I, J = rep["times"], rep["I"], rep["J"]
    dt = times[1] - times[0]
    # fourth-order interior differences
    def ddt(v):
        return (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12.0 * dt)
    res_i = np.max(np.abs(ddt(I) - J[2:-2]))
    res_j = np.max(np.abs(ddt(J) + I[2:-2]))
    rep["dI_minus_J"] = float(res_i)
    rep["dJ_plus_I"] = float(res_j)
    return rep
