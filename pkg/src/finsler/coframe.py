"""Canonical coframe on the unit tangent bundle and its scalar invariants.

The three 1-forms are produced in two stages.  The first two have closed
forms in bundle coordinates (x1, x2, s):

    w1 = F_{y1} dx1 + F_{y2} dx2          (Hilbert form, restricted to F=1)
    w2 = g(m, .) on the base directions   (m = oriented unit normal of g)

Both are semibasic, so their component fields P dx1 + Q dx2 are exact AD
outputs.  The rotation form w3 = a*w1 + b*w2 + c*ds is then solved for by
expanding the numerically differentiated dw1 and dw2 in the wedge basis
{w1^w2, w1^ds, w2^ds} and matching coefficients of the structure equations

    dw1 = -w2 ^ w3
    dw2 = -w3 ^ (w1 - I w2)
    dw3 = -(K w1 - J w3) ^ w2

which also yields the scalars I (Cartan), J (Landsberg) and K (flag
curvature).  Each equation over-determines the unknowns by one coefficient;
those leftovers are the structure residuals reported by this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .charts import Chart, SigmaPoint, orientation_sign
from .errors import InconsistentStructure, NonOrientedFiber
from .metrics import FinslerMetric

DEFAULT_STEP = 1e-3

# 6-point first-derivative stencil: fourth-order rule at steps h and h/2
# combined by one Richardson step (exact through degree six).
_OFFSETS_R = np.array([-2.0, -1.0, -0.5, 0.5, 1.0, 2.0])
_WEIGHTS_R = np.array([-1.0, 40.0, -256.0, 256.0, -40.0, 1.0]) / 180.0
# plain fourth-order rule
_OFFSETS_4 = np.array([-2.0, -1.0, 1.0, 2.0])
_WEIGHTS_4 = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0


@dataclass
class Coframe:
    """Component rows of (w1, w2, w3) on the coordinate basis (dx1, dx2, ds)."""

    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray

    def matrix(self) -> np.ndarray:
        return np.vstack([self.w1, self.w2, self.w3])


@dataclass
class Frame:
    """Vector fields dual to the coframe, as coordinate components."""

    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray


@dataclass
class Invariants:
    I: float
    J: float
    K: float


@dataclass
class BianchiCoefficients:
    I2: float
    I3: float
    J2: float
    J3: float
    K1: float
    K2: float
    K3: float


def _diff_field(field, x1, x2, s, h, richardson=True):
    """Partial derivatives of a tuple-valued field on (x1, x2, s).

    ``field(x1, x2, s)`` must return a tuple of arrays; a single batched
    call covers the whole stencil.  Returns (values, derivs) where
    derivs[comp][axis] is the derivative array of that component.
    """
    offsets = _OFFSETS_R if richardson else _OFFSETS_4
    weights = (_WEIGHTS_R if richardson else _WEIGHTS_4) / h
    x1 = np.asarray(x1, dtype=float)
    n_off = offsets.size
    base = np.broadcast_arrays(x1, x2, s)
    n = base[0].size
    shape = base[0].shape
    flat = [np.ravel(np.ascontiguousarray(b)).astype(float) for b in base]

    # stencil block: axis-major, then offset, then the centre points
    big = np.empty((3, 3 * n_off + 1, n))
    for axis in range(3):
        big[axis, :, :] = flat[axis]
    for axis in range(3):
        for k, off in enumerate(offsets):
            big[axis, axis * n_off + k, :] += off * h
    vals = field(big[0].ravel(), big[1].ravel(), big[2].ravel())
    comps = [np.asarray(v).reshape(3 * n_off + 1, n) for v in vals]
    centers = [c[-1].reshape(shape) for c in comps]
    derivs = []
    for c in comps:
        dc = []
        for axis in range(3):
            block = c[axis * n_off:(axis + 1) * n_off]
            dc.append((weights @ block).reshape(shape))
        derivs.append(dc)
    return centers, derivs


def _wedge_coeffs(dP, dQ, dR, P1, Q1, P2, Q2):
    """Expand the exterior derivative of (P, Q, R) in {w1^w2, w1^ds, w2^ds}.

    dP/dQ/dR are the coordinate partials of the form's components; the
    coefficients come from contracting with the frame dual to (w1, w2, ds).
    """
    f12 = dQ[0] - dP[1]
    f13 = dR[0] - dP[2]
    f23 = dR[1] - dQ[2]
    det = P1 * Q2 - Q1 * P2
    A = f12 / det
    B = (f13 * Q2 - f23 * P2) / det
    C = (-f13 * Q1 + f23 * P1) / det
    return A, B, C


class CoframeEngine:
    """Evaluates the coframe, invariants and structure residuals.

    Parameters
    ----------
    metric : FinslerMetric
    step : finite-difference step for exterior derivatives
    richardson : use the sixth-order combined stencil (default)
    flip_orientation : build the coframe for the reversed surface
        orientation (negates w2 and w3, used by the orientation tests)
    """

    def __init__(self, metric: FinslerMetric, step: float = DEFAULT_STEP,
                 richardson: bool = True, flip_orientation: bool = False):
        self.metric = metric
        self.step = step
        self.richardson = richardson
        self.flip = flip_orientation

    # -- closed-form fields ------------------------------------------------
    def omega12(self, chart: Chart, x1, x2, s):
        """Components (P1, Q1, P2, Q2) of w1 and w2; both have no ds part."""
        e1, e2 = np.cos(s), np.sin(s)
        f, f1, f2, g11, g12, g22 = self.metric.fundamental_values(
            chart, x1, x2, e1, e2)
        gy1 = g11 * e1 + g12 * e2
        gy2 = g12 * e1 + g22 * e2
        v1, v2 = -gy2, gy1
        vgv = g11 * v1 * v1 + 2.0 * g12 * v1 * v2 + g22 * v2 * v2
        sigma = orientation_sign(chart) * (-1.0 if self.flip else 1.0)
        scale = sigma / np.sqrt(vgv)
        m1, m2 = v1 * scale, v2 * scale
        p2 = g11 * m1 + g12 * m2
        q2 = g12 * m1 + g22 * m2
        return f1, f2, p2, q2

    # -- first differencing level ------------------------------------------
    def omega3_fields(self, chart: Chart, x1, x2, s):
        """w3 components plus everything extracted alongside it.

        Returns a dict of arrays with keys: P1,Q1,P2,Q2,P3,Q3,R3,a,b,c,I and
        the residuals res_eq1 (w1^ds coefficient of dw1) and res_eq2
        (mismatch of the w1^ds coefficient of dw2 against c).
        """
        def field(fx1, fx2, fs):
            return self.omega12(chart, fx1, fx2, fs)

        centers, derivs = _diff_field(field, x1, x2, s, self.step, self.richardson)
        P1, Q1, P2, Q2 = centers
        dP1, dQ1, dP2, dQ2 = derivs
        zero = [np.zeros_like(P1)] * 3
        A1, B1, C1 = _wedge_coeffs(dP1, dQ1, zero, P1, Q1, P2, Q2)
        A2, B2, C2 = _wedge_coeffs(dP2, dQ2, zero, P1, Q1, P2, Q2)
        c = -C1
        a = A1
        I = -C2 / c
        b = A2 - I * a
        return {
            "P1": P1, "Q1": Q1, "P2": P2, "Q2": Q2,
            "P3": a * P1 + b * P2, "Q3": a * Q1 + b * Q2, "R3": c,
            "a": a, "b": b, "c": c, "I": I,
            "res_eq1": np.abs(B1),
            "res_eq2": np.abs(B2 - c),
            "dw2_A": A2,
        }

    # -- second differencing level ------------------------------------------
    def invariants_fields(self, chart: Chart, x1, x2, s, chunk=512):
        """I, J, K and the three structure-equation residuals, batched."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        s = np.asarray(s, dtype=float)
        shape = np.broadcast_shapes(x1.shape, x2.shape, s.shape)
        x1, x2, s = (np.broadcast_to(v, shape).ravel() for v in (x1, x2, s))
        n = x1.size
        out = {k: np.empty(n) for k in
               ("I", "J", "K", "a", "c", "res_eq1", "res_eq2", "res_eq3")}
        for lo in range(0, n, chunk):
            hi = min(lo + chunk, n)
            blk = self._invariants_block(chart, x1[lo:hi], x2[lo:hi], s[lo:hi])
            for k in out:
                out[k][lo:hi] = blk[k]
        return {k: v.reshape(shape) for k, v in out.items()}

    def _invariants_block(self, chart, x1, x2, s):
        def w3_field(fx1, fx2, fs):
            d = self.omega3_fields(chart, fx1, fx2, fs)
            return d["P3"], d["Q3"], d["R3"]

        centers, derivs = _diff_field(w3_field, x1, x2, s, self.step, self.richardson)
        ctr = self.omega3_fields(chart, x1, x2, s)
        P3, Q3, R3 = centers
        dP3, dQ3, dR3 = derivs
        A3, B3, C3 = _wedge_coeffs(dP3, dQ3, dR3,
                                   ctr["P1"], ctr["Q1"], ctr["P2"], ctr["Q2"])
        c = ctr["c"]
        J = -C3 / c
        K = J * ctr["a"] - A3
        return {
            "I": ctr["I"], "J": J, "K": K, "a": ctr["a"], "c": c,
            "res_eq1": ctr["res_eq1"], "res_eq2": ctr["res_eq2"],
            "res_eq3": np.abs(B3),
        }

    # -- point-level API -----------------------------------------------------
    def _point(self, u: SigmaPoint):
        p = u.point
        return p.chart, np.array([p.x1]), np.array([p.x2]), np.array([u.s])

    def hilbert_form(self, u: SigmaPoint) -> np.ndarray:
        """w1 components (dx1, dx2, ds) at one point."""
        chart, x1, x2, s = self._point(u)
        e1, e2 = np.cos(s), np.sin(s)
        _, f1, f2 = self.metric.norm_grad_y(chart, x1, x2, e1, e2)
        return np.array([float(f1[0]), float(f2[0]), 0.0])

    def omega2_form(self, u: SigmaPoint) -> np.ndarray:
        chart, x1, x2, s = self._point(u)
        _, _, p2, q2 = self.omega12(chart, x1, x2, s)
        return np.array([float(p2[0]), float(q2[0]), 0.0])

    def omega3_form(self, u: SigmaPoint, check: bool = True) -> np.ndarray:
        chart, x1, x2, s = self._point(u)
        d = self.omega3_fields(chart, x1, x2, s)
        if check and float(d["res_eq1"][0]) > 1e-5:
            raise InconsistentStructure(
                f"w1^ds coefficient of dw1 is {float(d['res_eq1'][0]):.3e} at {u}")
        return np.array([float(d["P3"][0]), float(d["Q3"][0]), float(d["R3"][0])])

    def coframe(self, u: SigmaPoint, check: bool = True) -> Coframe:
        w3 = self.omega3_form(u, check=check)
        return Coframe(self.hilbert_form(u), self.omega2_form(u), w3)

    def frame(self, u: SigmaPoint) -> Frame:
        cf = self.coframe(u)
        m = np.linalg.inv(cf.matrix())
        return Frame(m[:, 0], m[:, 1], m[:, 2])

    def invariants(self, u: SigmaPoint, check: bool = True) -> Invariants:
        chart, x1, x2, s = self._point(u)
        d = self.invariants_fields(chart, x1, x2, s)
        if check:
            worst = max(float(d[k][0]) for k in ("res_eq1", "res_eq2", "res_eq3"))
            if worst > 1e-5:
                raise InconsistentStructure(
                    f"structure-equation residual {worst:.3e} at {u}")
        return Invariants(float(d["I"][0]), float(d["J"][0]), float(d["K"][0]))

    def structure_residuals(self, u: SigmaPoint) -> dict:
        """All characterizing-property and structure-equation residuals.

        Reports, never raises.  Keys: semibasic_w1, semibasic_w2, area_margin,
        curve_w1, curve_w2, prop3, prop4, prop5_w3dw2, eq1, eq2, eq3 plus the
        extracted invariants.
        """
        chart, x1a, x2a, sa = self._point(u)
        d = self.invariants_fields(chart, x1a, x2a, sa)
        w1 = self.hilbert_form(u)
        w2 = self.omega2_form(u)
        e = np.array([math.cos(u.s), math.sin(u.s)])
        f = self.metric.norm_values(chart, x1a, x2a, e[0] + 0 * x1a, e[1] + 0 * x1a)
        y = e / float(f[0])
        det = w1[0] * w2[1] - w1[1] * w2[0]
        margin = orientation_sign(chart) * (-1.0 if self.flip else 1.0) * det
        # residual of dw2 against its required expansion, in coefficient form
        eq2 = float(d["res_eq2"][0])
        return {
            "semibasic_w1": abs(w1[2]),
            "semibasic_w2": abs(w2[2]),
            "area_margin": float(margin),
            "area_residual": max(0.0, -float(margin)),
            "curve_w1": abs(float(w1[0] * y[0] + w1[1] * y[1]) - 1.0),
            "curve_w2": abs(float(w2[0] * y[0] + w2[1] * y[1])),
            "prop3": float(d["res_eq1"][0]),
            "prop4": eq2,
            "prop5_w3dw2": eq2,
            "eq1": float(d["res_eq1"][0]),
            "eq2": eq2,
            "eq3": float(d["res_eq3"][0]),
            "I": float(d["I"][0]),
            "J": float(d["J"][0]),
            "K": float(d["K"][0]),
        }

    def bianchi(self, u: SigmaPoint, h: float = 2e-3):
        """Coefficients of dI, dJ, dK on the coframe, plus identity residuals.

        Expansion dI = (X1 I) w1 + I2 w2 + I3 w3 and likewise for J and K;
        the flow-direction components must reproduce J, -K3 - K*I and K1.
        """
        chart, x1, x2, s = self._point(u)

        def field(fx1, fx2, fs):
            d = self.invariants_fields(chart, fx1, fx2, fs, chunk=4096)
            return d["I"], d["J"], d["K"]

        centers, derivs = _diff_field(field, x1, x2, s, h, richardson=False)
        I, J, K = (float(c[0]) for c in centers)
        cf = self.coframe(u)
        m = np.linalg.inv(cf.matrix())
        grads = [np.array([dd[0][0], dd[1][0], dd[2][0]], dtype=float).ravel()
                 for dd in derivs]
        dI = grads[0] @ m
        dJ = grads[1] @ m
        dK = grads[2] @ m
        coeffs = BianchiCoefficients(
            I2=float(dI[1]), I3=float(dI[2]),
            J2=float(dJ[1]), J3=float(dJ[2]),
            K1=float(dK[0]), K2=float(dK[1]), K3=float(dK[2]),
        )
        residuals = {
            "X1I_minus_J": abs(float(dI[0]) - J),
            "X1J_plus_K3_plus_KI": abs(float(dJ[0]) + float(dK[2]) + K * I),
        }
        return coeffs, residuals, Invariants(I, J, K)

    def fiber_rotation_component(self, chart: Chart, x1, x2, s):
        """ds-component of w3 along a fiber sample (array friendly)."""
        d = self.omega3_fields(chart, x1, x2, s)
        return d["R3"]


def coframe_matrices(engine: CoframeEngine,
                     points: list[SigmaPoint]) -> np.ndarray:
    """Stacked coframe component matrices for a list of bundle points."""
    n = len(points)
    out = np.empty((n, 3, 3))
    for chart in (Chart.NORTH, Chart.SOUTH):
        idx = [i for i, u in enumerate(points) if u.point.chart == chart]
        if not idx:
            continue
        x1 = np.array([points[i].point.x1 for i in idx])
        x2 = np.array([points[i].point.x2 for i in idx])
        s = np.array([points[i].s for i in idx])
        d = engine.omega3_fields(chart, x1, x2, s)
        zeros = np.zeros_like(d["P1"])
        m = np.stack([
            np.stack([d["P1"], d["Q1"], zeros], axis=-1),
            np.stack([d["P2"], d["Q2"], zeros], axis=-1),
            np.stack([d["P3"], d["Q3"], d["R3"]], axis=-1),
        ], axis=-2)
        out[idx] = m
    return out


# -- spec'd single-point operations ---------------------------------------

def hilbert_form(metric: FinslerMetric, u: SigmaPoint) -> np.ndarray:
    return CoframeEngine(metric).hilbert_form(u)


def spray(metric: FinslerMetric, u: SigmaPoint) -> np.ndarray:
    """Geodesic-flow vector X1 at a bundle point, coordinate components."""
    p = u.point
    d1, d2, ds, _ = metric.spray_values(
        p.chart, np.array([p.x1]), np.array([p.x2]), np.array([u.s]))
    return np.array([float(d1[0]), float(d2[0]), float(ds[0])])


def spray_duality(metric: FinslerMetric, u: SigmaPoint,
                  engine: CoframeEngine | None = None) -> np.ndarray:
    """(w1, w2, w3) evaluated on the spray vector; must be (1, 0, 0)."""
    eng = engine or CoframeEngine(metric)
    cf = eng.coframe(u)
    x = spray(metric, u)
    return cf.matrix() @ x


def grid_sigma_points(chart: Chart, n_radial=16, n_angular=16, n_fiber=32,
                      radius=1.05):
    """Deterministic polar grid on the chart disk times fiber angles."""
    r = radius * np.sqrt((np.arange(n_radial) + 0.5) / n_radial)
    phi = 2.0 * np.pi * (np.arange(n_angular) + 0.5) / n_angular
    rr, pp = np.meshgrid(r, phi)
    x1 = (rr * np.cos(pp)).ravel()
    x2 = (rr * np.sin(pp)).ravel()
    s = 2.0 * np.pi * (np.arange(n_fiber) + 0.5) / n_fiber
    X1 = np.repeat(x1, n_fiber)
    X2 = np.repeat(x2, n_fiber)
    S = np.tile(s, x1.size)
    return X1, X2, S


def structure_grid(metric: FinslerMetric, n_radial=16, n_angular=16,
                   n_fiber=32, radius=1.05, step=DEFAULT_STEP) -> dict:
    """Residual and invariant extrema over a bundle grid in both charts."""
    engine = CoframeEngine(metric, step=step)
    report = {"charts": {}}
    worst = {"res_eq1": 0.0, "res_eq2": 0.0, "res_eq3": 0.0}
    i_max = 0.0
    k_dev = 0.0
    j_max = 0.0
    for chart in (Chart.NORTH, Chart.SOUTH):
        x1, x2, s = grid_sigma_points(chart, n_radial, n_angular, n_fiber, radius)
        d = engine.invariants_fields(chart, x1, x2, s)
        entry = {
            "points": int(x1.size),
            "res_eq1_max": float(np.max(d["res_eq1"])),
            "res_eq2_max": float(np.max(d["res_eq2"])),
            "res_eq3_max": float(np.max(d["res_eq3"])),
            "I_max_abs": float(np.max(np.abs(d["I"]))),
            "J_max_abs": float(np.max(np.abs(d["J"]))),
            "K_dev_max": float(np.max(np.abs(d["K"] - 1.0))),
            "K_mean": float(np.mean(d["K"])),
        }
        report["charts"][chart.value] = entry
        for k in worst:
            worst[k] = max(worst[k], entry[f"{k}_max"])
        i_max = max(i_max, entry["I_max_abs"])
        j_max = max(j_max, entry["J_max_abs"])
        k_dev = max(k_dev, entry["K_dev_max"])
    report.update({
        "res_eq1_max": worst["res_eq1"],
        "res_eq2_max": worst["res_eq2"],
        "res_eq3_max": worst["res_eq3"],
        "structure_residual_max": max(worst.values()),
        "I_max_abs": i_max,
        "J_max_abs": j_max,
        "K_dev_max": k_dev,
    })
    return report


def fiber_rotation_samples(metric: FinslerMetric, p, n=512,
                           engine: CoframeEngine | None = None):
    """ds-component of w3 around the fiber over p; raises if it changes sign."""
    eng = engine or CoframeEngine(metric)
    s = 2.0 * np.pi * np.arange(n) / n
    x1 = np.full(n, p.x1)
    x2 = np.full(n, p.x2)
    c = np.asarray(eng.fiber_rotation_component(p.chart, x1, x2, s))
    if np.min(c) < 0.0 < np.max(c):
        raise NonOrientedFiber(f"w3(d/ds) changes sign on the fiber over {p}")
    return s, c
