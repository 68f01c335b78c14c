"""Finsler metrics on the two-chart sphere atlas.

All built-in families are Randers metrics produced by Zermelo navigation on
a conformally flat reference metric h = c(x)^2 |dx|^2 with a wind field W:

    F(x, y) = (sqrt(lam * h(y,y) + W0(y)^2) - W0(y)) / lam,
    W0 = h(W, .),  lam = 1 - |W|_h^2.

The norm kernel ``_norm`` accepts plain floats, numpy arrays, or nested
dual numbers, so one implementation serves values, batched grid sweeps and
derivatives to any order the drivers in :mod:`finsler.ad` request.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ad
from .ad import sqrt
from .charts import Chart, ChartPoint, TangentVec, R_SWITCH, transition
from .errors import (
    ConfigParseError,
    MetricValidationError,
    NonPositiveNorm,
    NotStronglyConvex,
    SingularSystem,
    WindTooStrong,
    ZeroVector,
)
from .expressions import parse_expression

MIN_VECTOR_NORM = 1e-14
CONVEXITY_FLOOR = 1e-9


def _round_conformal(x1, x2):
    return 2.0 / (1.0 + x1 * x1 + x2 * x2)


class FinslerMetric:
    """Base class; subclasses provide the norm kernel per chart."""

    kind = "abstract"

    def _norm(self, chart: Chart, x1, x2, y1, y2):
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind}

    # -- kernels for the AD drivers --------------------------------------
    def _fn(self, chart: Chart):
        return lambda x1, x2, y1, y2: self._norm(chart, x1, x2, y1, y2)

    def norm_values(self, chart, x1, x2, y1, y2):
        return self._norm(chart, x1, x2, y1, y2)

    def norm_grad_y(self, chart, x1, x2, y1, y2):
        """(F, F_y1, F_y2), array friendly."""
        return ad.gradient_y(self._fn(chart), x1, x2, y1, y2)

    def fundamental_values(self, chart, x1, x2, y1, y2):
        """F, y-gradient of F and the fundamental tensor g_ij.

        g_ij = 1/2 d^2(F^2)/dy_i dy_j = F_i F_j + F * F_ij.
        """
        f, grad, hess = ad.derivatives_y2(self._fn(chart), x1, x2, y1, y2)
        f1, f2 = grad
        g11 = f1 * f1 + f * hess[0][0]
        g12 = f1 * f2 + f * hess[0][1]
        g22 = f2 * f2 + f * hess[1][1]
        return f, f1, f2, g11, g12, g22

    def spray_values(self, chart, x1, x2, s):
        """Geodesic field in bundle coordinates (x1, x2, s), array friendly.

        Euler-Lagrange form of L = F^2/2 evaluated on the unit directions
        e(s); homogeneity converts the results to the F-unit velocity.
        Returns (dx1, dx2, ds, F_on_e).
        """
        e1, e2 = np.cos(s), np.sin(s)
        fn = self._fn(chart)
        f, f1, f2, g11, g12, g22 = self.fundamental_values(chart, x1, x2, e1, e2)
        _, fx, fy, fxy = ad.derivatives_xy(fn, x1, x2, e1, e2)
        # L_x_j = F F_x_j ; L_{y_i x_j} = F_y_i F_x_j + F F_{y_i x_j}
        lyx = [[fy[i] * fx[j] + f * fxy[i][j] for j in (0, 1)] for i in (0, 1)]
        b1 = f * fx[0] - (lyx[0][0] * e1 + lyx[0][1] * e2)
        b2 = f * fx[1] - (lyx[1][0] * e1 + lyx[1][1] * e2)
        det = g11 * g22 - g12 * g12
        dmin = float(np.min(np.abs(np.asarray(det))))
        if not math.isfinite(dmin) or dmin < 1e-300:
            raise SingularSystem("fundamental tensor is numerically singular")
        # acceleration of the unit-speed lift, scaled from the e(s) data
        a1 = (g22 * b1 - g12 * b2) / det / (f * f)
        a2 = (g11 * b2 - g12 * b1) / det / (f * f)
        ds = f * (e1 * a2 - e2 * a1)
        return e1 / f, e2 / f, ds, f

    def jet(self, v: TangentVec) -> "Jet":
        """All derivative data of F used anywhere in the engine."""
        p = v.point
        fn = self._fn(p.chart)
        args = (p.x1, p.x2, v.y1, v.y2)
        f, gy, hy, ty = ad.derivatives_y3(fn, *args)
        _, gx, hx = ad.derivatives_x2(fn, *args)
        _, _, _, fxy = ad.derivatives_xy(fn, *args)
        third = np.zeros((2, 2, 2))
        for (a, b, c), val in ty.items():
            for idx in {(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)}:
                third[idx] = val
        return Jet(
            value=float(f),
            d_y=np.array(gy, dtype=float),
            d_yy=np.array(hy, dtype=float),
            d_yyy=third,
            d_x=np.array(gx, dtype=float),
            d_xx=np.array(hx, dtype=float),
            d_xy=np.array(fxy, dtype=float),
        )

    # -- scalar conveniences ----------------------------------------------
    def eval(self, v: TangentVec) -> float:
        if math.hypot(v.y1, v.y2) < MIN_VECTOR_NORM:
            raise ZeroVector("cannot evaluate F on a (near) zero vector")
        f = float(self._norm(v.point.chart, v.point.x1, v.point.x2, v.y1, v.y2))
        if not (f > 0.0) or not math.isfinite(f):
            raise NonPositiveNorm(f"F = {f} at {v}")
        return f

    def indicatrix(self, p: ChartPoint, s: float) -> TangentVec:
        """The F-unit vector in direction angle s: y(s) = e(s)/F(x, e(s))."""
        e1, e2 = math.cos(s), math.sin(s)
        f = self.eval(TangentVec(p, e1, e2))
        return TangentVec(p, e1 / f, e2 / f)

    def reversibility_gap(self, n_base=24, n_fiber=48):
        """Grid sup of |F(x,y) - F(x,-y)| and the witnessing sample."""
        best = (0.0, None)
        for chart in (Chart.NORTH, Chart.SOUTH):
            x1, x2, e1, e2 = _validation_grid(n_base, n_fiber)
            fwd = np.asarray(self.norm_values(chart, x1, x2, e1, e2))
            bwd = np.asarray(self.norm_values(chart, x1, x2, -e1, -e2))
            gap = np.abs(fwd - bwd)
            k = int(np.argmax(gap))
            if gap[k] > best[0]:
                witness = TangentVec(ChartPoint(chart, float(x1[k]), float(x2[k])),
                                     float(e1[k]), float(e2[k]))
                best = (float(gap[k]), witness)
        return best

    def validate(self, n_base=32, n_fiber=64):
        """Grid validation at load time; raises MetricValidationError."""
        fails = []
        for chart in (Chart.NORTH, Chart.SOUTH):
            x1, x2, e1, e2 = _validation_grid(n_base, n_fiber)
            with np.errstate(invalid="ignore", divide="ignore"):
                f = np.asarray(self.norm_values(chart, x1, x2, e1, e2))
            if not np.all(np.isfinite(f)) or np.any(f <= 0.0):
                k = int(np.argmin(f))
                fails.append(f"non-positive F={f[k]:.3e} at {chart.value} "
                             f"x=({x1[k]:.3f},{x2[k]:.3f})")
                continue
            lam = 1.7219368581839493  # pi - sqrt(2), an arbitrary scale probe
            fl = np.asarray(self.norm_values(chart, x1, x2, lam * e1, lam * e2))
            hom = np.max(np.abs(fl - lam * f) / (lam * f))
            if hom > 1e-10:
                fails.append(f"homogeneity violation {hom:.3e} on {chart.value}")
            _, _, _, g11, g12, g22 = self.fundamental_values(chart, x1, x2, e1, e2)
            tr = np.asarray(g11 + g22)
            det = np.asarray(g11 * g22 - g12 * g12)
            disc = np.sqrt(np.maximum(tr * tr / 4.0 - det, 0.0))
            eig_min = tr / 2.0 - disc
            if np.any(eig_min <= CONVEXITY_FLOOR):
                k = int(np.argmin(eig_min))
                fails.append(
                    f"fundamental tensor eigenvalue {eig_min[k]:.3e} <= "
                    f"{CONVEXITY_FLOOR} at {chart.value} x=({x1[k]:.3f},{x2[k]:.3f})")
            wind_fail = self._validate_wind(chart, x1, x2)
            if wind_fail:
                fails.append(wind_fail)
        if fails:
            raise MetricValidationError("; ".join(fails))
        return True

    def _validate_wind(self, chart, x1, x2):
        return None


def _validation_grid(n_base, n_fiber):
    """Disk grid of base points paired with fiber directions, flattened."""
    g = np.linspace(-1.45, 1.45, n_base)
    xx, yy = np.meshgrid(g, g)
    mask = xx ** 2 + yy ** 2 <= R_SWITCH ** 2 - 0.01
    xs, ys = xx[mask], yy[mask]
    ang = np.linspace(0.0, 2.0 * np.pi, n_fiber, endpoint=False)
    x1 = np.repeat(xs, n_fiber)
    x2 = np.repeat(ys, n_fiber)
    e1 = np.tile(np.cos(ang), xs.size)
    e2 = np.tile(np.sin(ang), xs.size)
    return x1, x2, e1, e2


@dataclass
class Jet:
    """Derivatives of F at one tangent vector (y to third order, x to second)."""

    value: float
    d_y: np.ndarray     # (2,)
    d_yy: np.ndarray    # (2, 2)
    d_yyy: np.ndarray   # (2, 2, 2), symmetric
    d_x: np.ndarray     # (2,)
    d_xx: np.ndarray    # (2, 2)
    d_xy: np.ndarray    # (2, 2): d2 F / dy_i dx_j


class NavigationMetric(FinslerMetric):
    """Randers norm from navigation data (conformal factor, wind field)."""

    def conformal(self, chart, x1, x2):
        raise NotImplementedError

    def wind(self, chart, x1, x2):
        raise NotImplementedError

    def _norm(self, chart, x1, x2, y1, y2):
        c = self.conformal(chart, x1, x2)
        w1, w2 = self.wind(chart, x1, x2)
        c2 = c * c
        hyy = c2 * (y1 * y1 + y2 * y2)
        w0 = c2 * (w1 * y1 + w2 * y2)
        lam = 1.0 - c2 * (w1 * w1 + w2 * w2)
        return (sqrt(lam * hyy + w0 * w0) - w0) / lam

    def navigation_data(self, p: ChartPoint):
        """(c, (W1, W2)) at a point, as plain floats."""
        c = float(self.conformal(p.chart, p.x1, p.x2))
        w1, w2 = self.wind(p.chart, p.x1, p.x2)
        return c, (float(np.asarray(w1)), float(np.asarray(w2)))

    def _validate_wind(self, chart, x1, x2):
        c = np.asarray(self.conformal(chart, x1, x2))
        w1, w2 = self.wind(chart, x1, x2)
        wn = c * np.sqrt(np.asarray(w1) ** 2 + np.asarray(w2) ** 2)
        m = float(np.max(wn))
        if m >= 1.0:
            return f"wind h-norm {m:.4f} >= 1 on {chart.value}"
        return None


class RoundMetric(NavigationMetric):
    """Unit-curvature round sphere in stereographic coordinates."""

    kind = "round"

    def conformal(self, chart, x1, x2):
        return _round_conformal(x1, x2)

    def wind(self, chart, x1, x2):
        z = 0.0 * x1
        return z, z

    def _norm(self, chart, x1, x2, y1, y2):
        return _round_conformal(x1, x2) * sqrt(y1 * y1 + y2 * y2)


class ZermeloMetric(NavigationMetric):
    """Round metric stirred by the rotational wind eps * (-x2, x1).

    The wind is the polar-axis Killing field written identically in both
    charts; for 0 < eps < 1 this is the classical non-reversible family
    with unit flag curvature (Katok's examples).
    """

    kind = "zermelo"

    def __init__(self, eps: float):
        if not (0.0 <= eps < 1.0):
            raise WindTooStrong(f"need 0 <= eps < 1, got {eps}")
        self.eps = float(eps)

    def describe(self):
        return {"kind": self.kind, "eps": self.eps}

    def conformal(self, chart, x1, x2):
        return _round_conformal(x1, x2)

    def wind(self, chart, x1, x2):
        return -self.eps * x2, self.eps * x1


class RandersMetric(NavigationMetric):
    """Navigation metric with user-supplied conformal factor and wind.

    Expressions are per chart; if the south versions are omitted the north
    formulas are reused verbatim, which is correct exactly for data with the
    symmetric form of the built-ins (rotational winds, radial conformal
    factors).  Chart compatibility is up to the config author and is probed
    by the chart-independence checks.
    """

    kind = "randers"

    def __init__(self, conformal, wind1=None, wind2=None,
                 conformal_south=None, wind1_south=None, wind2_south=None):
        self._conf = {Chart.NORTH: conformal,
                      Chart.SOUTH: conformal_south or conformal}
        self._w1 = {Chart.NORTH: wind1, Chart.SOUTH: wind1_south or wind1}
        self._w2 = {Chart.NORTH: wind2, Chart.SOUTH: wind2_south or wind2}

    def describe(self):
        return {
            "kind": self.kind,
            "conformal": self._conf[Chart.NORTH].source,
            "wind1": self._w1[Chart.NORTH].source if self._w1[Chart.NORTH] else "0",
            "wind2": self._w2[Chart.NORTH].source if self._w2[Chart.NORTH] else "0",
        }

    def conformal(self, chart, x1, x2):
        return self._conf[chart](x1, x2)

    def wind(self, chart, x1, x2):
        w1 = self._w1[chart](x1, x2) if self._w1[chart] is not None else 0.0 * x1
        w2 = self._w2[chart](x1, x2) if self._w2[chart] is not None else 0.0 * x1
        return w1, w2


# -- spec'd operation wrappers --------------------------------------------

def eval_F(metric: FinslerMetric, v: TangentVec) -> float:
    return metric.eval(v)


def fundamental_tensor(metric: FinslerMetric, v: TangentVec) -> np.ndarray:
    """2x2 fundamental tensor at (x, y); raises NotStronglyConvex."""
    if math.hypot(v.y1, v.y2) < MIN_VECTOR_NORM:
        raise ZeroVector("fundamental tensor needs a nonzero vector")
    p = v.point
    _, _, _, g11, g12, g22 = metric.fundamental_values(
        p.chart, p.x1, p.x2, v.y1, v.y2)
    g = np.array([[float(g11), float(g12)], [float(g12), float(g22)]])
    eig = np.linalg.eigvalsh(g)
    if eig[0] <= CONVEXITY_FLOOR:
        raise NotStronglyConvex(f"eigenvalue {eig[0]:.3e} at {v}")
    return g


def indicatrix_param(metric: FinslerMetric, p: ChartPoint, s: float) -> TangentVec:
    return metric.indicatrix(p, s)


def zermelo_to_randers(metric: NavigationMetric, p: ChartPoint):
    """Randers data (a_ij, b_i) of the navigation metric at a point.

    a_ij = (lam h_ij + W0_i W0_j) / lam^2 and b_i = -W0_i / lam, so that
    F(y) = sqrt(a(y,y)) + b(y).
    """
    c, (w1, w2) = metric.navigation_data(p)
    h = c * c * np.eye(2)
    w0 = h @ np.array([w1, w2])
    lam = 1.0 - (w1 * w1 + w2 * w2) * c * c
    if lam <= 0.0:
        raise WindTooStrong(f"|W|_h >= 1 at {p}")
    a = (lam * h + np.outer(w0, w0)) / lam ** 2
    b = -w0 / lam
    return a, b


def chart_independence_gap(metric: FinslerMetric, v: TangentVec) -> float:
    """Relative difference of F across the chart transition."""
    f0 = metric.eval(v)
    f1 = metric.eval(transition(v))
    return abs(f0 - f1) / f0


# -- config files ----------------------------------------------------------

_METRIC_KEYS = {
    "kind", "eps", "conformal", "wind1", "wind2",
    "conformal_south", "wind1_south", "wind2_south",
}


def load_metric_config(text: str, source: str = "<config>") -> FinslerMetric:
    """Parse the key-value metric config format.

    Lines are ``key = value`` with ``#`` comments; expression values are in
    the variables x1, x2.  Unknown keys and malformed lines raise
    ConfigParseError with position info.
    """
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        if "=" not in line:
            raise ConfigParseError("expected 'key = value'", lineno, 1)
        key, value = line.split("=", 1)
        column = len(key) - len(key.lstrip()) + 1
        key = key.strip()
        if key not in _METRIC_KEYS:
            raise ConfigParseError(f"unknown key {key!r}", lineno, column)
        if key in entries:
            raise ConfigParseError(f"duplicate key {key!r}", lineno, column)
        entries[key] = (value.strip(), lineno)
    if "kind" not in entries:
        raise ConfigParseError(f"missing required key 'kind' in {source}")
    kind, kind_line = entries.pop("kind")
    if kind == "round":
        _reject_extras(entries, kind)
        return RoundMetric()
    if kind == "zermelo":
        if "eps" not in entries:
            raise ConfigParseError("zermelo needs 'eps'", kind_line, 1)
        val, line = entries.pop("eps")
        try:
            eps = float(val)
        except ValueError:
            raise ConfigParseError(f"bad eps value {val!r}", line, 1) from None
        _reject_extras(entries, kind)
        return ZermeloMetric(eps)
    if kind == "randers":
        if "conformal" not in entries:
            raise ConfigParseError("randers needs 'conformal'", kind_line, 1)
        exprs = {}
        for key in list(entries):
            val, line = entries.pop(key)
            exprs[key] = parse_expression(val, line)
        return RandersMetric(
            conformal=exprs.get("conformal"),
            wind1=exprs.get("wind1"),
            wind2=exprs.get("wind2"),
            conformal_south=exprs.get("conformal_south"),
            wind1_south=exprs.get("wind1_south"),
            wind2_south=exprs.get("wind2_south"),
        )
    raise ConfigParseError(f"unknown kind {kind!r}", kind_line, 1)


def _reject_extras(entries, kind):
    for key, (_, line) in entries.items():
        raise ConfigParseError(f"key {key!r} not allowed for kind {kind!r}", line, 1)


def resolve_metric(spec: str, validate: bool = False) -> FinslerMetric:
    """CLI metric spec: 'round', 'zermelo:EPS', or a config file path."""
    if spec == "round":
        metric = RoundMetric()
    elif spec.startswith("zermelo:"):
        try:
            metric = ZermeloMetric(float(spec.split(":", 1)[1]))
        except ValueError:
            raise ConfigParseError(f"bad zermelo spec {spec!r}") from None
    else:
        with open(spec, "r", encoding="utf-8") as fh:
            metric = load_metric_config(fh.read(), source=spec)
    if validate:
        metric.validate()
    return metric
