"""Two-chart stereographic atlas on the 2-sphere.

Both charts use the same transition map x -> x / |x|^2, which is an
involution on the punctured plane.  The map reverses the plane orientation,
so the south chart is negatively oriented with respect to the surface; code
that needs a global orientation multiplies by :func:`orientation_sign`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import OriginNotInOverlap

R_SWITCH = 1.5          # chart validity radius
SWITCH_RADIUS = 1.2     # flow hands a trajectory to the other chart here
TWO_PI = 2.0 * math.pi


class Chart(str, Enum):
    NORTH = "north"
    SOUTH = "south"


def other_chart(chart: Chart) -> Chart:
    return Chart.SOUTH if chart == Chart.NORTH else Chart.NORTH


def orientation_sign(chart: Chart) -> float:
    """+1 on the north chart, -1 on the south chart."""
    return 1.0 if chart == Chart.NORTH else -1.0


@dataclass(frozen=True)
class ChartPoint:
    chart: Chart
    x1: float
    x2: float

    @property
    def r(self) -> float:
        return math.hypot(self.x1, self.x2)


@dataclass(frozen=True)
class TangentVec:
    point: ChartPoint
    y1: float
    y2: float


@dataclass(frozen=True)
class SigmaPoint:
    """Point of the unit tangent bundle: base point plus fiber angle."""

    point: ChartPoint
    s: float

    def wrapped(self) -> "SigmaPoint":
        return SigmaPoint(self.point, self.s % TWO_PI)


def transition_point(p: ChartPoint) -> ChartPoint:
    r2 = p.x1 * p.x1 + p.x2 * p.x2
    if r2 == 0.0:
        raise OriginNotInOverlap("chart origin has no image in the other chart")
    return ChartPoint(other_chart(p.chart), p.x1 / r2, p.x2 / r2)


def transition_jacobian(x1, x2):
    """Jacobian of x -> x/|x|^2 (works on scalars or arrays)."""
    r2 = x1 * x1 + x2 * x2
    j11 = (x2 * x2 - x1 * x1) / (r2 * r2)
    j22 = -j11
    j12 = -2.0 * x1 * x2 / (r2 * r2)
    return j11, j12, j12, j22


def transition(v: TangentVec) -> TangentVec:
    """Push a tangent vector through the chart transition."""
    p = v.point
    q = transition_point(p)
    j11, j12, j21, j22 = transition_jacobian(p.x1, p.x2)
    return TangentVec(q, j11 * v.y1 + j12 * v.y2, j21 * v.y1 + j22 * v.y2)


def transition_sigma(u: SigmaPoint) -> SigmaPoint:
    """Express a unit-bundle point in the other chart.

    The fiber angle transforms by pushing the direction vector forward;
    the norm plays no role since directions are rays.
    """
    p = u.point
    q = transition_point(p)
    j11, j12, j21, j22 = transition_jacobian(p.x1, p.x2)
    e1, e2 = math.cos(u.s), math.sin(u.s)
    w1 = j11 * e1 + j12 * e2
    w2 = j21 * e1 + j22 * e2
    return SigmaPoint(q, math.atan2(w2, w1) % TWO_PI)


def sigma_in_chart(u: SigmaPoint, chart: Chart) -> SigmaPoint:
    return u if u.point.chart == chart else transition_sigma(u)


# -- embedding into R^3 ---------------------------------------------------
#
# Coordinate convention only: the north chart origin sits at (0, 0, 1).
# Used for chart-independent distance measurements and report output.

def embed(chart: Chart, x1, x2):
    """Map chart coordinates to the unit sphere in R^3 (array friendly)."""
    r2 = x1 * x1 + x2 * x2
    d = 1.0 + r2
    z = (1.0 - r2) / d
    if chart == Chart.SOUTH:
        z = -z
    return 2.0 * x1 / d, 2.0 * x2 / d, z


def embed_point(p: ChartPoint) -> np.ndarray:
    return np.array(embed(p.chart, p.x1, p.x2))


def unembed(v, prefer: Chart | None = None) -> ChartPoint:
    """Inverse of :func:`embed`, choosing the chart where |x| <= 1 unless
    a preferred chart is given and usable."""
    a, b, c = float(v[0]), float(v[1]), float(v[2])
    n = math.sqrt(a * a + b * b + c * c)
    a, b, c = a / n, b / n, c / n
    chart = prefer
    if chart is None:
        chart = Chart.NORTH if c >= 0.0 else Chart.SOUTH
    denom = (1.0 + c) if chart == Chart.NORTH else (1.0 - c)
    if abs(denom) < 1e-12:
        chart = other_chart(chart)
        denom = (1.0 + c) if chart == Chart.NORTH else (1.0 - c)
    return ChartPoint(chart, a / denom, b / denom)


def embed_jacobian(chart: Chart, x1: float, x2: float) -> np.ndarray:
    """3x2 differential of the embedding; conformal with factor 2/(1+|x|^2)."""
    r2 = x1 * x1 + x2 * x2
    d = 1.0 + r2
    j = np.array([
        [2.0 / d - 4.0 * x1 * x1 / d ** 2, -4.0 * x1 * x2 / d ** 2],
        [-4.0 * x1 * x2 / d ** 2, 2.0 / d - 4.0 * x2 * x2 / d ** 2],
        [-4.0 * x1 / d ** 2, -4.0 * x2 / d ** 2],
    ])
    if chart == Chart.SOUTH:
        j[2] = -j[2]
    return j


def push_to_sphere(v: TangentVec) -> tuple[np.ndarray, np.ndarray]:
    """Embed a tangent vector: returns (base point, tangent) in R^3."""
    p = v.point
    j = embed_jacobian(p.chart, p.x1, p.x2)
    return embed_point(p), j @ np.array([v.y1, v.y2])


def pull_from_sphere(p: ChartPoint, w) -> tuple[float, float]:
    """Chart components of a tangent vector given in R^3 at embed(p)."""
    j = embed_jacobian(p.chart, p.x1, p.x2)
    scale = (1.0 + p.x1 ** 2 + p.x2 ** 2) / 2.0
    v = scale * scale * (j.T @ np.asarray(w, dtype=float))
    return float(v[0]), float(v[1])


def chordal_distance(p: ChartPoint, q: ChartPoint) -> float:
    """Chart-independent distance proxy: chordal distance in R^3."""
    return float(np.linalg.norm(embed_point(p) - embed_point(q)))


def angle_difference(a: float, b: float) -> float:
    d = (a - b) % TWO_PI
    return min(d, TWO_PI - d)


def sigma_distance(u: SigmaPoint, v: SigmaPoint) -> float:
    """Coordinate distance on the unit bundle, fiber angle on the circle.

    The second point is converted into the chart of the first; if it sits
    exactly at that chart's origin antipode the base separation alone
    already dominates any reasonable threshold.
    """
    base = chordal_distance(u.point, v.point)
    if v.point.chart != u.point.chart:
        try:
            v = transition_sigma(v)
        except OriginNotInOverlap:
            return base + math.pi
    return base + angle_difference(u.s, v.s)


def canonical_sigma(u: SigmaPoint) -> SigmaPoint:
    """Prefer the chart where the base point lies inside the unit disk."""
    if u.point.r > 1.0:
        return transition_sigma(u).wrapped()
    return u.wrapped()
