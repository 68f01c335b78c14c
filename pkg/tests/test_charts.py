import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finsler.charts import (
    Chart,
    ChartPoint,
    SigmaPoint,
    chordal_distance,
    embed_jacobian,
    embed_point,
    orientation_sign,
    sigma_distance,
    transition,
    transition_point,
    transition_sigma,
    unembed,
)
from finsler.errors import OriginNotInOverlap
from finsler.metrics import RoundMetric, TangentVec


def test_transition_is_involution_on_unit_circle():
    p = ChartPoint(Chart.NORTH, 1.0, 0.0)
    q = transition_point(p)
    assert q.chart == Chart.SOUTH
    assert (q.x1, q.x2) == (1.0, 0.0)
    assert transition_point(q) == p


@settings(max_examples=200, deadline=None)
@given(st.floats(0.6, 1.5), st.floats(0.0, 2 * math.pi))
def test_transition_round_trip_in_overlap(r, phi):
    p = ChartPoint(Chart.NORTH, r * math.cos(phi), r * math.sin(phi))
    q = transition_point(transition_point(p))
    assert math.hypot(q.x1 - p.x1, q.x2 - p.x2) < 1e-13


@settings(max_examples=100, deadline=None)
@given(st.floats(0.3, 1.4), st.floats(0.0, 2 * math.pi),
       st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_tangent_transition_preserves_round_norm(r, phi, y1, y2):
    if abs(y1) + abs(y2) < 1e-3:
        y1 = 1.0
    metric = RoundMetric()
    v = TangentVec(ChartPoint(Chart.NORTH, r * math.cos(phi), r * math.sin(phi)),
                   y1, y2)
    w = transition(v)
    assert metric.eval(w) == pytest.approx(metric.eval(v), rel=1e-12)


def test_transition_at_origin_rejected():
    with pytest.raises(OriginNotInOverlap):
        transition_point(ChartPoint(Chart.NORTH, 0.0, 0.0))


def test_embedding_consistency_across_charts():
    p = ChartPoint(Chart.NORTH, 0.8, -0.5)
    q = transition_point(p)
    assert np.allclose(embed_point(p), embed_point(q), atol=1e-15)


def test_embed_unembed_round_trip():
    for chart in (Chart.NORTH, Chart.SOUTH):
        p = ChartPoint(chart, 0.37, -0.91)
        v = embed_point(p)
        assert np.linalg.norm(v) == pytest.approx(1.0)
        q = unembed(v, prefer=chart)
        assert (q.x1, q.x2) == (pytest.approx(p.x1), pytest.approx(p.x2))


def test_embed_jacobian_is_conformal():
    p = ChartPoint(Chart.SOUTH, 0.4, 0.7)
    j = embed_jacobian(p.chart, p.x1, p.x2)
    gram = j.T @ j
    scale = (2.0 / (1.0 + p.x1 ** 2 + p.x2 ** 2)) ** 2
    assert np.allclose(gram, scale * np.eye(2), atol=1e-14)


def test_sigma_transition_pushes_direction():
    u = SigmaPoint(ChartPoint(Chart.NORTH, 1.0, 0.0), 0.0)
    w = transition_sigma(u)
    # at (1,0) the jacobian is diag(-1, 1) / 1: e(0) = (1,0) -> (-1,0)
    assert w.s == pytest.approx(math.pi)
    back = transition_sigma(w)
    assert back.s == pytest.approx(0.0, abs=1e-15)


def test_sigma_distance_same_point_across_charts():
    u = SigmaPoint(ChartPoint(Chart.NORTH, 0.9, 0.2), 1.1)
    v = transition_sigma(u)
    assert sigma_distance(u, v) < 1e-13
    far = SigmaPoint(ChartPoint(Chart.NORTH, 0.9, 0.2), 1.1 + math.pi)
    assert sigma_distance(u, far) == pytest.approx(math.pi)


def test_orientation_signs():
    assert orientation_sign(Chart.NORTH) == 1.0
    assert orientation_sign(Chart.SOUTH) == -1.0


def test_chordal_distance_antipodes():
    p = ChartPoint(Chart.NORTH, 0.0, 0.0)
    q = ChartPoint(Chart.SOUTH, 0.0, 0.0)
    assert chordal_distance(p, q) == pytest.approx(2.0)
