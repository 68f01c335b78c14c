import math

import numpy as np
import pytest

from finsler.charts import Chart, ChartPoint, SigmaPoint, transition_sigma
from finsler.coframe import (
    CoframeEngine,
    coframe_matrices,
    fiber_rotation_samples,
    grid_sigma_points,
    hilbert_form,
    spray,
    spray_duality,
    structure_grid,
)
from finsler.expressions import parse_expression
from finsler.global_maps import random_sigma_points
from finsler.metrics import RandersMetric, RoundMetric

from _oracles import (
    cartan_scalar_formula,
    conformal_gauss_curvature,
    fd_norm_jet,
    riemannian_rotation_form,
)

N = Chart.NORTH
S = Chart.SOUTH


@pytest.fixture(scope="module")
def round_engine(round_metric):
    return CoframeEngine(round_metric)


@pytest.fixture(scope="module")
def zermelo_engine(zermelo03):
    return CoframeEngine(zermelo03)


@pytest.fixture(scope="module")
def bumpy_riemannian():
    """Riemannian metric with non-constant curvature, north chart only."""
    return RandersMetric(
        conformal=parse_expression("2 / (1 + x1^2 + x2^2) * (1 + 0.05 * x1)"))


class TestHilbertForm:
    def test_round_origin(self, round_metric):
        w1 = hilbert_form(round_metric, SigmaPoint(ChartPoint(N, 0.0, 0.0), 0.0))
        assert np.allclose(w1, [2.0, 0.0, 0.0], atol=1e-14)

    def test_semibasic_for_all_metrics(self, round_metric, zermelo03,
                                       sample_points):
        for metric in (round_metric, zermelo03):
            for u in sample_points:
                assert hilbert_form(metric, u)[2] == 0.0

    def test_components_match_differencing(self, zermelo03):
        u = SigmaPoint(ChartPoint(N, 1.0, 0.0), math.pi / 2.0)
        w1 = hilbert_form(zermelo03, u)
        e1, e2 = math.cos(u.s), math.sin(u.s)
        grad_y, _, _ = fd_norm_jet(zermelo03, u.point, e1, e2, h=1e-4)
        assert np.allclose(w1[:2], grad_y, atol=1e-7)


class TestSpray:
    def test_round_origin_has_no_turning(self, round_metric):
        x1 = spray(round_metric, SigmaPoint(ChartPoint(N, 0.0, 0.0), 0.0))
        assert np.allclose(x1, [0.5, 0.0, 0.0], atol=1e-14)

    def test_base_component_is_unit_velocity(self, zermelo03, sample_points):
        for u in sample_points:
            x1 = spray(zermelo03, u)
            v = zermelo03.indicatrix(u.point, u.s)
            assert x1[0] == pytest.approx(v.y1, abs=1e-13)
            assert x1[1] == pytest.approx(v.y2, abs=1e-13)

    def test_duality_on_random_samples(self, zermelo03, zermelo_engine, rng):
        us = random_sigma_points(rng, 20)
        for u in us:
            d = spray_duality(zermelo03, u, zermelo_engine)
            assert np.max(np.abs(d - np.array([1.0, 0.0, 0.0]))) <= 1e-8

    def test_round_spray_is_length_minimizing(self, round_metric):
        # variational oracle: perturbing a polyline between two points of the
        # flowed geodesic never shortens the F-length
        from finsler.flow import flow_many
        from _oracles import polyline_length

        u = SigmaPoint(ChartPoint(N, 0.1, -0.2), 0.8)
        batch = flow_many(round_metric, [u], 0.6)
        ts = np.linspace(0.0, 0.6, 17)
        ys, _ = batch.sample(ts)
        path = ys[:, 0, :2]
        base = polyline_length(path, round_metric, N)
        assert base == pytest.approx(0.6, abs=1e-3)
        rng = np.random.default_rng(5)
        for _ in range(12):
            bump = rng.normal(scale=3e-3, size=path.shape)
            bump[0] = bump[-1] = 0.0
            assert polyline_length(path + bump, round_metric, N) > base - 1e-9


class TestOmega2:
    def test_round_origin(self, round_engine):
        w2 = round_engine.omega2_form(SigmaPoint(ChartPoint(N, 0.0, 0.0), 0.0))
        assert np.allclose(w2, [0.0, 2.0, 0.0], atol=1e-14)

    def test_annihilates_flow_direction(self, round_metric, zermelo03, rng):
        for metric in (round_metric, zermelo03):
            eng = CoframeEngine(metric)
            for u in random_sigma_points(rng, 40):
                w2 = eng.omega2_form(u)
                x1 = spray(metric, u)
                assert abs(w2 @ x1) <= 1e-12

    def test_south_chart_orientation(self, round_engine):
        w2 = round_engine.omega2_form(SigmaPoint(ChartPoint(S, 0.0, 0.0), 0.0))
        assert np.allclose(w2, [0.0, -2.0, 0.0], atol=1e-14)


class TestOmega3:
    def test_round_matches_connection_form_oracle(self, round_metric,
                                                  round_engine):
        conf = lambda a, b: 2.0 / (1.0 + a * a + b * b)
        for (x1, x2, s) in [(0.0, 0.0, 0.0), (0.5, 0.2, 1.0), (-0.8, 0.3, 4.2),
                            (1.0, 0.0, 2.0)]:
            u = SigmaPoint(ChartPoint(N, x1, x2), s)
            w3 = round_engine.omega3_form(u)
            oracle = riemannian_rotation_form(conf, u)
            assert np.allclose(w3, oracle, atol=1e-8)

    def test_structure_equation_residual(self, zermelo_engine, rng):
        for u in random_sigma_points(rng, 10):
            res = zermelo_engine.structure_residuals(u)
            assert res["eq1"] <= 1e-6

    def test_fiber_integral_round(self, round_metric, round_engine):
        for p in (ChartPoint(N, 0.4, -0.3), ChartPoint(S, 0.9, 0.1)):
            s, c = fiber_rotation_samples(round_metric, p, engine=round_engine)
            r = abs(np.mean(c))
            assert r == pytest.approx(1.0, abs=1e-8)

    def test_south_chart_fiber_component_negative(self, round_engine):
        u = SigmaPoint(ChartPoint(S, 0.0, 0.0), 1.0)
        w3 = round_engine.omega3_form(u)
        assert w3[2] == pytest.approx(-1.0, abs=1e-9)


class TestInvariants:
    def test_round_is_riemannian_with_unit_curvature(self, round_engine, rng):
        for u in random_sigma_points(rng, 12):
            inv = round_engine.invariants(u)
            assert abs(inv.I) <= 1e-7
            assert abs(inv.J) <= 1e-7
            assert abs(inv.K - 1.0) <= 1e-6

    def test_zermelo_unit_curvature_nonriemannian(self, zermelo_engine):
        rng = np.random.default_rng(11)
        us = random_sigma_points(rng, 200)
        by_chart = {N: [], S: []}
        for u in us:
            by_chart[u.point.chart].append(u)
        i_max = 0.0
        for chart, group in by_chart.items():
            if not group:
                continue
            x1 = np.array([u.point.x1 for u in group])
            x2 = np.array([u.point.x2 for u in group])
            s = np.array([u.s for u in group])
            d = zermelo_engine.invariants_fields(chart, x1, x2, s)
            assert np.max(np.abs(d["K"] - 1.0)) <= 1e-5
            i_max = max(i_max, float(np.max(np.abs(d["I"]))))
        assert i_max > 0.01

    def test_cartan_scalar_closed_form_oracle(self, zermelo03, zermelo_engine,
                                              rng):
        for u in random_sigma_points(rng, 15):
            inv = zermelo_engine.invariants(u)
            assert inv.I == pytest.approx(cartan_scalar_formula(zermelo03, u),
                                          abs=1e-7)

    def test_nonkilling_wind_breaks_constant_curvature(self, dilation_randers):
        eng = CoframeEngine(dilation_randers)
        x1, x2, s = grid_sigma_points(N, 6, 6, 8, radius=1.0)
        d = eng.invariants_fields(N, x1, x2, s)
        assert np.max(np.abs(d["K"] - 1.0)) > 1e-2

    def test_riemannian_curvature_matches_conformal_oracle(self,
                                                           bumpy_riemannian):
        eng = CoframeEngine(bumpy_riemannian)
        conf = lambda a, b: 2.0 / (1.0 + a * a + b * b) * (1.0 + 0.05 * a)
        for (x1, x2, s) in [(0.2, -0.4, 1.2), (0.7, 0.5, 3.3), (0.0, 0.9, 0.4)]:
            inv = eng.invariants(SigmaPoint(ChartPoint(N, x1, x2), s))
            k_oracle = conformal_gauss_curvature(conf, x1, x2)
            assert abs(inv.I) <= 1e-7
            assert inv.K == pytest.approx(k_oracle, abs=1e-5)

    def test_chart_independence(self, zermelo_engine, rng):
        for _ in range(8):
            r = rng.uniform(0.75, 1.3)
            phi = rng.uniform(0, 2 * np.pi)
            u = SigmaPoint(ChartPoint(N, float(r * np.cos(phi)),
                                      float(r * np.sin(phi))),
                           float(rng.uniform(0, 2 * np.pi)))
            a = zermelo_engine.invariants(u)
            b = zermelo_engine.invariants(transition_sigma(u))
            assert abs(a.I - b.I) <= 1e-6
            assert abs(a.J - b.J) <= 1e-6
            assert abs(a.K - b.K) <= 1e-6


class TestBianchi:
    def test_round_all_coefficients_vanish(self, round_engine):
        u = SigmaPoint(ChartPoint(N, 0.4, 0.1), 1.7)
        coeffs, res, inv = round_engine.bianchi(u)
        for name in ("I2", "I3", "J2", "J3", "K1", "K2", "K3"):
            assert abs(getattr(coeffs, name)) <= 1e-6
        assert res["X1I_minus_J"] <= 1e-6

    def test_zermelo_flow_identities(self, zermelo_engine, rng):
        for u in random_sigma_points(rng, 5):
            coeffs, res, inv = zermelo_engine.bianchi(u)
            assert res["X1I_minus_J"] <= 1e-5
            assert res["X1J_plus_K3_plus_KI"] <= 1e-5
            # constant curvature: the K row of the expansion vanishes
            assert abs(coeffs.K1) <= 1e-5
            assert abs(coeffs.K2) <= 1e-5
            assert abs(coeffs.K3) <= 1e-5


class TestStructureResiduals:
    def test_round_spot_grid(self, round_engine):
        x1, x2, s = grid_sigma_points(N, 4, 4, 8)
        d = round_engine.invariants_fields(N, x1, x2, s)
        for key in ("res_eq1", "res_eq2", "res_eq3"):
            assert np.max(d[key]) <= 1e-7

    def test_report_includes_all_properties(self, zermelo_engine,
                                            sample_points):
        res = zermelo_engine.structure_residuals(sample_points[1])
        for key in ("semibasic_w1", "semibasic_w2", "area_residual",
                    "curve_w1", "curve_w2", "prop3", "prop4", "eq1", "eq2",
                    "eq3"):
            assert res[key] <= 1e-6
        assert res["area_margin"] > 0.0

    def test_corrupted_omega2_detected(self, zermelo03):
        class Corrupted(CoframeEngine):
            def omega12(self, chart, x1, x2, s):
                p1, q1, p2, q2 = super().omega12(chart, x1, x2, s)
                return p1, q1, 1.1 * p2, 1.1 * q2

        bad = Corrupted(zermelo03)
        res = bad.structure_residuals(SigmaPoint(ChartPoint(N, 0.3, 0.1), 0.9))
        assert res["prop4"] > 1e-2

    def test_duality_of_frame(self, zermelo_engine, rng):
        for u in random_sigma_points(rng, 10):
            cf = zermelo_engine.coframe(u)
            fr = zermelo_engine.frame(u)
            m = cf.matrix() @ np.column_stack([fr.x1, fr.x2, fr.x3])
            assert np.max(np.abs(m - np.eye(3))) <= 1e-8


class TestOrientation:
    def test_flip_negates_w2_w3_fixes_w1(self, zermelo03, zermelo_engine,
                                         sample_points):
        flipped = CoframeEngine(zermelo03, flip_orientation=True)
        for u in sample_points[:4]:
            a = zermelo_engine.coframe(u)
            b = flipped.coframe(u)
            assert np.allclose(a.w1, b.w1, atol=1e-12)
            assert np.allclose(a.w2, -b.w2, atol=1e-9)
            assert np.allclose(a.w3, -b.w3, atol=1e-9)

    def test_flip_negates_cartan_and_landsberg(self, zermelo03, zermelo_engine):
        flipped = CoframeEngine(zermelo03, flip_orientation=True)
        u = SigmaPoint(ChartPoint(N, 0.5, 0.2), 0.7)
        a = zermelo_engine.invariants(u)
        b = flipped.invariants(u)
        assert a.I == pytest.approx(-b.I, abs=1e-8)
        assert a.J == pytest.approx(-b.J, abs=1e-8)
        assert a.K == pytest.approx(b.K, abs=1e-8)


class TestGridSweep:
    def test_structure_grid_round_small(self, round_metric):
        rep = structure_grid(round_metric, 6, 6, 8)
        assert rep["structure_residual_max"] <= 1e-7
        assert rep["K_dev_max"] <= 1e-6
        assert rep["I_max_abs"] <= 1e-7

    def test_coframe_matrices_batched(self, zermelo03, zermelo_engine,
                                      sample_points):
        ms = coframe_matrices(zermelo_engine, sample_points)
        for k, u in enumerate(sample_points):
            assert np.allclose(ms[k], zermelo_engine.coframe(u).matrix(),
                               atol=1e-12)
