import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finsler.charts import Chart, ChartPoint, TangentVec, transition
from finsler.errors import (
    ConfigParseError,
    MetricValidationError,
    NotStronglyConvex,
    WindTooStrong,
    ZeroVector,
)
from finsler.expressions import parse_expression
from finsler.metrics import (
    RandersMetric,
    RoundMetric,
    ZermeloMetric,
    chart_independence_gap,
    eval_F,
    fundamental_tensor,
    indicatrix_param,
    load_metric_config,
    resolve_metric,
    zermelo_to_randers,
)

from _oracles import fd_norm_jet, navigation_norm_bisect

N = Chart.NORTH
S = Chart.SOUTH


class TestEvalF:
    def test_round_at_origin(self, round_metric):
        v = TangentVec(ChartPoint(N, 0.0, 0.0), 1.0, 0.0)
        assert eval_F(round_metric, v) == pytest.approx(2.0)

    def test_round_off_origin(self, round_metric):
        v = TangentVec(ChartPoint(N, 1.0, 0.0), 0.0, 3.0)
        assert eval_F(round_metric, v) == pytest.approx(3.0)

    def test_zermelo_is_asymmetric(self, zermelo03):
        p = ChartPoint(N, 1.0, 0.0)
        up = eval_F(zermelo03, TangentVec(p, 0.0, 1.0))
        down = eval_F(zermelo03, TangentVec(p, 0.0, -1.0))
        assert abs(up - down) > 0.1

    def test_against_bisection_oracle(self, zermelo03, rng):
        for _ in range(40):
            chart = N if rng.random() < 0.5 else S
            p = ChartPoint(chart, float(rng.uniform(-1.2, 1.2)),
                           float(rng.uniform(-1.2, 1.2)))
            y1, y2 = rng.normal(size=2)
            f = eval_F(zermelo03, TangentVec(p, y1, y2))
            oracle = navigation_norm_bisect(zermelo03, p, y1, y2)
            assert f == pytest.approx(oracle, rel=1e-10)

    def test_zero_vector_rejected(self, round_metric):
        with pytest.raises(ZeroVector):
            eval_F(round_metric, TangentVec(ChartPoint(N, 0.0, 0.0), 0.0, 1e-15))


class TestHomogeneity:
    @settings(max_examples=150, deadline=None)
    @given(st.floats(-1.3, 1.3), st.floats(-1.3, 1.3),
           st.floats(-2, 2), st.floats(-2, 2), st.floats(0.01, 10.0))
    def test_positive_homogeneity(self, x1, x2, y1, y2, lam):
        if math.hypot(y1, y2) < 1e-3:
            y1 = 1.0
        metric = ZermeloMetric(0.3)
        p = ChartPoint(N, x1, x2)
        f1 = eval_F(metric, TangentVec(p, y1, y2))
        f2 = eval_F(metric, TangentVec(p, lam * y1, lam * y2))
        assert abs(f2 - lam * f1) / (lam * f1) <= 1e-10

    def test_sampled_homogeneity_bulk(self, zermelo03, rng):
        x1, x2 = rng.uniform(-1.2, 1.2, size=(2, 1000))
        ang = rng.uniform(0, 2 * np.pi, 1000)
        lam = rng.uniform(0.01, 10.0, 1000)
        e1, e2 = np.cos(ang), np.sin(ang)
        f = np.asarray(zermelo03.norm_values(N, x1, x2, e1, e2))
        fl = np.asarray(zermelo03.norm_values(N, x1, x2, lam * e1, lam * e2))
        assert np.max(np.abs(fl - lam * f) / (lam * f)) <= 1e-10


class TestChartIndependence:
    def test_overlap_annulus(self, zermelo03, rng):
        worst = 0.0
        for _ in range(200):
            r = rng.uniform(1 / 1.5 + 0.01, 1.49)
            phi = rng.uniform(0, 2 * np.pi)
            p = ChartPoint(N if rng.random() < 0.5 else S,
                           float(r * np.cos(phi)), float(r * np.sin(phi)))
            y1, y2 = rng.normal(size=2)
            if math.hypot(y1, y2) < 1e-3:
                y1 = 1.0
            worst = max(worst, chart_independence_gap(
                zermelo03, TangentVec(p, y1, y2)))
        assert worst <= 1e-11

    def test_dilation_wind_config_is_chart_consistent(self, dilation_randers):
        v = TangentVec(ChartPoint(N, 1.1, -0.3), 0.7, 0.4)
        assert chart_independence_gap(dilation_randers, v) <= 1e-11


class TestFundamentalTensor:
    def test_round_origin(self, round_metric):
        g = fundamental_tensor(round_metric,
                               TangentVec(ChartPoint(N, 0.0, 0.0), 0.3, 0.9))
        assert np.allclose(g, 4.0 * np.eye(2), atol=1e-12)

    def test_randers_zero_wind_reduces_to_conformal(self):
        metric = RandersMetric(conformal=parse_expression("2/(1+x1^2+x2^2)"))
        p = ChartPoint(N, 0.4, -0.6)
        c = 2.0 / (1.0 + p.x1 ** 2 + p.x2 ** 2)
        for ang in (0.0, 1.0, 2.5):
            g = fundamental_tensor(metric, TangentVec(p, math.cos(ang), math.sin(ang)))
            assert np.allclose(g, c * c * np.eye(2), atol=1e-12)

    def test_euler_identities(self, zermelo03, rng):
        for _ in range(50):
            p = ChartPoint(N, float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)))
            y = rng.normal(size=2)
            if np.hypot(*y) < 1e-3:
                y = np.array([1.0, 0.0])
            v = TangentVec(p, float(y[0]), float(y[1]))
            g = fundamental_tensor(zermelo03, v)
            f = eval_F(zermelo03, v)
            assert abs(y @ g @ y - f * f) / (f * f) <= 1e-9
            _, f1, f2 = zermelo03.norm_grad_y(N, p.x1, p.x2, v.y1, v.y2)
            assert abs(float(f1) * y[0] + float(f2) * y[1] - f) / f <= 1e-9

    def test_positive_definite_and_y_dependent(self, zermelo03):
        p = ChartPoint(N, 1.0, 0.0)
        g1 = fundamental_tensor(zermelo03, TangentVec(p, 1.0, 0.0))
        g2 = fundamental_tensor(zermelo03, TangentVec(p, 0.0, 1.0))
        assert np.linalg.eigvalsh(g1)[0] > 0
        assert not np.allclose(g1, g2, atol=1e-6)

    def test_matches_differencing_of_squared_norm(self, zermelo03):
        p = ChartPoint(N, 1.0, 0.0)
        v = TangentVec(p, 1.0, 0.0)
        g = fundamental_tensor(zermelo03, v)

        class Sq:
            def norm_values(self, chart, x1, x2, y1, y2):
                f = zermelo03.norm_values(chart, x1, x2, y1, y2)
                return 0.5 * f * f

        grad, hess, _ = fd_norm_jet(Sq(), p, v.y1, v.y2, h=1e-4)
        assert np.allclose(g, hess, atol=1e-6)

    def test_not_strongly_convex_detected(self):
        class Degenerate(RoundMetric):
            def _norm(self, chart, x1, x2, y1, y2):
                # 1-homogeneous but with a flat indicatrix direction
                from finsler.ad import sqrt
                return sqrt(y1 * y1 + 1e-12 * y2 * y2)

        with pytest.raises(NotStronglyConvex):
            fundamental_tensor(Degenerate(),
                               TangentVec(ChartPoint(N, 0.0, 0.0), 1.0, 0.0))


class TestNavigationData:
    def test_zero_wind_gives_conformal_norm(self):
        metric = RandersMetric(conformal=parse_expression("2/(1+x1^2+x2^2)"))
        p = ChartPoint(N, 0.3, 0.4)
        a, b = zermelo_to_randers(metric, p)
        c = 2.0 / (1.0 + 0.25)
        assert np.allclose(a, c * c * np.eye(2), atol=1e-14)
        assert np.allclose(b, 0.0, atol=1e-14)

    def test_lambda_at_reference_point(self, zermelo03):
        p = ChartPoint(N, 1.0, 0.0)
        c, (w1, w2) = zermelo03.navigation_data(p)
        wh2 = c * c * (w1 * w1 + w2 * w2)
        assert wh2 == pytest.approx(0.09)
        a, b = zermelo_to_randers(zermelo03, p)
        f_direct = eval_F(zermelo03, TangentVec(p, 0.4, 1.1))
        y = np.array([0.4, 1.1])
        f_randers = math.sqrt(y @ a @ y) + b @ y
        assert f_randers == pytest.approx(f_direct, rel=1e-12)

    def test_navigation_identity_residual(self, zermelo03, rng):
        for _ in range(100):
            p = ChartPoint(N, float(rng.uniform(-1.2, 1.2)),
                           float(rng.uniform(-1.2, 1.2)))
            y1, y2 = rng.normal(size=2)
            if math.hypot(y1, y2) < 1e-3:
                y1 = 1.0
            f = eval_F(zermelo03, TangentVec(p, y1, y2))
            c, (w1, w2) = zermelo03.navigation_data(p)
            res = c * c * ((y1 / f - w1) ** 2 + (y2 / f - w2) ** 2) - 1.0
            assert abs(res) <= 1e-10

    def test_wind_too_strong_rejected(self):
        with pytest.raises(WindTooStrong):
            ZermeloMetric(1.0)
        strong = RandersMetric(
            conformal=parse_expression("2/(1+x1^2+x2^2)"),
            wind1=parse_expression("0.9 + x1 - x1"),
            wind2=parse_expression("0.9 + x2 - x2"))
        with pytest.raises(MetricValidationError):
            strong.validate()


class TestIndicatrix:
    def test_round_origin(self, round_metric):
        v = indicatrix_param(round_metric, ChartPoint(N, 0.0, 0.0), 0.0)
        assert (v.y1, v.y2) == (pytest.approx(0.5), pytest.approx(0.0))

    def test_unit_norm_by_construction(self, zermelo03):
        p = ChartPoint(S, 0.7, -0.2)
        for s in np.linspace(0, 2 * np.pi, 64, endpoint=False):
            v = indicatrix_param(zermelo03, p, float(s))
            assert eval_F(zermelo03, v) == pytest.approx(1.0, abs=1e-14)

    def test_zermelo_indicatrix_not_centrally_symmetric(self, zermelo03):
        p = ChartPoint(N, 1.0, 0.0)
        gaps = []
        for s in np.linspace(0, 2 * np.pi, 16, endpoint=False):
            v = indicatrix_param(zermelo03, p, float(s))
            w = indicatrix_param(zermelo03, p, float(s) + math.pi)
            gaps.append(math.hypot(v.y1 + w.y1, v.y2 + w.y2))
        assert max(gaps) > 0.05


class TestReversibility:
    def test_round_is_reversible(self, round_metric):
        gap, _ = round_metric.reversibility_gap()
        assert gap == 0.0

    def test_zermelo_gap_scales_with_eps(self):
        gap3, _ = ZermeloMetric(0.3).reversibility_gap()
        gap1, _ = ZermeloMetric(0.1).reversibility_gap()
        assert gap3 > 0.3 * 0.5
        assert gap1 > 0.1 * 0.5
        assert gap3 > gap1


class TestJet:
    def test_jet_matches_central_differences(self, zermelo03):
        p = ChartPoint(N, 0.6, -0.3)
        v = TangentVec(p, 0.8, 0.5)
        jet = zermelo03.jet(v)
        grad_y, hess_y, grad_x = fd_norm_jet(zermelo03, p, v.y1, v.y2, h=1e-4)
        assert np.allclose(jet.d_y, grad_y, atol=1e-6)
        assert np.allclose(jet.d_yy, hess_y, atol=1e-6)
        assert np.allclose(jet.d_x, grad_x, atol=1e-6)
        assert np.allclose(jet.d_yyy, np.transpose(jet.d_yyy, (2, 1, 0)))

    def test_jet_mixed_block(self, zermelo03):
        p = ChartPoint(N, 0.6, -0.3)
        v = TangentVec(p, 0.8, 0.5)
        jet = zermelo03.jet(v)
        h = 1e-4

        def fy(i, dx1, dx2):
            d = [0.0, 0.0]
            d[i] = h
            up = float(zermelo03.norm_values(N, p.x1 + dx1, p.x2 + dx2,
                                             v.y1 + d[0], v.y2 + d[1]))
            dn = float(zermelo03.norm_values(N, p.x1 + dx1, p.x2 + dx2,
                                             v.y1 - d[0], v.y2 - d[1]))
            return (up - dn) / (2 * h)

        for i in range(2):
            for j in range(2):
                dx = [0.0, 0.0]
                dx[j] = h
                num = (fy(i, *dx) - fy(i, -dx[0], -dx[1])) / (2 * h)
                assert jet.d_xy[i][j] == pytest.approx(num, abs=1e-6)


class TestConfig:
    def test_round_and_zermelo_specs(self):
        assert resolve_metric("round").kind == "round"
        m = resolve_metric("zermelo:0.25")
        assert m.kind == "zermelo" and m.eps == 0.25

    def test_randers_config(self, tmp_path):
        cfg = tmp_path / "metric.cfg"
        cfg.write_text(
            "# dilation wind example\n"
            "kind = randers\n"
            "conformal = 2 / (1 + x1^2 + x2^2)\n"
            "wind1 = 0.2 * x1\n"
            "wind2 = 0.2 * x2\n"
            "wind1_south = -0.2 * x1\n"
            "wind2_south = -0.2 * x2\n")
        m = resolve_metric(str(cfg), validate=True)
        assert m.kind == "randers"

    def test_unknown_key_reports_line(self):
        with pytest.raises(ConfigParseError) as err:
            load_metric_config("kind = round\nwibble = 3\n")
        assert err.value.line == 2

    def test_missing_kind(self):
        with pytest.raises(ConfigParseError) as err:
            load_metric_config("eps = 0.3\n")
        assert "kind" in str(err.value)

    def test_bad_eps(self):
        with pytest.raises(ConfigParseError):
            load_metric_config("kind = zermelo\neps = fast\n")

    def test_expression_error_location_propagates(self):
        with pytest.raises(ConfigParseError) as err:
            load_metric_config("kind = randers\nconformal = 1 + * 2\n")
        assert err.value.line == 2

    def test_validate_passes_for_builtins(self, round_metric, zermelo03):
        assert round_metric.validate()
        assert zermelo03.validate()
