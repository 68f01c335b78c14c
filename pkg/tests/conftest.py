import numpy as np
import pytest

from finsler.charts import Chart, ChartPoint, SigmaPoint
from finsler.metrics import RandersMetric, RoundMetric, ZermeloMetric
from finsler.expressions import parse_expression


@pytest.fixture(scope="session")
def round_metric():
    return RoundMetric()


@pytest.fixture(scope="session")
def zermelo03():
    return ZermeloMetric(0.3)


@pytest.fixture(scope="session")
def zermelo01():
    return ZermeloMetric(0.1)


@pytest.fixture(scope="session")
def dilation_randers():
    """Randers metric with a non-Killing (dilation) wind: the negative
    control whose flag curvature is not constant."""
    return RandersMetric(
        conformal=parse_expression("2 / (1 + x1^2 + x2^2)"),
        wind1=parse_expression("0.3 * x1"),
        wind2=parse_expression("0.3 * x2"),
        wind1_south=parse_expression("-0.3 * x1"),
        wind2_south=parse_expression("-0.3 * x2"),
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


def sigma(chart, x1, x2, s) -> SigmaPoint:
    return SigmaPoint(ChartPoint(chart, x1, x2), s)


@pytest.fixture(scope="session")
def sample_points():
    return [
        sigma(Chart.NORTH, 0.0, 0.0, 0.0),
        sigma(Chart.NORTH, 0.5, 0.2, 0.7),
        sigma(Chart.NORTH, -0.3, 0.8, 2.4),
        sigma(Chart.SOUTH, 0.4, -0.1, 1.3),
        sigma(Chart.SOUTH, 0.9, 0.6, 5.1),
        sigma(Chart.NORTH, 1.1, -0.4, 3.9),
    ]
