import pytest

from qmeter.analytic import VARIANCE_C
from qmeter.calibration import estimator_ratios, freeze, variance_ratios
from qmeter.montecarlo import ESTIMATOR_C


def test_freeze():
    assert freeze(4.2) == 4.5
    assert freeze(4.5) == 5.0
    assert freeze(0.01, 0.1) == pytest.approx(0.1)


@pytest.mark.parametrize("g2", [0.3, 1.0])
def test_frozen_constants_dominate(g2):
    for k, v in variance_ratios(g2).items():
        assert v < VARIANCE_C[k], k
    for k, v in estimator_ratios(g2).items():
        assert v < ESTIMATOR_C[k], k
