import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qmeter.model import (
    GridMismatchError,
    ModelParams,
    ResolutionError,
    TimeGrid,
    classify_regime,
    derived_constants,
    measurement_window,
)


def test_derived_constants_example():
    c, kappa = derived_constants(ModelParams(1.0, 0.1, 0.1))
    assert c == pytest.approx(complex(-0.005, 1.0), abs=1e-15)
    assert kappa == pytest.approx(0.01 / complex(-0.005, 1.0), rel=1e-14)


@given(
    st.floats(0.01, 100), st.floats(0.0, 10), st.floats(-2, 2), st.floats(-2, 2),
)
def test_c_kappa_identities(omega, gamma, ar, ai):
    p = ModelParams(omega, gamma, complex(ar, ai))
    assert p.c.real == pytest.approx(-gamma**2 / 2)
    assert p.c.imag == omega
    assert p.kappa * p.c == pytest.approx(omega * p.alpha * gamma, abs=1e-12)


@pytest.mark.parametrize("bad", [dict(omega=0, gamma=1), dict(omega=-1, gamma=1), dict(omega=1, gamma=-0.1),
                                 dict(omega=math.nan, gamma=1), dict(omega=1, gamma=1, alpha=complex(math.inf, 0))])
def test_invalid_params(bad):
    with pytest.raises(ValueError):
        ModelParams(**bad)


def test_rescaled():
    p = ModelParams(2.0, 0.5, 0.3j).rescaled(0.25)
    assert (p.omega, p.gamma, p.alpha) == (0.5, 0.25, 0.3j)
    with pytest.raises(ValueError):
        ModelParams(1, 1).rescaled(0)


def test_window_open_on_boundary():
    # t = 1e3 sits exactly on both window edges; the boundary is accepted.
    r = measurement_window(ModelParams(1.0, 0.1, 0.1), 1e3)
    assert r.window_ok == (True, True)
    assert r.window_open
    assert r.regime == "late" and r.separated


def test_window_closed():
    r = measurement_window(ModelParams(1.0, 1.0, 1.0), 1.0)
    assert not r.window_open
    assert r.window_ok[0] is False


def test_regimes():
    p = ModelParams(1.0, 0.01, 0.1)
    assert classify_regime(p, 0.01) == ("early", True)
    assert classify_regime(p, 100.0) == ("oscillatory", True)
    assert classify_regime(p, 1e5) == ("late", True)
    # omega t = pi is not a factor 10 from 1/omega.
    assert classify_regime(p, math.pi) == ("oscillatory", False)


def test_grid():
    g = TimeGrid(1.0, 4)
    assert g.dt == 0.25
    np.testing.assert_array_equal(g.times, [0, 0.25, 0.5, 0.75, 1.0])
    assert g.index_of(0.75) == 3
    with pytest.raises(GridMismatchError):
        g.index_of(0.3)
    assert g.prefix(2).t_end == 0.5
    with pytest.raises(GridMismatchError):
        TimeGrid.from_dt(1.0, 0.3)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)


def test_resolution_guard():
    g = TimeGrid(10.0, 10)
    with pytest.raises(ResolutionError):
        g.check_resolution(ModelParams(1.0, 0.1))
    TimeGrid(10.0, 100).check_resolution(ModelParams(1.0, 0.1))
