import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qmeter.limits import (
    average_ratio_check,
    average_transform,
    endpoint_transform,
    gaussianity_check,
    laplace_estimate,
    limit_cf_check,
    real_average_transform,
    real_endpoint_transform,
    real_transform_check,
    scaled_z_samples,
    state_independence_check,
    wiener_scaling_check,
)
from qmeter.model import ModelParams
from qmeter.montecarlo import MCEstimate

SEED = 31
P = ModelParams(1.0, 0.5, 0.2)


@given(st.floats(0, 50), st.floats(1e-3, 20))
def test_transform_laws(lam, t):
    for f in (endpoint_transform, average_transform, real_endpoint_transform, real_average_transform):
        v = f(lam, t)
        assert 0 < v <= 1
        assert f(0.0, t) == 1.0
        assert f(lam + 0.1, t) <= v
    # complex transforms follow from the real ones by chi(lam) -> chi(lam/2)^2
    assert endpoint_transform(lam, t) == pytest.approx(real_endpoint_transform(lam / 2, t) ** 2, rel=1e-12)
    assert average_transform(lam, t) == pytest.approx(real_average_transform(lam / 2, t) ** 2, rel=1e-12)


def test_epsilon_guard():
    with pytest.raises(ValueError):
        scaled_z_samples(P, 1.0, 0.1, 10, SEED)
    with pytest.raises(ValueError):
        scaled_z_samples(P, 1.0, 0.0, 10, SEED)


@pytest.fixture(scope="module")
def ens():
    return scaled_z_samples(P, 1.0, 1e-3, 2000, SEED)


def test_scaled_moments_finite_epsilon():
    # at eps = 1e-2 the mean offset is still about 0.1; compare with the exact finite-eps moments
    e = scaled_z_samples(P, 1.0, 1e-2, 4000, SEED)
    assert MCEstimate.from_samples(e.z, e.dt).within(e.finite_mean)
    assert MCEstimate.from_samples(np.abs(e.z) ** 2, e.dt).within(e.finite_second_moment)
    assert e.limit_variance == pytest.approx(0.25 / abs(P.c) ** 2)
    assert e.finite_second_moment == pytest.approx(e.limit_variance + abs(e.finite_mean) ** 2, rel=0.05)


def test_scaled_moments(ens):
    assert abs(ens.finite_mean) < 0.04
    assert MCEstimate.from_samples(ens.z, ens.dt).within(ens.finite_mean)
    assert MCEstimate.from_samples(np.abs(ens.z) ** 2, ens.dt).within(ens.finite_second_moment)
    assert ens.finite_second_moment == pytest.approx(ens.limit_variance, rel=0.02)


def test_gaussianity(ens):
    r = gaussianity_check(ens)
    assert r.passed, r


def test_limit_transforms(ens):
    k2 = abs(P.kappa) ** 2
    rows = limit_cf_check(ens, [0.0, 0.5 / k2, 1 / k2, 2 / k2])
    assert [r.observable for r in rows[:2]] == ["N", "pointer"]
    assert rows[0].empirical.mean == 1.0 and rows[1].empirical.mean == 1.0
    assert all(r.ok for r in rows if r.observable == "N")
    r = average_ratio_check(ens)
    assert r["ratio"].mean == pytest.approx(0.5, abs=0.05)


def test_no_drive_transform_is_one():
    e = scaled_z_samples(ModelParams(1.0, 0.5, 0.0), 1.0, 1e-2, 20, SEED)
    assert all(r.empirical.mean == 1.0 and r.target == 1.0 for r in limit_cf_check(e, [0.5, 3.0]))


def test_real_transforms():
    rows = real_transform_check(1.0, [0.5, 1.0, 2.0], 4000, SEED)
    assert all(r.ok for r in rows)


def test_laplace_estimate():
    e = laplace_estimate([0.0, 1.0], math.log(2))
    assert e.mean == pytest.approx(0.75)


def test_state_independence():
    r = state_independence_check(P, 1.0, [1e-2], 5, 1000, SEED)
    assert r.differences[0].within(0.05)
    np.testing.assert_allclose(r.coupled, [0.05], rtol=1e-9)
    r = state_independence_check(P, 7.0, [0.1, 0.01], 5, 500, SEED)
    assert r.ok(), r
    with pytest.raises(ValueError):
        state_independence_check(P, 1.0, [1e-2], 0, 1000, SEED)


@pytest.mark.parametrize("eps", [4.0, 0.25])
def test_wiener_scaling(eps):
    r = wiener_scaling_check(P, 2.0, eps, 2000, SEED)
    assert r["passed"], r
    assert r["mean_scaled"] == pytest.approx(r["mean_original"], rel=0.1)
