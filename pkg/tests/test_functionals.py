import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qmeter.functionals import (
    compute_functionals,
    increment_decomposition_check,
    sample_ensemble,
    z_via_ito_parts,
)
from qmeter.model import GridMismatchError, ModelParams, ResolutionError, TimeGrid
from qmeter.paths import BrownianPath, sample_path


def test_decoupled_full_period_vanishes():
    g = TimeGrid(2 * math.pi, 4000)
    f = compute_functionals(sample_path(g, 0, 0), ModelParams(1.0, 0.0, 0.3))
    assert abs(f.z[-1]) < 1e-6
    # deterministic Z_t = (e^{it} - 1)/i
    np.testing.assert_allclose(f.z, (np.exp(1j * g.times) - 1) / 1j, atol=1e-6)


def test_zero_alpha_gives_zero_phase():
    f = compute_functionals(sample_path(TimeGrid(1.0, 200), 1, 0), ModelParams(1.0, 0.5, 0.0))
    assert np.all(f.g == 0)


def test_against_independent_quadrature():
    p = ModelParams(1.3, 0.7, 0.2 + 0.1j)
    path = sample_path(TimeGrid(2.0, 2000), 3, 0)
    f = compute_functionals(path, p)
    e = np.exp(1j * (p.omega * path.times + p.gamma * path.w))
    dt = path.grid.dt
    z = np.concatenate([[0], np.cumsum((e[1:] + e[:-1]) * dt / 2)])
    np.testing.assert_allclose(f.z, z, atol=1e-12)
    np.testing.assert_allclose(f.phi, p.omega * path.times + p.gamma * path.w)
    y1 = np.concatenate([[0], np.cumsum((z[1:] + z[:-1]) * dt / 2)])
    y0 = np.concatenate([[0], np.cumsum((np.abs(z[1:]) ** 2 + np.abs(z[:-1]) ** 2) * dt / 2)])
    np.testing.assert_allclose(f.y1, y1, atol=1e-6)
    np.testing.assert_allclose(f.y0, y0, atol=1e-6)
    assert np.all(np.diff(f.y0) >= 0)
    assert np.all(np.abs(f.z) <= path.times + 1e-12)


def test_ito_route_converges():
    p = ModelParams(1.0, 0.8, 0.1)
    errs = []
    for n in (500, 8000):
        path = sample_path(TimeGrid(1.0, n), 11, 0)
        errs.append(np.max(np.abs(compute_functionals(path, p).z - z_via_ito_parts(path, p))))
    # O(sqrt(dt)): at least a factor 2 smaller after 16x refinement, and small in absolute terms
    assert errs[1] < errs[0] / 2
    assert errs[1] < 5 * math.sqrt(1 / 8000)


@given(st.floats(0.1, 5), st.floats(0.0, 2), st.integers(0, 1000))
def test_pathwise_invariants(omega, gamma, seed):
    p = ModelParams(omega, gamma, 0.1)
    path = sample_path(TimeGrid(1.0, 100), seed, 0)
    f = compute_functionals(path, p)
    assert np.all(np.abs(f.z) <= f.times * (1 + 1e-12))
    assert np.all(np.diff(f.y0) >= -1e-15)
    np.testing.assert_allclose(np.abs(f.renewal), np.abs(f.z), rtol=1e-12, atol=1e-15)
    # W -> -W conjugates nothing in general but keeps |Z| bounded by t
    fn = compute_functionals(path.negated(), p)
    assert np.all(np.abs(fn.z) <= f.times * (1 + 1e-12))


def test_ensemble_matches_single_path_and_is_thread_invariant():
    p = ModelParams(1.0, 0.5, 0.2)
    g = TimeGrid(2.0, 400)
    ens = sample_ensemble(p, g, [1.0, 2.0], 40, 8, workers=1)
    ens2 = sample_ensemble(p, g, [1.0, 2.0], 40, 8, workers=3, block=7)
    for k in ("z", "y1", "y0", "g", "w"):
        np.testing.assert_array_equal(getattr(ens, k), getattr(ens2, k))
    f = compute_functionals(sample_path(g, 8, 17), p)
    np.testing.assert_allclose(ens.at(2.0)["z"][17], f.z[-1], atol=1e-13)
    np.testing.assert_allclose(ens.at(1.0)["y0"][17], f.y0[200], rtol=1e-11)
    assert ens.at(2.0)["w"][17] == f.path.w[-1]
    with pytest.raises(GridMismatchError):
        ens.at(1.5)


def test_ensemble_guards():
    with pytest.raises(ResolutionError):
        sample_ensemble(ModelParams(1.0, 0.1), TimeGrid(10.0, 10), [10.0], 2, 0)
    with pytest.raises(GridMismatchError):
        sample_ensemble(ModelParams(1.0, 0.1), TimeGrid(1.0, 10), [0.55], 2, 0)


def test_increment_decomposition():
    p = ModelParams(1.0, 0.6, 0.1)
    r = increment_decomposition_check(p, TimeGrid(2.0, 200), 0.7, 1.9, 2000, 5)
    assert r["passed"], r
    r0 = increment_decomposition_check(ModelParams(1.0, 0.0, 0.1), TimeGrid(2.0, 200), 0.7, 1.9, 1000, 5)
    assert r0["passed"]
    with pytest.raises(ValueError):
        increment_decomposition_check(p, TimeGrid(2.0, 200), 0.7, 1.9, 10, 5)


def test_csv(tmp_path):
    f = compute_functionals(sample_path(TimeGrid(1.0, 5), 0, 0), ModelParams(1, 0.1, 0.1))
    with open(tmp_path / "p.csv", "w") as fp:
        f.to_csv(fp)
    rows = (tmp_path / "p.csv").read_text().splitlines()
    assert rows[0] == "t,W,phi,Re Z,Im Z,Re Y1,Im Y1,Y0,G"
    assert len(rows) == 7


def test_bad_path_shape():
    with pytest.raises(ValueError):
        BrownianPath(TimeGrid(1.0, 4), np.zeros(3), 0, 0)
