import math

import numpy as np
import pytest

from qmeter.fock import (
    FockSpace,
    TruncationError,
    block_error,
    displacement,
    limiting_time_average,
    pointer_slope,
    propagate_path,
    qsde_residual,
    time_averaged_N,
)
from qmeter.functionals import compute_functionals
from qmeter.model import ModelParams, TimeGrid
from qmeter.paths import sample_path

SPACE = FockSpace(64)


def test_space_invariants():
    sp = SPACE
    comm = sp.a @ sp.adag - sp.adag @ sp.a
    assert block_error(comm, np.eye(64), 63) < 1e-13
    H = sp.hamiltonian(ModelParams(1.0, 0.1, 0.3 + 0.2j))
    np.testing.assert_allclose(H, H.conj().T)
    np.testing.assert_array_equal(np.diag(sp.N).real, np.arange(64))
    with pytest.raises(TruncationError):
        sp.basis(64)


def test_displacement_identities():
    eye = np.eye(64)
    np.testing.assert_array_equal(displacement(SPACE, 0), eye)
    z = 0.8 - 0.5j
    k = SPACE.reliable_block(z)
    assert block_error(displacement(SPACE, z) @ displacement(SPACE, -z), eye, k) < 1e-10
    # D(z')D(z) = exp(-i Im(conj(z') z)) D(z' + z) at z' = 1, z = i
    z1, z2 = 1.0, 1j
    lhs = displacement(SPACE, z1) @ displacement(SPACE, z2)
    rhs = np.exp(-1j * (np.conj(z1) * z2).imag) * displacement(SPACE, z1 + z2)
    kk = min(SPACE.reliable_block(z) for z in (z1, z2, z1 + z2))
    assert block_error(lhs, rhs, kk) < 1e-8
    with pytest.raises(TruncationError):
        displacement(SPACE, 4.1)


def test_coherent_state_column():
    # D(z)|0> is the coherent state with Poisson amplitudes
    z = 0.7 + 0.3j
    col = displacement(SPACE, z)[:, 0]
    n = np.arange(20)
    ref = np.exp(-abs(z) ** 2 / 2) * z**n / np.sqrt([math.factorial(int(k)) for k in n])
    np.testing.assert_allclose(col[:20], ref, atol=1e-12)


def _functionals(p, t=5.0, n=5000, seed=3):
    return compute_functionals(sample_path(TimeGrid(t, n), seed, 0), p)


def test_non_demolition_propagator():
    p = ModelParams(1.0, 0.4, 0.0)
    prop = propagate_path(SPACE, _functionals(p), p, [0.0, 2.5, 5.0])
    for u in prop.U:
        assert np.count_nonzero(u - np.diag(np.diag(u))) == 0
    np.testing.assert_array_equal(prop.U[0], np.eye(64))
    for n in (0, 3, 10):
        np.testing.assert_allclose(prop.number_expectation(n), n, atol=1e-12)
        np.testing.assert_allclose(pointer_slope(prop, p, n), 2 * p.gamma * n, atol=1e-12)


def test_heisenberg_and_unitarity():
    p = ModelParams(1.0, 0.25, 0.2)
    prop = propagate_path(SPACE, _functionals(p, 20.0, 20000), p, np.arange(0, 21, 2.0))
    assert prop.heisenberg_error().max() < 1e-6
    assert prop.unitarity_error().max() < 1e-8
    # mean of <n|U*NU|n> is n + omega^2|alpha|^2 |Z_t|^2 for every path
    f = _functionals(p, 20.0, 20000)
    zt = f.z[np.arange(0, 20001, 2000)]
    np.testing.assert_allclose(prop.number_expectation(2), 2 + abs(p.alpha * p.omega) ** 2 * np.abs(zt) ** 2, atol=1e-9)


def test_truncation_guard():
    p = ModelParams(1.0, 0.0, 2.0)
    with pytest.raises(TruncationError):
        propagate_path(FockSpace(8), _functionals(p, 3.0, 300), p, [3.0])


def test_qsde_residual_order():
    p = ModelParams(1.0, 0.5, 0.2)
    r1 = qsde_residual(SPACE, p, 1.0, 1e-2, 1, 200, 5)
    r2 = qsde_residual(SPACE, p, 1.0, 1e-3, 1, 200, 5)
    # mean residual norm scales like dt; the dP^2-corrected one faster
    assert r1.mean_norm / r2.mean_norm == pytest.approx(10, rel=0.3)
    assert r1.mean_norm_corrected / r2.mean_norm_corrected > 20
    assert r2.norm_of_mean < r2.mean_norm


def test_time_average_example():
    p = ModelParams(1.0, 0.25, 0.2)
    ta = time_averaged_N(SPACE, p, 200 * 2 * math.pi, 3)
    assert ta.mean == pytest.approx(3.08, rel=0.02)
    assert ta.variance == pytest.approx(0.28, rel=0.02)
    assert (ta.predicted_mean, ta.predicted_variance) == pytest.approx((3.08, 0.28))


@pytest.mark.parametrize("n", [0, 2, 5])
def test_time_average_no_drive(n):
    ta = time_averaged_N(SPACE, ModelParams(1.0, 0.3, 0.0), 7.3, n)
    assert ta.mean == pytest.approx(n, abs=1e-12)
    assert ta.variance == pytest.approx(0, abs=1e-12)


def test_time_average_convergence():
    p = ModelParams(1.0, 0.25, 0.2)
    lim = limiting_time_average(SPACE, p)
    # whole periods: the oscillating terms cancel exactly, so the distance is zero up to rounding
    whole = [block_error(time_averaged_N(SPACE, p, k * 2 * math.pi, 0).operator, lim, 32) for k in (1, 5, 20)]
    assert max(whole) < 1e-10
    # off-period samples: strictly decreasing Frobenius distance, mixed term O(1/(omega T))
    ts = [(k + 0.5) * 2 * math.pi for k in range(1, 40)]
    frob = [np.linalg.norm((time_averaged_N(SPACE, p, T, 0).operator - lim)[:32, :32]) for T in ts]
    assert np.all(np.diff(frob) < 0)
    # the mean's mixed term is -2|alpha|^2 sin(omega T)/(omega T): sample where sin = 1
    tq = [(k + 0.25) * 2 * math.pi for k in range(1, 40)]
    err = [abs(time_averaged_N(SPACE, p, T, 1).mean - 1.08) for T in tq]
    slope = np.polyfit(np.log(tq), np.log(err), 1)[0]
    assert slope == pytest.approx(-1, abs=0.05)
    np.testing.assert_allclose(err, 0.08 / np.array(tq), rtol=1e-4)
    exact = [abs(time_averaged_N(SPACE, p, T, 1, method="exact").mean - 1.08) for T in tq[:5]]
    np.testing.assert_allclose(exact, 0.08 / np.array(tq[:5]), rtol=1e-10)
    exact = time_averaged_N(SPACE, p, ts[5], 1, method="exact")
    trap = time_averaged_N(SPACE, p, ts[5], 1, nodes_per_period=4096)
    assert trap.mean == pytest.approx(exact.mean, abs=1e-5)


def test_time_average_guard():
    with pytest.raises(TruncationError):
        time_averaged_N(FockSpace(8), ModelParams(1.0, 0.1, 1.0), 10.0, 3)
