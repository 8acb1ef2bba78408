"""Expectations and variances of the excitation number ``N_t`` and the pointer reading.

In the state ``|n, vacuum>`` both observables reduce to moments of the Brownian-phase
functionals (``h = omega^2 |alpha|^2``)::

    E N_t        = n + h E|Z_t|^2
    var N_t      = h (h var|Z_t|^2 + (2n + 1) E|Z_t|^2)
    E P_t        = n + h E Y0_t / t
    var P_t      = (t + 4 gamma^2 h (h var Y0_t + (2n + 1) E|Y1_t|^2)) / (2 gamma t)^2

where ``P_t`` is the pointer reading ``U_t* Q_t U_t / (2 gamma t)``.  Monte-Carlo only
enters through the Wiener functionals; the vacuum shot-noise ``t`` is inserted exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from qmeter.analytic import FluctuationTable, fluctuation_table, moments
from qmeter.functionals import Ensemble, sample_ensemble
from qmeter.model import ModelParams, TimeGrid, measurement_window
from qmeter.parallel import exact_mean, exact_sum

# Calibrated estimator-bound constants; see qmeter.calibration.calibrate_estimator_constants.
ESTIMATOR_C = {"C1": 2.0, "C2": 6.5}
RESOLVE_SIGMAS = 4.0


@dataclass(frozen=True)
class MCEstimate:
    """Sample mean with its standard error.

    For complex samples ``se`` is ``complex(se of real part, se of imaginary part)``.
    """

    mean: complex | float
    se: complex | float
    n_paths: int
    dt: float
    second_moment: float | None = None

    @classmethod
    def from_samples(cls, x, dt: float, influence=None) -> "MCEstimate":
        """Estimate ``E x``; ``influence`` overrides the per-path values used for the SE."""
        x = np.asarray(x)
        n = x.size
        if n < 2:
            raise ValueError("need at least two paths for a standard error")
        mean = exact_mean(x)
        infl = x if influence is None else np.asarray(influence)
        se = _se(infl)
        second = exact_sum(np.abs(x) ** 2) / n
        return cls(mean, se, n, dt, second)

    def z_score(self, target) -> float:
        """Largest component-wise ``|mean - target| / se``."""
        d = complex(self.mean) - complex(target)
        se = complex(self.se)
        parts = []
        for diff, s in ((d.real, se.real), (d.imag, se.imag)):
            if s > 0:
                parts.append(abs(diff) / s)
            elif abs(diff) > 1e-12 * max(1.0, abs(complex(target))):
                parts.append(math.inf)
        return max(parts, default=0.0)

    def within(self, target, k: float = 3.0) -> bool:
        return self.z_score(target) <= k


def _se(v) -> complex | float:
    v = np.asarray(v)
    n = v.size
    if np.iscomplexobj(v):
        return complex(_se(v.real), _se(v.imag))
    m = exact_sum(v) / n
    var = exact_sum((v - m) ** 2) / (n - 1)
    return math.sqrt(var / n)


def _variance_estimate(x, dt: float) -> MCEstimate:
    """Sample variance of real ``x`` with a delta-method SE."""
    x = np.asarray(x, dtype=float)
    n = x.size
    m = exact_sum(x) / n
    d2 = (x - m) ** 2
    var = exact_sum(d2) / (n - 1)
    return MCEstimate(var, _se(d2), n, dt)


@dataclass(frozen=True)
class ObservableMoments:
    """Moments of ``N_t`` and of the pointer reading at one time, plus their ingredients."""

    t: float
    n: int
    mean_N: MCEstimate
    var_N: MCEstimate
    mean_pointer: MCEstimate
    var_pointer: MCEstimate
    x2: float
    x1_sq: MCEstimate
    x0_var: MCEstimate


def observables_from_ensemble(ens: Ensemble, t: float, n: int) -> ObservableMoments:
    """Monte-Carlo moments of ``N_t`` and the pointer for level ``n`` from recorded functionals."""
    if n < 0:
        raise ValueError("n must be non-negative")
    p = ens.params
    h = p.heating_prefactor
    dt = ens.grid.dt
    d = ens.at(t)
    zz = np.abs(d["z"]) ** 2
    y0 = d["y0"]
    yy = np.abs(d["y1"]) ** 2
    N = zz.size

    ezz = MCEstimate.from_samples(zz, dt)
    mean_N = MCEstimate(n + h * ezz.mean, h * ezz.se, N, dt)

    # Influence values: per-path linearization of each nonlinear estimator.
    m_zz = ezz.mean
    v_zz = exact_sum((zz - m_zz) ** 2) / (N - 1)
    infl = h * h * ((zz - m_zz) ** 2 - v_zz) + h * (2 * n + 1) * zz
    var_N = MCEstimate(h * (h * v_zz + (2 * n + 1) * m_zz), _se(infl), N, dt)

    g = p.gamma
    if t > 0:
        ey0 = MCEstimate.from_samples(y0, dt)
        mean_P = MCEstimate(n + h * ey0.mean / t, h * ey0.se / t, N, dt)
        m_y0 = ey0.mean
        v_y0 = exact_sum((y0 - m_y0) ** 2) / (N - 1)
        eyy = exact_sum(yy) / N
        scale = 4 * g * g * h / (2 * g * t) ** 2 if g > 0 else 0.0
        floor = t / (2 * g * t) ** 2 if g > 0 else math.inf
        var_P_val = floor + scale * (h * v_y0 + (2 * n + 1) * eyy)
        infl_P = scale * (h * ((y0 - m_y0) ** 2 - v_y0) + (2 * n + 1) * yy)
        var_P = MCEstimate(var_P_val, _se(infl_P), N, dt)
    else:
        mean_P = MCEstimate(float(n), 0.0, N, dt)
        var_P = MCEstimate(math.inf, 0.0, N, dt)
    x1 = MCEstimate.from_samples(4 * g * g * h * yy, dt)
    x0 = _variance_estimate(2 * g * h * y0, dt)
    return ObservableMoments(float(t), int(n), mean_N, var_N, mean_P, var_P, 2 * g * t, x1, x0)


def estimate_moments(
    params: ModelParams,
    grid: TimeGrid,
    n: int,
    n_paths: int,
    seed: int,
    workers: int | None = None,
) -> ObservableMoments:
    """Monte-Carlo moments of ``N_t`` and the pointer at ``t = grid.t_end`` in level ``n``."""
    if n_paths < 100:
        raise ValueError(f"need at least 100 paths, got {n_paths}")
    ens = sample_ensemble(params, grid, [grid.t_end], n_paths, seed, workers=workers)
    return observables_from_ensemble(ens, grid.t_end, n)


@dataclass(frozen=True)
class ExactObservables:
    t: float
    n: int
    mean_N: float
    var_N: float
    mean_pointer: float
    var_pointer: float


def exact_observables(params: ModelParams, t: float, n: int, table: FluctuationTable | None = None) -> ExactObservables:
    """The same four moments from the closed forms and the tabulated variances."""
    if table is None or table.s[-1] < t:
        table = fluctuation_table(params, max(t, 1e-9))
    m = moments(params, t)
    h = params.heating_prefactor
    g = params.gamma
    var_N = h * (h * table.var_zz(t) + (2 * n + 1) * m.mean_ZstarZ)
    if t > 0 and g > 0:
        mean_P = n + h * m.mean_Y0 / t
        var_P = (t + 4 * g * g * h * (h * table.var_y0(t) + (2 * n + 1) * m.mean_Y1starY1)) / (2 * g * t) ** 2
    else:
        mean_P, var_P = float(n), math.inf
    return ExactObservables(float(t), int(n), n + h * m.mean_ZstarZ, var_N, mean_P, var_P)


def fluctuation_estimates(ens: Ensemble, s: float, t: float) -> dict:
    """MC counterparts of the quantities in :func:`qmeter.analytic.variance_bounds`."""
    dt = ens.grid.dt
    zs, zt = ens.at(s)["z"], ens.at(t)["z"]
    xs, xt = np.abs(zs) ** 2, np.abs(zt) ** 2
    ms, mt, mz = exact_mean(xs), exact_mean(xt), exact_mean(zt)
    return {
        "cov_zz_z": MCEstimate.from_samples((xt - mt) * (zt - mz), dt),
        "var_zz": _variance_estimate(xt, dt),
        "cov_zz_s_t": MCEstimate.from_samples((xs - ms) * (xt - mt), dt),
        "var_y0": _variance_estimate(ens.at(t)["y0"], dt),
    }


# ---------------------------------------------------------------------------
# estimator error


@dataclass(frozen=True)
class EstimatorError:
    """Exact mean-square error of the pointer as an estimator of ``n`` and its upper bound."""

    t: float
    n: int
    mse: float
    bound: float
    terms: dict

    @property
    def holds(self) -> bool:
        return self.mse <= self.bound


def estimator_bound(params: ModelParams, t: float, psi_excitation: float, constants: dict | None = None) -> float:
    """``C1 |alpha|^2 (1 + gamma^2 t) <2N+1> + C2 |alpha|^4 (1 + (gamma^2 t)^2) + 1/(gamma^2 t)``."""
    if t <= 0:
        raise ValueError("t must be positive")
    C = ESTIMATOR_C if constants is None else constants
    a2 = abs(params.alpha) ** 2
    g2t = params.gamma**2 * t
    shot = math.inf if g2t == 0 else 1 / g2t
    return C["C1"] * a2 * (1 + g2t) * psi_excitation + C["C2"] * a2 * a2 * (1 + g2t**2) + shot


def estimator_error(
    params: ModelParams,
    t: float,
    n: int,
    table: FluctuationTable | None = None,
    constants: dict | None = None,
) -> EstimatorError:
    """Mean-square error ``E(P_t - n)^2`` in ``|n>`` (variance plus squared bias) vs the bound."""
    if t <= 0:
        raise ValueError("t must be positive")
    m = moments(params, t)
    h = params.heating_prefactor
    g2 = params.gamma**2
    if h == 0:
        ey0_sq = 0.0
    else:
        if table is None or table.s[-1] < t:
            table = fluctuation_table(params, t)
        ey0_sq = table.var_y0(t) + m.mean_Y0**2
    terms = {
        "shot": math.inf if g2 == 0 else 1 / (4 * g2 * t),
        "linear": (2 * n + 1) * h * m.mean_Y1starY1 / t**2,
        "quadratic": h * h * ey0_sq / t**2,
    }
    mse = terms["shot"] + terms["linear"] + terms["quadratic"]
    return EstimatorError(float(t), int(n), mse, estimator_bound(params, t, 2 * n + 1, constants), terms)


@dataclass(frozen=True)
class ErrorCurve:
    n: int
    t: np.ndarray
    mse: np.ndarray
    bound: np.ndarray
    window: tuple[float, float]

    @property
    def argmin(self) -> float:
        return float(self.t[int(np.argmin(self.mse))])

    @property
    def interior_minimum(self) -> bool:
        k = int(np.argmin(self.mse))
        return 0 < k < len(self.t) - 1

    @property
    def minimum_in_window(self) -> bool:
        lo, hi = self.window
        return self.interior_minimum and lo <= self.argmin <= hi


def error_curve(params: ModelParams, n: int, t_grid, constants: dict | None = None) -> ErrorCurve:
    """Mean-square error and bound along ``t_grid``; the window is ``[1/gamma^2, 0.1/(|alpha|^2 gamma^2)]``."""
    t_grid = np.asarray(t_grid, dtype=float)
    table = fluctuation_table(params, float(t_grid.max()))
    errs = [estimator_error(params, t, n, table, constants) for t in t_grid]
    g2, a2 = params.gamma**2, abs(params.alpha) ** 2
    window = (1 / g2, 0.1 / (a2 * g2) if a2 > 0 else math.inf)
    return ErrorCurve(
        n, t_grid, np.array([e.mse for e in errs]), np.array([e.bound for e in errs]), window
    )


# ---------------------------------------------------------------------------
# resolving neighbouring levels


@dataclass(frozen=True)
class WindowDemo:
    t: float
    n_sigma: float
    levels: list
    resolvable: list
    window_open: bool

    @property
    def n_resolvable(self) -> int:
        """Number of leading levels ``0..k-1`` that are pairwise resolvable."""
        k = 1
        for ok in self.resolvable:
            if not ok:
                break
            k += 1
        return k


def window_demo(
    params: ModelParams,
    n_levels: int,
    t: float,
    n_sigma: float = RESOLVE_SIGMAS,
    n_paths: int | None = None,
    seed: int = 0,
    dt: float | None = None,
) -> WindowDemo:
    """Pointer mean and spread for levels ``0..n_levels-1``.

    Adjacent levels ``n, n+1`` count as resolvable when their means differ by at least
    ``n_sigma`` times the larger of the two standard deviations.  Moments come from the
    closed forms, or from ``n_paths`` Monte-Carlo paths when given.
    """
    if n_levels < 2:
        raise ValueError("n_levels must be at least 2")
    if n_paths is None:
        table = fluctuation_table(params, t)
        rows = [exact_observables(params, t, n, table) for n in range(n_levels)]
        levels = [(n, r.mean_pointer, math.sqrt(r.var_pointer)) for n, r in enumerate(rows)]
    else:
        if dt is None:
            dt = 0.1 / max(params.omega, params.gamma**2)
        grid = TimeGrid.from_dt(t, dt) if abs(round(t / dt) * dt - t) < 1e-9 * t else TimeGrid(t, math.ceil(t / dt))
        ens = sample_ensemble(params, grid, [t], n_paths, seed)
        levels = []
        for n in range(n_levels):
            o = observables_from_ensemble(ens, t, n)
            levels.append((n, float(o.mean_pointer.mean), math.sqrt(o.var_pointer.mean)))
    resolvable = [
        abs(levels[k + 1][1] - levels[k][1]) >= n_sigma * max(levels[k][2], levels[k + 1][2])
        for k in range(n_levels - 1)
    ]
    return WindowDemo(float(t), float(n_sigma), levels, resolvable, measurement_window(params, t).window_open)
