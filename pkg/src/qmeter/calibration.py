"""Calibration of the unspecified numerical constants in the variance and estimator bounds.

Every ratio calibrated here is dimensionless and depends only on ``gamma^2/omega`` and
``omega t``, so the sweep runs at ``omega = 1``.  Exact values come from the closed-form
moments and the tabulated second-order statistics; the supremum of each ratio over the
sweep is rounded up to the next multiple of ``step`` and frozen in the code
(:data:`qmeter.analytic.VARIANCE_C`, :data:`qmeter.montecarlo.ESTIMATOR_C`).
"""

from __future__ import annotations

import math

import numpy as np

from qmeter.analytic import fluctuation_table, moments
from qmeter.model import ModelParams

# Weak-coupling sweep: gamma^2/omega from 1e-4 up to 1.
GAMMA2_SWEEP = (1e-4, 1e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0)


def _sweep_times(tab, t_max: float, n_dense: int = 400, n_geom: int = 80) -> np.ndarray:
    """Dense on ``omega t`` in (0, 20] where the maxima sit, geometric beyond."""
    h = tab.s[1] - tab.s[0]
    dense = np.linspace(h, min(20.0, t_max), n_dense)
    geom = np.geomspace(min(20.0, t_max), t_max, n_geom)
    k = np.unique(np.round(np.concatenate([dense, geom]) / h).astype(int))
    return k[(k >= 1) & (k < len(tab.s))] * h


def variance_ratios(gamma2: float, t_max: float | None = None) -> dict:
    """Smallest admissible ``C`` for each variance bound at one coupling."""
    p = ModelParams(1.0, math.sqrt(gamma2))
    if t_max is None:
        t_max = min(100.0 / gamma2, 2000.0)
    tab = fluctuation_table(p, t_max, h=min(0.01, 0.01 / gamma2))
    g2 = gamma2
    s = tab.s[1:]
    out = {
        "cov_zz_z": float(np.max(np.abs(tab.K[1:]) / (g2 * s))),
        "var_zz": float(np.max((tab.V[1:] / g2 - 2 * g2 * s**2) / s)),
    }
    ts = _sweep_times(tab, tab.s[-1], n_dense=120, n_geom=40)
    out["var_y0"] = max((3 * tab.var_y0(t) / g2 - g2 * t**4) / t**3 for t in ts)
    # cov(|Z_s|^2, |Z_t|^2) = V(s) + 2 Re(K(s) m(t - s)); maximize over the lag on a fine grid.
    c = p.c
    lag = tab.s[: min(len(tab.s), int(round(40.0 / (tab.s[1] - tab.s[0]))) + 1)]
    m = (np.exp(c * lag) - 1.0) / c
    best = -math.inf
    for sk in ts:
        cov = np.abs(tab.var_zz(sk) + 2 * (tab.k_at(sk) * m).real)
        best = max(best, (float(cov.max()) / g2 - 2 * g2 * sk**2) / sk)
    out["cov_zz_s_t"] = best
    return out


def estimator_ratios(gamma2: float, t_max: float | None = None) -> dict:
    """Smallest admissible ``C1, C2`` of the estimator error bound at one coupling.

    ``C1 >= omega^2 E|Y1|^2 / (t^2 (1 + gamma^2 t))`` and
    ``C2 >= omega^4 E[Y0^2] / (t^2 (1 + (gamma^2 t)^2))``.
    """
    p = ModelParams(1.0, math.sqrt(gamma2))
    if t_max is None:
        t_max = min(max(200.0 / gamma2, 200.0), 5000.0)
    tab = fluctuation_table(p, t_max, h=min(0.01, 0.01 / gamma2))
    r1 = r2 = -math.inf
    for t in _sweep_times(tab, tab.s[-1], n_dense=200, n_geom=60):
        mo = moments(p, t)
        r1 = max(r1, mo.mean_Y1starY1 / (t**2 * (1 + gamma2 * t)))
        r2 = max(r2, (tab.var_y0(t) + mo.mean_Y0**2) / (t**2 * (1 + (gamma2 * t) ** 2)))
    return {"C1": r1, "C2": r2}


def freeze(value: float, step: float = 0.5) -> float:
    """Round ``value`` up to the next multiple of ``step`` (strictly above it)."""
    return step * (math.floor(value / step) + 1)


def calibrate_variance_constants(gamma2_values=GAMMA2_SWEEP) -> dict:
    sup: dict = {}
    for g2 in gamma2_values:
        for k, v in variance_ratios(g2).items():
            sup[k] = max(sup.get(k, -math.inf), v)
    return sup


def calibrate_estimator_constants(gamma2_values=GAMMA2_SWEEP) -> dict:
    sup: dict = {}
    for g2 in gamma2_values:
        for k, v in estimator_ratios(g2).items():
            sup[k] = max(sup.get(k, -math.inf), v)
    return sup


def main() -> None:
    var = calibrate_variance_constants()
    est = calibrate_estimator_constants()
    for k, v in {**var, **est}.items():
        print(f"{k:12s} sup={v:.6f} frozen={freeze(v)}")


if __name__ == "__main__":
    main()
