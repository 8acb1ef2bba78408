"""Closed-form expectations, covariances and variance bounds of the Brownian-phase functionals.

Notation: ``c = i omega - gamma^2/2``; ``R_n(f)(t)`` is the remainder of the ``n``-th order
Taylor expansion of ``f`` about ``t = 0``.  For ``f(t) = exp(ct)`` this only depends on
``z = ct`` and is evaluated by :func:`taylor_remainder`.  Covariances are unconjugated,
``<A; B> = E[AB] - E[A] E[B]``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, interpolate

from qmeter.model import SEPARATION, ModelParams, classify_regime

SERIES_RADIUS = 0.5
SERIES_TERMS = 20

# Calibrated constants C of the four variance bounds; produced by
# qmeter.calibration.calibrate_variance_constants and frozen here.
# Tabulation beyond this many nodes would exhaust memory.
MAX_TABLE_NODES = 20_000_000

VARIANCE_C = {"cov_zz_z": 5.0, "var_zz": 13.0, "cov_zz_s_t": 13.0, "var_y0": 6.0}


def _series_coefficients(kind: str, terms: int) -> np.ndarray:
    k = np.arange(terms)
    fact = np.array([math.factorial(int(i)) for i in k], dtype=float)
    if kind == "exp":
        return 1.0 / fact
    if kind == "ct1":
        # (z - 1) e^z = sum_k (k - 1)/k! z^k
        return (k - 1.0) / fact
    raise ValueError(f"unknown function kind {kind!r}; use 'exp' or 'ct1'")


def taylor_remainder(n: int, z, kind: str = "exp"):
    """``R_n`` of ``exp(z)`` (``kind='exp'``) or of ``(z - 1) exp(z)`` (``kind='ct1'``).

    For ``|z| < 0.5`` the remainder is summed directly from its series (20 terms), which
    avoids the cancellation of the closed form; elsewhere the closed form is used.
    Bounds such as ``|R_0(e^z)| <= 2`` hold for ``Re z <= 0`` only, but any ``z`` is accepted.
    """
    if n not in (0, 1, 2, 3):
        raise ValueError(f"order must be 0..3, got {n}")
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    coef = _series_coefficients(kind, n + 1 + SERIES_TERMS)
    full = np.exp(z) if kind == "exp" else (z - 1.0) * np.exp(z)
    out = np.atleast_1d(full - np.polyval(coef[: n + 1][::-1], z))
    z = np.atleast_1d(z)
    small = np.abs(z) < SERIES_RADIUS
    if np.any(small):
        zs = z[small]
        out[small] = zs ** (n + 1) * np.polyval(coef[n + 1 :][::-1], zs)
    return out[0] if scalar else out


def _plus_cc(x, what: str):
    """``x + conj(x)`` returned as a real value after checking the imaginary residue."""
    s = np.asarray(x) + np.conj(x)
    scale = np.maximum(np.abs(x), np.finfo(float).tiny)
    if np.any(np.abs(s.imag) > 1e-12 * scale):
        raise ArithmeticError(f"{what}: '+c.c.' left an imaginary residue")
    r = s.real
    return float(r) if np.ndim(r) == 0 else r


@dataclass(frozen=True)
class MomentSet:
    """Expectations of the path functionals at one time ``t``."""

    t: float
    exp_eiphi: complex
    mean_Z: complex
    mean_ZstarZ: float
    mean_Y1: complex
    mean_Y0: float
    mean_Y1starY1: float

    def as_dict(self) -> dict:
        return {
            "exp_eiphi": self.exp_eiphi,
            "mean_Z": self.mean_Z,
            "mean_ZstarZ": self.mean_ZstarZ,
            "mean_Y1": self.mean_Y1,
            "mean_Y0": self.mean_Y0,
            "mean_Y1starY1": self.mean_Y1starY1,
        }


def moments(params: ModelParams, t: float) -> MomentSet:
    """``E e^{i phi_t}``, ``E Z_t``, ``E|Z_t|^2``, ``E Y1_t``, ``E Y0_t`` and ``E|Y1_t|^2``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    c = params.c
    z = c * t
    r0 = taylor_remainder(0, z)
    r1 = taylor_remainder(1, z)
    r2 = taylor_remainder(2, z)
    r3 = taylor_remainder(3, z, kind="ct1")
    return MomentSet(
        t=float(t),
        exp_eiphi=complex(np.exp(z)),
        mean_Z=complex(r0 / c),
        mean_ZstarZ=_plus_cc(r1 / c**2, "E|Z|^2"),
        mean_Y1=complex(r1 / c**2),
        mean_Y0=_plus_cc(r2 / c**3, "E Y0"),
        mean_Y1starY1=_plus_cc(r3 / c**4, "E|Y1|^2"),
    )


# ---------------------------------------------------------------------------
# covariances


@dataclass(frozen=True)
class Covariances:
    """``<Z*Z; e^{i phi}>``, ``<Z* e^{i phi}; Z>``, ``<e^{-i phi} Z; Z>`` and ``g_+, g_-`` at ``t``."""

    t: float
    zz_e: complex
    ze_z: complex
    ez_z: complex
    g_plus: complex
    g_minus: complex
    method: str

    @property
    def dK(self) -> complex:
        """Sum of the three covariances: the time derivative of ``<Z*Z; Z>``."""
        return self.zz_e + self.ze_z + self.ez_z


def _degenerate(params: ModelParams) -> bool:
    scale = max(params.omega, params.gamma**2)
    return params.omega < 1e-6 * scale or abs(params.c - params.gamma**2) < 1e-6 * scale


def g_pm(params: ModelParams, t):
    """``g_{+-}(t) = int_0^t exp(+-c s)(1 - exp(-gamma^2 s)) ds`` in closed form."""
    c, g2 = params.c, params.gamma**2
    t = np.asarray(t, dtype=float)
    if g2 == 0:
        z = np.zeros(t.shape, complex)
        return z[()], z[()]
    cb = np.conj(c)
    gp = np.exp(c * t) / c - np.exp((c - g2) * t) / (c - g2) + g2 / (c * (c - g2))
    gm = -np.exp(-c * t) / c - np.exp(cb * t) / cb - g2 / abs(c) ** 2
    return gp[()], gm[()]


def _closed_terms(params: ModelParams, t):
    c, g2, w = params.c, params.gamma**2, params.omega
    cb = np.conj(c)
    e = np.exp(c * t)
    a_plus = (
        np.exp(2 * c * t) / c**2
        - np.exp((2 * c - g2) * t) / (c - g2) ** 2
        + g2 * (2 * c - g2) / (c**2 * (c - g2) ** 2) * e
        + g2 / (c * (c - g2)) * t * e
    )
    a_minus = 1 / c**2 - np.exp(-g2 * t) / cb**2 - 2j * g2 * w / abs(c) ** 4 * e - g2 / abs(c) ** 2 * t * e
    a_3 = (1 - np.exp(-g2 * t)) / abs(c) ** 2 + 1j * g2 / (2 * abs(c) ** 2 * w) * (e - np.exp(cb * t))
    return a_minus - a_plus, -a_plus, a_3


def _quadrature_terms(params: ModelParams, t: float):
    c, w = params.c, params.omega

    def cquad(f):
        opts = dict(limit=500, epsabs=1e-15, epsrel=1e-12)
        re = integrate.quad(lambda s: f(s).real, 0, t, **opts)[0]
        im = integrate.quad(lambda s: f(s).imag, 0, t, **opts)[0]
        return complex(re, im)

    gp = lambda s: g_pm(params, s)[0]
    gm = lambda s: g_pm(params, s)[1]
    e = np.exp(c * t)
    i_plus = cquad(gp)
    i_minus = cquad(gm)
    i_3 = cquad(lambda s: np.exp(2j * w * s) * gm(s))
    return e * (i_minus - i_plus), -e * i_plus, np.exp(np.conj(c) * t) * i_3


def covariances(params: ModelParams, t: float, method: str = "auto") -> Covariances:
    """Covariances of ``|Z_t|^2``, ``Z_t`` and the phase factor, closed form or by quadrature.

    ``method='auto'`` uses the closed forms unless ``omega`` or ``|c - gamma^2|`` is tiny
    relative to ``max(omega, gamma^2)``, where they lose accuracy; it then warns and
    integrates ``g_+-`` numerically instead.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if method not in ("auto", "closed", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    gp, gm = g_pm(params, t)
    if params.gamma == 0:
        return Covariances(float(t), 0j, 0j, 0j, 0j, 0j, "closed")
    if method == "auto":
        if _degenerate(params):
            warnings.warn("near-degenerate denominators; falling back to quadrature", RuntimeWarning)
            method = "quadrature"
        else:
            method = "closed"
    terms = _closed_terms(params, t) if method == "closed" else _quadrature_terms(params, t)
    return Covariances(float(t), *(complex(x) for x in terms), complex(gp), complex(gm), method)


# ---------------------------------------------------------------------------
# second-order statistics of |Z|^2 and Y0


@dataclass(frozen=True)
class FluctuationTable:
    """Exact second-order statistics on a fine grid ``s``.

    ``K = <|Z|^2; Z>``, ``V = var |Z|^2``; obtained by integrating the closed-form
    covariances in time (Simpson), so only the quadrature error of a smooth integrand
    enters.
    """

    params: ModelParams
    s: np.ndarray
    K: np.ndarray
    V: np.ndarray

    @cached_property
    def _splines(self):
        return interpolate.CubicSpline(self.s, self.K), interpolate.CubicSpline(self.s, self.V)

    def _check(self, t: float) -> None:
        if not 0 <= t <= self.s[-1] * (1 + 1e-12):
            raise ValueError(f"t={t} outside the tabulated range [0, {self.s[-1]}]")

    def _on_grid(self, t: float) -> int | None:
        h = self.s[1] - self.s[0]
        k = int(round(t / h))
        if k < len(self.s) and abs(self.s[k] - t) <= 1e-9 * max(h, t):
            return k
        return None

    def k_at(self, t: float) -> complex:
        """``<|Z_t|^2; Z_t>``; off-grid values are interpolated with a cubic spline."""
        self._check(t)
        k = self._on_grid(t)
        return complex(self.K[k]) if k is not None else complex(self._splines[0](t))

    def var_zz(self, t: float) -> float:
        self._check(t)
        k = self._on_grid(t)
        return float(self.V[k]) if k is not None else float(self._splines[1](t))

    def cov_zz(self, s: float, t: float) -> float:
        """``<|Z_s|^2; |Z_t|^2>``."""
        if s > t:
            s, t = t, s
        m = taylor_remainder(0, self.params.c * (t - s)) / self.params.c
        return float(self.var_zz(s) + 2 * (self.k_at(s) * m).real)

    def var_y0(self, t: float) -> float:
        """``var Y0_t = 2 int_0^t [V(u)(t - u) + 2 Re(K(u) c^-2 R_1(e^{c(t-u)}))] du``."""
        self._check(t)
        if t == 0:
            return 0.0
        k = self._on_grid(t)
        if k is not None:
            u, K, V = self.s[: k + 1], self.K[: k + 1], self.V[: k + 1]
        else:
            j = int(np.searchsorted(self.s, t))
            u = np.append(self.s[:j], t)
            K = np.append(self.K[:j], self.k_at(t))
            V = np.append(self.V[:j], self.var_zz(t))
        if len(u) < 3:
            u = np.linspace(0.0, t, 3)
            K = self._splines[0](u)
            V = self._splines[1](u)
        c = self.params.c
        f = V * (t - u) + 2 * (K * taylor_remainder(1, c * (t - u)) / c**2).real
        return float(2 * integrate.simpson(f, x=u))


def fluctuation_table(params: ModelParams, t_max: float, h: float | None = None) -> FluctuationTable:
    """Tabulate ``K`` and ``V`` on ``[0, t_max]`` with spacing ``h`` (default ``0.02/max(omega, gamma^2)``)."""
    if h is None:
        h = 0.02 / max(params.omega, params.gamma**2)
    n = max(2, int(math.ceil(t_max / h)))
    n += n % 2
    if n > MAX_TABLE_NODES:
        raise ValueError(f"table on [0, {t_max:.4g}] needs {n} nodes (> {MAX_TABLE_NODES}); pass a coarser h")
    s = np.linspace(0.0, n * h, n + 1)
    if params.gamma == 0:
        zero = np.zeros_like(s)
        return FluctuationTable(params, s, zero.astype(complex), zero)
    if _degenerate(params):
        raise ValueError("closed-form covariances are unreliable for these parameters")
    dk = sum(_closed_terms(params, s))
    # cumulative_simpson drops imaginary parts, so integrate them separately.
    K = integrate.cumulative_simpson(dk.real, x=s, initial=0) + 1j * integrate.cumulative_simpson(
        dk.imag, x=s, initial=0
    )
    V = integrate.cumulative_simpson(4 * K.real, x=s, initial=0)
    return FluctuationTable(params, s, K, V)


@dataclass(frozen=True)
class VarianceBounds:
    """Exact values and calibrated upper bounds of the four variance-type quantities."""

    s: float
    t: float
    exact: dict
    bounds: dict
    constants: dict

    @property
    def holds(self) -> dict:
        return {k: self.exact[k] <= self.bounds[k] * (1 + 1e-9) + 1e-300 for k in self.bounds}


def variance_bound_values(params: ModelParams, s: float, t: float, constants: dict | None = None) -> dict:
    """Right-hand sides of the four bounds at ``(s, t)``."""
    C = VARIANCE_C if constants is None else constants
    w, g2 = params.omega, params.gamma**2
    return {
        "cov_zz_z": C["cov_zz_z"] * g2 * t / w**3,
        "var_zz": g2 / w**4 * (2 * g2 * t**2 + C["var_zz"] * t),
        "cov_zz_s_t": g2 / w**4 * (2 * g2 * s**2 + C["cov_zz_s_t"] * s),
        "var_y0": g2 / (3 * w**4) * (g2 * t**4 + C["var_y0"] * t**3),
    }


def variance_bounds(
    params: ModelParams, s: float, t: float, constants: dict | None = None, table: FluctuationTable | None = None
) -> VarianceBounds:
    """Compare ``|<Z*Z;Z>|``, ``var Z*Z``, ``|<Z_s*Z_s; Z_t*Z_t>|`` and ``var Y0`` with their bounds.

    The constants ``C`` are the calibrated values in :data:`VARIANCE_C` unless given.
    MC estimates of the same quantities can be checked with :func:`qmeter.montecarlo.fluctuation_estimates`.
    """
    if not 0 <= s <= t:
        raise ValueError("need 0 <= s <= t")
    C = dict(VARIANCE_C if constants is None else constants)
    if table is None or table.s[-1] < t:
        table = fluctuation_table(params, max(t, 1e-9))
    exact = {
        "cov_zz_z": abs(table.k_at(t)),
        "var_zz": table.var_zz(t),
        "cov_zz_s_t": abs(table.cov_zz(s, t)),
        "var_y0": table.var_y0(t),
    }
    return VarianceBounds(float(s), float(t), exact, variance_bound_values(params, s, t, C), C)


# ---------------------------------------------------------------------------
# regimes


@dataclass(frozen=True)
class RegimePrediction:
    t: float
    regime: str
    separated: bool
    excess_N: float
    excess_pointer: float
    n: int

    @property
    def mean_N(self) -> float:
        return self.n + self.excess_N

    @property
    def mean_pointer(self) -> float:
        return self.n + self.excess_pointer


def regime_asymptotics(params: ModelParams, t: float, n: int = 0) -> RegimePrediction:
    """Leading-order ``E N_t - n`` and ``E pointer_t - n`` in the regime of ``t``.

    Early: ``|alpha|^2 (omega t)^2`` and a third of it; oscillatory: ``2|alpha|^2 (1 - cos omega t)``
    and ``2|alpha|^2``; late: ``|alpha|^2 gamma^2 t`` and half of it.  These hold for weak
    coupling ``gamma^2 << omega``; a warning is issued otherwise.
    """
    if params.gamma**2 * SEPARATION > params.omega:
        warnings.warn("asymptotic formulas assume gamma^2 << omega", RuntimeWarning)
    a2 = abs(params.alpha) ** 2
    regime, separated = classify_regime(params, t)
    wt = params.omega * t
    if regime == "early":
        en, ep = a2 * wt**2, a2 * wt**2 / 3
    elif regime == "oscillatory":
        en, ep = 2 * a2 * (1 - math.cos(wt)), 2 * a2
    else:
        g2t = params.gamma**2 * t
        en, ep = a2 * g2t, a2 * g2t / 2
    return RegimePrediction(float(t), regime, separated, en, ep, int(n))


def exact_excess(params: ModelParams, t: float) -> tuple[float, float]:
    """Exact ``E N_t - n`` and ``E pointer_t - n`` (independent of ``n``)."""
    m = moments(params, t)
    h = params.heating_prefactor
    return h * m.mean_ZstarZ, (h * m.mean_Y0 / t if t > 0 else 0.0)


# ---------------------------------------------------------------------------
# elementary bounds


@dataclass(frozen=True)
class BoundCheck:
    name: str
    value: float
    lower: float
    upper: float

    def holds(self, rtol: float = 1e-12) -> bool:
        slack = rtol * max(1.0, abs(self.upper))
        return self.lower - slack <= self.value <= self.upper + slack


def moment_bounds(params: ModelParams, t: float) -> list[BoundCheck]:
    """Bounds on the scaled heating terms, valid for all ``t >= 0``.

    ``0 <= omega^2 E|Z_t|^2 <= 4 + gamma^2 t``, ``0 <= omega^2 E Y0_t / t <= 4 + gamma^2 t/2``
    and ``omega^2 E|Y1_t|^2 / t^2 <= 2 + gamma^2 t/3``.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    m = moments(params, t)
    w2, g2t = params.omega**2, params.gamma**2 * t
    return [
        BoundCheck("zz", w2 * m.mean_ZstarZ, 0.0, 4 + g2t),
        BoundCheck("y0", w2 * m.mean_Y0 / t, 0.0, 4 + g2t / 2),
        BoundCheck("y1y1", w2 * m.mean_Y1starY1 / t**2, 0.0, 2 + g2t / 3),
    ]


def remainder_bounds(z) -> list[BoundCheck]:
    """``|R_0(e^z)| <= 2``, ``|R_1(e^z)/z| <= 2``, ``|R_2(e^z)/z^2| <= 1`` for ``Re z <= 0``."""
    z = complex(z)
    if z.real > 0:
        raise ValueError("bounds hold for Re z <= 0 only")
    if abs(z) < SERIES_RADIUS:
        # R_k / z^k from the series, so tiny z does not underflow z**k
        coef = _series_coefficients("exp", 3 + SERIES_TERMS)
        scaled = [z * np.polyval(coef[k + 1 :][::-1], z) for k in range(3)]
    else:
        scaled = [taylor_remainder(k, z) / z**k for k in range(3)]
    return [BoundCheck(f"R{k}", float(abs(v)), 0.0, b) for k, v, b in zip(range(3), scaled, (2.0, 2.0, 1.0))]
