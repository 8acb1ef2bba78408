"""Model parameters, derived constants, time grids and regime classification."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

# dt * max(omega, gamma**2) must not exceed this unless explicitly overridden.
RESOLUTION_LIMIT = 0.1

# Factor-of-ten reading of "<<" and ">>".
A_MAX = 0.1
F_HI = 0.1
F_LO = 10.0
SEPARATION = 10.0

# Relative slack on window boundaries so that e.g. 10 / 0.1**2 still counts as 1000.
_BOUNDARY_RTOL = 1e-9


class QMeterError(Exception):
    """Base class for errors raised by this package."""


class ResolutionError(QMeterError, ValueError):
    """The time step does not resolve the phase drift or the diffusion."""


class GridMismatchError(QMeterError, ValueError):
    """A path, grid or requested time does not fit the grid it is used with."""


@dataclass(frozen=True)
class ModelParams:
    """Oscillator frequency ``omega``, coupling ``gamma`` and displacement ``alpha``.

    ``gamma = 0`` is accepted as the decoupled (deterministic) limit.
    """

    omega: float
    gamma: float
    alpha: complex = 0j

    def __post_init__(self):
        object.__setattr__(self, "omega", float(self.omega))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "alpha", complex(self.alpha))
        if not (self.omega > 0 and math.isfinite(self.omega)):
            raise ValueError(f"omega must be positive and finite, got {self.omega}")
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be non-negative and finite, got {self.gamma}")
        if not cmath.isfinite(self.alpha):
            raise ValueError(f"alpha must be finite, got {self.alpha}")

    @property
    def c(self) -> complex:
        return complex(-0.5 * self.gamma**2, self.omega)

    @property
    def kappa(self) -> complex:
        return self.omega * self.alpha * self.gamma / self.c

    @property
    def heating_prefactor(self) -> float:
        """``omega**2 |alpha|**2``, the weight of ``|Z_t|**2`` in the excitation number."""
        return self.omega**2 * abs(self.alpha) ** 2

    def rescaled(self, epsilon: float) -> "ModelParams":
        """Parameters ``(eps*omega, alpha, sqrt(eps)*gamma)`` of the time-dilated model."""
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        return ModelParams(epsilon * self.omega, math.sqrt(epsilon) * self.gamma, self.alpha)


def derived_constants(params: ModelParams) -> tuple[complex, complex]:
    """Return ``(c, kappa)`` with ``c = i omega - gamma**2/2`` and ``kappa = omega alpha gamma / c``."""
    return params.c, params.kappa


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k * dt``, ``k = 0..n_steps``."""

    t_end: float
    n_steps: int
    times: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.n_steps, bool) or int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "t_end", float(self.t_end))
        times = np.arange(self.n_steps + 1, dtype=float) * self.dt
        times.flags.writeable = False
        object.__setattr__(self, "times", times)

    @classmethod
    def from_dt(cls, t_end: float, dt: float) -> "TimeGrid":
        n = int(round(t_end / dt))
        if n < 1 or abs(n * dt - t_end) > 1e-9 * max(t_end, 1.0):
            raise GridMismatchError(f"t_end={t_end} is not a multiple of dt={dt}")
        return cls(t_end, n)

    @property
    def dt(self) -> float:
        return self.t_end / self.n_steps

    def index_of(self, t: float) -> int:
        """Grid index of time ``t``; raises if ``t`` is not a node."""
        k = int(round(t / self.dt))
        if k < 0 or k > self.n_steps or abs(k * self.dt - t) > 1e-9 * max(self.dt, abs(t)):
            raise GridMismatchError(f"t={t} is not a node of the grid (dt={self.dt})")
        return k

    def prefix(self, k: int) -> "TimeGrid":
        """The grid truncated at node ``k`` (same spacing)."""
        if not 1 <= k <= self.n_steps:
            raise GridMismatchError(f"prefix length {k} outside 1..{self.n_steps}")
        return TimeGrid(k * self.dt, k)

    def resolution(self, params: ModelParams) -> float:
        return self.dt * max(params.omega, params.gamma**2)

    def check_resolution(self, params: ModelParams, limit: float = RESOLUTION_LIMIT) -> None:
        r = self.resolution(params)
        if r > limit * (1 + 1e-12):
            raise ResolutionError(
                f"dt*max(omega, gamma^2) = {r:.4g} exceeds {limit}; refine the grid "
                "or pass a larger resolution limit"
            )


@dataclass(frozen=True)
class RegimeReport:
    """Regime of ``t`` relative to ``1/omega`` and ``1/gamma**2`` plus the window conditions.

    ``separated`` is true when ``t`` is at least a factor :data:`SEPARATION` away from
    the thresholds bounding its regime, i.e. when the asymptotic formulas apply.
    """

    t: float
    regime: str
    thresholds: tuple[float, float]
    window_ok: tuple[bool, bool]
    separated: bool

    @property
    def window_open(self) -> bool:
        return all(self.window_ok)


def classify_regime(params: ModelParams, t: float, separation: float = SEPARATION) -> tuple[str, bool]:
    wt = params.omega * t
    g2t = params.gamma**2 * t
    if g2t >= 1.0:
        return "late", g2t >= separation
    if wt < 1.0:
        return "early", wt <= 1.0 / separation
    return "oscillatory", wt >= separation and g2t <= 1.0 / separation


def measurement_window(
    params: ModelParams,
    t: float,
    a_max: float = A_MAX,
    f_hi: float = F_HI,
    f_lo: float = F_LO,
) -> RegimeReport:
    """Classify ``t`` and evaluate the two window conditions.

    Condition (a): ``|alpha| <= a_max`` and ``t <= f_hi / (|alpha|^2 gamma^2)``;
    condition (b): ``t >= f_lo / gamma^2``.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    g2 = params.gamma**2
    a2 = abs(params.alpha) ** 2
    slack = 1 + _BOUNDARY_RTOL
    upper = math.inf if a2 * g2 == 0 else f_hi / (a2 * g2)
    cond_a = abs(params.alpha) <= a_max * slack and t <= upper * slack
    cond_b = g2 > 0 and t * slack >= f_lo / g2
    regime, separated = classify_regime(params, t)
    thresholds = (1.0 / params.omega, math.inf if g2 == 0 else 1.0 / g2)
    return RegimeReport(float(t), regime, thresholds, (bool(cond_a), bool(cond_b)), separated)
