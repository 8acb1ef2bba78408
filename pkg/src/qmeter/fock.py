"""Truncated Fock-space realization of the oscillator and its per-path propagator.

Matrices live on span{|0>, ..., |D-1>}.  Truncation breaks the canonical commutator in
the last row and column, and displacement operators leak amplitude towards the top
levels, so identities are asserted only on a leading "reliable block" of levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from qmeter.functionals import PathFunctionals, compute_functionals
from qmeter.model import GridMismatchError, ModelParams, QMeterError, TimeGrid
from qmeter.paths import sample_path

DEFAULT_DIM = 64
# A level m is "reliable" for displacement z if (sqrt(m) + |z|)^2 <= RELIABLE_FILL * D.
RELIABLE_FILL = 0.7


class TruncationError(QMeterError, ValueError):
    """The requested displacement or level does not fit the truncated space."""


@dataclass(frozen=True)
class FockSpace:
    """Ladder operators on the first ``dim`` number states."""

    dim: int = DEFAULT_DIM
    a: np.ndarray = field(init=False, repr=False, compare=False)
    adag: np.ndarray = field(init=False, repr=False, compare=False)
    N: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be at least 2")
        a = np.diag(np.sqrt(np.arange(1, self.dim, dtype=float)), 1).astype(complex)
        for name, m in (("a", a), ("adag", a.T.copy()), ("N", np.diag(np.arange(self.dim)).astype(complex))):
            m.flags.writeable = False
            object.__setattr__(self, name, m)

    def hamiltonian(self, params: ModelParams) -> np.ndarray:
        """``H = omega (N - conj(alpha) a - alpha a*)``."""
        al = params.alpha
        return params.omega * (self.N - np.conj(al) * self.a - al * self.adag)

    def basis(self, n: int) -> np.ndarray:
        if not 0 <= n < self.dim:
            raise TruncationError(f"level {n} outside 0..{self.dim - 1}")
        v = np.zeros(self.dim, complex)
        v[n] = 1.0
        return v

    def reliable_block(self, z: complex = 0j) -> int:
        """Number of leading levels on which identities involving ``D(z)`` hold to high accuracy."""
        room = math.sqrt(RELIABLE_FILL * self.dim) - abs(z)
        if room <= 0:
            return 0
        return int(min(self.dim // 2, math.floor(room**2)))


def displacement(space: FockSpace, z: complex) -> np.ndarray:
    """``D(z) = exp(z a* - conj(z) a)`` by scaling-and-squaring.

    Raises :class:`TruncationError` when ``|z|^2 > D/4``.
    """
    z = complex(z)
    if abs(z) ** 2 > space.dim / 4:
        raise TruncationError(f"|z|^2 = {abs(z) ** 2:.3g} exceeds D/4 = {space.dim / 4}")
    if z == 0:
        return np.eye(space.dim, dtype=complex)
    return linalg.expm(z * space.adag - np.conj(z) * space.a)


def block_error(m: np.ndarray, target: np.ndarray, k: int) -> float:
    """Max-abs difference on the leading ``k x k`` block."""
    return float(np.max(np.abs(m[:k, :k] - target[:k, :k]))) if k > 0 else 0.0


@dataclass(frozen=True, eq=False)
class PathPropagator:
    """``U_t = exp(-i phi_t N) D(iw alpha Z_t) exp(-i G_t)`` at sample times of one path."""

    space: FockSpace
    times: np.ndarray
    phi: np.ndarray
    displacement_arg: np.ndarray
    g: np.ndarray
    U: np.ndarray

    def unitarity_error(self, block: int | None = None) -> np.ndarray:
        """Per-time max-abs deviation of ``U*U`` from the identity on the reliable block."""
        eye = np.eye(self.space.dim)
        out = []
        for z, u in zip(self.displacement_arg, self.U):
            k = self.space.reliable_block(z) if block is None else block
            out.append(block_error(u.conj().T @ u, eye, k))
        return np.array(out)

    def heisenberg_error(self, block: int | None = None) -> np.ndarray:
        """Per-time deviation of ``U* a*a U`` from ``(a* + conj(Z))(a + Z)``, ``Z = i omega alpha Z_t``."""
        sp = self.space
        eye = np.eye(sp.dim)
        out = []
        for z, u in zip(self.displacement_arg, self.U):
            k = sp.reliable_block(z) if block is None else block
            lhs = u.conj().T @ sp.N @ u
            rhs = (sp.adag + np.conj(z) * eye) @ (sp.a + z * eye)
            out.append(block_error(lhs, rhs, k))
        return np.array(out)

    def number_expectation(self, n: int) -> np.ndarray:
        """``<n| U_t* N U_t |n>`` at each sample time."""
        out = []
        for u in self.U:
            col = u[:, n]
            out.append(float(np.real(np.vdot(col, np.arange(self.space.dim) * col))))
        return np.array(out)


def propagate_path(
    space: FockSpace, functionals: PathFunctionals, params: ModelParams, times=None
) -> PathPropagator:
    """Evaluate the closed-form propagator of one path at ``times`` (default: every node)."""
    grid = functionals.path.grid
    idx = np.arange(grid.n_steps + 1) if times is None else np.array([grid.index_of(t) for t in times])
    if functionals.params != params:
        raise GridMismatchError("functionals were computed for different parameters")
    zarg = 1j * params.omega * params.alpha * functionals.z[idx]
    big = np.abs(zarg) ** 2 > space.dim / 4
    if np.any(big):
        raise TruncationError(
            f"|i omega alpha Z_t|^2 reaches {np.max(np.abs(zarg) ** 2):.3g} > D/4; increase the dimension"
        )
    levels = np.arange(space.dim)
    phi = functionals.phi[idx]
    g = functionals.g[idx]
    U = np.empty((len(idx), space.dim, space.dim), complex)
    for j in range(len(idx)):
        U[j] = np.exp(-1j * phi[j] * levels)[:, None] * displacement(space, zarg[j]) * np.exp(-1j * g[j])
    return PathPropagator(space, grid.times[idx], phi, zarg, g, U)


# ---------------------------------------------------------------------------
# time-averaged excitation number


@dataclass(frozen=True)
class TimeAverage:
    n: int
    T: float
    mean: float
    variance: float
    predicted_mean: float
    predicted_variance: float
    operator: np.ndarray = field(repr=False)


def _trapezoid_weights(delta: np.ndarray, T: float, nodes: int) -> np.ndarray:
    """``(1/T) * trapezoid`` of ``exp(i delta t)`` on ``nodes + 1`` equispaced points of ``[0, T]``."""
    h = T / nodes
    q = np.exp(1j * delta * h)
    end = np.exp(1j * delta * T)
    with np.errstate(divide="ignore", invalid="ignore"):
        geo = (1 - q ** (nodes + 1)) / (1 - q)
    geo = np.where(np.abs(1 - q) < 1e-12, nodes + 1.0, geo)
    return h * (geo - 0.5 * (1 + end)) / T


def time_averaged_N(
    space: FockSpace,
    params: ModelParams,
    T: float,
    n: int,
    nodes_per_period: int = 256,
    method: str = "trapezoid",
) -> TimeAverage:
    """Mean and variance in ``|n>`` of ``(1/T) int_0^T e^{iHt} N e^{-iHt} dt``.

    ``H`` is diagonalized once; the time integral then acts entrywise in the eigenbasis,
    either with exact trapezoid weights on ``nodes_per_period`` nodes per period ``2 pi/omega``
    or exactly (``method='exact'``).
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if method not in ("trapezoid", "exact"):
        raise ValueError(f"unknown method {method!r}")
    a2 = abs(params.alpha) ** 2
    if (math.sqrt(n) + 2 * math.sqrt(a2) + 1) ** 2 > space.dim / 2:
        raise TruncationError(f"dimension {space.dim} too small for level {n} with |alpha|^2={a2:.3g}")
    lam, V = np.linalg.eigh(space.hamiltonian(params))
    Nt = V.conj().T @ space.N @ V
    delta = lam[:, None] - lam[None, :]
    if method == "exact":
        x = delta * T
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(np.abs(x) < 1e-12, 1.0 + 0j, (np.exp(1j * x) - 1) / (1j * x))
    else:
        nodes = max(1, int(round(nodes_per_period * params.omega * T / (2 * math.pi))))
        w = _trapezoid_weights(delta, T, nodes)
    avg = V @ (Nt * w) @ V.conj().T
    avg = 0.5 * (avg + avg.conj().T)
    col = avg[:, n]
    mean = float(np.real(col[n]))
    second = float(np.real(np.vdot(col, col)))
    return TimeAverage(n, float(T), mean, second - mean**2, n + 2 * a2, (2 * n + 1) * a2, avg)


def limiting_time_average(space: FockSpace, params: ModelParams) -> np.ndarray:
    """``N - (conj(alpha) a + alpha a*) + 2|alpha|^2``."""
    al = params.alpha
    return space.N - (np.conj(al) * space.a + al * space.adag) + 2 * abs(al) ** 2 * np.eye(space.dim)


# ---------------------------------------------------------------------------
# stochastic differential equation and pointer slope


@dataclass(frozen=True)
class QSDEResidual:
    dt: float
    mean_norm: float
    mean_norm_corrected: float
    norm_of_mean: float
    n_paths: int


def qsde_residual(
    space: FockSpace,
    params: ModelParams,
    t: float,
    dt: float,
    n: int,
    n_paths: int,
    seed: int,
) -> QSDEResidual:
    """One-step residual of ``dU = -(iH + Gamma^2/2) U dt - i Gamma U dP`` applied to ``|n>``.

    ``U`` is the closed-form propagator on a path of step ``dt``; the residual is taken
    over the step ``[t, t + dt]`` on the reliable block.  ``mean_norm`` is ``O(dt)``;
    ``mean_norm_corrected`` replaces ``dt`` by ``dP^2`` in the ``Gamma^2`` term (the
    next order of the Ito-Taylor expansion) and is ``O(dt^1.5)``; ``norm_of_mean`` is
    the norm of the path-averaged residual, which vanishes faster than ``dt``.
    """
    grid = TimeGrid.from_dt(t + dt, dt)
    H = space.hamiltonian(params)
    Gam = params.gamma * np.arange(space.dim)
    ket = space.basis(n)
    norms, norms_c, total = [], [], np.zeros(space.dim, complex)
    for stream in range(n_paths):
        path = sample_path(grid, seed, stream)
        f = compute_functionals(path, params)
        prop = propagate_path(space, f, params, [grid.times[-2], grid.times[-1]])
        u0, u1 = prop.U[0] @ ket, prop.U[1] @ ket
        dw = path.w[-1] - path.w[-2]
        drift = -1j * (H @ u0) * dt - 1j * Gam * u0 * dw
        r = u1 - u0 - drift + 0.5 * Gam**2 * u0 * dt
        rc = u1 - u0 - drift + 0.5 * Gam**2 * u0 * dw**2
        k = min(space.reliable_block(z) for z in prop.displacement_arg)
        norms.append(np.linalg.norm(r[:k]))
        norms_c.append(np.linalg.norm(rc[:k]))
        total[:k] += r[:k]
    return QSDEResidual(
        float(dt),
        float(np.mean(norms)),
        float(np.mean(norms_c)),
        float(np.linalg.norm(total / n_paths)),
        int(n_paths),
    )


def pointer_slope(prop: PathPropagator, params: ModelParams, n: int) -> np.ndarray:
    """``d/ds <n|U_s* Q U_s|n> = 2 gamma <n|U_s* N U_s|n>`` along one path."""
    return 2 * params.gamma * prop.number_expectation(n)
