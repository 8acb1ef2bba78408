"""Per-path functionals of the Brownian phase.

For a path ``W`` and parameters ``(omega, gamma, alpha)``::

    phi_t = omega t + gamma W_t
    Z_t   = int_0^t exp(i phi_s) ds
    Y1_t  = int_0^t Z_s ds
    Y0_t  = int_0^t |Z_s|^2 ds
    G_t   = omega^2 |alpha|^2 int_0^t Im(exp(-i phi_s) Z_s) ds

The phase factor is interpolated linearly between grid nodes, so ``Z`` is its trapezoid
integral and is piecewise quadratic; ``Y1`` and ``Y0`` integrate that quadratic exactly
(a plain trapezoid on ``|Z|^2`` carries an O(dt^2) bias that is visible at small ``t``).
``G`` uses the trapezoid rule on its time derivative instead of the double integral, so
a path costs O(n).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import stats

from qmeter.model import GridMismatchError, ModelParams, TimeGrid
from qmeter.parallel import run_blocks
from qmeter.paths import BrownianPath, normal_chunks

# Re-anchor the recursively rotated phase factor to cos/sin of the exact phase this often.
_ANCHOR_MASK = 1023
BLOCK_PATHS = 16


@numba.njit(cache=True, nogil=True, inline="always")
def _rotation(x, nsq):
    # exp(i x) from Taylor polynomials at x / 2**nsq followed by nsq squarings;
    # the polynomials are accurate to ~1e-16 for |x| / 2**nsq <= 1/4.
    x2 = x * x
    cx = 1.0 - x2 * (0.5 - x2 * (1.0 / 24 - x2 * (1.0 / 720 - x2 * (1.0 / 40320 - x2 / 3628800.0))))
    sx = x * (1.0 - x2 * (1.0 / 6 - x2 * (1.0 / 120 - x2 * (1.0 / 5040 - x2 * (1.0 / 362880 - x2 / 39916800.0)))))
    for _ in range(nsq):
        cx, sx = cx * cx - sx * sx, 2.0 * cx * sx
    return cx, sx


# State rows carried between chunks of steps.
_W, _ER, _EI, _ZR, _ZI, _Y1R, _Y1I, _Y0, _G = range(9)
STEP_CHUNK = 4096


@numba.njit(cache=True, nogil=True)
def _record(st, j, o_w, o_e, o_z, o_y1, o_y0, o_g):
    for p in range(st.shape[1]):
        o_w[j, p] = st[_W, p]
        o_e[j, p] = complex(st[_ER, p], st[_EI, p])
        o_z[j, p] = complex(st[_ZR, p], st[_ZI, p])
        o_y1[j, p] = complex(st[_Y1R, p], st[_Y1I, p])
        o_y0[j, p] = st[_Y0, p]
        o_g[j, p] = st[_G, p]


@numba.njit(cache=True, nogil=True)
def _evolve(dw, k0, st, scale, dt, omega, gamma, heat, rec, j, o_w, o_e, o_z, o_y1, o_y0, o_g):
    # Advance the state ``st`` (9, P) over steps k0 .. k0 + m - 1.
    # dw: (m, P) increments in units of ``scale``, step-major.
    # rec: sorted node indices copied to the outputs; j is the next one.  Returns the new j.
    m, P = dw.shape
    xmax = 0.0
    for k in range(m):
        for p in range(P):
            x = abs(dw[k, p])
            if x > xmax:
                xmax = x
    xmax *= abs(gamma * scale)
    nsq = 0
    while xmax > 0.25 * 2.0**nsq and nsq < 64:
        nsq += 1
    gs = gamma * scale * 0.5**nsq
    c0 = math.cos(omega * dt)
    s0 = math.sin(omega * dt)
    h = 0.5 * dt

    w = st[_W]
    er = st[_ER]
    ei = st[_EI]
    zr = st[_ZR]
    zi = st[_ZI]
    y1r = st[_Y1R]
    y1i = st[_Y1I]
    y0 = st[_Y0]
    g = st[_G]
    nr = np.empty(P)
    ni = np.empty(P)

    nrec = rec.shape[0]
    for kk in range(m):
        k = k0 + kk
        if j < nrec and rec[j] == k:
            _record(st, j, o_w, o_e, o_z, o_y1, o_y0, o_g)
            j += 1
        # Phase factor at node k+1: exact at anchors and record nodes, recursive otherwise.
        if (j < nrec and rec[j] == k + 1) or ((k + 1) & _ANCHOR_MASK) == 0:
            tk1 = (k + 1) * dt
            for p in range(P):
                w[p] += dw[kk, p] * scale
                ph = omega * tk1 + gamma * w[p]
                nr[p] = math.cos(ph)
                ni[p] = math.sin(ph)
        elif nsq == 0:
            for p in range(P):
                w[p] += dw[kk, p] * scale
                cx, sx = _rotation(dw[kk, p] * gs, 0)
                rr = c0 * cx - s0 * sx
                ri = c0 * sx + s0 * cx
                nr[p] = er[p] * rr - ei[p] * ri
                ni[p] = er[p] * ri + ei[p] * rr
        else:
            for p in range(P):
                w[p] += dw[kk, p] * scale
                cx, sx = _rotation(dw[kk, p] * gs, nsq)
                rr = c0 * cx - s0 * sx
                ri = c0 * sx + s0 * cx
                nr[p] = er[p] * rr - ei[p] * ri
                ni[p] = er[p] * ri + ei[p] * rr
        for p in range(P):
            znr = zr[p] + h * (er[p] + nr[p])
            zni = zi[p] + h * (ei[p] + ni[p])
            # Y1, Y0: exact integrals of the quadratic Z(u) = Z_k + e_k u + d u^2 / (2 dt).
            dr = nr[p] - er[p]
            di = ni[p] - ei[p]
            y1r[p] += dt * (zr[p] + dt * (0.5 * er[p] + dr / 6.0))
            y1i[p] += dt * (zi[p] + dt * (0.5 * ei[p] + di / 6.0))
            ab = zr[p] * er[p] + zi[p] * ei[p]
            ad = zr[p] * dr + zi[p] * di
            bb = er[p] * er[p] + ei[p] * ei[p]
            bd = er[p] * dr + ei[p] * di
            dd = dr * dr + di * di
            y0[p] += dt * (
                (zr[p] * zr[p] + zi[p] * zi[p]) + dt * (ab + ad / 3.0) + dt * dt * (bb / 3.0 + 0.25 * bd + 0.05 * dd)
            )
            g[p] += h * heat * ((er[p] * zi[p] - ei[p] * zr[p]) + (nr[p] * zni - ni[p] * znr))
            zr[p] = znr
            zi[p] = zni
            er[p] = nr[p]
            ei[p] = ni[p]
    return j


def _run_kernel(chunks, n_paths: int, scale: float, grid: TimeGrid, params: ModelParams, rec: np.ndarray) -> dict:
    """Evolve ``n_paths`` paths whose increments arrive as step-major ``(m, P)`` chunks."""
    rec = np.asarray(rec, dtype=np.int64)
    nrec, P = len(rec), n_paths
    out = {
        "w": np.empty((nrec, P)),
        "e": np.empty((nrec, P), complex),
        "z": np.empty((nrec, P), complex),
        "y1": np.empty((nrec, P), complex),
        "y0": np.empty((nrec, P)),
        "g": np.empty((nrec, P)),
    }
    outs = (out["w"], out["e"], out["z"], out["y1"], out["y0"], out["g"])
    st = np.zeros((9, P))
    st[_ER] = 1.0
    p = params
    j, k0 = 0, 0
    for dw in chunks:
        dw = np.ascontiguousarray(dw, dtype=float)
        j = _evolve(dw, k0, st, float(scale), grid.dt, p.omega, p.gamma, p.heating_prefactor, rec, j, *outs)
        k0 += dw.shape[0]
    if k0 != grid.n_steps:
        raise GridMismatchError(f"received {k0} steps, grid has {grid.n_steps}")
    if j < nrec and rec[j] == k0:
        _record(st, j, *outs)
        j += 1
    # phi from the recorded path value, exactly as omega t + gamma W.
    out["phi"] = p.omega * grid.times[rec][:, None] + p.gamma * out["w"]
    return out


@dataclass(frozen=True, eq=False)
class PathFunctionals:
    """Trajectories of ``phi, Z, Y1, Y0, G`` at every node of one path."""

    path: BrownianPath
    params: ModelParams
    phi: np.ndarray
    z: np.ndarray
    y1: np.ndarray
    y0: np.ndarray
    g: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.path.grid.times

    @property
    def eiphi(self) -> np.ndarray:
        return np.exp(1j * self.phi)

    @property
    def renewal(self) -> np.ndarray:
        """``R_t = exp(-i phi_t) Z_t``."""
        return np.exp(-1j * self.phi) * self.z

    def to_csv(self, fp) -> None:
        """Columns ``t, W, phi, Re Z, Im Z, Re Y1, Im Y1, Y0, G``."""
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(["t", "W", "phi", "Re Z", "Im Z", "Re Y1", "Im Y1", "Y0", "G"])
        for row in zip(
            self.times, self.path.w, self.phi, self.z.real, self.z.imag,
            self.y1.real, self.y1.imag, self.y0, self.g,
        ):
            writer.writerow([repr(float(v)) for v in row])


def compute_functionals(path: BrownianPath, params: ModelParams) -> PathFunctionals:
    rec = np.arange(path.grid.n_steps + 1)
    dw = np.diff(path.w)[:, None]
    chunks = (dw[k : k + STEP_CHUNK] for k in range(0, len(dw), STEP_CHUNK))
    out = _run_kernel(chunks, 1, 1.0, path.grid, params, rec)
    phi = params.omega * path.grid.times + params.gamma * path.w
    return PathFunctionals(
        path, params, phi, out["z"][:, 0], out["y1"][:, 0], out["y0"][:, 0], out["g"][:, 0]
    )


def z_via_ito_parts(path: BrownianPath, params: ModelParams) -> np.ndarray:
    """``Z_t = (exp(i phi_t) - 1)/c - (i gamma / c) int_0^t exp(i phi_u) dW_u``.

    The stochastic integral takes the integrand at the left end of each step (Ito).
    """
    c = params.c
    e = np.exp(1j * (params.omega * path.grid.times + params.gamma * path.w))
    ito = np.zeros(len(e), complex)
    np.cumsum(e[:-1] * np.diff(path.w), out=ito[1:])
    return (e - 1.0) / c - (1j * params.gamma / c) * ito


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Functionals of ``n_paths`` independent paths recorded at a few grid nodes.

    Arrays have shape ``(n_paths, len(times))``; row ``i`` belongs to stream ``stream0 + i``.
    """

    params: ModelParams
    grid: TimeGrid
    times: np.ndarray
    seed: int
    stream0: int
    w: np.ndarray
    phi: np.ndarray
    e: np.ndarray
    z: np.ndarray
    y1: np.ndarray
    y0: np.ndarray
    g: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.z.shape[0]

    def column(self, t: float) -> int:
        hits = np.flatnonzero(np.isclose(self.times, t, rtol=1e-12, atol=1e-12 * self.grid.dt))
        if len(hits) == 0:
            raise GridMismatchError(f"t={t} was not recorded; recorded times: {self.times}")
        return int(hits[0])

    def at(self, t: float) -> dict:
        """Per-path values at recorded time ``t``."""
        i = self.column(t)
        return {k: getattr(self, k)[:, i] for k in ("w", "phi", "e", "z", "y1", "y0", "g")}


def sample_ensemble(
    params: ModelParams,
    grid: TimeGrid,
    record_times,
    n_paths: int,
    seed: int,
    stream0: int = 0,
    workers: int | None = None,
    check_resolution: bool = True,
    block: int = BLOCK_PATHS,
) -> Ensemble:
    """Evolve ``n_paths`` paths and keep the functionals at ``record_times``.

    Paths are processed in fixed blocks of consecutive streams; the blocks may run on a
    thread pool without changing any per-path value.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    if check_resolution:
        grid.check_resolution(params)
    rec = np.array(sorted({grid.index_of(t) for t in np.atleast_1d(record_times)}), dtype=np.int64)
    starts = range(0, n_paths, block)

    def work(start):
        streams = range(stream0 + start, stream0 + min(start + block, n_paths))
        chunks = normal_chunks(grid.n_steps, seed, streams, STEP_CHUNK)
        return _run_kernel(chunks, len(streams), math.sqrt(grid.dt), grid, params, rec)

    parts = run_blocks(work, starts, workers)
    cat = {k: np.concatenate([p[k] for p in parts], axis=1).T.copy() for k in parts[0]}
    return Ensemble(params, grid, grid.times[rec], int(seed), int(stream0), **cat)


def increment_decomposition_check(
    params: ModelParams,
    grid: TimeGrid,
    s: float,
    t: float,
    n_paths: int,
    seed: int,
    level: float = 0.01,
    workers: int | None = None,
) -> dict:
    """Two-sample test of ``exp(-i phi_s)(Z_t - Z_s)`` against fresh ``Z_{t-s}``.

    Both real and imaginary parts are compared with a Kolmogorov-Smirnov test; the
    check passes when neither p-value falls below ``level``.
    """
    if n_paths < 1000:
        raise ValueError(f"need at least 1000 paths for the two-sample test, got {n_paths}")
    if not 0 <= s < t:
        raise ValueError("need 0 <= s < t")
    a = sample_ensemble(params, grid, [s, t], n_paths, seed, 0, workers)
    b = sample_ensemble(params, grid, [t - s], n_paths, seed, n_paths, workers)
    inc = np.exp(-1j * a.at(s)["phi"]) * (a.at(t)["z"] - a.at(s)["z"])
    fresh = b.at(t - s)["z"]
    report = {"s": s, "t": t, "n_paths": n_paths, "level": level}
    if params.gamma == 0:
        # Deterministic: both samples are a single repeated value.
        err = float(np.max(np.abs(inc - fresh)))
        report.update(max_abs_diff=err, p_re=1.0, p_im=1.0, passed=err < 1e-9 * max(t, 1.0))
        return report
    p_re = stats.ks_2samp(inc.real, fresh.real).pvalue
    p_im = stats.ks_2samp(inc.imag, fresh.imag).pvalue
    report.update(p_re=float(p_re), p_im=float(p_im), passed=bool(min(p_re, p_im) >= level))
    return report
