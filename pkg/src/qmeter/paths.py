"""Seeded Brownian paths standing in for the field quadrature ``P_t``.

Each path is addressed by ``(seed, stream)``.  The generator for a stream is built from
``SeedSequence(seed, spawn_key=(stream,))``, so a path depends on nothing but its own
address and the grid: it comes out bit-identical no matter which worker produces it or
how many paths are generated alongside it.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass

import numba
import numpy as np

from qmeter.model import TimeGrid

_DUMP_MAGIC = b"QMWP"
_DUMP_VERSION = 1
_DUMP_HEADER = struct.Struct("<4sIQdQQ")


def stream_generator(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for one path."""
    return np.random.Generator(np.random.SFC64(np.random.SeedSequence(seed, spawn_key=(stream,))))


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Discretised Wiener path ``w[k] = W(t_k)`` with ``w[0] = 0``."""

    grid: TimeGrid
    w: np.ndarray
    seed: int
    stream: int

    def __post_init__(self):
        if self.w.shape != (self.grid.n_steps + 1,):
            raise ValueError(f"path has shape {self.w.shape}, grid needs ({self.grid.n_steps + 1},)")
        self.w.flags.writeable = False

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.w)

    def prefix(self, k: int) -> "BrownianPath":
        """The first ``k`` steps of the path."""
        return BrownianPath(self.grid.prefix(k), self.w[: k + 1].copy(), self.seed, self.stream)

    def negated(self) -> "BrownianPath":
        return BrownianPath(self.grid, -self.w, self.seed, self.stream)


def sample_path(grid: TimeGrid, seed: int, stream: int = 0) -> BrownianPath:
    xi = stream_generator(seed, stream).standard_normal(grid.n_steps)
    w = np.empty(grid.n_steps + 1)
    w[0] = 0.0
    np.cumsum(xi * math.sqrt(grid.dt), out=w[1:])
    return BrownianPath(grid, w, int(seed), int(stream))


@numba.njit(cache=True, nogil=True)
def _fill_normal(gen, out):
    # Same stream as gen.standard_normal(out=out), without the per-call overhead of numpy's
    # generic dispatch; numba's ziggurat reproduces numpy's bit for bit.
    for i in range(out.shape[0]):
        out[i] = gen.standard_normal()


def normal_rows(n_steps: int, seed: int, streams) -> np.ndarray:
    """Standard normals of several streams: ``out[j]`` equals
    ``stream_generator(seed, streams[j]).standard_normal(n_steps)``."""
    gens = [stream_generator(seed, s) for s in streams]
    out = np.empty((len(gens), n_steps))
    for row, gen in zip(out, gens):
        _fill_normal(gen, row)
    return out


def normal_block(n_steps: int, seed: int, streams) -> np.ndarray:
    """Step-major variant of :func:`normal_rows`: ``out[k, j]`` is draw ``k`` of ``streams[j]``."""
    return np.ascontiguousarray(normal_rows(n_steps, seed, streams).T)


def normal_chunks(n_steps: int, seed: int, streams, chunk: int):
    """Yield the normals of :func:`normal_block` in step-major pieces of ``chunk`` steps.

    Each stream is drawn in one call (per-call overhead dominates short draws) and the
    pieces are transposed while small enough to stay in cache.
    """
    rows = normal_rows(n_steps, seed, streams)
    for k0 in range(0, n_steps, chunk):
        yield rows[:, k0 : k0 + chunk].T.copy()


def path_block(grid: TimeGrid, seed: int, streams) -> np.ndarray:
    """Paths for several streams as columns of an ``(n_steps + 1, len(streams))`` array.

    Column ``j`` is bit-identical to ``sample_path(grid, seed, streams[j]).w``.
    """
    xi = normal_block(grid.n_steps, seed, streams)
    w = np.empty((grid.n_steps + 1, xi.shape[1]))
    w[0] = 0.0
    np.cumsum(xi * math.sqrt(grid.dt), axis=0, out=w[1:])
    return w


def rescale_path(path: BrownianPath, epsilon: float) -> BrownianPath:
    """Apply Wiener self-similarity to a stored path: values scaled by ``sqrt(epsilon)``.

    The node times are kept; since ``W(eps t)`` and ``sqrt(eps) W(t)`` share a law, the
    result is a path of the time-dilated field on the original grid.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if epsilon == 1:
        return path
    return BrownianPath(path.grid, math.sqrt(epsilon) * path.w, path.seed, path.stream)


def dump_path(path: BrownianPath, fp) -> None:
    """Write ``path`` as a fixed header followed by little-endian float64 values."""
    header = _DUMP_HEADER.pack(
        _DUMP_MAGIC, _DUMP_VERSION, path.grid.n_steps, path.grid.t_end, path.seed, path.stream
    )
    if isinstance(fp, (str, os.PathLike)):
        with open(fp, "wb") as f:
            f.write(header)
            f.write(path.w.astype("<f8").tobytes())
    else:
        fp.write(header)
        fp.write(path.w.astype("<f8").tobytes())


def load_path(fp) -> BrownianPath:
    if isinstance(fp, (str, os.PathLike)):
        with open(fp, "rb") as f:
            raw = f.read()
    else:
        raw = fp.read()
    magic, version, n_steps, t_end, seed, stream = _DUMP_HEADER.unpack_from(raw)
    if magic != _DUMP_MAGIC or version != _DUMP_VERSION:
        raise ValueError("not a path dump (bad magic or version)")
    w = np.frombuffer(raw, dtype="<f8", offset=_DUMP_HEADER.size).astype(float)
    return BrownianPath(TimeGrid(t_end, n_steps), w, seed, stream)
