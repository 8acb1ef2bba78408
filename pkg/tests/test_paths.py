import io
import math

import numpy as np
import pytest
from scipy import stats

from qmeter.model import TimeGrid
from qmeter.paths import (
    dump_path,
    load_path,
    normal_block,
    normal_chunks,
    path_block,
    rescale_path,
    sample_path,
    stream_generator,
)


def test_reproducible_and_independent_streams():
    g = TimeGrid(1.0, 100)
    a, b = sample_path(g, 7, 3), sample_path(g, 7, 3)
    np.testing.assert_array_equal(a.w, b.w)
    assert a.w[0] == 0.0
    assert not np.array_equal(a.w, sample_path(g, 7, 4).w)


def test_increment_variance():
    g = TimeGrid(1.0, 1000)
    inc = np.concatenate([sample_path(g, 1, s).increments for s in range(20)])
    # sample variance of 2e4 normals: relative SE about 1%
    assert np.var(inc) / g.dt == pytest.approx(1.0, abs=0.05)
    assert stats.kstest(inc / math.sqrt(g.dt), "norm").pvalue > 0.001


def test_prefix_consistency():
    g = TimeGrid(2.0, 200)
    p = sample_path(g, 5, 0)
    np.testing.assert_array_equal(p.prefix(50).w, p.w[:51])
    # a shorter grid with the same dt draws the same leading increments
    np.testing.assert_array_equal(sample_path(g.prefix(50), 5, 0).w, p.w[:51])


def test_block_matches_single_paths():
    g = TimeGrid(1.0, 300)
    blk = path_block(g, 9, [2, 5, 11])
    for j, s in enumerate([2, 5, 11]):
        np.testing.assert_array_equal(blk[:, j], sample_path(g, 9, s).w)
    xi = normal_block(300, 9, [2, 5])
    np.testing.assert_array_equal(xi[:, 1], stream_generator(9, 5).standard_normal(300))
    joined = np.concatenate(list(normal_chunks(300, 9, [2, 5], 64)))
    np.testing.assert_array_equal(joined, xi)


def test_rescale_halves_at_quarter():
    p = sample_path(TimeGrid(1.0, 10), 0, 0)
    np.testing.assert_allclose(rescale_path(p, 0.25).w, 0.5 * p.w)
    assert rescale_path(p, 1.0) is p
    with pytest.raises(ValueError):
        rescale_path(p, 0.0)


def test_rescale_law():
    # sqrt(eps) W(t) on [0, 1] against W(eps t) sampled directly
    eps = 4.0
    a = np.array([rescale_path(sample_path(TimeGrid(1.0, 4), 2, s), eps).w[-1] for s in range(2000)])
    b = np.array([sample_path(TimeGrid(eps, 4), 3, s).w[-1] for s in range(2000)])
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_dump_roundtrip(tmp_path):
    p = sample_path(TimeGrid(3.0, 33), 42, 7)
    buf = io.BytesIO()
    dump_path(p, buf)
    buf.seek(0)
    q = load_path(buf)
    np.testing.assert_array_equal(q.w, p.w)
    assert (q.seed, q.stream, q.grid.n_steps, q.grid.t_end) == (42, 7, 33, 3.0)
    dump_path(p, tmp_path / "p.bin")
    np.testing.assert_array_equal(load_path(tmp_path / "p.bin").w, p.w)
    with pytest.raises(ValueError):
        load_path(io.BytesIO(b"XXXX" + bytes(40)))
