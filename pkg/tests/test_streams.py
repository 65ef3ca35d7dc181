import numpy as np

from raretail.streams import CHUNK, THREADS_ENV, chunk_rng, chunk_sizes, map_chunks, worker_count


def test_chunk_sizes():
    assert chunk_sizes(0) == []
    assert chunk_sizes(CHUNK) == [CHUNK]
    assert chunk_sizes(2 * CHUNK + 3) == [CHUNK, CHUNK, 3]


def test_worker_cap(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "1")
    assert worker_count() == 1
    monkeypatch.setenv(THREADS_ENV, "not-a-number")
    assert worker_count() >= 1


def test_streams_distinct_and_reproducible():
    a = chunk_rng(5, 0).random(4)
    assert np.array_equal(a, chunk_rng(5, 0).random(4))
    assert not np.array_equal(a, chunk_rng(5, 1).random(4))
    assert not np.array_equal(a, chunk_rng(6, 0).random(4))


def test_map_chunks_order_and_threads(monkeypatch):
    fn = lambda rng, size: rng.random(size)
    one = np.concatenate(map_chunks(fn, 40, 1, threads=1, chunk=7))
    many = np.concatenate(map_chunks(fn, 40, 1, threads=4, chunk=7))
    assert np.array_equal(one, many) and one.size == 40
    monkeypatch.setenv(THREADS_ENV, "2")
    assert np.array_equal(np.concatenate(map_chunks(fn, 40, 1, chunk=7)), one)
