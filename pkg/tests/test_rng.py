import numpy as np

from wignerlab.rng import FIXTURE_STREAM, as_generator, derive_seed, stream_from_seed, trial_stream


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(1, 2) == derive_seed(1, 2)
    keys = {derive_seed(m, t, s) for m in range(3) for t in range(50) for s in range(3)}
    assert len(keys) == 3 * 50 * 3


def test_trial_stream_reproducible():
    a = trial_stream(7, 3).standard_normal(10)
    b = trial_stream(7, 3).standard_normal(10)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, trial_stream(7, 4).standard_normal(10))
    assert not np.array_equal(a, trial_stream(7, 3, FIXTURE_STREAM).standard_normal(10))


def test_as_generator():
    g = stream_from_seed(5)
    assert as_generator(g) is g
    assert np.array_equal(as_generator(5).random(3), stream_from_seed(5).random(3))
    assert isinstance(as_generator(None), np.random.Generator)


def test_streams_uncorrelated():
    x = np.array([trial_stream(0, t).standard_normal() for t in range(4000)])
    y = np.array([trial_stream(0, t, 1).standard_normal() for t in range(4000)])
    assert abs(np.corrcoef(x, y)[0, 1]) < 4 / np.sqrt(4000)
