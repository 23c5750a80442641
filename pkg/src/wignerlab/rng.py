"""Counter-based random streams for reproducible parallel Monte Carlo.

Every trial owns an independent Philox stream whose 64-bit key is derived
from ``(master_seed, trial_index, stream_id)`` through numpy's
``SeedSequence`` hash. Inside a trial, matrix entries are drawn in a fixed
order, so the Philox counter position plays the role of the entry index.
Bit-equality is promised within one numpy build only.
"""

import numpy as np

# stream ids reserved for non-trial draws
REFERENCE_STREAM = 1
FIXTURE_STREAM = 2


def derive_seed(master_seed, trial_index, stream_id=0):
    """64-bit key for one trial stream."""
    ss = np.random.SeedSequence([int(master_seed), int(trial_index), int(stream_id)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def stream_from_seed(seed):
    return np.random.Generator(np.random.Philox(key=int(seed)))


def trial_stream(master_seed, trial_index, stream_id=0):
    """Independent generator for ``trial_index`` under ``master_seed``."""
    return stream_from_seed(derive_seed(master_seed, trial_index, stream_id))


def as_generator(rng):
    """Accept a Generator, an int seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return np.random.Generator(np.random.Philox())
    return stream_from_seed(rng)
