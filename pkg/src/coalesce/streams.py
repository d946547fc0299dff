"""Counter-derived random streams.

Every stream is a pure function of ``(master_seed, purpose, index)`` so that
trials can run in any order, on any number of workers, and still draw the
same numbers.  Philox is counter-based, which is what makes this cheap.
"""

import numpy as np

_INIT = 0
_TRIAL = 1


def _stream(master_seed: int, *key: int) -> np.random.Generator:
    if master_seed < 0:
        raise ValueError("master seed must be a nonnegative integer")
    seq = np.random.SeedSequence(master_seed, spawn_key=key)
    return np.random.Generator(np.random.Philox(seq))


def init_stream(master_seed: int) -> np.random.Generator:
    """Stream used once to draw the shared initial configuration."""
    return _stream(master_seed, _INIT)


def trial_stream(master_seed: int, trial_index: int) -> np.random.Generator:
    return _stream(master_seed, _TRIAL, trial_index)
