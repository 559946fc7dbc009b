"""Counter-based random streams.

Every stream is keyed by ``(seed, *keys)``: the same key always yields the same
draws no matter how many other streams were consumed before it.
"""
import numpy as np

# stream purposes
SENSOR = 1
EPISODE = 2
TRAIN = 3
DAGGER = 4
INIT = 5


def stream(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def episode_seed(seed: int, *keys: int) -> int:
    """Derive a 63-bit child seed for an episode or trial."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(EPISODE, *(int(k) for k in keys)))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))
