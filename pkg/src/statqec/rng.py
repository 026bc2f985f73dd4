"""Counter-based random streams.

Trials are keyed by (master_seed, trial_index) through a Philox counter
generator, so any trial can be drawn independently of all others.  Results
aggregated over trials are therefore byte-identical no matter how the
trial range is split across workers.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def trial_generator(master_seed: int, trial_index: int) -> np.random.Generator:
    """Independent generator for one trial of one experiment."""
    key = np.array([master_seed & _MASK64, trial_index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
