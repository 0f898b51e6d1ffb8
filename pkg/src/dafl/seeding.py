"""Deterministic seed derivation.

Every randomized operation in the package is a pure function of its
inputs and one integer seed.  Composite experiments expand a single
run seed into independent substreams with

    derive_seed(run_seed, PURPOSE[...], extra indices...)

backed by ``numpy.random.SeedSequence``, whose hashing is stable across
platforms and numpy versions.  Purpose and strategy codes are fixed
constants, so adding a strategy or purpose never perturbs the streams
of existing ones.
"""

import numpy as np

# Purpose codes. Append only; renumbering changes every derived stream.
PURPOSE = {
    "net_init": 1,
    "pretrain": 2,
    "loop": 3,
    "bootstrap": 4,
    "selection": 5,
    "old_mix": 6,
    "fine_tune": 7,
}

# Strategy codes used by the experiment harness.
STRATEGY_CODE = {
    "dafl": 1,
    "dicl": 2,
    "dal-ridge": 3,
    "dal-logreg": 4,
    "dal-knn": 5,
}


def derive_seed(*parts: int) -> int:
    """Collapse an integer tuple into one 63-bit seed."""
    state = np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)
    return int(state[0] >> 1)
