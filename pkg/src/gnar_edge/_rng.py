from __future__ import annotations

import numpy as np

#: Recorded in manifests and report headers.
RNG_ALGORITHM = "numpy.random.Philox"


def make_rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    """Return a Philox-backed generator; generators pass through untouched."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))
