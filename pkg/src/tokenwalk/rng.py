"""Seeded random number generation.

Every stochastic component uses the counter-based Philox generator so that
streams are reproducible across platforms and independent across replicas
(replica r uses seed base_seed + r).
"""

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Return a Philox-backed generator for the given integer seed."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.Generator(np.random.Philox(int(seed)))
