"""Deterministic per-(seed, agent, round, purpose) random streams.

Every stochastic component draws from its own derived stream, so results do
not depend on execution order and runs parallelize safely.
"""

from __future__ import annotations

import numpy as np

_PURPOSES = {"cx": 0, "cy": 1, "grad": 2, "data": 3, "test": 4, "misc": 5}


def substream(seed, agent, round_, purpose):
    if purpose not in _PURPOSES:
        raise ValueError(f"unknown stream purpose {purpose!r}")
    ss = np.random.SeedSequence(
        entropy=seed, spawn_key=(_PURPOSES[purpose], agent, round_)
    )
    return np.random.default_rng(ss)
