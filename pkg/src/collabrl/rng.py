"""Deterministic, order-independent RNG stream derivation.

Every random draw in an experiment comes from a generator derived from
(experiment seed, stream tag, identifiers...). Streams are independent of
execution order, so parallel worker schedules reproduce the sequential
reference bit-exactly, and baseline modes sharing a seed see identical
channels and initializations.
"""

from __future__ import annotations

import numpy as np

STREAM_INIT = 1        # per-agent parameter initialization
STREAM_TRAIN = 2       # per-agent per-round local training
STREAM_EVAL = 3        # per-round similarity evaluation
STREAM_CHANNEL = 4     # per-round fading realization
STREAM_POSITIONS = 5   # per-experiment agent placement
STREAM_SELECT = 6      # per-round random-selection membership
STREAM_ALLOC = 7       # per-round random RB policy draws
STREAM_GLOBAL = 8      # global-model initialization


def rng_for(seed: int, *parts: int) -> np.random.Generator:
    """Generator for one (seed, stream, ids...) coordinate."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, parts)]))
