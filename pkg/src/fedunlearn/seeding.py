"""Deterministic child-seed derivation.

One master seed fans out into independent streams through
`numpy.random.SeedSequence` spawn keys. Every random decision in a run
is addressed by a path like (PHASE, round, client); adding new consumers
(e.g. extra metrics) never perturbs existing streams.

Phase codes used across the package:

    0 train        per-round, per-client batch shuffling
    1 retrain      ditto, for the from-scratch baseline
    2 posttrain    light recovery rounds
    3 unlearn      ascent batch shuffling and ball-radius sampling
    4 init         global model initialization (5: retrain initialization)
    6 data         partitioning, poison selection, train/val splits
"""

from __future__ import annotations

import numpy as np

PHASE_TRAIN = 0
PHASE_RETRAIN = 1
PHASE_POSTTRAIN = 2
PHASE_UNLEARN = 3
PHASE_INIT = 4
PHASE_RETRAIN_INIT = 5
PHASE_DATA = 6


def child_seed(master_seed: int, *path: int) -> np.random.SeedSequence:
    """Seed sequence for the stream addressed by `path` under the master seed."""
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(p) for p in path))


def child_rng(master_seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(child_seed(master_seed, *path))
