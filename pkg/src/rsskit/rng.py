"""Seed derivation for reproducible, worker-count-independent Monte Carlo."""

from __future__ import annotations

import numpy as np

# replications are processed in fixed blocks; each block owns one stream
BLOCK_SIZE = 2000


def block_rng(master_seed: int, block_index: int, stream: int = 0) -> np.random.Generator:
    seq = np.random.SeedSequence(master_seed, spawn_key=(stream, block_index))
    return np.random.default_rng(seq)


def blocks(reps: int, block_size: int = BLOCK_SIZE):
    """Yield (block_index, size) pairs covering ``reps`` replications."""
    for b, start in enumerate(range(0, reps, block_size)):
        yield b, min(block_size, reps - start)
