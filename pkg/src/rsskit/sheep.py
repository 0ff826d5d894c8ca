"""Sheep-weight application: the published level-2 sample (k=3, m=7, N=224).

Only the 21 measured weights and the population summary statistics are
published, not the 224 population records. Second-order probabilities need
each measured sheep's population rank, so those ranks are reconstructed:
a 224-unit grid is built by interpolating the published quantiles and each
measured weight is matched to its nearest free grid unit (perfect ranking by
weight). Callers who hold the real ranks can pass them instead.
"""

from __future__ import annotations

import numpy as np

from .designs import Design, DesignSpec, RankedSetSample
from .inclusion import InclusionTable, level2_inclusion

N_SHEEP = 224
SET_SIZE = 3
CYCLES = 7

# rows are cycles, columns the measured in-set rank 1..3
TABLE2 = (
    (27.6, 27.9, 34.0),
    (25.5, 30.2, 25.5),
    (26.5, 23.5, 25.9),
    (23.0, 25.0, 40.5),
    (20.5, 30.5, 35.1),
    (23.0, 31.0, 33.5),
    (27.9, 33.5, 35.5),
)

# min, 1st quartile, median, 3rd quartile, max of weight at seven months (kg)
WEIGHT_QUANTILES = ((0.0, 20.30), (0.25, 25.50), (0.5, 27.90), (0.75, 31.00), (1.0, 40.50))


def sample_values() -> list[float]:
    return [v for row in TABLE2 for v in row]


def design_spec() -> DesignSpec:
    return DesignSpec(Design.LEVEL2, SET_SIZE, CYCLES)


def reconstructed_population_values(N: int = N_SHEEP) -> np.ndarray:
    probs, values = zip(*WEIGHT_QUANTILES)
    return np.interp((np.arange(1, N + 1) - 0.5) / N, probs, values)


def reconstructed_ranks(values=None, N: int = N_SHEEP) -> list[int]:
    """Population rank for each measured value, matched to the nearest free grid unit."""
    values = sample_values() if values is None else list(values)
    grid = reconstructed_population_values(N)
    free = np.ones(N, dtype=bool)
    ranks = [0] * len(values)
    for idx in np.argsort(values, kind="stable"):
        dist = np.where(free, np.abs(grid - values[idx]), np.inf)
        unit = int(np.argmin(dist))
        free[unit] = False
        ranks[idx] = unit + 1
    return ranks


def sample(population_ranks=None) -> RankedSetSample:
    ranks = reconstructed_ranks() if population_ranks is None else list(population_ranks)
    return RankedSetSample.from_values(sample_values(), design_spec(), ranks)


def inclusion() -> InclusionTable:
    return level2_inclusion(design_spec(), N_SHEEP)
