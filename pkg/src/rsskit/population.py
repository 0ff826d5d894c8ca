"""Finite populations: quantile-grid construction, auxiliary ranking, true EDF."""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import special, stats

from .errors import DegenerateStandardizationError


class DistributionKind(enum.Enum):
    NORMAL = "normal"
    UNIFORM = "uniform"
    EXPONENTIAL = "exp"
    BETA52 = "beta52"

    def quantile(self, p):
        """Quantile function evaluated at probabilities ``p`` in (0, 1)."""
        return _QUANTILES[self](np.asarray(p, dtype=float))


def _beta52_quantile(p: np.ndarray) -> np.ndarray:
    # betaincinv inverts the regularized incomplete beta to near machine precision
    return special.betaincinv(5.0, 2.0, p)


_QUANTILES: dict[DistributionKind, Callable[[np.ndarray], np.ndarray]] = {
    DistributionKind.NORMAL: stats.norm.ppf,
    DistributionKind.UNIFORM: lambda p: p.copy(),
    DistributionKind.EXPONENTIAL: stats.expon.ppf,
    DistributionKind.BETA52: _beta52_quantile,
}


def rank_with_ties_by_id(values: np.ndarray) -> np.ndarray:
    """1-based ranks of ``values``; equal values are ordered by position."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.int64)
    ranks[order] = np.arange(1, len(values) + 1)
    return ranks


@dataclass(frozen=True, eq=False)
class Population:
    """An ordered finite population.

    Unit ``i`` (1-based) has study value ``x_values[i - 1]``; study values are
    non-decreasing in the id, so under perfect ranking the id *is* the
    population rank. ``judgment_ranks`` is the ranking used when units are
    ranked by the auxiliary variable.
    """

    x_values: np.ndarray
    aux_values: Optional[np.ndarray] = None
    judgment_ranks: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.asarray(self.x_values, dtype=float)
        if x.ndim != 1 or len(x) == 0:
            raise ValueError("x_values must be a non-empty 1-d array")
        if np.any(np.diff(x) < 0):
            raise ValueError("x_values must be non-decreasing in id")
        x.flags.writeable = False
        object.__setattr__(self, "x_values", x)
        aux = self.aux_values
        if aux is not None:
            aux = np.asarray(aux, dtype=float)
            if aux.shape != x.shape:
                raise ValueError("aux_values must have exactly N entries")
            aux.flags.writeable = False
            object.__setattr__(self, "aux_values", aux)
        ranks = self.judgment_ranks
        if ranks is None:
            ranks = rank_with_ties_by_id(aux) if aux is not None else np.arange(1, len(x) + 1)
        ranks = np.asarray(ranks, dtype=np.int64)
        if sorted(ranks.tolist()) != list(range(1, len(x) + 1)):
            raise ValueError("judgment_ranks must be a permutation of 1..N")
        ranks.flags.writeable = False
        object.__setattr__(self, "judgment_ranks", ranks)

    @property
    def N(self) -> int:
        return len(self.x_values)

    @property
    def ids(self) -> np.ndarray:
        return np.arange(1, self.N + 1)

    @property
    def has_auxiliary(self) -> bool:
        return self.aux_values is not None

    @classmethod
    def from_values(cls, x, aux=None) -> "Population":
        """Build a population from unsorted study values, relabelling by x-order."""
        x = np.asarray(x, dtype=float)
        order = np.argsort(x, kind="stable")
        return cls(x[order], None if aux is None else np.asarray(aux, dtype=float)[order])

    def quantile_index(self, p: float) -> int:
        """1-based index of the smallest population value with F(x) >= p."""
        # guard against p * N landing a hair above an integer (e.g. 0.3 * 20)
        idx = int(np.ceil(p * self.N - 1e-9))
        return min(max(idx, 1), self.N)

    def quantile_value(self, p: float) -> float:
        return float(self.x_values[self.quantile_index(p) - 1])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id", "x", "y", "rank"])
        for i in range(self.N):
            y = "" if self.aux_values is None else repr(float(self.aux_values[i]))
            writer.writerow([i + 1, repr(float(self.x_values[i])), y, int(self.judgment_ranks[i])])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_csv(cls, path) -> "Population":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: no population rows")
        rows.sort(key=lambda row: int(row["id"]))
        ids = [int(row["id"]) for row in rows]
        if ids != list(range(1, len(rows) + 1)):
            raise ValueError(f"{path}: ids must be 1..N")
        x = np.array([float(row["x"]) for row in rows])
        aux = None
        if rows[0].get("y") not in (None, ""):
            aux = np.array([float(row["y"]) for row in rows])
        ranks = None
        if rows[0].get("rank") not in (None, ""):
            ranks = np.array([int(row["rank"]) for row in rows])
        return cls(x, aux, ranks)


def generate_grid_population(N: int, dist: DistributionKind) -> Population:
    """Deterministic population with x_g = Q((g - 0.5) / N), g = 1..N."""
    if N < 1:
        raise ValueError("N must be at least 1")
    probs = (np.arange(1, N + 1) - 0.5) / N
    return Population(dist.quantile(probs))


def attach_auxiliary(pop: Population, rho: float, rng: np.random.Generator) -> Population:
    """Add Y = rho * standardized X + sqrt(1 - rho^2) * Z and rank units by Y.

    Standardization uses the finite-population mean and standard deviation
    (divisor N).
    """
    if not -1.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [-1, 1]")
    aux = auxiliary_values(pop.x_values, rho, rng.standard_normal(pop.N))
    return Population(pop.x_values, aux)


def auxiliary_values(x: np.ndarray, rho: float, z: np.ndarray) -> np.ndarray:
    """Ranking-error model applied to noise ``z`` (shape (..., N))."""
    sigma = x.std()
    if not sigma > 0:
        raise DegenerateStandardizationError("study variable is constant; cannot standardize")
    return rho * (x - x.mean()) / sigma + np.sqrt(1.0 - rho * rho) * z


def true_edf(pop: Population, x: float) -> float:
    return float(np.searchsorted(pop.x_values, x, side="right")) / pop.N
