"""SRS and level-0/1/2 ranked-set draw procedures."""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import InfeasibleDesignError, MissingAuxiliaryError
from .population import Population


class Design(enum.Enum):
    SRS = "srs"
    LEVEL0 = "l0"
    LEVEL1 = "l1"
    LEVEL2 = "l2"


class RankingMode(enum.Enum):
    PERFECT = "perfect"
    BY_AUXILIARY = "auxiliary"


@dataclass(frozen=True)
class DesignSpec:
    """Design identity plus set size ``k``, cycles ``m`` and measured-rank pattern.

    SRS is represented with ``k = 1`` and ``m = n``: every "set" is a single
    unit drawn without replacement.
    """

    design: Design
    k: int
    m: int
    rank_pattern: tuple[int, ...] = ()

    def __post_init__(self):
        if self.k < 1 or self.m < 1:
            raise ValueError("k and m must be positive")
        pattern = tuple(int(r) for r in self.rank_pattern) or balanced_pattern(self.k, self.m)
        if len(pattern) != self.m * self.k:
            raise ValueError(f"rank pattern must have m*k = {self.m * self.k} entries")
        if any(not 1 <= r <= self.k for r in pattern):
            raise ValueError(f"rank pattern entries must lie in 1..{self.k}")
        object.__setattr__(self, "rank_pattern", pattern)

    @classmethod
    def srs(cls, n: int) -> "DesignSpec":
        return cls(Design.SRS, 1, n)

    @property
    def n(self) -> int:
        return len(self.rank_pattern)

    @property
    def is_balanced(self) -> bool:
        return self.rank_pattern == balanced_pattern(self.k, self.m)

    def rank_counts(self) -> np.ndarray:
        """Number of sets measuring each in-set rank 1..k."""
        return np.bincount(self.rank_pattern, minlength=self.k + 1)[1:]

    def describe(self) -> str:
        if self.design is Design.SRS:
            return f"SRS(n={self.n})"
        return f"{self.design.name}(k={self.k}, m={self.m})"


def balanced_pattern(k: int, m: int) -> tuple[int, ...]:
    return tuple(range(1, k + 1)) * m


def feasibility_check(spec: DesignSpec, N: int) -> bool:
    n, k = spec.n, spec.k
    if spec.design is Design.SRS:
        return n <= N
    if spec.design is Design.LEVEL0:
        return k <= N
    if spec.design is Design.LEVEL1:
        return (n - 1) + k <= N
    # every unit of every set is removed, so n*k (= m*k^2 when balanced) distinct units are needed
    return n * k <= N


def require_feasible(spec: DesignSpec, N: int) -> None:
    if not feasibility_check(spec, N):
        raise InfeasibleDesignError(f"{spec.describe()} is infeasible for N={N}")


@dataclass(frozen=True)
class BatchDraw:
    """Vectorized draws: ``members[rep, h]`` holds set h's 0-based unit indices in
    judgment order; ``measured[rep, h]`` is the unit measured from set h."""

    members: np.ndarray
    measured: np.ndarray
    pool_size: np.ndarray


def draw_batch(
    design: Design,
    N: int,
    k: int,
    pattern: Sequence[int],
    rank_keys: np.ndarray,
    reps: int,
    rng: np.random.Generator,
) -> BatchDraw:
    """Run ``reps`` independent executions of a draw procedure.

    ``rank_keys`` gives the ranking position of each unit, shape (N,) or
    (reps, N); lower keys rank lower within a set.
    """
    pattern = np.asarray(pattern, dtype=np.int64)
    n = len(pattern)
    keys_b = np.broadcast_to(np.asarray(rank_keys), (reps, N))
    if design is Design.SRS:
        picks = np.argsort(rng.random((reps, N)), axis=1)[:, :n]
        members = picks[:, :, None]
        return BatchDraw(members, picks, np.full(reps, N - n))

    available = np.ones((reps, N), dtype=bool)
    members = np.empty((reps, n, k), dtype=np.int64)
    rows = np.arange(reps)
    for h, r in enumerate(pattern):
        u = rng.random((reps, N))
        u[~available] = 2.0
        chosen = np.argpartition(u, k - 1, axis=1)[:, :k] if k < N else np.tile(np.arange(N), (reps, 1))
        ranked = np.take_along_axis(chosen, np.argsort(np.take_along_axis(keys_b, chosen, 1), axis=1), 1)
        members[:, h] = ranked
        if design is Design.LEVEL1:
            available[rows, ranked[:, r - 1]] = False
        elif design is Design.LEVEL2:
            available[rows[:, None], ranked] = False
    measured = members[np.arange(reps)[:, None], np.arange(n)[None, :], pattern[None, :] - 1]
    return BatchDraw(members, measured, available.sum(axis=1))


def ranking_keys(pop: Population, mode: RankingMode) -> np.ndarray:
    if mode is RankingMode.PERFECT:
        # ids are already in x-order with ties broken by id
        return np.arange(1, pop.N + 1)
    if not pop.has_auxiliary:
        raise MissingAuxiliaryError("auxiliary ranking requested but population has no aux values")
    return pop.judgment_ranks


@dataclass(frozen=True)
class SampleEntry:
    set_index: int
    in_set_rank: int
    population_id: Optional[int]
    value: float
    population_rank: Optional[int] = None
    measured: bool = True


@dataclass(frozen=True)
class RankedSetSample:
    """A drawn sample.

    ``entries`` lists the measured units (one per set). ``sets`` records every
    set's members (population ids in judgment order), measured or not.
    """

    entries: tuple[SampleEntry, ...]
    spec: DesignSpec
    ranking_mode: RankingMode = RankingMode.PERFECT
    sets: tuple[tuple[int, ...], ...] = ()
    pool_size_after: Optional[int] = None

    @property
    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.entries], dtype=float)

    @property
    def ranks(self) -> list[Optional[int]]:
        return [e.population_rank for e in self.entries]

    @classmethod
    def from_values(cls, values, spec: DesignSpec, population_ranks=None) -> "RankedSetSample":
        """Wrap field measurements listed in set order (set h measured rank r_h)."""
        values = list(values)
        if len(values) != spec.n:
            raise ValueError(f"expected {spec.n} values, got {len(values)}")
        ranks = list(population_ranks) if population_ranks is not None else [None] * spec.n
        entries = tuple(
            SampleEntry(h + 1, spec.rank_pattern[h], ranks[h], float(v), ranks[h])
            for h, v in enumerate(values)
        )
        return cls(entries, spec)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["set_index", "in_set_rank", "population_id", "value", "measured", "population_rank"])
        measured_ids = {(e.set_index, e.population_id) for e in self.entries}
        for e in self.entries:
            writer.writerow(_entry_row(e, 1))
            if self.sets and e.population_id is not None:
                for pos, uid in enumerate(self.sets[e.set_index - 1], start=1):
                    if (e.set_index, uid) not in measured_ids:
                        writer.writerow([e.set_index, pos, uid, "", 0, ""])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_csv(cls, path, spec: Optional[DesignSpec] = None) -> "RankedSetSample":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        measured = [row for row in rows if row.get("measured", "1") in ("1", "")]
        entries = []
        for row in measured:
            pid = _maybe_int(row.get("population_id"))
            rank = _maybe_int(row.get("population_rank"))
            entries.append(SampleEntry(
                int(row["set_index"]), int(row["in_set_rank"]), pid, float(row["value"]),
                rank if rank is not None else pid,
            ))
        entries.sort(key=lambda e: e.set_index)
        if spec is None:
            spec = _infer_spec(entries)
        return cls(tuple(entries), spec)


def _infer_spec(entries) -> DesignSpec:
    """Level-2 spec implied by the in-set ranks; the design level itself is not in the CSV."""
    pattern = tuple(e.in_set_rank for e in entries)
    k = max(pattern)
    if len(pattern) % k:
        raise ValueError("cannot infer the design from the sample CSV; pass the DesignSpec explicitly")
    return DesignSpec(Design.LEVEL2, k, len(pattern) // k, pattern)


def _entry_row(e: SampleEntry, flag: int) -> list:
    return [
        e.set_index, e.in_set_rank, "" if e.population_id is None else e.population_id,
        repr(e.value), flag, "" if e.population_rank is None else e.population_rank,
    ]


def _maybe_int(text) -> Optional[int]:
    return None if text in (None, "") else int(text)


def draw_srs_wor(pop: Population, n: int, rng: np.random.Generator) -> RankedSetSample:
    """Simple random sample of ``n`` distinct units, in draw order."""
    spec = DesignSpec.srs(n)
    require_feasible(spec, pop.N)
    batch = draw_batch(Design.SRS, pop.N, 1, spec.rank_pattern, np.arange(1, pop.N + 1), 1, rng)
    ids = batch.measured[0] + 1
    entries = tuple(
        SampleEntry(h + 1, 1, int(i), float(pop.x_values[i - 1]), int(i)) for h, i in enumerate(ids)
    )
    return RankedSetSample(entries, spec, RankingMode.PERFECT, tuple((int(i),) for i in ids), pop.N - n)


def draw_rss(
    pop: Population,
    spec: DesignSpec,
    ranking_mode: RankingMode,
    rng: np.random.Generator,
) -> RankedSetSample:
    """Execute one draw of ``spec`` against ``pop``.

    Sets are drawn in rank-pattern order. Each set takes k units without
    replacement from the current pool and measures the unit ranked
    ``rank_pattern[h]``. Level 0 returns every unit to the pool, level 1 only
    drops the measured unit, level 2 drops the whole set.
    """
    if spec.design is Design.SRS:
        return draw_srs_wor(pop, spec.n, rng)
    require_feasible(spec, pop.N)
    keys = ranking_keys(pop, ranking_mode)
    batch = draw_batch(spec.design, pop.N, spec.k, spec.rank_pattern, keys, 1, rng)
    entries = []
    for h, unit in enumerate(batch.measured[0]):
        uid = int(unit) + 1
        entries.append(SampleEntry(h + 1, spec.rank_pattern[h], uid, float(pop.x_values[unit]), int(keys[unit])))
    sets = tuple(tuple(int(u) + 1 for u in row) for row in batch.members[0])
    return RankedSetSample(tuple(entries), spec, ranking_mode, sets, int(batch.pool_size[0]))
