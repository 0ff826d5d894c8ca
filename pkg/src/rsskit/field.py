"""Guided set-by-set sampling for an operator in the field."""

from __future__ import annotations

import csv
import sys
from typing import Optional, Sequence

import numpy as np

from .designs import Design, DesignSpec, RankedSetSample, RankingMode, SampleEntry, require_feasible
from .errors import MissingInclusionError
from .estimators import hajek_edf, variance_report
from .inclusion import inclusion_table


class TerminalIO:
    def ask(self, prompt: str) -> str:
        return input(prompt + " ")

    def say(self, text: str) -> None:
        print(text)


class ScriptedIO:
    """Replays pre-recorded answers; prompts and answers are echoed as a transcript."""

    def __init__(self, answers: Sequence[str], stream=None):
        self._answers = iter(answers)
        self._stream = stream or sys.stdout

    def ask(self, prompt: str) -> str:
        try:
            answer = next(self._answers)
        except StopIteration:
            raise ValueError(f"response file exhausted at prompt: {prompt}") from None
        self._stream.write(f"{prompt} {answer}\n")
        return answer

    def say(self, text: str) -> None:
        self._stream.write(text + "\n")


def parse_ranking(text: str, k: int) -> list[int]:
    """Ranks typed for the announced units, in announced order."""
    tokens = text.replace(",", " ").split()
    try:
        ranks = [int(t) for t in tokens]
    except ValueError:
        raise ValueError(f"ranks must be integers, got {text!r}") from None
    if sorted(ranks) != list(range(1, k + 1)):
        raise ValueError(f"enter a permutation of 1..{k}, got {text!r}")
    return ranks


class FieldSession:
    def __init__(
        self,
        N: int,
        spec: DesignSpec,
        rng: np.random.Generator,
        io,
        aux: Optional[np.ndarray] = None,
        population_ranks: Optional[np.ndarray] = None,
        use_auxiliary: bool = False,
    ):
        require_feasible(spec, N)
        if use_auxiliary and aux is None:
            raise ValueError("--use-aux needs a population CSV with a y column")
        self.N, self.spec, self.rng, self.io = N, spec, rng, io
        self.aux = aux
        self.population_ranks = population_ranks
        self.use_auxiliary = use_auxiliary

    @staticmethod
    def read_population(path) -> dict:
        """Population CSV (``id`` required; ``y`` and ``rank`` used when filled)."""
        with open(path, newline="", encoding="utf-8") as fh:
            rows = sorted(csv.DictReader(fh), key=lambda row: int(row["id"]))
        if [int(r["id"]) for r in rows] != list(range(1, len(rows) + 1)):
            raise ValueError(f"{path}: ids must be 1..N")
        out = {"N": len(rows), "aux": None, "population_ranks": None}
        if rows and all(r.get("y") not in (None, "") for r in rows):
            out["aux"] = np.array([float(r["y"]) for r in rows])
        if rows and all(r.get("rank") not in (None, "") for r in rows):
            out["population_ranks"] = np.array([int(r["rank"]) for r in rows])
        return out

    def _rank_set(self, ids: list[int]) -> list[int]:
        """Return the set's ids in ascending judgment order."""
        if self.use_auxiliary:
            ordered = sorted(ids, key=lambda i: (self.aux[i - 1], i))
            self.io.say("  ranked by auxiliary variable: " + " < ".join(map(str, ordered)))
            return ordered
        k = len(ids)
        while True:
            text = self.io.ask(f"  rank units {' '.join(map(str, ids))} ({k} ranks, 1 = smallest):")
            try:
                ranks = parse_ranking(text, k)
            except ValueError as exc:
                self.io.say(f"  invalid ranking: {exc}")
                continue
            return [i for _, i in sorted(zip(ranks, ids))]

    def _measure(self, uid: int) -> float:
        while True:
            text = self.io.ask(f"  measured value for unit {uid}:")
            try:
                value = float(text)
            except ValueError:
                self.io.say(f"  not a number: {text!r}")
                continue
            if not np.isfinite(value):
                self.io.say(f"  not a finite number: {text!r}")
                continue
            return value

    def run(self) -> RankedSetSample:
        spec = self.spec
        pool = list(range(1, self.N + 1))
        entries, sets = [], []
        for h, r in enumerate(spec.rank_pattern, start=1):
            k = spec.k
            if len(pool) == k:
                ids = sorted(pool)
                note = " (forced: the remaining pool)"
            else:
                ids = sorted(int(i) for i in self.rng.choice(pool, size=k, replace=False))
                note = ""
            self.io.say(f"set {h}/{spec.n}: units {' '.join(map(str, ids))}{note}")
            ordered = self._rank_set(ids)
            uid = ordered[r - 1]
            self.io.say(f"  measure unit {uid} (rank {r})")
            value = self._measure(uid)
            prank = None if self.population_ranks is None else int(self.population_ranks[uid - 1])
            entries.append(SampleEntry(h, r, uid, value, prank))
            sets.append(tuple(ordered))
            if spec.design is Design.LEVEL1:
                pool.remove(uid)
            elif spec.design is Design.LEVEL2:
                pool = [i for i in pool if i not in ids]
        mode = RankingMode.BY_AUXILIARY if self.use_auxiliary else RankingMode.PERFECT
        return RankedSetSample(tuple(entries), spec, mode, tuple(sets), len(pool))

    def report(self, sample: RankedSetSample, at: Optional[float] = None, alpha: float = 0.05) -> dict:
        table = inclusion_table(self.spec, self.N)
        out: dict = {"design": self.spec.describe(), "N": self.N}
        try:
            edf = hajek_edf(sample, table)
        except MissingInclusionError as exc:
            out["note"] = str(exc)
            return out
        out["edf"] = [{"x": x, "F_hat": f} for x, f in edf.table_rows()]
        if at is not None:
            try:
                out["at"] = variance_report(sample, table, at, alpha).to_dict()
            except MissingInclusionError as exc:
                out["at"] = {"x": at, "F_hat": edf(at), "V_hat": None, "note": str(exc)}
        return out
