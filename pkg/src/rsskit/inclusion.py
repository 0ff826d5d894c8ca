"""First- and second-order inclusion probabilities for SRS and level-0/1/2 designs.

Tables are indexed by population rank (1..N, stored 0-based): the unit that
the ranking mechanism places i-th in the population.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import gammaln

from . import rng as rngmod
from .designs import Design, DesignSpec, draw_batch, require_feasible
from .errors import EnumerationBudgetError

EXACT_COMB_LIMIT = 300
DEFAULT_STATE_BUDGET = 10**7


class Method(enum.Enum):
    CLOSED_FORM = "closed"
    EXACT_RECURSION = "exact"
    EXACT_ENUMERATION = "enumeration"
    MONTE_CARLO = "mc"


@dataclass(frozen=True, eq=False)
class InclusionTable:
    first_order: np.ndarray
    second_order: np.ndarray
    method: Method
    spec: DesignSpec
    N: int
    standard_errors: Optional[np.ndarray] = None
    reps: Optional[int] = None

    @property
    def first_order_se(self) -> Optional[np.ndarray]:
        return None if self.standard_errors is None else np.diag(self.standard_errors)

    def to_json(self, path=None) -> str:
        doc = {
            "N": self.N,
            "design": self.spec.design.value,
            "k": self.spec.k,
            "m": self.spec.m,
            "rank_pattern": list(self.spec.rank_pattern),
            "method": self.method.value,
            "first_order": self.first_order.tolist(),
            "second_order": self.second_order.ravel().tolist(),
        }
        if self.standard_errors is not None:
            doc["standard_errors"] = self.standard_errors.ravel().tolist()
            doc["reps"] = self.reps
        text = json.dumps(doc)
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_json(cls, source) -> "InclusionTable":
        if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
            source = Path(source).read_text(encoding="utf-8")
        doc = json.loads(source)
        N = int(doc["N"])
        spec = DesignSpec(Design(doc["design"]), int(doc["k"]), int(doc["m"]), tuple(doc["rank_pattern"]))
        se = doc.get("standard_errors")
        return cls(
            np.asarray(doc["first_order"], dtype=float),
            np.asarray(doc["second_order"], dtype=float).reshape(N, N),
            Method(doc["method"]),
            spec,
            N,
            None if se is None else np.asarray(se, dtype=float).reshape(N, N),
            doc.get("reps"),
        )


# -- combinatorics ----------------------------------------------------------

def _binom_table(N: int, kmax: int) -> np.ndarray:
    """float table C(a, b) for 0 <= a <= N, 0 <= b <= kmax."""
    table = np.zeros((N + 1, kmax + 1))
    if N <= EXACT_COMB_LIMIT:
        for a in range(N + 1):
            for b in range(min(a, kmax) + 1):
                table[a, b] = float(math.comb(a, b))
    else:
        a = np.arange(N + 1)[:, None]
        b = np.arange(kmax + 1)[None, :]
        with np.errstate(invalid="ignore"):
            logc = gammaln(a + 1) - gammaln(b + 1) - gammaln(np.maximum(a - b, 0) + 1)
        table = np.where(b <= a, np.exp(logc), 0.0)
    return table


def _lookup(table: np.ndarray, a, b):
    """C(a, b) with the convention C(a, b) = 0 outside 0 <= b <= a."""
    a = np.asarray(a)
    b = np.asarray(b)
    ok = (a >= 0) & (b >= 0) & (b <= a) & (a < table.shape[0]) & (b < table.shape[1])
    return np.where(ok, table[np.clip(a, 0, table.shape[0] - 1), np.clip(b, 0, table.shape[1] - 1)], 0.0)


def order_statistic_prob(i: int, r: int, k: int, N: int) -> float:
    """Probability that population unit i holds rank r in a random k-set."""
    if not (1 <= i <= N and 1 <= r <= k <= N):
        raise ValueError(f"need 1 <= i <= N and 1 <= r <= k <= N, got i={i}, r={r}, k={k}, N={N}")
    if N <= EXACT_COMB_LIMIT:
        return float(Fraction(math.comb(i - 1, r - 1) * math.comb(N - i, k - r), math.comb(N, k)))
    logp = (_logcomb(i - 1, r - 1) + _logcomb(N - i, k - r) - _logcomb(N, k))
    return math.exp(logp) if logp > -math.inf else 0.0


def _logcomb(a: int, b: int) -> float:
    if b < 0 or b > a:
        return -math.inf
    return math.lgamma(a + 1) - math.lgamma(b + 1) - math.lgamma(a - b + 1)


def order_statistic_probs(r: int, k: int, N: int) -> np.ndarray:
    """Vector of I(i; r, k, N) over i = 1..N."""
    return np.array([order_statistic_prob(i, r, k, N) for i in range(1, N + 1)])


# -- closed forms -----------------------------------------------------------

def srs_inclusion(N: int, n: int) -> InclusionTable:
    spec = DesignSpec.srs(n)
    require_feasible(spec, N)
    joint = n * (n - 1) / (N * (N - 1)) if N > 1 else 0.0
    second = np.full((N, N), joint)
    np.fill_diagonal(second, n / N)
    return InclusionTable(np.full(N, n / N), second, Method.CLOSED_FORM, spec, N)


def level0_inclusion(spec: DesignSpec, N: int) -> InclusionTable:
    """Independent sets: a unit escapes the sample iff it escapes every set."""
    require_feasible(spec, N)
    probs = {r: order_statistic_probs(r, spec.k, N) for r in set(spec.rank_pattern)}
    miss = np.ones(N)
    miss_both = np.ones((N, N))
    for r in spec.rank_pattern:
        p = probs[r]
        miss *= 1.0 - p
        miss_both *= 1.0 - p[:, None] - p[None, :]
    first = 1.0 - miss
    second = 1.0 - miss[:, None] - miss[None, :] + miss_both
    np.fill_diagonal(second, first)
    return InclusionTable(first, second, Method.CLOSED_FORM, _with_design(spec, Design.LEVEL0), N)


def level2_inclusion(spec: DesignSpec, N: int) -> InclusionTable:
    """Level-2 tables.

    Sets are exchangeable and disjoint, so a unit is measured in at most one
    set: pi_i = sum_h I(i; r_h, k, N) (= n/N for a balanced pattern). For a
    pair i < i', unit i at rank r in one set and i' at rank s in another,
    lam counts members of i's set lying strictly between i and i'.
    """
    require_feasible(spec, N)
    k = spec.k
    counts = spec.rank_counts()
    first = sum(counts[r - 1] * order_statistic_probs(r, k, N) for r in range(1, k + 1) if counts[r - 1])
    table = _binom_table(N, k)
    lo, hi = np.triu_indices(N, 1)
    i = lo + 1
    j = hi + 1
    denom = math.comb(N, k) * math.comb(N - k, k) if N <= EXACT_COMB_LIMIT else None
    pair = np.zeros(len(i))
    for r in range(1, k + 1):
        for s in range(1, k + 1):
            mult = counts[r - 1] * counts[s - 1] - (counts[r - 1] if r == s else 0)
            if mult == 0:
                continue
            acc = np.zeros(len(i))
            for lam in range(0, k - r + 1):
                acc += (
                    _lookup(table, i - 1, r - 1)
                    * _lookup(table, j - i - 1, lam)
                    * _lookup(table, N - j, k - r - lam)
                    * _lookup(table, j - 1 - r - lam, s - 1)
                    * _lookup(table, N - j - k + r + lam, k - s)
                )
            pair += mult * acc
    if denom is not None:
        pair /= float(denom)
    else:
        pair /= math.exp(_logcomb(N, k) + _logcomb(N - k, k))
    second = np.zeros((N, N))
    second[lo, hi] = pair
    second[hi, lo] = pair
    np.fill_diagonal(second, first)
    return InclusionTable(first, second, Method.CLOSED_FORM, _with_design(spec, Design.LEVEL2), N)


def _with_design(spec: DesignSpec, design: Design) -> DesignSpec:
    return spec if spec.design is design else DesignSpec(design, spec.k, spec.m, spec.rank_pattern)


# -- level 1 ----------------------------------------------------------------

def _position_probs(N: int, k: int, r: int, M: int, table: np.ndarray):
    """Padded (prob, cdf) arrays over pool positions 0..N+1 for pool size M."""
    q = np.arange(N + 2)
    prob = np.where((q >= 1) & (q <= M), _lookup(table, q - 1, r - 1) * _lookup(table, M - q, k - r), 0.0)
    prob /= prob.sum()
    return prob, np.cumsum(prob)


def _level1_recursion(spec: DesignSpec, N: int, pair_block: int = 1500):
    """Exact level-1 probabilities by tracking, per unit (pair), how many
    removed units sit below it (between the pair).

    Only the measured unit leaves the pool, and a measured unit's pool
    position has law I(q; r, k, M), so these counts are Markov.
    """
    k, n = spec.k, spec.n
    table = _binom_table(N, k)
    steps = [_position_probs(N, k, r, N - t, table) for t, r in enumerate(spec.rank_pattern)]
    D = n + 2

    units = np.arange(1, N + 1)
    single = np.zeros((N, D))
    single[:, 0] = 1.0
    first = np.zeros(N)
    c = np.arange(D)
    for prob, cdf in steps:
        pos = np.clip(units[:, None] - c[None, :], 0, N + 1)
        below = cdf[np.clip(pos - 1, 0, N + 1)]
        first += (single * prob[pos]).sum(axis=1)
        moved = single * below
        single = single * (1.0 - cdf[pos])
        single[:, 1:] += moved[:, :-1]

    lo, hi = np.triu_indices(N, 1)
    joint = np.empty(len(lo))
    for start in range(0, len(lo), pair_block):
        sl = slice(start, start + pair_block)
        joint[sl] = _level1_pairs(lo[sl] + 1, hi[sl] + 1, steps, N, D)
    second = np.zeros((N, N))
    second[lo, hi] = joint
    second[hi, lo] = joint
    np.fill_diagonal(second, first)
    return first, second


def _level1_pairs(U, V, steps, N, D):
    P = len(U)
    both = np.zeros((P, D, D))
    both[:, 0, 0] = 1.0
    only_v = np.zeros((P, 2 * D + 1))  # u measured; index = removed units below v
    only_u = np.zeros((P, 2 * D + 1))  # v measured; index = removed units below u
    done = np.zeros(P)
    a = np.arange(D)[None, :, None]
    b = np.arange(D)[None, None, :]
    c = np.arange(2 * D + 1)[None, :]
    top = N + 1
    for prob, cdf in steps:
        pu = np.clip(U[:, None, None] - a, 0, top)
        pv = np.clip(V[:, None, None] - a - b, 0, top)
        below = cdf[np.clip(pu - 1, 0, top)]
        between = cdf[np.clip(pv - 1, 0, top)] - cdf[pu]
        above = 1.0 - cdf[pv]
        hit_u = both * prob[pu]
        hit_v = both * prob[pv]

        # singles first, from their pre-step state
        qv = np.clip(V[:, None] - c, 0, top)
        done += (only_v * prob[qv]).sum(axis=1)
        shift_v = only_v * cdf[np.clip(qv - 1, 0, top)]
        only_v = only_v * (1.0 - cdf[qv])
        only_v[:, 1:] += shift_v[:, :-1]

        qu = np.clip(U[:, None] - c, 0, top)
        done += (only_u * prob[qu]).sum(axis=1)
        shift_u = only_u * cdf[np.clip(qu - 1, 0, top)]
        only_u = only_u * (1.0 - cdf[qu])
        only_u[:, 1:] += shift_u[:, :-1]

        for ai in range(D):
            only_v[:, ai + 1:ai + 1 + D] += hit_u[:, ai, :]
        only_u[:, :D] += hit_v.sum(axis=2)

        new = both * above
        new[:, 1:, :] += (both * below)[:, :-1, :]
        new[:, :, 1:] += (both * between)[:, :, :-1]
        both = new
    return done


def _level1_subset_states(spec: DesignSpec, N: int, budget: int):
    """Exact level-1 probabilities from the full law of the removed set."""
    k = spec.k
    table = _binom_table(N, k)
    states: dict[int, float] = {0: 1.0}
    visited = 1
    for t, r in enumerate(spec.rank_pattern):
        M = N - t
        prob, _ = _position_probs(N, k, r, M, table)
        nxt: dict[int, float] = {}
        for mask, p in states.items():
            remaining = [u for u in range(N) if not mask >> u & 1]
            for q, u in enumerate(remaining, start=1):
                w = prob[q]
                if w:
                    key = mask | (1 << u)
                    nxt[key] = nxt.get(key, 0.0) + p * w
        states = nxt
        visited += len(states)
        if visited > budget:
            raise EnumerationBudgetError(
                f"level-1 state enumeration exceeds budget of {budget} states; use mode='exact' or 'mc'"
            )
    first = np.zeros(N)
    second = np.zeros((N, N))
    for mask, p in states.items():
        members = [u for u in range(N) if mask >> u & 1]
        first[members] += p
        second[np.ix_(members, members)] += p
    return first, second


def level1_inclusion(
    spec: DesignSpec,
    N: int,
    mode: str = "exact",
    reps: int = 100_000,
    seed: int = 0,
    budget: int = DEFAULT_STATE_BUDGET,
) -> InclusionTable:
    """Level-1 tables.

    mode ``"exact"`` runs the count-state recursion (any N),
    ``"enumeration"`` walks the law of the removed set (budgeted),
    ``"mc"`` estimates by simulation.
    """
    spec = _with_design(spec, Design.LEVEL1)
    require_feasible(spec, N)
    if mode == "mc":
        return mc_inclusion(N, spec, reps, seed)
    if mode == "enumeration":
        first, second = _level1_subset_states(spec, N, budget)
        return InclusionTable(first, second, Method.EXACT_ENUMERATION, spec, N)
    if mode != "exact":
        raise ValueError(f"unknown level-1 mode {mode!r}")
    first, second = _level1_recursion(spec, N)
    return InclusionTable(first, second, Method.EXACT_RECURSION, spec, N)


# -- oracles ----------------------------------------------------------------

def enumerate_outcomes(spec: DesignSpec, N: int, budget: int = 2_000_000):
    """Every equally-detailed outcome of the draw under perfect ranking.

    Returns a list of (probability, measured unit indices in set order,
    0-based). Outcomes are whole sequences of sets, so this is the brute-force
    reference for everything else in this module.
    """
    require_feasible(spec, N)
    if spec.design is Design.SRS:
        total = math.comb(N, spec.n)
        _check_budget(total, budget)
        p = 1.0 / total
        return [(p, combo) for combo in itertools.combinations(range(N), spec.n)]

    k = spec.k
    size = 1
    pool = N
    for _ in spec.rank_pattern:
        size *= math.comb(pool, k)
        if spec.design is Design.LEVEL1:
            pool -= 1
        elif spec.design is Design.LEVEL2:
            pool -= k
        _check_budget(size, budget)

    out = []

    def walk(avail: tuple, h: int, prob: float, measured: tuple):
        if h == spec.n:
            out.append((prob, measured))
            return
        r = spec.rank_pattern[h]
        p = prob / math.comb(len(avail), k)
        for subset in itertools.combinations(avail, k):
            unit = subset[r - 1]
            if spec.design is Design.LEVEL0:
                rest = avail
            elif spec.design is Design.LEVEL1:
                rest = tuple(u for u in avail if u != unit)
            else:
                rest = tuple(u for u in avail if u not in subset)
            walk(rest, h + 1, p, measured + (unit,))

    walk(tuple(range(N)), 0, 1.0, ())
    return out


def _check_budget(size: int, budget: int) -> None:
    if size > budget:
        raise EnumerationBudgetError(f"{size} outcomes exceed the enumeration budget of {budget}")


def enumeration_inclusion(spec: DesignSpec, N: int, budget: int = 2_000_000) -> InclusionTable:
    first = np.zeros(N)
    second = np.zeros((N, N))
    for p, measured in enumerate_outcomes(spec, N, budget):
        units = sorted(set(measured))
        first[units] += p
        second[np.ix_(units, units)] += p
    return InclusionTable(first, second, Method.EXACT_ENUMERATION, spec, N)


def mc_inclusion(N: int, spec: DesignSpec, reps: int, seed: int = 0) -> InclusionTable:
    """Empirical inclusion frequencies over ``reps`` perfect-ranking draws.

    Standard errors are binomial, sqrt(p (1 - p) / reps), per cell.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    require_feasible(spec, N)
    keys = np.arange(1, N + 1)
    counts = np.zeros((N, N))
    for b, size in rngmod.blocks(reps):
        batch = draw_batch(spec.design, N, spec.k, spec.rank_pattern, keys, size, rngmod.block_rng(seed, b))
        hit = np.zeros((size, N))
        hit[np.arange(size)[:, None], batch.measured] = 1.0
        counts += hit.T @ hit
    second = counts / reps
    first = np.diag(second).copy()
    se = np.sqrt(second * (1.0 - second) / reps)
    return InclusionTable(first, second, Method.MONTE_CARLO, spec, N, se, reps)


def inclusion_table(spec: DesignSpec, N: int, method: str = "closed", reps: int = 100_000, seed: int = 0) -> InclusionTable:
    """Dispatch to the right computation for ``spec``.

    ``method`` is ``closed`` (closed form, or the exact recursion for level 1),
    ``exact``, ``enumeration`` or ``mc``.
    """
    if method == "mc":
        return mc_inclusion(N, spec, reps, seed)
    if method == "enumeration":
        if spec.design is Design.LEVEL1:
            return level1_inclusion(spec, N, mode="enumeration")
        return enumeration_inclusion(spec, N)
    if spec.design is Design.SRS:
        return srs_inclusion(N, spec.n)
    if spec.design is Design.LEVEL0:
        return level0_inclusion(spec, N)
    if spec.design is Design.LEVEL2:
        return level2_inclusion(spec, N)
    return level1_inclusion(spec, N, mode="exact")
