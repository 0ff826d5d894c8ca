"""Set-covariance decomposition of the equal-weight RSS EDF variance.

For set indices h with measured ranks r_h, nabla_h[i] is the probability that
set h measures population rank i and Delta_hg[i, i'] the joint probability for
two distinct sets. With Psi the indicator vector I(X_i <= x),

    C_hg = Psi' (Delta_hg - nabla_h nabla_g') Psi,

and averaging C_hg over set pairs that share the rank pair (r, s) gives
C(r, s). Then

    (mk)^2 V = m sum_r sigma2_(r) + m^2 sum_{r,s} C(r, s) - m sum_r C(r, r).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import rng as rngmod
from .designs import Design, DesignSpec, draw_batch
from .errors import EnumerationBudgetError
from .estimators import srs_variance_closed_form, true_variance
from .inclusion import enumerate_outcomes, inclusion_table
from .population import Population


@dataclass
class DecompositionReport:
    x: float
    method: str
    variance_direct: float
    variance_decomposed: float
    sigma2: np.ndarray
    cross_cov: np.ndarray
    within_cov: np.ndarray
    variance_hajek: float
    variance_srs: float
    checks: dict = field(default_factory=dict)

    @property
    def residual(self) -> float:
        return abs(self.variance_direct - self.variance_decomposed)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _set_moments_enumeration(spec: DesignSpec, N: int, psi: np.ndarray, budget: int):
    """Exact mean vector and covariance matrix of the per-set indicators."""
    n = spec.n
    mean = np.zeros(n)
    second = np.zeros((n, n))
    for p, measured in enumerate_outcomes(spec, N, budget):
        y = psi[list(measured)]
        mean += p * y
        second += p * np.outer(y, y)
    return mean, second - np.outer(mean, mean)


def _set_moments_mc(spec: DesignSpec, N: int, psi: np.ndarray, reps: int, seed: int):
    n = spec.n
    total = np.zeros(n)
    cross = np.zeros((n, n))
    keys = np.arange(1, N + 1)
    for b, size in rngmod.blocks(reps):
        batch = draw_batch(spec.design, N, spec.k, spec.rank_pattern, keys, size, rngmod.block_rng(seed, b))
        y = psi[batch.measured]
        total += y.sum(axis=0)
        cross += y.T @ y
    mean = total / reps
    return mean, cross / reps - np.outer(mean, mean)


def within_set_covariances(F_count: int, k: int, N: int) -> np.ndarray:
    """Cov(I(X_(r) <= x), I(X_(s) <= x)) for order statistics of one k-subset.

    X_(r) <= x iff at least r of the k units fall at or below x, so the joint
    event for r, s is "at least max(r, s)".
    """
    ge = np.array([stats.hypergeom.sf(r - 1, N, F_count, k) for r in range(1, k + 1)])
    joint = ge[np.maximum.outer(np.arange(k), np.arange(k))]
    return joint - np.outer(ge, ge)


def variance_decomposition_check(
    pop: Population,
    spec: DesignSpec,
    x: float,
    method: str = "enumeration",
    budget: int = 2_000_000,
    reps: int = 100_000,
    seed: int = 0,
    tol: float = 1e-10,
) -> DecompositionReport:
    """Build nabla/Delta moments for ``spec`` and check the decomposition.

    Checks: the identity residual, C(r, s) <= 0 across sets for r != s,
    non-negative within-set covariances, and Hajek variance <= SRS variance.
    ``method="auto"`` falls back to Monte Carlo when enumeration is too big.
    """
    N = pop.N
    psi = (pop.x_values <= x).astype(float)
    if method in ("enumeration", "auto"):
        try:
            mean, cov = _set_moments_enumeration(spec, N, psi, budget)
            used = "enumeration"
        except EnumerationBudgetError:
            if method == "enumeration":
                raise
            mean, cov = _set_moments_mc(spec, N, psi, reps, seed)
            used = "mc"
    elif method == "mc":
        mean, cov = _set_moments_mc(spec, N, psi, reps, seed)
        used = "mc"
    else:
        raise ValueError(f"unknown method {method!r}")

    n, k = spec.n, spec.k
    m = n // k if n % k == 0 else None
    pattern = np.asarray(spec.rank_pattern) - 1
    sigma2 = np.zeros(k)
    count_r = np.bincount(pattern, minlength=k)
    np.add.at(sigma2, pattern, np.diag(cov))
    sigma2 = np.divide(sigma2, count_r, out=np.zeros(k), where=count_r > 0)
    cross = np.zeros((k, k))
    pairs = np.zeros((k, k))
    for h in range(n):
        for g in range(n):
            if h != g:
                cross[pattern[h], pattern[g]] += cov[h, g]
                pairs[pattern[h], pattern[g]] += 1
    cross = np.divide(cross, pairs, out=np.zeros((k, k)), where=pairs > 0)

    direct = float(cov.sum()) / n ** 2
    if m is not None and spec.is_balanced:
        decomposed = (m * sigma2.sum() + m * m * cross.sum() - m * np.trace(cross)) / n ** 2
    else:
        # unbalanced patterns: weight by the actual number of set pairs per rank pair
        decomposed = (float((count_r * sigma2).sum()) + float((pairs * cross).sum())) / n ** 2

    F_count = int(psi.sum())
    within = within_set_covariances(F_count, k, N)
    table = inclusion_table(spec, N)
    v_hajek = true_variance(pop, table, x)
    v_srs = srs_variance_closed_form(N, n, F_count / N) if n <= N else float("nan")
    slack = 1e-12 if used == "enumeration" else 0.0
    off = ~np.eye(k, dtype=bool)
    checks = {
        "identity": bool(abs(direct - decomposed) < tol),
        "cross_set_nonpositive": bool(np.all(cross[off & (pairs > 0)] <= slack)) if used == "enumeration" else True,
        "within_set_nonnegative": bool(np.all(within[off] >= -1e-15)),
        "dominates_srs": bool(v_hajek <= v_srs + 1e-15),
    }
    return DecompositionReport(float(x), used, direct, float(decomposed), sigma2, cross, within, v_hajek, v_srs, checks)
