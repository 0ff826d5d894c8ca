"""Hajek-type EDF estimation, design variances, variance estimation and intervals."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats

from .designs import RankedSetSample
from .errors import MissingInclusionError
from .inclusion import InclusionTable
from .population import Population


class NegativeVarianceWarning(UserWarning):
    """A variance estimate came out negative; it is reported as is."""


@dataclass(frozen=True, eq=False)
class EdfEstimate:
    """Weighted step-function estimate of a distribution function.

    ``unit_values``/``unit_weights`` keep one row per estimation unit (sorted by
    value); ``support``/``cum_weights`` are the distinct jump points.
    """

    unit_values: np.ndarray
    unit_weights: np.ndarray

    @classmethod
    def from_units(cls, values, weights) -> "EdfEstimate":
        values = np.asarray(values, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if len(values) == 0:
            raise ValueError("empty sample")
        order = np.argsort(values, kind="stable")
        w = weights[order]
        return cls(values[order], w / w.sum())

    @property
    def support(self) -> np.ndarray:
        return np.unique(self.unit_values)

    @property
    def cum_weights(self) -> np.ndarray:
        cum = np.cumsum(self.unit_weights)
        last = np.searchsorted(self.unit_values, self.support, side="right") - 1
        out = cum[last]
        out[-1] = 1.0
        return out

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        cum = np.concatenate(([0.0], self.cum_weights))
        out = cum[np.searchsorted(self.support, x, side="right")]
        return float(out) if out.ndim == 0 else out

    def quantile(self, p: float, method: str = "step") -> float:
        """Invert the estimate at probability ``p``.

        ``step``: smallest support value with F(x) >= p.
        ``linear``: piecewise-linear through the unit values placed at
        plotting positions (C_j - w_j) / (1 - w_n); with equal weights this is
        the usual (n - 1) p + 1 order-statistic interpolation.
        """
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if method == "step":
            cum = self.cum_weights
            idx = int(np.searchsorted(cum, p - 1e-12, side="left"))
            return float(self.support[min(idx, len(cum) - 1)])
        if method == "linear":
            w = self.unit_weights
            if len(w) == 1:
                return float(self.unit_values[0])
            positions = (np.cumsum(w) - w) / (1.0 - w[-1])
            return float(np.interp(p, positions, self.unit_values))
        raise ValueError(f"unknown inversion method {method!r}")

    def table_rows(self):
        """(x, F_hat) rows at each jump point, as in a printed EDF table."""
        return list(zip(self.support.tolist(), self.cum_weights.tolist()))

    def to_csv(self, path=None) -> str:
        lines = ["x,F_hat"] + [f"{x!r},{f:.10f}" for x, f in self.table_rows()]
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


@dataclass(frozen=True)
class _Units:
    values: np.ndarray
    ranks: Optional[np.ndarray]
    pi: np.ndarray


def _sample_units(sample: RankedSetSample, table: InclusionTable, distinct: bool = True) -> _Units:
    """Measured units with their first-order probabilities.

    With ``distinct`` a population unit measured twice (possible at level 0)
    contributes once.
    """
    entries = list(sample.entries)
    if distinct:
        seen = set()
        kept = []
        for e in entries:
            key = e.population_id if e.population_id is not None else e.population_rank
            if key is None or key not in seen:
                kept.append(e)
                if key is not None:
                    seen.add(key)
        entries = kept
    values = np.array([e.value for e in entries], dtype=float)
    ranks = [e.population_rank for e in entries]
    if any(r is None for r in ranks):
        if not np.allclose(table.first_order, table.first_order[0], rtol=1e-12, atol=0):
            raise MissingInclusionError("sample units lack population ranks and the design has unequal pi_i")
        return _Units(values, None, np.full(len(values), table.first_order[0]))
    ranks_arr = np.asarray(ranks, dtype=np.int64)
    pi = table.first_order[ranks_arr - 1]
    if np.any(pi <= 0):
        raise MissingInclusionError("a sampled unit has zero inclusion probability")
    return _Units(values, ranks_arr, pi)


def hajek_edf(sample: RankedSetSample, table: InclusionTable, distinct: bool = True) -> EdfEstimate:
    units = _sample_units(sample, table, distinct)
    return EdfEstimate.from_units(units.values, 1.0 / units.pi)


def hajek_edf_batch(values, units, inv_pi, thresholds, distinct: bool = True) -> np.ndarray:
    """Hajek estimates for many samples at once.

    ``values``, ``units``, ``inv_pi`` have shape (reps, n); returns
    (reps, len(thresholds)).
    """
    w = np.array(inv_pi, dtype=float, copy=True)
    if distinct:
        order = np.argsort(units, axis=1, kind="stable")
        su = np.take_along_axis(units, order, 1)
        dup = np.zeros_like(su, dtype=bool)
        dup[:, 1:] = su[:, 1:] == su[:, :-1]
        mask = np.empty_like(dup)
        np.put_along_axis(mask, order, dup, 1)
        w[mask] = 0.0
    below = values[:, :, None] <= np.asarray(thresholds)[None, None, :]
    return (w[:, :, None] * below).sum(axis=1) / w.sum(axis=1)[:, None]


def edf_quantile(edf: EdfEstimate, p: float, method: str = "step") -> float:
    return edf.quantile(p, method)


def _indicator_by_rank(pop: Population, x: float, ranks: Optional[np.ndarray] = None) -> np.ndarray:
    """I(X <= x) laid out by population rank."""
    ind = (pop.x_values <= x).astype(float)
    if ranks is None:
        return ind
    out = np.empty_like(ind)
    out[np.asarray(ranks) - 1] = ind
    return out


def true_variance(pop: Population, table: InclusionTable, x: float, ranks: Optional[np.ndarray] = None) -> float:
    """Design variance of the Hajek EDF at ``x`` via the pairwise-covariance double sum.

    ``ranks`` gives each unit's population rank under the ranking that drove
    the design (default: x-order, i.e. perfect ranking).
    """
    if table.N != pop.N:
        raise ValueError("inclusion table and population sizes differ")
    psi = _indicator_by_rank(pop, x, ranks)
    pi = table.first_order
    z = (psi - psi.mean()) / pi
    delta = table.second_order - np.outer(pi, pi)
    return float(z @ delta @ z) / pop.N ** 2


def syg_variance_estimate(
    sample: RankedSetSample,
    table: InclusionTable,
    x: float,
    distinct: bool = True,
) -> float:
    """Sen-Yates-Grundy style estimate of the Hajek EDF variance at ``x``.

    Negative results are possible and are returned with a warning.
    """
    units = _sample_units(sample, table, distinct)
    n = len(units.values)
    if n < 2:
        return 0.0
    if units.ranks is None:
        raise MissingInclusionError("second-order probabilities need population ranks for the sampled units")
    pi = units.pi
    idx = units.ranks - 1
    joint = table.second_order[np.ix_(idx, idx)]
    off = ~np.eye(n, dtype=bool)
    if np.any(joint[off] <= 0):
        raise MissingInclusionError("a sampled pair has zero second-order inclusion probability")
    ind = (units.values <= x).astype(float)
    fhat = float((ind / pi).sum() / (1.0 / pi).sum())
    u = (ind - fhat) / pi
    diff2 = (u[:, None] - u[None, :]) ** 2
    ratio = np.where(off, (joint - np.outer(pi, pi)) / np.where(off, joint, 1.0), 0.0)
    vhat = -0.5 * float((ratio * diff2).sum()) / (1.0 / pi).sum() ** 2
    if vhat < 0:
        warnings.warn(f"negative variance estimate {vhat:.3g} at x={x}", NegativeVarianceWarning, stacklevel=2)
    return vhat


def z_quantile(alpha: float) -> float:
    return float(stats.norm.ppf(1.0 - alpha / 2.0))


def pointwise_ci(fhat: float, vhat: float, alpha: float = 0.05) -> tuple[float, float]:
    """Normal-approximation interval for F(x), clipped to [0, 1]."""
    if vhat < 0:
        raise ValueError(f"variance estimate must be non-negative, got {vhat}")
    half = z_quantile(alpha) * np.sqrt(vhat)
    return max(0.0, fhat - half), min(1.0, fhat + half)


@dataclass(frozen=True)
class MedianInterval:
    median: float
    vhat: float
    c1: float
    c2: float
    lower: float
    upper: float
    inversion: str


def median_ci(
    sample: RankedSetSample,
    table: InclusionTable,
    alpha: float = 0.05,
    inversion: str = "step",
    vhat: Optional[float] = None,
) -> MedianInterval:
    """Interval for the population median by inverting the EDF at c1, c2.

    c1, c2 = 0.5 -/+ z * sqrt(Vhat[F_hat(M_hat)]) with M_hat the estimated
    median (always located with step inversion).
    """
    edf = hajek_edf(sample, table)
    med = edf.quantile(0.5, "step")
    if vhat is None:
        vhat = syg_variance_estimate(sample, table, med)
    if vhat < 0:
        raise ValueError(f"variance estimate at the median is negative ({vhat:.4g})")
    half = z_quantile(alpha) * np.sqrt(vhat)
    c1, c2 = 0.5 - half, 0.5 + half
    if c1 <= 0:
        raise ValueError(f"lower bound c1={c1:.4f} leaves the EDF range")
    if c2 >= 1:
        raise ValueError(f"upper bound c2={c2:.4f} leaves the EDF range")
    return MedianInterval(med, vhat, c1, c2, edf.quantile(c1, inversion), edf.quantile(c2, inversion), inversion)


def stokes_sager_edf(sample: RankedSetSample) -> EdfEstimate:
    """Unweighted mean of indicators over all measured entries."""
    return EdfEstimate.from_units(sample.values, np.ones(len(sample.entries)))


def order_statistic_cdf(F, r: int, k: int):
    """CDF of the r-th of k i.i.d. draws at a point where the parent CDF is F."""
    return stats.beta.cdf(F, r, k - r + 1)


def finite_order_statistic_cdf(count: int, r: int, k: int, N: int) -> float:
    """P(r-th smallest of a random k-subset is among the ``count`` smallest units)."""
    return float(stats.hypergeom.sf(r - 1, N, count, k))


def stokes_sager_variance(F: float, k: int, m: int) -> float:
    """Infinite-population variance (1 / (m k^2)) sum_r F_(r)(1 - F_(r))."""
    Fr = order_statistic_cdf(F, np.arange(1, k + 1), k)
    return float((Fr * (1.0 - Fr)).sum()) / (m * k * k)


def srs_variance_closed_form(N: int, n: int, F: float) -> float:
    if not 1 <= n <= N:
        raise ValueError("need 1 <= n <= N")
    if N == 1:
        return 0.0
    return (N - n) / (N - 1) * F * (1.0 - F) / n


@dataclass(frozen=True)
class VarianceReport:
    x: float
    F_hat: float
    V_hat: float
    ci_low: float
    ci_high: float
    alpha: float
    V_true: Optional[float] = None

    def to_dict(self) -> dict:
        doc = {"x": self.x, "F_hat": self.F_hat}
        if self.V_true is not None:
            doc["V_true"] = self.V_true
        doc.update(V_hat=self.V_hat, ci_low=self.ci_low, ci_high=self.ci_high, alpha=self.alpha)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def variance_report(
    sample: RankedSetSample,
    table: InclusionTable,
    x: float,
    alpha: float = 0.05,
    pop: Optional[Population] = None,
) -> VarianceReport:
    fhat = hajek_edf(sample, table)(x)
    vhat = syg_variance_estimate(sample, table, x)
    lo, hi = pointwise_ci(fhat, max(vhat, 0.0), alpha)
    vtrue = true_variance(pop, table, x) if pop is not None else None
    return VarianceReport(float(x), fhat, vhat, lo, hi, alpha, vtrue)
