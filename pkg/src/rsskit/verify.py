"""Invariant suite behind ``rsskit verify``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decomposition import variance_decomposition_check
from .designs import Design, DesignSpec
from .errors import EnumerationBudgetError
from .estimators import srs_variance_closed_form, true_variance
from .inclusion import (
    InclusionTable,
    enumeration_inclusion,
    inclusion_table,
    level1_inclusion,
    mc_inclusion,
    order_statistic_probs,
)
from .population import DistributionKind, generate_grid_population
from .simulation import DECILES


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}" + (f": {self.detail}" if self.detail else "")


def table_invariants(table: InclusionTable, tol: float = 1e-12) -> list[Check]:
    pi, joint = table.first_order, table.second_order
    n = table.spec.n
    checks = [
        Check("pi positive and <= 1", bool(np.all(pi > 0) and np.all(pi <= 1 + tol)), f"min={pi.min():.3g}"),
        Check("second order symmetric", bool(np.allclose(joint, joint.T, atol=tol, rtol=0))),
        Check("second order dominated", bool(np.all(joint <= np.minimum.outer(pi, pi) + tol) and np.all(joint >= -tol))),
        Check("diagonal equals first order", bool(np.allclose(np.diag(joint), pi, atol=tol, rtol=0))),
    ]
    total = float(pi.sum())
    if table.spec.design is Design.LEVEL0:
        checks.append(Check("sum pi <= n", total <= n + 1e-9, f"sum={total:.12g}, n={n}"))
    else:
        checks.append(Check("sum pi = n", abs(total - n) < 1e-9, f"sum={total:.12g}, n={n}"))
    return checks


def order_statistic_checks(N: int, k: int) -> list[Check]:
    mat = np.array([order_statistic_probs(r, k, N) for r in range(1, k + 1)])
    over_i = np.abs(mat.sum(axis=1) - 1.0).max()
    over_r = np.abs(mat.sum(axis=0) - k / N).max()
    return [
        Check("sum_i I(i;r,k,N) = 1", over_i < 1e-12, f"max err {over_i:.2g}"),
        Check("sum_r I(i;r,k,N) = k/N", over_r < 1e-12, f"max err {over_r:.2g}"),
    ]


def run_verification(N: int, spec: DesignSpec, mc_reps: int = 20_000, seed: int = 0) -> list[Check]:
    checks: list[Check] = []
    if spec.design is not Design.SRS:
        checks += order_statistic_checks(N, spec.k)
    table = inclusion_table(spec, N)
    checks += table_invariants(table)

    try:
        ref = enumeration_inclusion(spec, N)
        err = float(np.abs(ref.second_order - table.second_order).max())
        checks.append(Check("matches exhaustive enumeration", err < 1e-12, f"max err {err:.2g}"))
    except EnumerationBudgetError:
        if spec.design is Design.LEVEL1:
            try:
                ref = level1_inclusion(spec, N, mode="enumeration", budget=200_000)
                err = float(np.abs(ref.second_order - table.second_order).max())
                checks.append(Check("matches removed-set enumeration", err < 1e-12, f"max err {err:.2g}"))
            except EnumerationBudgetError:
                pass

    if mc_reps:
        mc = mc_inclusion(N, spec, mc_reps, seed)
        p = table.second_order
        se = np.sqrt(p * (1 - p) / mc_reps)
        z = np.abs(mc.second_order - p)
        ok = np.where(se > 0, z <= 4 * se, z == 0)
        checks.append(Check(f"agrees with Monte Carlo ({mc_reps} reps, 4 SE)", bool(ok.all()),
                            f"max |z|={float(np.max(np.where(se > 0, z / np.where(se > 0, se, 1), 0))):.2f}"))

    pop = generate_grid_population(N, DistributionKind.NORMAL)
    srs_table = inclusion_table(DesignSpec.srs(spec.n), N)
    worst = -np.inf
    for p in DECILES:
        x = pop.quantile_value(p)
        v = true_variance(pop, table, x)
        v_srs = true_variance(pop, srs_table, x)
        closed = srs_variance_closed_form(N, spec.n, np.mean(pop.x_values <= x))
        if abs(v_srs - closed) > 1e-12:
            checks.append(Check("SRS double sum equals closed form", False, f"p={p}"))
        worst = max(worst, v - v_srs)
    checks.append(Check("variance <= SRS variance at deciles", worst <= 1e-15, f"max(V - V_srs)={worst:.3g}"))

    try:
        report = variance_decomposition_check(pop, spec, pop.quantile_value(0.5), method="enumeration")
        checks.append(Check("decomposition identity", report.checks["identity"], f"residual {report.residual:.2g}"))
        for key in ("cross_set_nonpositive", "within_set_nonnegative", "dominates_srs"):
            checks.append(Check(f"decomposition {key.replace('_', ' ')}", report.checks[key]))
    except EnumerationBudgetError:
        checks.append(Check("decomposition identity", True, "skipped: too large to enumerate"))
    return checks
