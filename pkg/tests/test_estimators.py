import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsskit.designs import Design, DesignSpec, RankedSetSample, RankingMode, SampleEntry, draw_rss, draw_srs_wor
from rsskit.errors import MissingInclusionError
from rsskit.estimators import (
    EdfEstimate,
    NegativeVarianceWarning,
    edf_quantile,
    finite_order_statistic_cdf,
    hajek_edf,
    median_ci,
    order_statistic_cdf,
    pointwise_ci,
    srs_variance_closed_form,
    stokes_sager_edf,
    stokes_sager_variance,
    syg_variance_estimate,
    true_variance,
    variance_report,
    z_quantile,
)
from rsskit.inclusion import InclusionTable, Method, enumerate_outcomes, inclusion_table, srs_inclusion
from rsskit.population import DistributionKind, generate_grid_population, true_edf


def test_two_unit_hand_example():
    edf = EdfEstimate.from_units([1.0, 2.0], [1 / 0.2, 1 / 0.5])
    assert edf(1.0) == pytest.approx(5 / 7)
    assert edf(0.99) == 0.0
    assert edf(2.0) == 1.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=30),
       st.lists(st.floats(0.01, 1.0), min_size=30, max_size=30))
def test_edf_is_valid_cdf(values, pis):
    edf = EdfEstimate.from_units(values, 1.0 / np.array(pis[: len(values)]))
    cw = edf.cum_weights
    assert np.all(np.diff(cw) >= -1e-15)
    assert cw[-1] == pytest.approx(1.0, abs=1e-12)
    assert edf(max(values)) == pytest.approx(1.0, abs=1e-12)
    grid = np.linspace(-101, 101, 50)
    assert np.all(np.diff([edf(x) for x in grid]) >= -1e-15)
    for s, c in zip(edf.support, cw):
        assert edf(s) == pytest.approx(c)


def test_equal_pi_gives_ecdf():
    vals = [3.0, 1.0, 2.0, 2.0, 5.0]
    edf = EdfEstimate.from_units(vals, np.full(5, 7.0))
    for x in (0.5, 1.0, 2.0, 2.5, 5.0):
        assert edf(x) == pytest.approx(np.mean(np.array(vals) <= x))


def test_step_quantile():
    edf = EdfEstimate.from_units([1.0, 2.0, 3.0, 4.0], np.ones(4))
    assert edf_quantile(edf, 0.0) == 1.0
    assert edf_quantile(edf, 1.0) == 4.0
    assert edf_quantile(edf, 0.5) == 2.0
    assert edf_quantile(edf, 0.51) == 3.0


def _sample(values, ranks, spec):
    return RankedSetSample.from_values(values, spec, ranks)


def test_missing_ranks_need_constant_pi():
    spec = DesignSpec(Design.LEVEL1, 2, 1)
    table = inclusion_table(spec, 6)
    smp = RankedSetSample.from_values([1.0, 2.0], spec)
    with pytest.raises(MissingInclusionError):
        hajek_edf(smp, table)
    # constant pi (level 2) works without ranks
    spec2 = DesignSpec(Design.LEVEL2, 2, 1)
    edf = hajek_edf(RankedSetSample.from_values([1.0, 2.0], spec2), inclusion_table(spec2, 6))
    assert edf(1.0) == 0.5


def test_distinct_units_at_level0():
    spec = DesignSpec(Design.LEVEL0, 2, 1)
    table = inclusion_table(spec, 5)
    entries = (SampleEntry(1, 1, 3, 0.3, 3), SampleEntry(2, 2, 3, 0.3, 3))
    smp = RankedSetSample(entries, spec)
    assert len(hajek_edf(smp, table).unit_values) == 1
    assert len(hajek_edf(smp, table, distinct=False).unit_values) == 2


def test_true_variance_srs_census_and_closed_form():
    pop = generate_grid_population(20, DistributionKind.NORMAL)
    assert true_variance(pop, srs_inclusion(20, 20), pop.quantile_value(0.5)) == pytest.approx(0.0, abs=1e-15)
    v = true_variance(pop, srs_inclusion(20, 4), pop.quantile_value(0.5))
    assert v == pytest.approx((16 / 19) * (0.25 / 4), abs=1e-12)
    assert v == pytest.approx(0.052632, abs=1e-6)
    assert srs_variance_closed_form(20, 4, 0.5) == pytest.approx(v, abs=1e-12)


@pytest.mark.parametrize("N,n", [(7, 3), (15, 6), (30, 1)])
def test_srs_closed_form_at_every_point(N, n):
    pop = generate_grid_population(N, DistributionKind.EXPONENTIAL)
    table = srs_inclusion(N, n)
    for x in pop.x_values:
        F = true_edf(pop, x)
        assert true_variance(pop, table, x) == pytest.approx(srs_variance_closed_form(N, n, F), abs=1e-12)


def test_closed_form_edges():
    assert srs_variance_closed_form(10, 10, 0.3) == 0.0
    assert srs_variance_closed_form(10, 3, 0.0) == 0.0
    assert srs_variance_closed_form(10, 3, 1.0) == 0.0


@pytest.mark.parametrize("spec,N", [(DesignSpec(Design.LEVEL2, 2, 1), 4), (DesignSpec(Design.LEVEL2, 2, 1), 6),
                                    (DesignSpec(Design.LEVEL2, 3, 1, (1, 3, 2)), 9)])
def test_true_variance_level2_matches_enumeration(spec, N):
    pop = generate_grid_population(N, DistributionKind.UNIFORM)
    table = inclusion_table(spec, N)
    for x in pop.x_values[:-1]:
        probs, est = [], []
        for p, measured in enumerate_outcomes(spec, N):
            probs.append(p)
            est.append(np.mean(pop.x_values[list(measured)] <= x))
        probs, est = np.array(probs), np.array(est)
        mean = probs @ est
        assert mean == pytest.approx(true_edf(pop, x), abs=1e-12)
        assert true_variance(pop, table, x) == pytest.approx(probs @ (est - mean) ** 2, abs=1e-12)


def test_syg_single_unit_is_zero():
    spec = DesignSpec(Design.LEVEL2, 1, 1)
    table = inclusion_table(spec, 5)
    assert syg_variance_estimate(_sample([0.4], [2], spec), table, 0.5) == 0.0


def test_syg_srs_hand_value():
    # constant pi: SYG reduces to (1 - n/N) s^2 / n on the indicators
    N, n = 10, 4
    spec = DesignSpec.srs(n)
    vals = [1.0, 2.0, 3.0, 4.0]
    smp = _sample(vals, [1, 2, 3, 4], spec)
    ind = (np.array(vals) <= 2.5).astype(float)
    expected = (1 - n / N) * ind.var(ddof=1) / n
    assert syg_variance_estimate(smp, srs_inclusion(N, n), 2.5) == pytest.approx(expected, abs=1e-14)


def _mean_syg(pop, spec, table, x, reps, seed):
    rng = np.random.default_rng(seed)
    vals = np.empty(reps)
    with warnings.catch_warnings():
        # individual level-2 estimates can be negative; only their mean matters here
        warnings.simplefilter("ignore", NegativeVarianceWarning)
        for b in range(reps):
            vals[b] = syg_variance_estimate(draw_rss(pop, spec, RankingMode.PERFECT, rng), table, x)
    return vals.mean(), vals.std(ddof=1) / np.sqrt(reps)


def test_syg_unbiased_under_srs():
    pop = generate_grid_population(20, DistributionKind.NORMAL)
    spec = DesignSpec.srs(5)
    table = inclusion_table(spec, 20)
    x = pop.quantile_value(0.5)
    mean, se = _mean_syg(pop, spec, table, x, 10_000, seed=101)
    assert abs(mean - true_variance(pop, table, x)) < 3 * se


def test_syg_unbiased_under_level2():
    pop = generate_grid_population(20, DistributionKind.NORMAL)
    spec = DesignSpec(Design.LEVEL2, 2, 2)
    table = inclusion_table(spec, 20)
    x = pop.quantile_value(0.3)
    mean, se = _mean_syg(pop, spec, table, x, 10_000, seed=102)
    assert abs(mean - true_variance(pop, table, x)) < 3 * se


def test_negative_estimate_warns_and_is_not_clamped():
    spec = DesignSpec.srs(2)
    first = np.array([0.5, 0.5])
    joint = np.array([[0.5, 0.4], [0.4, 0.5]])
    table = InclusionTable(first, joint, Method.CLOSED_FORM, spec, 2)
    with pytest.warns(NegativeVarianceWarning):
        v = syg_variance_estimate(_sample([1.0, 2.0], [1, 2], spec), table, 1.5)
    assert v < 0
    with pytest.raises(ValueError):
        pointwise_ci(0.5, v)


def test_pointwise_ci():
    assert pointwise_ci(0.3, 0.0) == (0.3, 0.3)
    lo, hi = pointwise_ci(0.5, 0.0072, 0.05)
    assert lo == pytest.approx(0.3337, abs=1e-4)
    assert hi == pytest.approx(0.6663, abs=1e-4)
    assert pointwise_ci(0.95, 0.01) == (pytest.approx(0.95 - 1.959963984540054 * 0.1), 1.0)
    assert z_quantile(0.05) == pytest.approx(1.959963984540054, abs=1e-10)


def test_median_ci_degenerate_and_errors():
    spec = DesignSpec(Design.LEVEL2, 3, 1)
    table = inclusion_table(spec, 9)
    smp = _sample([1.0, 2.0, 3.0], [1, 5, 9], spec)
    mi = median_ci(smp, table, vhat=0.0)
    assert mi.lower == mi.upper == mi.median == 2.0
    with pytest.raises(ValueError, match="c1"):
        median_ci(smp, table, vhat=0.09)


def test_c_bounds_arithmetic():
    spec = DesignSpec(Design.LEVEL2, 3, 1)
    table = inclusion_table(spec, 9)
    smp = _sample([1.0, 2.0, 3.0], [1, 5, 9], spec)
    mi = median_ci(smp, table, vhat=0.0072)
    assert (mi.c1, mi.c2) == (pytest.approx(0.3337, abs=1e-4), pytest.approx(0.6663, abs=1e-4))
    # (0.3264, 0.6736) corresponds to a variance of about 0.00785, not 0.0072
    mi = median_ci(smp, table, vhat=((0.5 - 0.3264) / 1.96) ** 2)
    assert (mi.c1, mi.c2) == (pytest.approx(0.3264, abs=1e-3), pytest.approx(0.6736, abs=1e-3))


def test_stokes_sager_equals_hajek_with_constant_pi():
    pop = generate_grid_population(30, DistributionKind.BETA52)
    spec = DesignSpec(Design.LEVEL2, 3, 2)
    smp = draw_rss(pop, spec, RankingMode.PERFECT, np.random.default_rng(0))
    a = stokes_sager_edf(smp)
    b = hajek_edf(smp, inclusion_table(spec, 30))
    for x in pop.x_values:
        assert a(x) == pytest.approx(b(x), abs=1e-12)
    one = stokes_sager_edf(_sample([4.2], [1], DesignSpec(Design.LEVEL2, 1, 1)))
    assert one(4.1) == 0.0 and one(4.2) == 1.0


def test_stokes_sager_mean_under_level0():
    N, k, m, reps = 20, 2, 2, 10_000
    pop = generate_grid_population(N, DistributionKind.NORMAL)
    spec = DesignSpec(Design.LEVEL0, k, m)
    rng = np.random.default_rng(77)
    ps = (0.2, 0.5, 0.8)
    est = np.array([[stokes_sager_edf(draw_rss(pop, spec, RankingMode.PERFECT, rng))(pop.quantile_value(p)) for p in ps]
                    for _ in range(reps)])
    for j, p in enumerate(ps):
        count = int(round(true_edf(pop, pop.quantile_value(p)) * N))
        expected = np.mean([finite_order_statistic_cdf(count, r, k, N) for r in range(1, k + 1)])
        se = est[:, j].std(ddof=1) / np.sqrt(reps)
        assert abs(est[:, j].mean() - expected) < 3 * se


def test_order_statistic_cdfs():
    # infinite-population r-th of k: P(Beta(r, k-r+1) <= F)
    assert order_statistic_cdf(0.5, 1, 2) == pytest.approx(0.75)
    assert order_statistic_cdf(0.5, 2, 2) == pytest.approx(0.25)
    # finite: 2 of 4 units below, k = 2: min below unless both picks are above
    assert finite_order_statistic_cdf(2, 1, 2, 4) == pytest.approx(1 - 1 / 6)
    assert finite_order_statistic_cdf(2, 2, 2, 4) == pytest.approx(1 / 6)
    assert stokes_sager_variance(0.5, 2, 1) == pytest.approx((0.75 * 0.25 * 2) / 4)


def test_variance_report_fields():
    pop = generate_grid_population(20, DistributionKind.NORMAL)
    spec = DesignSpec(Design.LEVEL2, 2, 2)
    table = inclusion_table(spec, 20)
    smp = draw_rss(pop, spec, RankingMode.PERFECT, np.random.default_rng(3))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeVarianceWarning)
        rep = variance_report(smp, table, 0.0, pop=pop)
    doc = rep.to_dict()
    assert list(doc) == ["x", "F_hat", "V_true", "V_hat", "ci_low", "ci_high", "alpha"]
    assert doc["V_true"] == pytest.approx(true_variance(pop, table, 0.0))
