import numpy as np
import pytest

from rsskit.decomposition import variance_decomposition_check, within_set_covariances
from rsskit.designs import Design, DesignSpec
from rsskit.estimators import srs_variance_closed_form, true_variance
from rsskit.inclusion import inclusion_table
from rsskit.population import DistributionKind, generate_grid_population, true_edf


@pytest.mark.parametrize(
    "spec,N",
    [
        (DesignSpec(Design.LEVEL2, 2, 1), 6),
        (DesignSpec(Design.LEVEL1, 2, 1), 5),
        (DesignSpec(Design.LEVEL0, 2, 1), 5),
        (DesignSpec(Design.LEVEL2, 2, 2), 8),
        (DesignSpec(Design.LEVEL1, 3, 1), 6),
    ],
)
def test_identity_under_enumeration(spec, N):
    pop = generate_grid_population(N, DistributionKind.NORMAL)
    for x in pop.x_values[:-1]:
        rep = variance_decomposition_check(pop, spec, x, method="enumeration")
        assert rep.residual < 1e-10
        assert rep.checks["identity"] and rep.checks["cross_set_nonpositive"] and rep.checks["within_set_nonnegative"]
        if spec.design is not Design.LEVEL1:
            assert rep.checks["dominates_srs"]


def test_level1_can_lose_to_srs_in_the_far_tail():
    # level 1 overweights the extreme ranks; at the smallest grid value its
    # variance exceeds SRS even though it wins at every decile
    pop = generate_grid_population(20, DistributionKind.NORMAL)
    spec = DesignSpec(Design.LEVEL1, 2, 1)
    rep = variance_decomposition_check(pop, spec, pop.x_values[0], method="enumeration")
    assert rep.variance_hajek > rep.variance_srs
    assert rep.variance_hajek - rep.variance_srs == pytest.approx(2.564e-5, rel=1e-3)
    t, s = inclusion_table(spec, 20), inclusion_table(DesignSpec.srs(2), 20)
    for p in np.arange(1, 10) / 10:
        x = pop.quantile_value(p)
        assert true_variance(pop, t, x) <= true_variance(pop, s, x)


def test_direct_variance_matches_inclusion_tables():
    pop = generate_grid_population(6, DistributionKind.UNIFORM)
    spec = DesignSpec(Design.LEVEL2, 2, 1)
    x = pop.quantile_value(0.5)
    rep = variance_decomposition_check(pop, spec, x)
    assert rep.variance_hajek == pytest.approx(true_variance(pop, inclusion_table(spec, 6), x), abs=1e-12)


def test_srs_reduces_to_closed_form():
    pop = generate_grid_population(6, DistributionKind.NORMAL)
    spec = DesignSpec.srs(2)
    x = pop.quantile_value(0.5)
    rep = variance_decomposition_check(pop, spec, x)
    assert rep.variance_direct == pytest.approx(srs_variance_closed_form(6, 2, true_edf(pop, x)), abs=1e-12)
    assert rep.residual < 1e-10


def test_level2_dominates_srs_on_grid():
    pop = generate_grid_population(20, DistributionKind.NORMAL)
    for k in (2, 3, 4):
        spec = DesignSpec(Design.LEVEL2, k, 1)
        t, s = inclusion_table(spec, 20), inclusion_table(DesignSpec.srs(k), 20)
        for p in np.arange(1, 10) / 10:
            x = pop.quantile_value(p)
            assert true_variance(pop, t, x) <= true_variance(pop, s, x) + 1e-15


def test_within_set_covariances_are_nonnegative():
    for count in range(0, 11):
        cov = within_set_covariances(count, 3, 10)
        assert cov.shape == (3, 3)
        assert np.all(cov >= -1e-15)


def test_mc_method_runs():
    pop = generate_grid_population(30, DistributionKind.NORMAL)
    rep = variance_decomposition_check(pop, DesignSpec(Design.LEVEL2, 3, 2), pop.quantile_value(0.5),
                                       method="mc", reps=20_000, seed=1)
    assert rep.method == "mc"
    assert rep.variance_hajek <= rep.variance_srs
