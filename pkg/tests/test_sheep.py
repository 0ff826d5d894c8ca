import numpy as np
import pytest

from rsskit import sheep
from rsskit.estimators import hajek_edf, median_ci, syg_variance_estimate

TABLE3 = [
    (20.5, 0.0476), (23.0, 0.1429), (23.5, 0.1905), (25.0, 0.2381), (25.5, 0.3333), (25.9, 0.3810),
    (26.5, 0.4286), (27.6, 0.4762), (27.9, 0.5714), (30.2, 0.6190), (30.5, 0.6667), (31.0, 0.7143),
    (33.5, 0.8095), (34.0, 0.8571), (35.1, 0.9048), (35.5, 0.9524), (40.5, 1.0),
]


@pytest.fixture(scope="module")
def edf():
    return hajek_edf(sheep.sample(), sheep.inclusion())


def test_sample_shape():
    smp = sheep.sample()
    assert len(smp.entries) == 21
    assert [e.in_set_rank for e in smp.entries[:3]] == [1, 2, 3]
    assert smp.values[:3].tolist() == [27.6, 27.9, 34.0]


def test_point_estimate(edf):
    assert edf(27.90) == pytest.approx(0.5714, abs=1e-4)


def test_table3_plateaus(edf):
    assert edf(20.4) == 0.0
    rows = edf.table_rows()
    assert len(rows) + 1 == 18
    for (x, f), (x_ref, f_ref) in zip(rows, TABLE3):
        assert x == x_ref
        assert f == pytest.approx(f_ref, abs=1e-4)


def test_median(edf):
    assert edf.quantile(0.5) == 27.9


def test_inversions_at_published_c_bounds(edf):
    assert edf.quantile(0.3264, "step") == 25.5
    # smallest x with F_hat(x) >= 0.6736 is 31.0 since F_hat(30.5) = 0.6667
    assert edf.quantile(0.6736, "step") == 31.0
    assert edf.quantile(0.3264, "linear") == pytest.approx(25.7112, abs=1e-4)
    assert edf.quantile(0.6736, "linear") == pytest.approx(30.7360, abs=1e-4)


def test_reconstructed_population():
    grid = sheep.reconstructed_population_values()
    assert len(grid) == 224 and np.all(np.diff(grid) >= 0)
    assert grid[0] > 20.3 and grid[-1] < 40.5
    assert np.median(grid) == pytest.approx(27.9, abs=0.05)
    ranks = sheep.reconstructed_ranks()
    assert len(set(ranks)) == 21
    # distinct values get increasing ranks
    vals = np.array(sheep.sample_values())
    r = np.array(ranks)
    for a in range(21):
        for b in range(21):
            if vals[a] < vals[b]:
                assert r[a] < r[b]


def test_variance_and_median_ci_are_consistent():
    smp, table = sheep.sample(), sheep.inclusion()
    v = syg_variance_estimate(smp, table, 27.9)
    mi = median_ci(smp, table, inversion="linear")
    assert mi.vhat == pytest.approx(v)
    assert mi.c1 == pytest.approx(0.5 - 1.959963984540054 * np.sqrt(v), abs=1e-12)
    assert mi.c2 == pytest.approx(0.5 + 1.959963984540054 * np.sqrt(v), abs=1e-12)
    assert mi.lower < 27.9 < mi.upper
