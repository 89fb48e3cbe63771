import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

import oracles
from metacombine.bounded_dist import Grid
from metacombine.combiners import (
    PValueInterval,
    combined_pvalue,
    fisher_stats,
    gaussian_stats,
    statistic,
    statistics_from_z,
    stouffer_stats,
    t_lrt_stat,
    two_sided_from_one_sided,
)
from metacombine.errors import InvalidInputError
from metacombine.methods import (
    FISHER_CONCORDANT,
    FISHER_LEFT,
    FISHER_UNDIRECTED,
    LRT_CONCORDANT,
    LRT_LEFT,
    STOUFFER_CONCORDANT,
    STOUFFER_RIGHT,
    TestMethod,
    ZU,
)
from metacombine.special import chisq_quantile_even, norm_cdf

RNG = np.random.default_rng(20240611)
probs = st.floats(min_value=1e-12, max_value=1 - 1e-12)
# dyadic values keep 1 - p exact
dyadic = st.integers(1, 2**30 - 1).map(lambda k: k / 2**30)


@pytest.mark.parametrize("p, expected", [(0.5, 1.0), (0.01, 0.02), (0.99, 0.02), (0.0, 0.0), (1.0, 0.0)])
def test_two_sided(p, expected):
    assert abs(two_sided_from_one_sided(p) - expected) < 1e-15


def test_fisher_reference_values():
    r = fisher_stats([0.1, 0.2])
    assert abs(r.left - oracles.FISHER_01_02["left"]) < 1e-9
    assert abs(r.right - oracles.FISHER_01_02["right"]) < 1e-9
    assert abs(r.undirected - oracles.FISHER_01_02["undirected"]) < 1e-9
    assert r.concordant == r.left


def test_fisher_half():
    r = fisher_stats([0.5, 0.5])
    assert r.undirected == 0.0
    assert abs(r.left - 4 * math.log(2)) < 1e-14 and r.left == r.right


def test_fisher_boundary_gives_inf():
    r = fisher_stats([0.0, 0.4])
    assert r.left == math.inf and r.concordant == math.inf and r.undirected == math.inf
    assert math.isfinite(r.right)
    assert combined_pvalue(FISHER_LEFT, r.left, 2) == PValueInterval(0.0, 0.0, True)


def test_fisher_large_m_no_underflow():
    r = fisher_stats(np.full(5000, 1e-100))
    assert_allclose(r.left, -2 * 5000 * math.log(1e-100), rtol=1e-13)


@given(st.lists(dyadic, min_size=1, max_size=20))
def test_fisher_mirror_symmetry(p):
    a = fisher_stats(p)
    b = fisher_stats([1 - x for x in p])
    assert math.isclose(a.left, b.right, rel_tol=1e-9, abs_tol=1e-9)
    assert math.isclose(a.right, b.left, rel_tol=1e-9, abs_tol=1e-9)
    assert math.isclose(a.undirected, b.undirected, rel_tol=1e-9, abs_tol=1e-9)
    assert math.isclose(a.concordant, b.concordant, rel_tol=1e-9, abs_tol=1e-9)


def test_empty_and_out_of_range_inputs():
    for fn in (fisher_stats, stouffer_stats, gaussian_stats):
        with pytest.raises(InvalidInputError):
            fn([])
    with pytest.raises(InvalidInputError):
        fisher_stats([0.3, 1.2])
    with pytest.raises(InvalidInputError):
        stouffer_stats([0.0, 1.0])


def test_stouffer_examples():
    r = stouffer_stats([0.5, 0.5])
    assert (r.left, r.right, r.undirected, r.concordant) == (0.0, 0.0, 0.0, 0.0)
    r = stouffer_stats([0.975, 0.975])
    assert abs(r.right - oracles.STOUFFER_0975_PAIR) < 1e-12
    assert r.concordant == abs(r.right)


def test_stouffer_left_is_minus_right():
    for _ in range(100):
        p = RNG.uniform(size=RNG.integers(1, 30))
        r = stouffer_stats(p)
        assert abs(r.left + r.right) < 1e-12
        assert r.concordant == max(r.left, r.right)


def test_gaussian_examples():
    r = gaussian_stats([1.0, -1.0])
    assert (r.left, r.right, r.concordant, r.undirected) == (1.0, 1.0, 1.0, 2.0)
    r = gaussian_stats(np.zeros(7))
    assert (r.left, r.right, r.concordant, r.undirected) == (0.0, 0.0, 0.0, 0.0)
    for _ in range(100):
        z = RNG.normal(size=12) * 3
        r = gaussian_stats(z)
        assert abs(r.left + r.right - r.undirected) < 1e-12


def test_t_lrt_examples():
    assert t_lrt_stat([-1.0, -3.0], [5, 7]) == 0.0
    assert abs(t_lrt_stat([1.0], [1]) - 2 * math.log(2)) < 1e-10
    assert t_lrt_stat([2.0, -0.1], [4, 9]) == t_lrt_stat([2.0, -50.0], [4, 9])
    with pytest.raises(InvalidInputError):
        t_lrt_stat([1.0, 2.0], [3])


@given(st.lists(st.floats(-6, 6), min_size=1, max_size=8), st.integers(0, 7), st.floats(0, 3))
def test_t_lrt_monotone(t, j, bump):
    j %= len(t)
    dof = [3 + i for i in range(len(t))]
    up = list(t)
    up[j] += bump
    assert t_lrt_stat(up, dof) >= t_lrt_stat(t, dof)


def test_statistics_from_z_matches_scalar():
    z = RNG.normal(size=(40, 6)) * 1.5
    for name in ("fisher-left", "fisher-right", "fisher-undirected", "fisher-concordant",
                 "stouffer-left", "stouffer-right", "stouffer-undirected", "stouffer-concordant",
                 "lrt-left", "lrt-right", "lrt-concordant", "zu"):
        meth = TestMethod.parse(name)
        batch = statistics_from_z(meth, z)
        for row, value in zip(z, batch):
            x = norm_cdf(row) if meth.family.value in ("fisher", "stouffer") else row
            assert math.isclose(value, statistic(meth, x), rel_tol=1e-9, abs_tol=1e-9), name


def test_two_study_undirected_value():
    stat = fisher_stats([0.01, 0.01]).undirected
    assert abs(stat - oracles.PAIR_001_STAT) < 1e-9
    p = combined_pvalue(FISHER_UNDIRECTED, stat, 2)
    assert p.exact and abs(p.lower - oracles.PAIR_001_P) < 1e-13


@pytest.mark.parametrize("m", [1, 2, 8, 16, 40])
def test_fisher_concordant_bonferroni_bracket(m):
    p = combined_pvalue(FISHER_CONCORDANT, chisq_quantile_even(2 * m, 0.995), m)
    assert not p.exact
    assert abs(p.lower - 0.009975) < 1e-9 and abs(p.upper - 0.01) < 1e-9
    assert p.width <= 0.005 ** 2 + 1e-15


def test_fisher_concordant_m1_upper_is_two_sided_p():
    for pt in RNG.uniform(size=50):
        q = fisher_stats([pt]).concordant
        assert abs(combined_pvalue(FISHER_CONCORDANT, q, 1).upper - two_sided_from_one_sided(pt)) < 1e-12


def test_fisher_concordant_m1_equals_undirected_p():
    for pt in RNG.uniform(size=50):
        up = combined_pvalue(FISHER_CONCORDANT, fisher_stats([pt]).concordant, 1).upper
        exact = combined_pvalue(FISHER_UNDIRECTED, fisher_stats([pt]).undirected, 1).lower
        assert abs(up - exact) < 1e-12


def test_stouffer_pvalues():
    assert combined_pvalue(STOUFFER_RIGHT, 0.0, 5).lower == 0.5
    p = combined_pvalue(STOUFFER_CONCORDANT, 1.959963984540054, 3)
    assert p.exact and abs(p.lower - 0.05) < 1e-14
    assert combined_pvalue(STOUFFER_CONCORDANT, 0.0, 3).lower == 1.0


def test_zu_even_exact_and_odd_bracketed():
    p = combined_pvalue(ZU, 5.0, 4)
    assert p.exact and abs(p.lower - oracles.chisq_sf(4, 5.0)) < 1e-14
    p = combined_pvalue(ZU, 5.0, 3, Grid(0.001, 40_000))
    assert not p.exact and p.contains(oracles.chisq_sf(3, 5.0))
    assert p.width < 2e-3


def test_lrt_pvalues_bracket_mixture():
    grid = Grid(0.001, 40_000)
    for m, a in [(1, 2.0), (3, 6.5), (6, 11.0)]:
        p = combined_pvalue(LRT_LEFT, a, m, grid)
        assert p.contains(oracles.lrt_mixture_sf(m, a), 1e-9)
        c = combined_pvalue(LRT_CONCORDANT, a, m, grid)
        tau = oracles.lrt_mixture_sf(m, a)
        assert c.lower <= 2 * tau - tau * tau + 1e-9 and 2 * tau <= c.upper + 1e-9


def test_combined_pvalue_errors():
    with pytest.raises(InvalidInputError):
        combined_pvalue("tlrt-right", 3.0, 2)
    with pytest.raises(InvalidInputError):
        combined_pvalue(FISHER_LEFT, -1.0, 2)
    with pytest.raises(InvalidInputError):
        combined_pvalue(FISHER_LEFT, 1.0, 0)
    with pytest.raises(InvalidInputError):
        TestMethod("zu", "left")


@given(st.lists(probs, min_size=1, max_size=10), st.data())
def test_combined_pvalue_intervals_ordered(p, data):
    m = len(p)
    for meth in (FISHER_LEFT, FISHER_UNDIRECTED, FISHER_CONCORDANT, STOUFFER_RIGHT, STOUFFER_CONCORDANT):
        iv = combined_pvalue(meth, statistic(meth, p), m)
        assert 0.0 <= iv.lower <= iv.upper <= 1.0
