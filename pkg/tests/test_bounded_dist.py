import io
import math

import numpy as np
import pytest
from scipy import stats

import oracles
from metacombine.bounded_dist import (
    BoundPair,
    Grid,
    GridDistribution,
    convolve_grid,
    convolve_sequence,
    discretize,
    max_combine,
    point_mass,
    quantile_bounds,
    self_convolve,
    tail_bounds,
    write_csv,
)
from metacombine.errors import IncompatibleGridError, InvalidConvolutionError, InvalidGridError
from metacombine.special import chisq_sf_even

ETA = 0.01
N = 2**15


def chi2_cdf(df):
    return lambda y: stats.chi2.cdf(y, df)


def exp_pair(eta=ETA, n=N):
    return discretize(lambda y: -np.expm1(-np.maximum(y, 0) / 2), eta, n)


def assert_brackets(pair, exact_cdf, slack=1e-9):
    idx = np.arange(pair.lower.origin_index, pair.lower.origin_index + pair.lower.size)
    x = idx * pair.eta
    f = exact_cdf(x)
    assert np.all(pair.lower.cdf_at(idx) >= f - slack)
    assert np.all(pair.upper.cdf_at(idx) <= f + slack)


def test_grid_validation():
    assert Grid().eta == 0.001 and Grid().n == 100_000
    for eta, n in [(0.0, 10), (-1.0, 10), (0.1, 0), (0.1, 2.5)]:
        with pytest.raises(InvalidGridError):
            Grid(eta, n)
    with pytest.raises(InvalidGridError):
        discretize(chi2_cdf(2), 0.0, 10)


def test_distribution_invariants():
    with pytest.raises(ValueError):
        GridDistribution(0.1, 0, [0.5, 0.4])
    with pytest.raises(ValueError):
        GridDistribution(0.1, 0, [1.2, -0.2])
    d = GridDistribution(0.1, 0, [0.5, 0.4], mass_pos_inf=0.1)
    assert not d.mass.flags.writeable
    assert d.tail(0.05) == pytest.approx(0.5) and d.tail(math.inf) == pytest.approx(0.1)


def test_point_mass_discretization():
    pair = discretize(lambda y: (np.asarray(y) >= 0.5).astype(float), 1.0, 4)
    assert pair.upper.mass[1] == 1.0 and pair.upper.mass.sum() == 1.0
    assert pair.lower.mass[0] == 1.0 and pair.lower.mass.sum() == 1.0


def test_discretize_brackets_exponential():
    pair = exp_pair()
    assert_brackets(pair, chi2_cdf(2))
    assert pair.lower.mass_pos_inf == 0.0
    short = exp_pair(ETA, 1000)
    assert short.upper.mass_pos_inf == pytest.approx(math.exp(-999 * ETA / 2), rel=1e-12)
    assert short.lower.mass[-1] >= short.upper.mass_pos_inf


def test_lrt_summand_atom():
    for eta in (0.001, 0.05):
        pair = discretize(lambda y: stats.norm.cdf(np.sqrt(np.maximum(y, 0))), eta, 500)
        assert pair.upper.mass[0] == 0.5


def test_delta_convolution_and_inf_atoms():
    f = point_mass(1, 0.5)
    out = convolve_grid(f, f, "up", 10)
    assert out.origin_index == 2 and out.mass.tolist() == [1.0]
    f = GridDistribution(1.0, 0, [0.6, 0.3], mass_pos_inf=0.1)
    g = GridDistribution(1.0, 0, [0.8], mass_pos_inf=0.2)
    assert convolve_grid(f, g, "up", 10).mass_pos_inf == pytest.approx(0.28, abs=1e-15)
    down = convolve_grid(f, g, "down", 10)
    assert down.mass_pos_inf == 0.0 and down.mass[-1] == pytest.approx(0.24 + 0.28)


def test_convolution_errors():
    f = GridDistribution(1.0, 0, [0.9], mass_pos_inf=0.1)
    g = GridDistribution(1.0, 0, [0.9], mass_neg_inf=0.1)
    with pytest.raises(InvalidConvolutionError):
        convolve_grid(f, g, "down", 5)
    with pytest.raises(InvalidConvolutionError):
        convolve_grid(g, g, "up", 5)
    with pytest.raises(IncompatibleGridError):
        convolve_grid(point_mass(0, 1.0), point_mass(0, 0.5), "up", 5)


def test_truncation_directions():
    f = GridDistribution(1.0, 0, [0.5, 0.5])
    up = convolve_grid(f, f, "up", 2)
    assert up.mass.tolist() == [0.25, 0.5] and up.mass_pos_inf == 0.25
    down = convolve_grid(f, f, "down", 2)
    assert down.mass.tolist() == [0.25, 0.75] and down.mass_pos_inf == 0.0


def _random_pair(rng, eta=0.1, n=64):
    # a random discrete law on the grid, its own exact bracket after shifting
    support = rng.integers(0, n, size=5)
    weights = rng.dirichlet(np.ones(5))

    def cdf(y):
        y = np.asarray(y, dtype=float)
        return np.sum(weights * (y[..., None] >= support * eta - 1e-12), axis=-1)

    return discretize(cdf, eta, n)


def test_random_chains_conserve_mass_and_order():
    rng = np.random.default_rng(7)
    for _ in range(100):
        pairs = [_random_pair(rng) for _ in range(rng.integers(1, 6))]
        acc = convolve_sequence(pairs, 96)
        for d in (acc.lower, acc.upper):
            total = d.mass.sum() + d.mass_pos_inf + d.mass_neg_inf
            assert abs(total - 1.0) < 1e-9
        assert acc.is_ordered()


def test_fft_path_conserves_mass():
    rng = np.random.default_rng(11)
    for _ in range(20):
        a = rng.dirichlet(np.ones(3000))
        b = rng.dirichlet(np.ones(500) * 0.3)
        f = GridDistribution(0.01, 0, a * 0.95, mass_pos_inf=0.05)
        g = GridDistribution(0.01, 3, b)
        for direction in ("up", "down"):
            out = convolve_grid(f, g, direction, 2500)
            assert abs(out.mass.sum() + out.mass_pos_inf - 1.0) < 1e-9
            assert out.origin_index == 3


def test_sequence_single_pair_is_identity():
    pair = exp_pair(0.05, 300)
    out = convolve_sequence([pair], 300)
    np.testing.assert_allclose(out.lower.mass, pair.lower.mass, atol=1e-15)
    np.testing.assert_allclose(out.upper.mass, pair.upper.mass, atol=1e-15)


@pytest.mark.parametrize("m", [1, 4, 6])
def test_self_convolve_brackets_chi2(m):
    pair = exp_pair()
    fast = self_convolve(pair, m, N)
    assert_brackets(fast, chi2_cdf(2 * m))
    if m > 1:
        slow = convolve_sequence([pair] * m, N)
        assert_brackets(slow, chi2_cdf(2 * m))
        assert fast.is_ordered() and slow.is_ordered()


def test_refinement_shrinks_tail_width():
    q = 20.090235029663233  # chi2_8 0.99 quantile
    widths = []
    for n in (2**14, 2**15, 2**16):
        eta = 80.0 / n
        pair = self_convolve(exp_pair(eta, n), 4, n)
        t = tail_bounds(pair, q)
        assert t.contains(0.01, 1e-12)
        widths.append(t.width)
    for a, b in zip(widths, widths[1:]):
        assert 1.5 <= a / b <= 2.5


def test_tail_bounds_examples():
    pair = self_convolve(exp_pair(), 4, N)
    assert tail_bounds(pair, -1.0).lower == 1.0 and tail_bounds(pair, -1.0).upper == 1.0
    t = tail_bounds(pair, 20.0902)
    assert t.contains(chisq_sf_even(8, 20.0902))
    assert t.width <= 1e-3


def test_quantile_bounds():
    pair = BoundPair(point_mass(7, 0.25), point_mass(7, 0.25))
    assert quantile_bounds(pair, 0.3) == (1.75, 1.75)
    pair = self_convolve(exp_pair(), 4, N)
    lo, hi = quantile_bounds(pair, 0.99)
    assert lo <= 20.090235029663233 <= hi
    levels = np.linspace(0.01, 0.999, 60)
    qs = np.array([quantile_bounds(pair, lv) for lv in levels])
    assert np.all(np.diff(qs[:, 0]) >= 0) and np.all(np.diff(qs[:, 1]) >= 0)


def test_quantile_unbounded_signal():
    pair = exp_pair(0.01, 100)  # covers only [0, 1)
    assert quantile_bounds(pair, 0.99).hi == math.inf


def test_max_combine_fisher_m1():
    # max(-2 log U, -2 log(1 - U)): disjoint tails make 2 e^{-A/2} exact for A >= 2 log 2
    eta, n = 0.001, 60_000
    left = discretize(lambda y: -np.expm1(-np.maximum(y, 0) / 2), eta, n)
    both = max_combine(left, left)
    t = tail_bounds(both, 2.0, inclusive=True)
    lo, hi = oracles.FISHER_M1_A2
    assert t.upper >= hi - 1e-12
    assert t.lower >= lo - 1e-3
    assert t.contains(hi)
    assert both.is_ordered()


def test_max_combine_degenerate():
    p = BoundPair(point_mass(5, 0.1), point_mass(5, 0.1))
    out = max_combine(p, p)
    assert out.lower.quantile(0.5) == pytest.approx(0.5) and out.upper.quantile(0.5) == pytest.approx(0.5)
    assert out.lower.tail(0.45) == pytest.approx(1.0) and out.upper.tail(0.55) == pytest.approx(0.0)


def test_write_csv():
    buf = io.StringIO()
    write_csv(GridDistribution(0.5, 1, [0.25, 0.5], mass_pos_inf=0.25), buf)
    lines = buf.getvalue().splitlines()
    assert lines == ["grid_value,mass", "-inf,0.0", "0.5,0.25", "1.0,0.5", "+inf,0.25"]
