"""Critical values and power of combination tests under Gaussian alternatives.

Closed forms are used wherever they exist, for instance the Fisher nulls
and the signed Stouffer statistics. Everything else is bracketed by FFT
convolution of discretised summand CDFs. Concordant statistics combine the
left and right brackets using negative association of the two sides.

Monte Carlo draws come from Philox streams keyed by ``(seed, batch)`` so
results do not depend on evaluation order or thread count.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .alternatives import AlternativeSpec, SummandFamily, stouffer_analytic_power, summand_cdf
from .bounded_dist import (
    BoundPair,
    Grid,
    convolve_sequence,
    discretize,
    max_combine,
    quantile_bounds,
    self_convolve,
    tail_bounds,
)
from .combiners import PValueInterval, statistics_from_z
from .errors import ConvergenceError, InvalidInputError, ResolutionError
from .methods import LRT_LEFT, LRT_RIGHT, Family, Side, TestMethod, ZU
from .special import chisq_isf_even, chisq_sf_even, norm_quantile

__all__ = [
    "CriticalBounds",
    "PowerInterval",
    "MCEstimate",
    "CurveRow",
    "DEFAULT_GRID",
    "resolve_grid",
    "null_pair",
    "alternative_pair",
    "critical_bounds",
    "power_bounds",
    "agresti_interval",
    "mc_power",
    "mc_power_many",
    "calibrate_delta",
    "power_curve",
]

DEFAULT_GRID = Grid(0.001, 100_000)
MC_BATCH = 1 << 16
MAX_AUTO_N = 1 << 22


@dataclass(frozen=True)
class CriticalBounds:
    """Bracket ``[lo, hi]`` on a critical value and the level it guarantees."""

    lo: float
    hi: float
    level_lo: float
    level_hi: float

    @property
    def exact(self):
        return self.lo == self.hi


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    ci_lo: float
    ci_hi: float
    successes: int
    n: int
    seed: int
    critical: float

    @property
    def std_error(self):
        p = self.estimate
        return math.sqrt(max(p * (1.0 - p), 0.0) / self.n)


@dataclass(frozen=True)
class PowerInterval:
    """Hard power bracket, optionally with a Monte Carlo estimate."""

    lower: float
    upper: float
    mc_estimate: Optional[float] = None
    mc_ci: Optional[tuple] = None
    seed: Optional[int] = None
    n_mc: Optional[int] = None

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError(f"empty power interval [{self.lower}, {self.upper}]")

    @property
    def midpoint(self):
        return 0.5 * (self.lower + self.upper)

    @property
    def width(self):
        return self.upper - self.lower

    @property
    def consistent(self):
        """Whether the MC interval overlaps the hard bracket (None without MC)."""
        if self.mc_ci is None:
            return None
        return self.mc_ci[0] <= self.upper and self.lower <= self.mc_ci[1]

    def with_mc(self, mc):
        return PowerInterval(self.lower, self.upper, mc.estimate, (mc.ci_lo, mc.ci_hi), mc.seed, mc.n)


# ---------------------------------------------------------------------------
# grids and bound pairs


def _even_ceiling(m):
    return 2 * ((m + 1) // 2)


def _null_tail_bound(method, m, x):
    # an easy upper bound on the null tail at x, used only to size grids
    fam = method.family
    if fam is Family.FISHER:
        return chisq_sf_even(2 * m, x)
    if fam is Family.STOUFFER:
        # sum|z|/sqrt(m) <= sqrt(sum z^2)
        return chisq_sf_even(_even_ceiling(m), x * x)
    return chisq_sf_even(_even_ceiling(m), x)


def resolve_grid(method, m, alpha, grid=None):
    """Return ``grid``, or size one whose range covers the null tail.

    Starting from step 0.001 (divided by ``sqrt(m)`` for the undirected
    Stouffer sum) and 100,000 points, ``n`` doubles until the null tail
    beyond the top grid point is below ``alpha * 1e-3``.
    """
    if grid is not None:
        return grid
    n, eta = DEFAULT_GRID.n, DEFAULT_GRID.eta
    if method.family is Family.STOUFFER:
        # summands carry a 1/sqrt(m) factor, so the step shrinks with it
        eta /= math.sqrt(m)
    while _null_tail_bound(method, m, (n - 1) * eta) > alpha * 1e-3:
        if n >= MAX_AUTO_N:
            raise ResolutionError(f"no automatic grid covers {method} at m={m}", suggested_n=2 * n)
        n *= 2
    return Grid(eta, n)


def _summand(method, side):
    fam = method.family
    if fam is Family.FISHER:
        return SummandFamily("fisher", side.value)
    if fam is Family.LRT:
        return SummandFamily("lrt", side.value)
    if fam is Family.GAUSSIAN_SQUARE:
        return SummandFamily("gaussian_square", "undirected")
    if fam is Family.STOUFFER and side is Side.UNDIRECTED:
        return SummandFamily("stouffer_u", "undirected")
    raise InvalidInputError(f"{method} has no summand decomposition")


@lru_cache(maxsize=64)
def _group_pair(summand, beta, count, m, eta, n):
    pair = discretize(summand_cdf(summand, beta, m=m), eta, n)
    return self_convolve(pair, count, n)


@lru_cache(maxsize=32)
def _sum_pair(summand, beta, eta, n):
    m = len(beta)
    values, counts = np.unique(np.asarray(beta), return_counts=True)
    groups = [_group_pair(summand, float(v), int(c), m, eta, n) for v, c in zip(values, counts)]
    if len(groups) == 1:
        return groups[0]
    return convolve_sequence(groups, n)


def alternative_pair(method, spec, side=None, grid=None):
    """Bound pair for one side of ``method`` when the study means are ``spec``."""
    side = Side(side) if side is not None else method.side
    grid = grid or DEFAULT_GRID
    return _sum_pair(_summand(method, side), spec.beta, grid.eta, grid.n)


def null_pair(method, m, grid=None):
    """Bound pair of the null distribution of a one-sided or undirected method."""
    method = method if isinstance(method, TestMethod) else TestMethod.parse(method)
    if method.is_concordant:
        raise InvalidInputError("concordant methods combine two null pairs; use the left side")
    grid = resolve_grid(method, m, 1e-6, grid)
    return alternative_pair(method, AlternativeSpec((0.0,) * m), grid=grid)


def _checked_quantile(pair, level, grid, what):
    q = quantile_bounds(pair, level)
    if not math.isfinite(q.hi):
        raise ResolutionError(
            f"grid with n={grid.n}, eta={grid.eta} does not reach the {level} quantile of {what}",
            suggested_n=2 * grid.n,
        )
    return q


# ---------------------------------------------------------------------------
# critical values


def _tau_exact_level(alpha):
    # tail tau with 2 tau - tau^2 = alpha
    return -math.expm1(0.5 * math.log1p(-alpha))


def critical_bounds(method, m, alpha, grid=None):
    """Critical value bracket for a level ``alpha`` test.

    For concordant methods the critical value is the Bonferroni one (the
    one-sided ``1 - alpha/2`` quantile) and ``level_lo, level_hi`` bound the
    attained level by ``alpha - alpha**2 / 4`` and ``alpha``.

    Raises
    ------
    ResolutionError
        If the grid is too short to contain the critical value.
    """
    method = method if isinstance(method, TestMethod) else TestMethod.parse(method)
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError("alpha must lie in (0, 1)")
    fam, side = method.family, method.side
    bonf = (alpha - alpha * alpha / 4.0, alpha)
    if fam is Family.TLRT:
        raise InvalidInputError("no null distribution is available for the t likelihood-ratio statistic")
    if fam is Family.FISHER:
        if side is Side.CONCORDANT:
            c = chisq_isf_even(2 * m, alpha / 2.0)
            return CriticalBounds(c, c, *bonf)
        c = chisq_isf_even(2 * m, alpha)
        return CriticalBounds(c, c, alpha, alpha)
    if fam is Family.STOUFFER and side is not Side.UNDIRECTED:
        if side is Side.CONCORDANT:
            c = -norm_quantile(alpha / 2.0)
        else:
            c = -norm_quantile(alpha)
        return CriticalBounds(c, c, alpha, alpha)
    if fam is Family.GAUSSIAN_SQUARE and m % 2 == 0:
        c = chisq_isf_even(m, alpha)
        return CriticalBounds(c, c, alpha, alpha)
    grid = resolve_grid(method, m, alpha, grid)
    if side is Side.CONCORDANT:
        pair = alternative_pair(method, AlternativeSpec((0.0,) * m), side=Side.LEFT, grid=grid)
        q = _checked_quantile(pair, 1.0 - alpha / 2.0, grid, method)
        return CriticalBounds(q.lo, q.hi, *bonf)
    pair = alternative_pair(method, AlternativeSpec((0.0,) * m), grid=grid)
    q = _checked_quantile(pair, 1.0 - alpha, grid, method)
    return CriticalBounds(q.lo, q.hi, alpha, alpha)


def _concordant_critical_range(method, m, alpha, grid):
    # [c_lo, c_hi] covering both the exact level-alpha critical value and the
    # Bonferroni one; c_lo solves 2 tau - tau^2 = alpha on the one-sided tail
    tau = _tau_exact_level(alpha)
    if method.family is Family.FISHER:
        return chisq_isf_even(2 * m, tau), chisq_isf_even(2 * m, alpha / 2.0)
    pair = alternative_pair(method, AlternativeSpec((0.0,) * m), side=Side.LEFT, grid=grid)
    lo = _checked_quantile(pair, 1.0 - tau, grid, method).lo
    hi = _checked_quantile(pair, 1.0 - alpha / 2.0, grid, method).hi
    return lo, hi


def _mc_critical(method, m, alpha, grid):
    crit = critical_bounds(method, m, alpha, grid)
    return 0.5 * (crit.lo + crit.hi)


# ---------------------------------------------------------------------------
# power


def _power_from_pair(pair, c_lo, c_hi):
    lower = tail_bounds(pair, c_hi).lower
    upper = tail_bounds(pair, c_lo, inclusive=True).upper
    return min(lower, upper), upper


def _concordant_power(method, spec, alpha, grid):
    c_lo, c_hi = _concordant_critical_range(method, spec.m, alpha, grid)
    left = alternative_pair(method, spec, side=Side.LEFT, grid=grid)
    right = alternative_pair(method, spec, side=Side.RIGHT, grid=grid)

    # bracket 1: distribution-level bounds on max(L, R)
    lo1, hi1 = _power_from_pair(max_combine(left, right), c_lo, c_hi)

    # bracket 2: P_L + P_R - P_L P_R <= P(max > c) <= P_L + P_R on marginal tails
    pl_hi = tail_bounds(left, c_lo, inclusive=True).upper
    pr_hi = tail_bounds(right, c_lo, inclusive=True).upper
    pl_lo = tail_bounds(left, c_hi).lower
    pr_lo = tail_bounds(right, c_hi).lower
    lo2, hi2 = pl_lo + pr_lo - pl_lo * pr_lo, min(1.0, pl_hi + pr_hi)

    lo, hi = max(lo1, lo2), min(hi1, hi2)
    if lo > hi:
        raise ArithmeticError(f"concordant power brackets do not intersect: [{lo1}, {hi1}] vs [{lo2}, {hi2}]")
    return lo, hi


def power_bounds(method, spec, alpha, grid=None, n_mc=None, seed=0, ci_alpha=0.001):
    """Hard bounds on the power of ``method`` at alternative ``spec``.

    The upper end is the chance that the stochastically larger bound on the
    statistic reaches the lower end of the critical bracket; the lower end
    is the chance that the stochastically smaller bound exceeds the upper
    end. For concordant methods the bracket also covers the Bonferroni
    critical value, and is the intersection of the distribution-level and
    tail-level brackets. Pass ``n_mc`` to attach a Monte Carlo estimate.
    """
    method = method if isinstance(method, TestMethod) else TestMethod.parse(method)
    if not isinstance(spec, AlternativeSpec):
        spec = AlternativeSpec(spec)
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError("alpha must lie in (0, 1)")
    fam, side = method.family, method.side
    if fam is Family.TLRT:
        raise InvalidInputError("power of the t likelihood-ratio statistic is not available")
    if fam is Family.STOUFFER and side is not Side.UNDIRECTED:
        p = stouffer_analytic_power(spec, side.value, alpha)
        result = PowerInterval(p, p)
    else:
        grid = resolve_grid(method, spec.m, alpha, grid)
        if side is Side.CONCORDANT:
            lo, hi = _concordant_power(method, spec, alpha, grid)
        else:
            crit = critical_bounds(method, spec.m, alpha, grid)
            lo, hi = _power_from_pair(alternative_pair(method, spec, grid=grid), crit.lo, crit.hi)
        result = PowerInterval(lo, hi)
    if n_mc:
        result = result.with_mc(mc_power(method, spec, alpha, n_mc, seed, ci_alpha, grid))
    return result


# ---------------------------------------------------------------------------
# Monte Carlo


def agresti_interval(successes, n, ci_alpha):
    """Wald interval after adding ``z**2`` pseudo-counts split evenly.

    Returns ``(center, lo, hi)`` with the ends clipped to ``[0, 1]``.
    """
    z = -norm_quantile(ci_alpha / 2.0)
    z2 = z * z
    center = (successes + z2 / 2.0) / (n + z2)
    half = z * math.sqrt(center * (1.0 - center) / n)
    return center, max(0.0, center - half), min(1.0, center + half)


def _batches(beta, n, seed):
    beta = np.asarray(beta, dtype=float)
    for b in range(-(-n // MC_BATCH)):
        size = min(MC_BATCH, n - b * MC_BATCH)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, b])))
        yield beta + rng.standard_normal((size, beta.size))


def mc_power_many(methods, spec, alpha, n, seed, ci_alpha=0.001, grid=None):
    """Monte Carlo power for several methods on one shared set of draws."""
    if n < 100:
        raise InvalidInputError("Monte Carlo needs at least 100 draws")
    if int(seed) != seed or seed < 0:
        raise InvalidInputError("seed must be a nonnegative integer")
    methods = [m if isinstance(m, TestMethod) else TestMethod.parse(m) for m in methods]
    if not isinstance(spec, AlternativeSpec):
        spec = AlternativeSpec(spec)
    crit = {}
    for meth in methods:
        if meth.family is Family.TLRT:
            raise InvalidInputError("Monte Carlo power of the t likelihood-ratio statistic is not available")
        g = resolve_grid(meth, spec.m, alpha, grid)
        crit[meth] = _mc_critical(meth, spec.m, alpha, g)
    hits = dict.fromkeys(methods, 0)
    for z in _batches(spec.beta, n, int(seed)):
        for meth in methods:
            hits[meth] += int(np.count_nonzero(statistics_from_z(meth, z) >= crit[meth]))
    out = {}
    for meth in methods:
        _, lo, hi = agresti_interval(hits[meth], n, ci_alpha)
        out[meth] = MCEstimate(hits[meth] / n, lo, hi, hits[meth], n, int(seed), crit[meth])
    return out


def mc_power(method, spec, alpha, n, seed, ci_alpha=0.001, grid=None):
    """Monte Carlo power with an Agresti interval at confidence ``1 - ci_alpha``."""
    method = method if isinstance(method, TestMethod) else TestMethod.parse(method)
    return mc_power_many([method], spec, alpha, n, seed, ci_alpha, grid)[method]


# ---------------------------------------------------------------------------
# calibration and curves


def calibrate_delta(m, k_pos, k_neg, target, alpha, grid=None, tol=0.002, max_iter=200,
                    full_output=False):
    """Effect size at which the sum-of-squares test has power ``target``.

    Bisects on ``delta`` for the pattern with ``k_pos`` entries ``+delta``
    and ``k_neg`` entries ``-delta``, using the midpoint of the power bracket.
    Stops once the midpoint is within ``tol`` of ``target``.

    Returns
    -------
    float, or (float, PowerInterval) when ``full_output``
    """
    if not 1 <= k_pos + k_neg <= m:
        raise InvalidInputError("need 1 <= k_pos + k_neg <= m")
    if not alpha < target < 1.0:
        raise InvalidInputError("target power must lie in (alpha, 1)")

    def power(delta):
        return power_bounds(ZU, AlternativeSpec.pattern(k_pos, k_neg, delta, m), alpha, grid)

    lo, hi = 0.0, 1.0
    p_hi = power(hi)
    while p_hi.midpoint < target:
        lo, hi = hi, 2.0 * hi
        p_hi = power(hi)
        if hi > 1e6:
            raise ConvergenceError("power never reaches the target")
    best = (hi, p_hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        p = power(mid)
        best = (mid, p)
        if abs(p.midpoint - target) <= tol:
            break
        if p.midpoint < target:
            lo = mid
        else:
            hi = mid
    delta, p = best
    if not (p.lower - tol <= target <= p.upper + tol):
        raise ConvergenceError(f"power bracket [{p.lower}, {p.upper}] misses target {target}")
    return (delta, p) if full_output else delta


@dataclass(frozen=True)
class CurveRow:
    method: str
    k: int
    delta: float
    power_lo: float
    power_hi: float
    mc: Optional[float] = None
    mc_lo: Optional[float] = None
    mc_hi: Optional[float] = None
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    FIELDS = ("method", "k", "delta", "power_lo", "power_hi", "mc", "mc_lo", "mc_hi")

    def as_dict(self):
        return {f: getattr(self, f) for f in self.FIELDS}


FIGURE_METHODS = {
    5: ("zu", "fisher-concordant", "lrt-concordant"),
    6: ("zu", "fisher-concordant", "lrt-concordant", "stouffer-concordant", "stouffer-undirected"),
    7: ("zu", "fisher-concordant", "lrt-concordant", "stouffer-concordant", "stouffer-undirected"),
}


def _default_threads():
    try:
        return max(1, int(os.environ.get("METACOMBINE_THREADS", "1")))
    except ValueError:
        return 1


def _curve_point(methods, m, k, k_neg, delta, alpha, grid, n_mc, seed, ci_alpha):
    spec = AlternativeSpec.pattern(k - k_neg, k_neg, delta, m)
    mc = mc_power_many(methods, spec, alpha, n_mc, seed, ci_alpha, grid) if n_mc else {}
    rows = []
    for meth in methods:
        p = power_bounds(meth, spec, alpha, grid)
        est = mc.get(meth)
        rows.append(CurveRow(meth.name, k, delta, p.lower, p.upper,
                             est.estimate if est else None,
                             est.ci_lo if est else None,
                             est.ci_hi if est else None))
    return rows


def power_curve(methods, m, alpha, mode="explicit", ks=None, deltas=None, target=0.8,
                k_neg=0, grid=None, n_mc=0, seed=0, ci_alpha=0.001, threads=None):
    """Power table over a sweep of ``k`` (and ``delta``).

    Modes
    -----
    ``"explicit"``
        every ``(k, delta)`` in ``ks x deltas``, with ``k_neg`` of the ``k``
        nonzero entries negative.
    ``"figure5"``
        same as explicit with all nonzero entries positive.
    ``"figure6"``
        for each ``k``, ``delta`` is calibrated so the sum-of-squares test
        has power ``target`` with ``k`` positive entries.
    ``"figure7"``
        like figure6 but with one of the ``k`` entries negative.

    Rows are ordered by sweep point, then by ``methods``.
    """
    methods = [mm if isinstance(mm, TestMethod) else TestMethod.parse(mm) for mm in methods]
    ks = list(ks) if ks is not None else list(range(1, m + 1))
    if mode in ("figure6", "figure7"):
        neg = 1 if mode == "figure7" else 0
        points = []
        for k in ks:
            d = calibrate_delta(m, k - neg, neg, target, alpha, grid)
            points.append((k, neg, d))
    elif mode in ("explicit", "figure5"):
        if deltas is None:
            raise InvalidInputError("an explicit sweep needs deltas")
        neg = 0 if mode == "figure5" else k_neg
        points = [(k, neg, float(d)) for k in ks for d in deltas]
    else:
        raise InvalidInputError(f"unknown curve mode {mode!r}")
    for k, neg, _ in points:
        if not 1 <= k <= m or neg > k:
            raise InvalidInputError(f"k={k} is outside 1..{m}")

    threads = threads or _default_threads()

    def run(point):
        k, neg, d = point
        return _curve_point(methods, m, k, neg, d, alpha, grid, n_mc, seed, ci_alpha)

    if threads > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(run, points))
    else:
        chunks = [run(p) for p in points]
    return [row for chunk in chunks for row in chunk]
