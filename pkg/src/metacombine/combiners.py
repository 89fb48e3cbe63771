"""Combination statistics and their null p-values.

Inputs are one-tailed p-values ``ptilde_j = Pr(estimate_j <= observed_j)``
under the null, or raw z / t statistics. Small ``ptilde`` is evidence for
a negative effect; the left statistics accumulate that evidence and the
right statistics accumulate evidence for positive effects.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

from .errors import InvalidInputError
from .methods import Family, Side, TestMethod
from .special import chisq_sf_even, norm_quantile, norm_sf

__all__ = [
    "StatFamilyResult",
    "PValueInterval",
    "two_sided_from_one_sided",
    "fisher_stats",
    "stouffer_stats",
    "gaussian_stats",
    "t_lrt_stat",
    "statistic",
    "statistics_from_z",
    "combined_pvalue",
]


@dataclass(frozen=True)
class StatFamilyResult:
    """Left, right, undirected and concordant members of one family.

    For the Gaussian family ``undirected`` holds ``sum(z**2)``.
    """

    left: float
    right: float
    undirected: float
    concordant: float

    def get(self, side):
        return getattr(self, Side(side).value)


@dataclass(frozen=True)
class PValueInterval:
    """Bracket ``[lower, upper]`` on a probability; ``exact`` when they coincide."""

    lower: float
    upper: float
    exact: bool = False

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError(f"empty interval [{self.lower}, {self.upper}]")

    @classmethod
    def point(cls, value):
        return cls(value, value, True)

    @property
    def width(self):
        return self.upper - self.lower

    def contains(self, value, slack=0.0):
        return self.lower - slack <= value <= self.upper + slack


def _ptilde(p):
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError("need a non-empty 1-D vector of p-values")
    if np.any(~((arr >= 0.0) & (arr <= 1.0))):
        raise InvalidInputError("p-values must lie in [0, 1]")
    return arr


def two_sided_from_one_sided(ptilde):
    """Two-tailed p-value ``2 * min(ptilde, 1 - ptilde)``."""
    if not 0.0 <= ptilde <= 1.0:
        raise InvalidInputError("p-value must lie in [0, 1]")
    return 2.0 * min(ptilde, 1.0 - ptilde)


def fisher_stats(p):
    """Fisher's log-product statistics from one-tailed p-values.

    Everything is summed in log space, so large ``m`` cannot underflow.
    A p-value of exactly 0 or 1 sends the affected statistics to ``inf``.

    Examples
    --------
    >>> r = fisher_stats([0.5, 0.5])
    >>> r.undirected
    0.0
    """
    p = _ptilde(p)
    with np.errstate(divide="ignore"):
        left = -2.0 * math.fsum(np.log(p))
        right = -2.0 * math.fsum(np.log1p(-p))
        two = 2.0 * np.minimum(p, 1.0 - p)
        undirected = -2.0 * math.fsum(np.log(two))
    # fsum of a vector holding -inf returns -inf, and of -0.0 terms returns -0.0
    left, right, undirected = (abs(v) if v == 0.0 else v for v in (left, right, undirected))
    return StatFamilyResult(left, right, undirected, max(left, right))


def stouffer_stats(p):
    """Stouffer z-sum statistics from one-tailed p-values."""
    p = _ptilde(p)
    z = norm_quantile(p)
    if np.any(z == np.inf) and np.any(z == -np.inf):
        raise InvalidInputError("p-values of both 0 and 1 make the Stouffer sum undefined")
    root_m = math.sqrt(p.size)
    right = math.fsum(z) / root_m
    left = -right
    undirected = math.fsum(np.abs(z)) / root_m
    return StatFamilyResult(left + 0.0, right + 0.0, undirected, abs(right))


def gaussian_stats(z):
    """Gaussian likelihood-ratio statistics from z-scores.

    ``left = sum(max(0, -z)**2)``, ``right = sum(max(0, z)**2)``,
    ``concordant = max(left, right)`` and ``undirected = sum(z**2)``.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.size == 0:
        raise InvalidInputError("need a non-empty 1-D vector of z-scores")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("z-scores must be finite")
    left = math.fsum(np.minimum(z, 0.0) ** 2)
    right = math.fsum(np.maximum(z, 0.0) ** 2)
    return StatFamilyResult(left, right, math.fsum(z * z), max(left, right))


def t_lrt_stat(t, dof):
    """One-sided likelihood-ratio statistic for t-statistics.

    ``sum((n_j + 1) * log(1 + max(T_j, 0)**2 / n_j))``.
    """
    t = np.asarray(t, dtype=float)
    n = np.asarray(dof, dtype=float)
    if t.ndim != 1 or t.shape != n.shape or t.size == 0:
        raise InvalidInputError("t and dof must be non-empty vectors of equal length")
    if np.any(n <= 0) or np.any(n != np.round(n)):
        raise InvalidInputError("degrees of freedom must be positive integers")
    tp = np.maximum(t, 0.0)
    return math.fsum((n + 1.0) * np.log1p(tp * tp / n))


def statistic(method, values, dof=None):
    """Evaluate ``method`` on one row of inputs.

    ``values`` are one-tailed p-values for the Fisher and Stouffer families,
    z-scores for the LRT and ``zu`` families, and t-statistics for ``tlrt``.
    """
    method = method if isinstance(method, TestMethod) else TestMethod.parse(method)
    fam = method.family
    if fam is Family.FISHER:
        return fisher_stats(values).get(method.side)
    if fam is Family.STOUFFER:
        return stouffer_stats(values).get(method.side)
    if fam is Family.TLRT:
        if dof is None:
            raise InvalidInputError("tlrt needs degrees of freedom")
        return t_lrt_stat(values, dof)
    res = gaussian_stats(values)
    if fam is Family.GAUSSIAN_SQUARE:
        return res.undirected
    return res.get(method.side)


def statistics_from_z(method, z):
    """Vectorised statistic for a batch of z-score rows (shape ``(n, m)``).

    The one-tailed p-value of a z-score is ``Phi(z)``; Fisher terms use
    ``log_ndtr`` so extreme draws keep finite, accurate logs.
    """
    z = np.asarray(z, dtype=float)
    m = z.shape[-1]
    fam, side = method.family, method.side
    if fam is Family.FISHER:
        if side is Side.UNDIRECTED:
            return -2.0 * np.sum(math.log(2.0) + _sp.log_ndtr(-np.abs(z)), axis=-1)
        # both sides are needed for the concordant member; cheap enough to always compute
        left = -2.0 * np.sum(_sp.log_ndtr(z), axis=-1)
        right = -2.0 * np.sum(_sp.log_ndtr(-z), axis=-1)
        return {Side.LEFT: left, Side.RIGHT: right, Side.CONCORDANT: np.maximum(left, right)}[side]
    if fam is Family.STOUFFER:
        root_m = math.sqrt(m)
        if side is Side.UNDIRECTED:
            return np.sum(np.abs(z), axis=-1) / root_m
        right = np.sum(z, axis=-1) / root_m
        return {Side.LEFT: -right, Side.RIGHT: right, Side.CONCORDANT: np.abs(right)}[side]
    if fam is Family.GAUSSIAN_SQUARE:
        return np.sum(z * z, axis=-1)
    if fam is Family.LRT:
        left = np.sum(np.minimum(z, 0.0) ** 2, axis=-1)
        right = np.sum(np.maximum(z, 0.0) ** 2, axis=-1)
        return {Side.LEFT: left, Side.RIGHT: right, Side.CONCORDANT: np.maximum(left, right)}[side]
    raise InvalidInputError(f"{method} cannot be evaluated on z-scores")


def _fft_tail(method, statistic, m, grid):
    from .power import null_pair  # deferred: power builds on this module

    from .bounded_dist import tail_bounds

    return tail_bounds(null_pair(method, m, grid), statistic, inclusive=True)


def combined_pvalue(method, statistic, m, grid=None):
    """Null probability of a statistic at least as large as ``statistic``.

    Parameters
    ----------
    method : TestMethod or str
    statistic : float
        Observed statistic (``+inf`` gives an exact zero).
    m : int
        Number of combined tests.
    grid : Grid, optional
        Discretisation for methods whose null law is only bracketed
        numerically (``lrt-*``, ``stouffer-undirected``, ``zu`` at odd
        ``m``). Defaults to an automatically sized grid.

    Returns
    -------
    PValueInterval
        Exact for Fisher left/right/undirected, Stouffer left/right/
        concordant and ``zu`` at even ``m``; a hard bracket otherwise.
    """
    method = method if isinstance(method, TestMethod) else TestMethod.parse(method)
    if m < 1 or int(m) != m:
        raise InvalidInputError("m must be a positive integer")
    if math.isnan(statistic):
        raise InvalidInputError("statistic is NaN")
    fam, side = method.family, method.side
    if fam is Family.TLRT:
        raise InvalidInputError("no null distribution is available for the t likelihood-ratio statistic")
    if fam is Family.STOUFFER and side is not Side.UNDIRECTED:
        if side is Side.CONCORDANT:
            if statistic < 0:
                raise InvalidInputError("concordant Stouffer statistic is nonnegative")
            return PValueInterval.point(min(1.0, 2.0 * norm_sf(statistic)))
        return PValueInterval.point(norm_sf(statistic))
    if statistic < 0:
        raise InvalidInputError(f"{method} statistics are nonnegative")
    if math.isinf(statistic):
        return PValueInterval.point(0.0)
    if fam is Family.FISHER:
        tau = chisq_sf_even(2 * m, statistic)
        if side is Side.CONCORDANT:
            return PValueInterval(2.0 * tau - tau * tau, min(1.0, 2.0 * tau))
        return PValueInterval.point(tau)
    if fam is Family.GAUSSIAN_SQUARE and m % 2 == 0:
        return PValueInterval.point(chisq_sf_even(m, statistic))
    if fam is Family.LRT and side is Side.CONCORDANT:
        from .methods import LRT_LEFT

        tau = _fft_tail(LRT_LEFT, statistic, m, grid)
        lo, hi = tau.lower, tau.upper
        return PValueInterval(2.0 * lo - lo * lo, min(1.0, 2.0 * hi))
    tail = _fft_tail(method, statistic, m, grid)
    return PValueInterval(tail.lower, tail.upper, False)
