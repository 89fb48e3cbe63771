"""Stochastic upper/lower bounds for sums of independent random variables.

A :class:`GridDistribution` holds probability mass on the lattice
``(origin_index + i) * eta`` for ``i = 0 .. N-1`` plus atoms at ``+inf`` and
``-inf``. A continuous CDF is bracketed by discretising it twice: the upper
(stochastically larger) version pushes every bit of mass right to the next
grid point, the lower version pushes it left. Convolving upper with upper
and lower with lower keeps the bracket valid, and truncation back to ``N``
points rounds in the same direction, so the final pair holds hard bounds on
the distribution of the sum, up to floating point roundoff of order 1e-12.
"""

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.fft

from .combiners import PValueInterval
from .errors import (
    IncompatibleGridError,
    InvalidConvolutionError,
    InvalidGridError,
    NumericDegradationError,
)

__all__ = [
    "Grid",
    "GridDistribution",
    "BoundPair",
    "Interval",
    "point_mass",
    "discretize",
    "convolve_grid",
    "convolve_sequence",
    "self_convolve",
    "tail_bounds",
    "quantile_bounds",
    "max_combine",
    "write_csv",
]

MASS_SLACK = 1e-9
CLAMP_BUDGET = 1e-10
DIRECT_CONV_MAX = 256


@dataclass(frozen=True)
class Grid:
    """Lattice step ``eta`` and number of finite support points ``n``."""

    eta: float = 0.001
    n: int = 100_000

    def __post_init__(self):
        if not (self.eta > 0.0 and math.isfinite(self.eta)):
            raise InvalidGridError(f"grid step must be positive, got {self.eta!r}")
        if int(self.n) != self.n or self.n < 1:
            raise InvalidGridError(f"grid size must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def top(self):
        return (self.n - 1) * self.eta


class Interval(NamedTuple):
    lo: float
    hi: float


@dataclass(frozen=True, eq=False)
class GridDistribution:
    eta: float
    origin_index: int
    mass: np.ndarray
    mass_pos_inf: float = 0.0
    mass_neg_inf: float = 0.0

    def __post_init__(self):
        if not (self.eta > 0.0):
            raise InvalidGridError("grid step must be positive")
        mass = np.array(self.mass, dtype=float)
        object.__setattr__(self, "mass_pos_inf", float(self.mass_pos_inf))
        object.__setattr__(self, "mass_neg_inf", float(self.mass_neg_inf))
        if mass.ndim != 1 or mass.size < 1:
            raise InvalidGridError("mass must be a non-empty 1-D array")
        if np.any(mass < 0.0) or self.mass_pos_inf < 0.0 or self.mass_neg_inf < 0.0:
            raise ValueError("probability mass must be nonnegative")
        total = math.fsum(mass) + self.mass_pos_inf + self.mass_neg_inf
        if abs(total - 1.0) > MASS_SLACK:
            raise ValueError(f"total mass {total!r} differs from 1")
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "origin_index", int(self.origin_index))

    @property
    def size(self):
        return self.mass.size

    @property
    def indices(self):
        return self.origin_index + np.arange(self.size)

    @property
    def support(self):
        """Finite grid values ``(origin_index + i) * eta``."""
        return self.indices * self.eta

    def cdf(self):
        """CDF at each finite grid point (includes the ``-inf`` atom)."""
        return self.mass_neg_inf + np.cumsum(self.mass)

    def cdf_at(self, index):
        """CDF at absolute lattice indices, extended flat outside the support."""
        index = np.asarray(index)
        rel = index - self.origin_index
        c = self.cdf()
        below = rel < 0
        above = rel >= self.size
        out = c[np.clip(rel, 0, self.size - 1)]
        out = np.where(below, self.mass_neg_inf, out)
        return np.where(above, 1.0 - self.mass_pos_inf, out)

    def tail(self, q, inclusive=False):
        """``Pr(X > q)``, or ``Pr(X >= q)`` when ``inclusive``."""
        if q == math.inf:
            return self.mass_pos_inf
        if q == -math.inf:
            return 1.0 - (0.0 if inclusive else self.mass_neg_inf)
        start = np.searchsorted(self.support, q, side="left" if inclusive else "right")
        return min(1.0, math.fsum(self.mass[start:]) + self.mass_pos_inf)

    def quantile(self, level):
        """Smallest grid value whose CDF reaches ``level``, else ``inf``."""
        if self.mass_neg_inf >= level:
            return -math.inf
        idx = int(np.searchsorted(self.cdf(), level, side="left"))
        if idx >= self.size:
            return math.inf
        return float((self.origin_index + idx) * self.eta)


def point_mass(index, eta):
    """Degenerate distribution at ``index * eta``."""
    return GridDistribution(eta, index, np.ones(1))


@dataclass(frozen=True, eq=False)
class BoundPair:
    """``lower`` is stochastically smaller and ``upper`` stochastically larger
    than the distribution being bracketed."""

    lower: GridDistribution
    upper: GridDistribution

    def __post_init__(self):
        _check_eta(self.lower, self.upper)

    @property
    def eta(self):
        return self.lower.eta

    def is_ordered(self, slack=MASS_SLACK):
        lo = min(self.lower.origin_index, self.upper.origin_index)
        hi = max(self.lower.origin_index + self.lower.size, self.upper.origin_index + self.upper.size)
        idx = np.arange(lo, hi)
        return bool(np.all(self.lower.cdf_at(idx) >= self.upper.cdf_at(idx) - slack)
                    and self.lower.mass_pos_inf <= self.upper.mass_pos_inf + slack
                    and self.lower.mass_neg_inf >= self.upper.mass_neg_inf - slack)


def _check_eta(f, g):
    if not math.isclose(f.eta, g.eta, rel_tol=1e-12, abs_tol=0.0):
        raise IncompatibleGridError(f"grid steps differ: {f.eta!r} vs {g.eta!r}")


def _masses_from_cdf(values, floor, ceiling):
    c = np.concatenate(([floor], values, [ceiling]))
    c = np.maximum.accumulate(np.clip(c, 0.0, 1.0))
    return np.diff(c)


def discretize(cdf, eta, n, origin_index=0, unbounded_below=False):
    """Bracket a continuous distribution on ``n`` grid points.

    Parameters
    ----------
    cdf : callable
        Vectorised, nondecreasing, right-continuous CDF.
    eta : float
        Grid step.
    n : int
        Number of finite grid points.
    origin_index : int
        Lowest grid point is ``origin_index * eta``.
    unbounded_below : bool
        If true, mass at or below the lowest grid point goes to a ``-inf``
        atom of the lower bound. Otherwise the CDF is assumed to vanish
        below the lowest grid point.

    Returns
    -------
    BoundPair
        ``upper`` has ``F(x_i)`` at grid point ``x_i`` and the leftover
        ``1 - F(x_{n-1})`` at ``+inf``; ``lower`` has ``F(x_{i+1})`` at
        ``x_i`` and all mass beyond the grid on the top point.
    """
    grid = Grid(eta, n)
    x = (origin_index + np.arange(grid.n)) * eta
    f = np.asarray(cdf(x), dtype=float)
    if f.shape != x.shape:
        f = np.broadcast_to(f, x.shape).astype(float)
    f = np.maximum.accumulate(np.clip(f, 0.0, 1.0))

    up_mass = _masses_from_cdf(f, 0.0, 1.0)
    upper = GridDistribution(eta, origin_index, up_mass[:-1], mass_pos_inf=up_mass[-1])

    neg = float(f[0]) if unbounded_below else 0.0
    low_mass = _masses_from_cdf(f[1:], neg, 1.0)
    lower = GridDistribution(eta, origin_index, low_mass, mass_neg_inf=neg)
    return BoundPair(lower, upper)


def _linear_convolve(a, b):
    if min(a.size, b.size) < DIRECT_CONV_MAX:
        return np.convolve(a, b)
    length = a.size + b.size - 1
    nfft = scipy.fft.next_fast_len(length, real=True)
    out = scipy.fft.irfft(scipy.fft.rfft(a, nfft) * scipy.fft.rfft(b, nfft), nfft)[:length]
    negative = out < 0.0
    if np.any(negative):
        lost = -math.fsum(out[negative])
        if lost > CLAMP_BUDGET:
            raise NumericDegradationError(f"FFT produced {lost:.3g} negative mass")
        out[negative] = 0.0
    return out


def convolve_grid(f, g, direction, n):
    """Convolve two grid distributions and truncate to ``n`` points.

    ``direction="up"`` rounds up: mass beyond the top grid point joins the
    ``+inf`` atom. ``direction="down"`` rounds down: that mass, and any
    ``+inf`` atom, is placed on the top grid point.
    """
    _check_eta(f, g)
    if direction not in ("up", "down"):
        raise ValueError("direction must be 'up' or 'down'")
    if (f.mass_pos_inf > 0 and g.mass_neg_inf > 0) or (f.mass_neg_inf > 0 and g.mass_pos_inf > 0):
        raise InvalidConvolutionError("cannot convolve an atom at +inf with an atom at -inf")
    if direction == "up" and (f.mass_neg_inf > 0 or g.mass_neg_inf > 0):
        raise InvalidConvolutionError("upper bounds must not carry mass at -inf")
    if n < 1:
        raise InvalidGridError("grid size must be positive")

    finite = _linear_convolve(f.mass, g.mass)
    pos = f.mass_pos_inf + g.mass_pos_inf - f.mass_pos_inf * g.mass_pos_inf
    neg = f.mass_neg_inf + g.mass_neg_inf - f.mass_neg_inf * g.mass_neg_inf
    if finite.size > n:
        spill = math.fsum(finite[n:])
        finite = finite[:n].copy()
    else:
        spill = 0.0
    if direction == "up":
        pos += spill
    else:
        finite[-1] += spill + pos
        pos = 0.0
    return GridDistribution(f.eta, f.origin_index + g.origin_index, finite, pos, neg)


def _identity_pair(eta):
    return BoundPair(point_mass(0, eta), point_mass(0, eta))


def _convolve_pairs(a, b, n):
    return BoundPair(
        convolve_grid(a.lower, b.lower, "down", n),
        convolve_grid(a.upper, b.upper, "up", n),
    )


def convolve_sequence(pairs, n):
    """Bracket the sum of independent variables, one factor at a time."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one bound pair")
    acc = _identity_pair(pairs[0].eta)
    for pair in pairs:
        acc = _convolve_pairs(acc, pair, n)
    return acc


def self_convolve(pair, m, n):
    """Bracket the sum of ``m`` i.i.d. copies by repeated squaring."""
    if int(m) != m or m < 1:
        raise ValueError("m must be a positive integer")
    m = int(m)
    result = None
    power = pair
    while True:
        if m & 1:
            result = power if result is None else _convolve_pairs(result, power, n)
        m >>= 1
        if not m:
            return result
        power = _convolve_pairs(power, power, n)


def tail_bounds(pair, q, inclusive=False):
    """Hard bracket on ``Pr(Q > q)`` from a bound pair.

    With ``inclusive=True`` the upper end is ``Pr(upper >= q)``, so the
    bracket covers both ``Pr(Q > q)`` and ``Pr(Q >= q)``.
    """
    lo = pair.lower.tail(q, inclusive=False)
    hi = pair.upper.tail(q, inclusive=inclusive)
    if lo > hi:
        if lo - hi > MASS_SLACK:
            raise ArithmeticError(f"bound pair is not ordered at q={q}: {lo} > {hi}")
        lo = hi
    return PValueInterval(float(lo), float(hi), bool(lo == hi))


def quantile_bounds(pair, level):
    """Bracket ``[q_lo, q_hi]`` on the ``level`` quantile.

    ``q_hi`` is ``inf`` when the upper bound keeps more than ``1 - level``
    of its mass at ``+inf``; callers treat that as a resolution failure.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    return Interval(pair.lower.quantile(level), pair.upper.quantile(level))


def _aligned_cdfs(dists):
    lo = min(d.origin_index for d in dists)
    hi = max(d.origin_index + d.size for d in dists)
    idx = np.arange(lo, hi)
    return lo, [d.cdf_at(idx) for d in dists]


def _from_cdf(eta, origin, cdf, neg):
    cdf = np.maximum.accumulate(np.clip(cdf, neg, 1.0))
    mass = np.diff(np.concatenate(([neg], cdf)))
    return GridDistribution(eta, origin, mass, max(0.0, 1.0 - cdf[-1]), neg)


def max_combine(left, right):
    """Bracket ``max(L, R)`` for negatively associated ``L`` and ``R``.

    The lower bound's CDF is the product of the lower CDFs (the independent
    case); the upper bound's CDF is ``max(0, F_L + F_R - 1)`` (Bonferroni),
    with the remainder at ``+inf``.
    """
    _check_eta(left.lower, right.lower)
    eta = left.eta
    origin, (ll, rl) = _aligned_cdfs([left.lower, right.lower])
    lower = _from_cdf(eta, origin, ll * rl, left.lower.mass_neg_inf * right.lower.mass_neg_inf)
    origin_u, (lu, ru) = _aligned_cdfs([left.upper, right.upper])
    neg_u = max(0.0, left.upper.mass_neg_inf + right.upper.mass_neg_inf - 1.0)
    upper = _from_cdf(eta, origin_u, np.maximum(0.0, lu + ru - 1.0), neg_u)
    return BoundPair(lower, upper)


def write_csv(dist, stream):
    """Dump ``grid_value,mass`` rows, with ``-inf``/``+inf`` atom rows."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["grid_value", "mass"])
    writer.writerow(["-inf", repr(float(dist.mass_neg_inf))])
    for x, p in zip(dist.support, dist.mass):
        writer.writerow([repr(float(x)), repr(float(p))])
    writer.writerow(["+inf", repr(float(dist.mass_pos_inf))])
