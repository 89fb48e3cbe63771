"""Gaussian alternatives and the CDFs of per-study summands under them.

Each study contributes an estimate ``b_j ~ N(beta_j, 1)``. The Fisher,
likelihood-ratio and undirected Stouffer statistics are sums of
nonnegative per-study terms; this module supplies the exact CDF of each
term so :mod:`metacombine.bounded_dist` can bracket the sum.
"""

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .special import norm_cdf, norm_quantile, norm_quantile_from_log

__all__ = [
    "AlternativeSpec",
    "SummandFamily",
    "summand_cdf",
    "stouffer_analytic_power",
]

_LOG_HALF = math.log(0.5)


@dataclass(frozen=True)
class AlternativeSpec:
    """Mean vector ``beta`` of the study estimates."""

    beta: tuple

    def __post_init__(self):
        beta = tuple(float(b) for b in np.atleast_1d(np.asarray(self.beta, dtype=float)))
        if not beta:
            raise InvalidInputError("beta must have at least one component")
        if not all(math.isfinite(b) for b in beta):
            raise InvalidInputError("beta must be finite")
        object.__setattr__(self, "beta", beta)

    @classmethod
    def pattern(cls, k_pos, k_neg, delta, m):
        """``k_pos`` entries of ``+delta``, ``k_neg`` of ``-delta``, zeros elsewhere."""
        if min(k_pos, k_neg) < 0 or k_pos + k_neg > m or m < 1:
            raise InvalidInputError("need 0 <= k_pos + k_neg <= m")
        if delta < 0:
            raise InvalidInputError("delta must be nonnegative")
        return cls((delta,) * k_pos + (-delta,) * k_neg + (0.0,) * (m - k_pos - k_neg))

    @classmethod
    def parse_pattern(cls, text):
        """Parse ``"8:+0.5,1:-0.5,m=16"`` (count:value items, zeros fill to m)."""
        values = []
        m = None
        for item in filter(None, (s.strip() for s in text.split(","))):
            key = re.fullmatch(r"m\s*=\s*(\d+)", item)
            if key:
                m = int(key.group(1))
                continue
            count, sep, value = item.partition(":")
            try:
                if not sep:
                    raise ValueError
                values.extend([float(value)] * int(count))
            except ValueError:
                raise InvalidInputError(f"bad pattern item {item!r}") from None
        if m is None:
            m = len(values)
        if len(values) > m:
            raise InvalidInputError(f"pattern has {len(values)} entries but m={m}")
        return cls(tuple(values) + (0.0,) * (m - len(values)))

    @property
    def m(self):
        return len(self.beta)

    @property
    def tau(self):
        return math.sqrt(math.fsum(b * b for b in self.beta))

    @property
    def theta(self):
        t = self.tau
        return tuple(b / t for b in self.beta) if t > 0 else self.beta

    def __neg__(self):
        return AlternativeSpec(tuple(-b for b in self.beta))


_SIDES = {
    "lrt": {"left", "right"},
    "fisher": {"left", "right", "undirected"},
    "stouffer_u": {"undirected"},
    "gaussian_square": {"undirected"},
}


@dataclass(frozen=True)
class SummandFamily:
    family: str
    side: str

    def __post_init__(self):
        if self.side not in _SIDES.get(self.family, ()):
            raise InvalidInputError(f"no summand for ({self.family}, {self.side})")


def _interval_prob(a, b):
    # Pr(a < Z <= b) for standard normal Z, using whichever tail avoids cancellation
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    right = a >= 0
    left = b <= 0
    mid = 1.0 - norm_cdf(a) - norm_cdf(-b)
    out = np.where(right, norm_cdf(-a) - norm_cdf(-b), np.where(left, norm_cdf(b) - norm_cdf(a), mid))
    return np.maximum(out, 0.0)


def _clipped(fn):
    def cdf(y):
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 0
        y = np.atleast_1d(y)
        out = np.zeros_like(y)
        ok = (y >= 0) & np.isfinite(y)
        if np.any(ok):
            out[ok] = fn(y[ok])
        out[y == np.inf] = 1.0
        return float(out[0]) if scalar else out

    return cdf


def summand_cdf(family, beta_j, m=None):
    """CDF of one summand when the estimate is ``N(beta_j, 1)``.

    Parameters
    ----------
    family : SummandFamily
    beta_j : float
    m : int, optional
        Number of studies; required for the undirected Stouffer summand
        ``|b_j| / sqrt(m)``.

    Returns
    -------
    callable
        Vectorised CDF on ``[0, inf]``, zero for negative arguments.
    """
    fam, side = family.family, family.side
    b = float(beta_j)
    if fam == "lrt":
        sign = 1.0 if side == "left" else -1.0
        return _clipped(lambda y: norm_cdf(np.sqrt(y) + sign * b))
    if fam == "gaussian_square":
        return _clipped(lambda y: _interval_prob(-np.sqrt(y) - b, np.sqrt(y) - b))
    if fam == "stouffer_u":
        if m is None or m < 1:
            raise InvalidInputError("the undirected Stouffer summand needs m")
        root_m = math.sqrt(m)
        return _clipped(lambda y: _interval_prob(-root_m * y - b, root_m * y - b))
    if side == "undirected":
        def fisher_u(y):
            u = -norm_quantile_from_log(_LOG_HALF - 0.5 * y)
            return _interval_prob(-u - b, u - b)

        return _clipped(fisher_u)
    sign = 1.0 if side == "left" else -1.0
    return _clipped(lambda y: norm_cdf(sign * b - norm_quantile_from_log(-0.5 * y)))


def stouffer_analytic_power(spec, side, alpha):
    """Exact power of the Stouffer left, right or concordant test.

    The right statistic is ``N(sum(beta) / sqrt(m), 1)``; the concordant
    statistic is its absolute value and uses the half-normal critical value.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError("alpha must lie in (0, 1)")
    mu = math.fsum(spec.beta) / math.sqrt(spec.m)
    if side == "right":
        return norm_cdf(mu + norm_quantile(alpha))
    if side == "left":
        return norm_cdf(-mu + norm_quantile(alpha))
    if side == "concordant":
        c = -norm_quantile(0.5 * alpha)
        return norm_cdf(mu - c) + norm_cdf(-mu - c)
    raise InvalidInputError(f"no analytic Stouffer power for side {side!r}")
