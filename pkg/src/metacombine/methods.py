"""Identifiers for the combination statistics."""

from dataclasses import dataclass
from enum import Enum

from .errors import InvalidInputError


class Family(str, Enum):
    FISHER = "fisher"
    STOUFFER = "stouffer"
    LRT = "lrt"
    GAUSSIAN_SQUARE = "zu"
    TLRT = "tlrt"


class Side(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    UNDIRECTED = "undirected"
    CONCORDANT = "concordant"


_VALID = {
    Family.FISHER: {Side.LEFT, Side.RIGHT, Side.UNDIRECTED, Side.CONCORDANT},
    Family.STOUFFER: {Side.LEFT, Side.RIGHT, Side.UNDIRECTED, Side.CONCORDANT},
    Family.LRT: {Side.LEFT, Side.RIGHT, Side.CONCORDANT},
    Family.GAUSSIAN_SQUARE: {Side.UNDIRECTED},
    Family.TLRT: {Side.RIGHT},
}


@dataclass(frozen=True)
class TestMethod:
    """A (family, side) pair naming one test statistic.

    ``TestMethod("zu", "undirected")`` is the plain sum of squared
    z-scores; ``TestMethod("tlrt", "right")`` is the one-sided t
    likelihood-ratio statistic.
    """

    __test__ = False  # keep pytest from collecting this class

    family: Family
    side: Side

    def __post_init__(self):
        try:
            family = Family(self.family)
            side = Side(self.side)
        except ValueError as exc:
            raise InvalidInputError(str(exc)) from None
        if side not in _VALID[family]:
            raise InvalidInputError(f"{family.value} has no {side.value} variant")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "side", side)

    @classmethod
    def parse(cls, text):
        """Build from ``"fisher-concordant"`` style names."""
        family, _, side = text.partition("-")
        if not side and family == Family.GAUSSIAN_SQUARE.value:
            side = Side.UNDIRECTED.value
        return cls(family, side)

    @property
    def name(self):
        if self.family is Family.GAUSSIAN_SQUARE:
            return "zu"
        return f"{self.family.value}-{self.side.value}"

    @property
    def is_concordant(self):
        return self.side is Side.CONCORDANT

    def __str__(self):
        return self.name


FISHER_LEFT = TestMethod(Family.FISHER, Side.LEFT)
FISHER_RIGHT = TestMethod(Family.FISHER, Side.RIGHT)
FISHER_UNDIRECTED = TestMethod(Family.FISHER, Side.UNDIRECTED)
FISHER_CONCORDANT = TestMethod(Family.FISHER, Side.CONCORDANT)
STOUFFER_LEFT = TestMethod(Family.STOUFFER, Side.LEFT)
STOUFFER_RIGHT = TestMethod(Family.STOUFFER, Side.RIGHT)
STOUFFER_UNDIRECTED = TestMethod(Family.STOUFFER, Side.UNDIRECTED)
STOUFFER_CONCORDANT = TestMethod(Family.STOUFFER, Side.CONCORDANT)
LRT_LEFT = TestMethod(Family.LRT, Side.LEFT)
LRT_RIGHT = TestMethod(Family.LRT, Side.RIGHT)
LRT_CONCORDANT = TestMethod(Family.LRT, Side.CONCORDANT)
ZU = TestMethod(Family.GAUSSIAN_SQUARE, Side.UNDIRECTED)
TLRT_RIGHT = TestMethod(Family.TLRT, Side.RIGHT)
