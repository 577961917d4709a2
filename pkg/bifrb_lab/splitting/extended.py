"""Extended-real values with an explicit domain-error state."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class Extent(str, Enum):
    FINITE = "finite"
    POS_INF = "+inf"
    DOMAIN_ERROR = "domain-error"


@dataclass(frozen=True, slots=True)
class ExtendedReal:
    """A value in ℝ ∪ {+∞} or a domain-error marker.

    Addition follows the ∞ − ∞ = ∞ convention; a domain error absorbs everything.
    """

    kind: Extent
    value: float = 0.0

    @classmethod
    def finite(cls, value: float) -> "ExtendedReal":
        return cls(Extent.FINITE, float(value))

    @classmethod
    def infinity(cls) -> "ExtendedReal":
        return cls(Extent.POS_INF, math.inf)

    @classmethod
    def domain_error(cls) -> "ExtendedReal":
        return cls(Extent.DOMAIN_ERROR, math.nan)

    @classmethod
    def from_float(cls, value: float) -> "ExtendedReal":
        value = float(value)
        if math.isnan(value) or value == -math.inf:
            return cls.domain_error()
        if value == math.inf:
            return cls.infinity()
        return cls.finite(value)

    @property
    def is_finite(self) -> bool:
        return self.kind is Extent.FINITE

    @property
    def is_infinite(self) -> bool:
        return self.kind is Extent.POS_INF

    @property
    def is_domain_error(self) -> bool:
        return self.kind is Extent.DOMAIN_ERROR

    def __add__(self, other: "ExtendedReal | float") -> "ExtendedReal":
        if not isinstance(other, ExtendedReal):
            other = ExtendedReal.from_float(other)
        if self.is_domain_error or other.is_domain_error:
            return ExtendedReal.domain_error()
        if self.is_infinite or other.is_infinite:
            return ExtendedReal.infinity()
        return ExtendedReal.from_float(self.value + other.value)

    __radd__ = __add__

    def __float__(self) -> float:
        return self.value

    def __str__(self) -> str:
        if self.is_finite:
            return repr(self.value)
        return self.kind.value
