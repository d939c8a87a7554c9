"""Positive reals stored as iterated exponentials.

A value is ``E^depth(top)`` or its reciprocal, where ``E^k`` is the k-fold
exponential.  The canonical form uses the smallest depth for which ``top``
lies in ``[-LIMIT, LIMIT]``; reciprocals are only used from depth 2 on (at
depth 1 a negative ``top`` already covers values below one).
"""

from __future__ import annotations

import functools
import math
import re
from dataclasses import dataclass

LIMIT = 700.0
_LOG_LIMIT = math.log(LIMIT)

_TEXT = re.compile(r"^(1/)?exp\^(\d+)\((.+)\)$")


def _exp_tower(depth: int, top: float) -> float:
    x = top
    for _ in range(depth):
        if x > 709.0:
            return math.inf
        x = math.exp(x)
    return x


@functools.total_ordering
@dataclass(frozen=True, eq=False)
class NestedLogNumber:
    depth: int
    top: float
    inverse: bool = False

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be nonnegative")
        if self.depth == 0 and not self.top > 0:
            raise ValueError("depth-0 value must be positive")
        if self.inverse and self.depth < 2:
            raise ValueError("reciprocal form requires depth >= 2")
        if not math.isfinite(self.top):
            raise ValueError("top coordinate must be finite")

    # -- construction -------------------------------------------------------
    @classmethod
    def from_float(cls, x: float) -> NestedLogNumber:
        if not x > 0 or not math.isfinite(x):
            raise ValueError(f"expected a finite positive real, got {x!r}")
        if math.exp(-LIMIT) <= x <= LIMIT:
            return cls(0, float(x))
        return cls.from_log(math.log(x))

    @classmethod
    def from_log(cls, log_value: float) -> NestedLogNumber:
        """The number ``exp(log_value)``."""
        if math.isnan(log_value):
            raise ValueError("log value is NaN")
        if math.isinf(log_value):
            raise OverflowError("log value is infinite")
        if -LIMIT <= log_value <= _LOG_LIMIT:
            return cls(0, math.exp(log_value))
        if abs(log_value) <= LIMIT:
            return cls(1, float(log_value))
        return cls(2, math.log(abs(log_value)), inverse=log_value < 0)

    @classmethod
    def from_log_nested(cls, magnitude: NestedLogNumber, negative: bool = False) -> NestedLogNumber:
        """The number ``exp(+-magnitude)`` for a nested magnitude."""
        if magnitude.depth == 0 or magnitude.inverse:
            m = float(magnitude)
            return cls.from_log(-m if negative else m)
        if magnitude.depth == 1 and magnitude.top <= _LOG_LIMIT:
            m = math.exp(magnitude.top)
            return cls.from_log(-m if negative else m)
        return cls(magnitude.depth + 1, magnitude.top, inverse=negative)

    @classmethod
    def from_loglog(cls, loglog_value: float, negative: bool = False) -> NestedLogNumber:
        """The number ``exp(+-exp(loglog_value))``."""
        return cls.from_log_nested(cls.from_log(loglog_value), negative)

    @classmethod
    def parse(cls, text: str) -> NestedLogNumber:
        text = text.strip()
        m = _TEXT.match(text)
        if m is None:
            return cls.from_float(float(text))
        return cls.canonical(int(m.group(2)), float(m.group(3)), m.group(1) is not None)

    @classmethod
    def canonical(cls, depth: int, top: float, inverse: bool = False) -> NestedLogNumber:
        if depth == 0:
            return cls.from_float(top) if not inverse else cls.from_float(1.0 / top)
        if depth == 1:
            return cls.from_log(-top if inverse else top)
        return cls.from_log_nested(cls.canonical(depth - 1, top), negative=inverse)

    # -- views --------------------------------------------------------------
    def __float__(self) -> float:
        if self.depth == 0:
            return self.top
        if self.depth == 1:
            return math.exp(self.top) if self.top < 709.7 else math.inf
        return 0.0 if self.inverse else math.inf

    @property
    def representable(self) -> bool:
        v = float(self)
        return 0.0 < v < math.inf

    def log_magnitude(self) -> tuple[bool, NestedLogNumber | None]:
        """``(negative, |log value|)``; magnitude is None when the value is exactly 1."""
        if self.depth == 0:
            lv = math.log(self.top)
            return (lv < 0, NestedLogNumber.from_float(abs(lv)) if lv != 0 else None)
        if self.depth == 1:
            return (self.top < 0, NestedLogNumber.from_float(abs(self.top)) if self.top != 0 else None)
        return (self.inverse, NestedLogNumber(self.depth - 1, self.top))

    def log(self) -> float:
        """Natural log as a float; raises OverflowError beyond depth 2."""
        if self.depth == 0:
            return math.log(self.top)
        if self.depth == 1:
            return self.top
        if self.depth == 2:
            mag = math.exp(self.top)
            return -mag if self.inverse else mag
        raise OverflowError(f"log of {self} exceeds float range")

    def loglog_abs(self) -> float:
        """``log|log value|`` as a float (``-inf`` for the value 1)."""
        if self.depth >= 2:
            mag = NestedLogNumber(self.depth - 1, self.top)
            return mag.log()
        lv = self.log()
        return math.log(abs(lv)) if lv != 0 else -math.inf

    def _key(self) -> tuple[int, int, float]:
        negative, mag = self.log_magnitude()
        if mag is None:
            return (0, 0, 0.0)
        sign = -1 if negative else 1
        return (sign, sign * mag.depth, sign * mag.top if not mag.inverse else sign * float(mag))

    # -- arithmetic on logs -------------------------------------------------
    def log_ratio(self, other: NestedLogNumber) -> float:
        """``log(self / other)``; +-inf when the ratio is not representable."""
        try:
            return self.log() - other.log()
        except OverflowError:
            pass
        if self == other:
            return 0.0
        return math.inf if self > other else -math.inf

    def __mul__(self, other: NestedLogNumber) -> NestedLogNumber:
        try:
            return NestedLogNumber.from_log(self.log() + other.log())
        except OverflowError:
            pass
        # one factor dominates by at least a full exponential level
        a, b = (self, other) if _abs_log_key(self) >= _abs_log_key(other) else (other, self)
        if a.depth >= 3 and b.depth <= a.depth - 1:
            return a
        raise OverflowError("product not representable; use structured log coordinates")

    def reciprocal(self) -> NestedLogNumber:
        if self.depth == 0:
            return NestedLogNumber.from_float(1.0 / self.top)
        if self.depth == 1:
            return NestedLogNumber(1, -self.top)
        return NestedLogNumber(self.depth, self.top, not self.inverse)

    def __truediv__(self, other: NestedLogNumber) -> NestedLogNumber:
        return self * other.reciprocal()

    # -- comparison ---------------------------------------------------------
    def __eq__(self, other) -> bool:
        if not isinstance(other, NestedLogNumber):
            return NotImplemented
        return self._key() == other._key()

    def __lt__(self, other) -> bool:
        if not isinstance(other, NestedLogNumber):
            return NotImplemented
        return self._key() < other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def __str__(self) -> str:
        if self.depth == 0:
            return repr(self.top)
        body = f"exp^{self.depth}({self.top!r})"
        return "1/" + body if self.inverse else body

    def __repr__(self) -> str:
        return f"NestedLogNumber({self})"


def _abs_log_key(x: NestedLogNumber) -> tuple[int, float]:
    _, mag = x.log_magnitude()
    if mag is None:
        return (-1, 0.0)
    return (mag.depth, mag.top if not mag.inverse else float(mag))


ONE = NestedLogNumber(0, 1.0)
