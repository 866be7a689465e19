"""Signed numbers stored as (sign, log|x|).

Values such as K_0(10^6) ~ e^{-10^6} are far outside the float64 range, so
everything that can under- or overflow travels as a ``LogScalar``.  Addition
goes through a log-sum-exp path and never rebuilds the linear value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

NEG_INF = float("-inf")


@dataclass(frozen=True)
class LogScalar:
    sign: int
    logmag: float

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or +1, got {self.sign!r}")
        if self.sign == 0 and self.logmag != NEG_INF:
            object.__setattr__(self, "logmag", NEG_INF)
        if self.sign != 0 and not math.isfinite(self.logmag):
            if self.logmag == NEG_INF:
                object.__setattr__(self, "sign", 0)
            else:
                raise ValueError(f"non-finite logmag {self.logmag!r} with nonzero sign")

    # construction -------------------------------------------------------
    @classmethod
    def zero(cls) -> "LogScalar":
        return cls(0, NEG_INF)

    @classmethod
    def one(cls) -> "LogScalar":
        return cls(1, 0.0)

    @classmethod
    def from_float(cls, x: float) -> "LogScalar":
        x = float(x)
        if math.isnan(x) or math.isinf(x):
            raise ValueError(f"cannot represent {x!r}")
        if x == 0.0:
            return cls.zero()
        return cls(1 if x > 0 else -1, math.log(abs(x)))

    @classmethod
    def from_log(cls, logmag: float, sign: int = 1) -> "LogScalar":
        return cls(sign if logmag != NEG_INF else 0, float(logmag))

    # conversion ---------------------------------------------------------
    def __float__(self) -> float:
        if self.sign == 0:
            return 0.0
        if self.logmag > 709.78:
            return self.sign * math.inf
        return self.sign * math.exp(self.logmag)

    def is_zero(self) -> bool:
        return self.sign == 0

    # arithmetic ---------------------------------------------------------
    def _coerce(self, other) -> "LogScalar":
        if isinstance(other, LogScalar):
            return other
        return LogScalar.from_float(other)

    def __neg__(self) -> "LogScalar":
        return LogScalar(-self.sign, self.logmag)

    def __abs__(self) -> "LogScalar":
        return LogScalar(abs(self.sign), self.logmag)

    def __mul__(self, other) -> "LogScalar":
        o = self._coerce(other)
        if self.sign == 0 or o.sign == 0:
            return LogScalar.zero()
        return LogScalar(self.sign * o.sign, self.logmag + o.logmag)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "LogScalar":
        o = self._coerce(other)
        if o.sign == 0:
            raise ZeroDivisionError("LogScalar division by zero")
        if self.sign == 0:
            return LogScalar.zero()
        return LogScalar(self.sign * o.sign, self.logmag - o.logmag)

    def __rtruediv__(self, other) -> "LogScalar":
        return self._coerce(other) / self

    def __pow__(self, p: float) -> "LogScalar":
        if self.sign == 0:
            if p > 0:
                return LogScalar.zero()
            raise ZeroDivisionError("zero to a non-positive power")
        if self.sign < 0:
            if float(p).is_integer():
                s = -1 if int(p) % 2 else 1
                return LogScalar(s, self.logmag * p)
            raise ValueError("fractional power of a negative LogScalar")
        return LogScalar(1, self.logmag * p)

    def __add__(self, other) -> "LogScalar":
        o = self._coerce(other)
        if self.sign == 0:
            return o
        if o.sign == 0:
            return self
        big, small = (self, o) if self.logmag >= o.logmag else (o, self)
        gap = small.logmag - big.logmag  # <= 0
        if big.sign == small.sign:
            return LogScalar(big.sign, big.logmag + math.log1p(math.exp(gap)))
        if gap == 0.0:
            return LogScalar.zero()
        return LogScalar(big.sign, big.logmag + math.log1p(-math.exp(gap)))

    __radd__ = __add__

    def __sub__(self, other) -> "LogScalar":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "LogScalar":
        return self._coerce(other) - self

    # comparison ---------------------------------------------------------
    def _key(self):
        if self.sign == 0:
            return (0, 0.0)
        return (self.sign, self.sign * self.logmag)

    def __lt__(self, other) -> bool:
        return self._key() < self._coerce(other)._key()

    def __le__(self, other) -> bool:
        return self._key() <= self._coerce(other)._key()

    def __gt__(self, other) -> bool:
        return self._key() > self._coerce(other)._key()

    def __ge__(self, other) -> bool:
        return self._key() >= self._coerce(other)._key()

    def __repr__(self) -> str:
        return f"LogScalar(sign={self.sign:+d}, logmag={self.logmag!r})"

    def to_dict(self) -> dict:
        return {"sign": self.sign, "logmag": None if self.sign == 0 else self.logmag}


def log_sum(items: Iterable[LogScalar]) -> LogScalar:
    """Sum many LogScalars with a single shift (no linear intermediates)."""
    items = [x for x in items if x.sign != 0]
    if not items:
        return LogScalar.zero()
    signs = np.array([x.sign for x in items], dtype=float)
    logs = np.array([x.logmag for x in items])
    return signed_logsumexp(signs, logs)


def signed_logsumexp(signs, logmags, weights=None) -> LogScalar:
    """log|sum_i s_i w_i e^{l_i}| together with its sign."""
    signs = np.asarray(signs, dtype=float).ravel()
    logmags = np.asarray(logmags, dtype=float).ravel()
    if weights is not None:
        w = np.asarray(weights, dtype=float).ravel()
        signs = signs * np.sign(w)
        with np.errstate(divide="ignore"):
            logmags = logmags + np.log(np.abs(w))
    live = (signs != 0) & np.isfinite(logmags)
    if not np.any(live):
        return LogScalar.zero()
    s, l = signs[live], logmags[live]
    m = l.max()
    total = float(np.sum(s * np.exp(l - m)))
    if total == 0.0:
        return LogScalar.zero()
    return LogScalar(1 if total > 0 else -1, m + math.log(abs(total)))
