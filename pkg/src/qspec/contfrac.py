"""Continued-fraction frequencies: coefficient streams, convergents, values, statistics.

A frequency is ``beta = [0; a_1, a_2, ...]``.  Convergents follow the usual
recursion with bases ``p_{-1} = 1, p_0 = 0, q_{-1} = 0, q_0 = 1`` so that
``q_{k+1} = a_{k+1} q_k + q_{k-1}`` holds verbatim.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple

import gmpy2

from .errors import CoefficientsExhausted, ValidationError

# Named coefficient rules. Each must be a pure function of k (1-based).
RULES: dict[str, Callable[[int], int]] = {
    "k": lambda k: k,
    "k+1": lambda k: k + 1,
}


@dataclass(frozen=True)
class CFExpansion:
    """Coefficient stream a_1, a_2, ... of a frequency in (0, 1).

    Three shapes are supported: a finite ``prefix`` followed by an infinitely
    repeated ``period``; a finite expansion (empty period, no rule); or a named
    ``rule`` applied after the prefix.
    """

    prefix: tuple[int, ...] = ()
    period: tuple[int, ...] = ()
    rule: str | None = None
    _rule_fn: Callable[[int], int] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.period and self.rule:
            raise ValidationError("a CF cannot have both a period and a rule")
        if self.rule is not None and self.rule not in RULES and self._rule_fn is None:
            raise ValidationError(f"unknown coefficient rule {self.rule!r}")
        for a in self.prefix + self.period:
            if int(a) != a or a < 1:
                raise ValidationError(f"coefficients must be integers >= 1, got {a!r}")
        if not (self.prefix or self.period or self.rule):
            raise ValidationError("empty continued fraction")

    # -- constructors -------------------------------------------------------
    @classmethod
    def constant(cls, b: int) -> CFExpansion:
        return cls(period=(int(b),))

    @classmethod
    def periodic(cls, prefix, period) -> CFExpansion:
        return cls(prefix=tuple(prefix), period=tuple(period))

    @classmethod
    def finite(cls, coeffs) -> CFExpansion:
        return cls(prefix=tuple(coeffs))

    @classmethod
    def from_rule(cls, name: str, fn: Callable[[int], int] | None = None, prefix=()) -> CFExpansion:
        return cls(prefix=tuple(prefix), rule=name, _rule_fn=fn)

    # -- access -------------------------------------------------------------
    @property
    def is_periodic(self) -> bool:
        return bool(self.period)

    @property
    def is_finite(self) -> bool:
        return not self.period and self.rule is None

    @property
    def constant_value(self) -> int | None:
        """``b`` when the stream is ``b, b, b, ...``, else None."""
        if len(self.period) == 1 and all(a == self.period[0] for a in self.prefix):
            return self.period[0]
        return None

    def coefficient(self, k: int) -> int:
        """a_k for k >= 1."""
        if k < 1:
            raise IndexError("coefficients are indexed from 1")
        n = len(self.prefix)
        if k <= n:
            return self.prefix[k - 1]
        if self.period:
            return self.period[(k - n - 1) % len(self.period)]
        if self.rule is not None:
            fn = self._rule_fn or RULES[self.rule]
            a = int(fn(k))
            if a < 1:
                raise ValidationError(f"rule {self.rule!r} produced a_{k} = {a}")
            return a
        raise CoefficientsExhausted(f"finite CF has only {n} coefficients, a_{k} requested")

    def coefficients(self, K: int) -> list[int]:
        return [self.coefficient(k) for k in range(1, K + 1)]

    def __len__(self):
        if not self.is_finite:
            raise TypeError("infinite continued fraction has no length")
        return len(self.prefix)

    def spec_string(self) -> str:
        """Inverse of :func:`parse_cf` (canonical form)."""
        parts = [str(a) for a in self.prefix]
        if len(self.period) == 1:
            parts.append(f"{self.period[0]}*")
        elif self.period:
            parts.append("[" + ",".join(map(str, self.period)) + "]*")
        elif self.rule is not None:
            parts.append(self.rule)
        return ",".join(parts)


_GROUP = re.compile(r"(?:^|,)\[([^\[\]]+)\]\*$")


def parse_cf(text: str) -> CFExpansion:
    """Parse a CLI frequency string.

    ``"3*"`` is [0;3,3,3,...], ``"1,2*"`` is [0;1,2,2,2,...], ``"[1,2]*"`` repeats
    the group (1,2), ``"k"`` is the rule a_k = k, and a plain list such as
    ``"2"`` or ``"1,1,1"`` is a finite expansion.
    """
    s = text.replace(" ", "")
    if not s:
        raise ValidationError("empty CF specification")
    m = _GROUP.search(s)
    if m:
        head = s[: m.start()]
        prefix = _ints(head) if head else ()
        return CFExpansion(prefix=prefix, period=_ints(m.group(1)))
    tokens = s.split(",")
    last = tokens[-1]
    if last in RULES:
        return CFExpansion(prefix=_ints(",".join(tokens[:-1])) if len(tokens) > 1 else (), rule=last)
    if last.endswith("*"):
        prefix = _ints(",".join(tokens[:-1])) if len(tokens) > 1 else ()
        return CFExpansion(prefix=prefix, period=_ints(last[:-1]))
    return CFExpansion(prefix=_ints(s))


def _ints(s: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(t) for t in s.split(","))
    except ValueError:
        raise ValidationError(f"cannot parse CF coefficients from {s!r}") from None
    if any(v < 1 for v in vals):
        raise ValidationError("CF coefficients must be >= 1")
    return vals


class Convergent(NamedTuple):
    k: int
    p: int
    q: int

    def as_fraction(self) -> Fraction:
        return Fraction(self.p, self.q)


def convergents(cf: CFExpansion, K: int) -> list[Convergent]:
    """Convergents p_k/q_k for k = 1..K (exact integers)."""
    if K < 1:
        raise ValidationError("K must be >= 1")
    p_prev, p = 1, 0
    q_prev, q = 0, 1
    out = []
    for k in range(1, K + 1):
        a = cf.coefficient(k)
        p_prev, p = p, a * p + p_prev
        q_prev, q = q, a * q + q_prev
        out.append(Convergent(k, p, q))
    return out


def denominators(cf: CFExpansion, K: int) -> list[int]:
    """[q_0, q_1, ..., q_K]."""
    qs = [1]
    q_prev = 0
    for k in range(1, K + 1):
        qs.append(cf.coefficient(k) * qs[-1] + q_prev)
        q_prev = qs[-2]
    return qs


def cf_value(cf: CFExpansion, precision_bits: int = 256):
    """beta as a gmpy2 mpfr with |error| < 2**(2 - precision_bits)."""
    if precision_bits < 53:
        raise ValidationError("precision_bits must be >= 53")
    with gmpy2.context(gmpy2.get_context(), precision=precision_bits + 8):
        if cf.is_finite:
            c = convergents(cf, len(cf))[-1]
            val = gmpy2.mpfr(c.p) / c.q
        else:
            # |beta - p_k/q_k| < 1/(q_k q_{k+1}); stop once that beats the target.
            target = 1 << precision_bits
            p_prev, p, q_prev, q = 1, 0, 0, 1
            k = 0
            while True:
                k += 1
                a = cf.coefficient(k)
                p_prev, p = p, a * p + p_prev
                q_prev, q = q, a * q + q_prev
                if q_prev * q > target:
                    break
            val = gmpy2.mpfr(p_prev) / q_prev
    return gmpy2.mpfr(val, precision_bits)


def cf_statistics(cf: CFExpansion, K: int) -> tuple[float, float]:
    """(geometric mean, arithmetic mean) of a_1..a_K."""
    if K < 1:
        raise ValidationError("K must be >= 1")
    a = cf.coefficients(K)
    return math.exp(math.fsum(math.log(x) for x in a) / K), math.fsum(a) / K


def beta_constant(b: int) -> float:
    """[0; b, b, b, ...] = (sqrt(b^2 + 4) - b) / 2."""
    return (math.sqrt(b * b + 4) - b) / 2
