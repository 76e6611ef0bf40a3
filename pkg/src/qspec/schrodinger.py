"""Sturmian potential and finite restrictions H_n, with eigenvalue counting.

Nothing here diagonalises anything: counts come from the inertia (Sturm)
sequence of the shifted tridiagonal matrix, which is the independent oracle
for the band-counting density of states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import gmpy2
import numpy as np

from .contfrac import CFExpansion
from .errors import CoefficientsExhausted, PrecisionExhausted, ValidationError

# Above this size with a large coupling, the Sturm recursion switches to mpfr.
HIGH_PRECISION_N = 1000
HIGH_PRECISION_LAMBDA = 24.0


@dataclass(frozen=True)
class ModelParams:
    cf: CFExpansion
    lam: float
    precision_bits: int = 256

    def __post_init__(self):
        if not self.lam > 0:
            raise ValidationError("coupling constant must be positive")
        if self.precision_bits < 53:
            raise ValidationError("precision_bits must be >= 53")

    def require_bands(self):
        if not self.lam > 4:
            raise ValidationError(f"band structure needs lambda > 4 (got {self.lam})")

    def require_theorems(self):
        if not self.lam > 24:
            raise ValidationError(f"theorem-level claims need lambda > 24 (got {self.lam})")


@dataclass(frozen=True)
class TridiagonalOperator:
    """H_n: ones off the diagonal, Sturmian potential on it."""

    lam: float
    bits: tuple[int, ...]  # V(i) = lam * bits[i-1]

    @property
    def n(self) -> int:
        return len(self.bits)

    @property
    def diagonal(self) -> list[float]:
        return [self.lam if b else 0.0 for b in self.bits]

    def dense(self) -> np.ndarray:
        h = np.diag(np.asarray(self.diagonal, dtype=float))
        i = np.arange(self.n - 1)
        h[i, i + 1] = h[i + 1, i] = 1.0
        return h


def floor_n_beta(cf: CFExpansion, n: int) -> int:
    """Exact floor(n * beta).

    beta lies strictly between consecutive convergents, so once both
    ``n p_k / q_k`` and ``n p_{k+1} / q_{k+1}`` have the same floor, so does
    ``n beta``.
    """
    if n < 0:
        raise ValidationError("n must be >= 0")
    if n == 0:
        return 0
    p_prev, p, q_prev, q = 1, 0, 0, 1
    k = 0
    while True:
        k += 1
        try:
            a = cf.coefficient(k)
        except CoefficientsExhausted:
            raise PrecisionExhausted(
                f"floor({n}*beta) undecided after {k - 1} coefficients; a finite CF is rational"
            ) from None
        p_prev, p = p, a * p + p_prev
        q_prev, q = q, a * q + q_prev
        if k >= 2 and (n * p_prev) // q_prev == (n * p) // q:
            return (n * p) // q


def sturmian_bits(cf: CFExpansion, n_from: int, n_to: int) -> list[int]:
    """floor((n+1) beta) - floor(n beta) for n = n_from..n_to (each 0 or 1)."""
    if not 1 <= n_from <= n_to:
        raise ValidationError("need 1 <= n_from <= n_to")
    floors = _floors(cf, n_from, n_to + 1)
    return [floors[i + 1] - floors[i] for i in range(len(floors) - 1)]


def _floors(cf: CFExpansion, lo: int, hi: int) -> list[int]:
    # One deep convergent pair decides almost every n; the rest fall back.
    p_prev, p, q_prev, q = 1, 0, 0, 1
    k = 0
    while q_prev * q <= 64 * hi:
        k += 1
        try:
            a = cf.coefficient(k)
        except CoefficientsExhausted:
            break
        p_prev, p = p, a * p + p_prev
        q_prev, q = q, a * q + q_prev
    out = []
    for n in range(lo, hi + 1):
        f1 = (n * p_prev) // q_prev if q_prev else None
        f2 = (n * p) // q
        out.append(f2 if f1 == f2 else floor_n_beta(cf, n))
    return out


def potential(params: ModelParams, n_from: int, n_to: int) -> list[float]:
    """V(n) = lam * (floor((n+1) beta) - floor(n beta)) for n in [n_from, n_to]."""
    lam = params.lam
    return [lam if b else 0.0 for b in sturmian_bits(params.cf, n_from, n_to)]


def restriction(params: ModelParams, n: int) -> TridiagonalOperator:
    if n < 1:
        raise ValidationError("n must be >= 1")
    return TridiagonalOperator(params.lam, tuple(sturmian_bits(params.cf, 1, n)))


class InertiaCount(NamedTuple):
    count: int
    x: object  # shift actually used (differs from the request after a perturbation)
    perturbations: int


def sturm_count(diag: Sequence, x, high_precision: bool = False, bits: int = 256,
                direction: int = -1) -> InertiaCount:
    """Number of eigenvalues of tridiag(1, diag, 1) strictly below ``x``.

    Uses the pivots d_i = (V_i - x) - 1/d_{i-1}. A zero pivot means ``x`` is an
    eigenvalue of a leading block; ``x`` is then nudged one ulp in ``direction``
    and the sweep restarts.
    """
    perturbations = 0
    if high_precision:
        ctx = gmpy2.context(gmpy2.get_context(), precision=bits)
        with ctx:
            xs = gmpy2.mpfr(x)
            dv = [gmpy2.mpfr(v) for v in diag]
            while True:
                count, ok = _pivots_mp(dv, xs)
                if ok:
                    return InertiaCount(count, xs, perturbations)
                perturbations += 1
                xs = gmpy2.next_below(xs) if direction < 0 else gmpy2.next_above(xs)
                if perturbations > 64:
                    raise PrecisionExhausted("Sturm pivots keep vanishing")
    xs = float(x)
    dv = [float(v) for v in diag]
    while True:
        count, ok = _pivots_float(dv, xs)
        if ok:
            return InertiaCount(count, xs, perturbations)
        perturbations += 1
        xs = math.nextafter(xs, -math.inf if direction < 0 else math.inf)
        if perturbations > 64:
            raise PrecisionExhausted("Sturm pivots keep vanishing")


def _pivots_float(diag, x):
    count = 0
    d = 1.0
    first = True
    for v in diag:
        d = (v - x) if first else (v - x) - 1.0 / d
        first = False
        if d == 0.0:
            return count, False
        if d < 0.0:
            count += 1
    return count, True


def _pivots_mp(diag, x):
    count = 0
    d = None
    for v in diag:
        d = (v - x) if d is None else (v - x) - 1 / d
        if d == 0:
            return count, False
        if d < 0:
            count += 1
    return count, True


def _use_high_precision(params: ModelParams, n: int) -> bool:
    return n > HIGH_PRECISION_N and params.lam > HIGH_PRECISION_LAMBDA


def sturm_count_below(params: ModelParams, n: int, x, op: TridiagonalOperator | None = None) -> int:
    """Eigenvalues of H_n strictly below x."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    op = op or restriction(params, n)
    return sturm_count(op.diagonal, x, _use_high_precision(params, n), params.precision_bits).count


def eig_count_interval(params: ModelParams, n: int, lo, hi, op: TridiagonalOperator | None = None) -> int:
    """Eigenvalues of H_n in the closed interval [lo, hi]."""
    if lo > hi:
        raise ValidationError("need lo <= hi")
    op = op or restriction(params, n)
    hp = _use_high_precision(params, n)
    bits = params.precision_bits
    if hp:
        with gmpy2.context(gmpy2.get_context(), precision=bits):
            hi_plus = gmpy2.next_above(gmpy2.mpfr(hi))
    else:
        hi_plus = math.nextafter(float(hi), math.inf)
    above = sturm_count(op.diagonal, hi_plus, hp, bits, direction=+1).count
    below = sturm_count(op.diagonal, lo, hp, bits, direction=-1).count
    return above - below
