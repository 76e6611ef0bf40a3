"""Transfer matrices and trace recursions x_(k,p)(E) = tr M_{k-1} M_k^p.

The level-k state is the triple (t_{k-1}, t_k, m_k) with t_j = tr M_j and
m_k = x_(k,1).  Inside one level the traces obey the Chebyshev recursion

    x_(k,0) = t_{k-1},  x_(k,1) = m_k,  x_(k,p+1) = t_k x_(k,p) - x_(k,p-1),

and the level step is M_{k+1} = M_{k-1} M_k^{a_{k+1}}, i.e.
S_{k+1} = (t_k, x_(k,e), x_(k,e+1)) with e = a_{k+1}.  The exponent index was
fixed by comparing against direct transfer-matrix products on a non-constant
expansion (see :func:`alignment_probe`); the other reading fails from k = 1 on.

Everything off the oracle path works on traces only.  Matrix entries grow like
exp(c q_k) away from the spectrum, while traces on bands stay bounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import gmpy2
from gmpy2 import mpfr

from .contfrac import CFExpansion, denominators
from .errors import PrecisionExhausted, ValidationError
from .schrodinger import ModelParams, sturmian_bits

MAX_BITS = 4096
DIRECT_PRODUCT_LIMIT = 10_000


@dataclass(frozen=True)
class TraceState:
    k: int
    E: object
    t_prev: object  # tr M_{k-1}
    t_cur: object  # tr M_k
    t_mix: object  # tr M_{k-1} M_k
    bits: int = 256

    def x(self, p: int):
        """x_(k,p) for p >= -1 by the Chebyshev recursion."""
        if p < -1:
            raise ValidationError("p must be >= -1")
        if p == -1:
            return self.t_prev * self.t_cur - self.t_mix
        with gmpy2.context(gmpy2.get_context(), precision=self.bits):
            x0, x1 = self.t_prev, self.t_mix
            if p == 0:
                return x0
            for _ in range(p - 1):
                x0, x1 = x1, self.t_cur * x1 - x0
            return x1


def fricke_value(t_prev, t_cur, t_mix):
    return t_prev * t_prev + t_cur * t_cur + t_mix * t_mix - t_prev * t_cur * t_mix - 4


def fricke_residual(params: ModelParams, state: TraceState):
    """|I(state) - lambda^2|; zero in exact arithmetic.  Evaluated at the state's precision."""
    with gmpy2.context(gmpy2.get_context(), precision=state.bits):
        return abs(fricke_value(state.t_prev, state.t_cur, state.t_mix) - params.lam * params.lam)


def fricke_tolerance(lam: float, bits: int, scale) -> float:
    """Alarm threshold: the absolute target, or half the working bits lost at this magnitude."""
    scale = max(abs(mpfr(scale)), 1)
    return max(mpfr(1e-20 * lam * lam), gmpy2.mul_2exp(scale ** 3, -(bits // 2)))


def level0(params: ModelParams, E, bits: int | None = None) -> TraceState:
    bits = bits or params.precision_bits
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        e = mpfr(E)
        return TraceState(0, e, mpfr(2), e, e - mpfr(params.lam), bits)


def advance_state(params: ModelParams, state: TraceState, check: bool = True) -> TraceState:
    """Level k -> k+1 from level-k traces only, O(a_{k+1}) operations.

    Raises PrecisionExhausted when the Fricke residual of the new state
    exceeds its tolerance; :func:`state_at` catches this and retries at
    doubled precision.
    """
    e = params.cf.coefficient(state.k + 1)
    with gmpy2.context(gmpy2.get_context(), precision=state.bits):
        t = state.t_cur
        x0, x1 = state.t_prev, state.t_mix
        for _ in range(e - 1):
            x0, x1 = x1, t * x1 - x0
        x2 = t * x1 - x0
        new = TraceState(state.k + 1, state.E, t, x1, x2, state.bits)
        if check:
            res = fricke_residual(params, new)
            scale = max(abs(t), abs(x1), abs(x2))
            if not res <= fricke_tolerance(params.lam, state.bits, scale):
                raise PrecisionExhausted(
                    f"Fricke residual {float(res):.3g} at level {new.k}, {state.bits} bits"
                )
    return new


def state_at(params: ModelParams, E, k: int, bits: int | None = None) -> TraceState:
    """Trace state at level k, doubling precision on a Fricke alarm up to MAX_BITS."""
    if k < 0:
        raise ValidationError("k must be >= 0")
    bits = bits or params.precision_bits
    while True:
        try:
            s = level0(params, E, bits)
            for _ in range(k):
                s = advance_state(params, s)
            return s
        except PrecisionExhausted:
            if bits >= MAX_BITS:
                raise
            bits = min(2 * bits, MAX_BITS)


def trace_x(params: ModelParams, E, k: int, p: int, bits: int | None = None):
    """x_(k,p)(E) for k >= 0, p >= -1."""
    if p < -1:
        raise ValidationError("p must be >= -1")
    return state_at(params, E, k, bits).x(p)


def trace_degree(cf: CFExpansion, k: int, p: int) -> int:
    """Degree of x_(k,p) in E: p q_k + q_{k-1}, and q_k - q_{k-1} for p = -1."""
    q = [0] + denominators(cf, max(k, 0))  # q[j+1] = q_j, q[0] = q_{-1}
    if p == -1:
        return q[k + 1] - q[k]
    return p * q[k + 1] + q[k]


# -- direct products (oracle path) --------------------------------------------

def _mul(A, B):
    return (
        (A[0][0] * B[0][0] + A[0][1] * B[1][0], A[0][0] * B[0][1] + A[0][1] * B[1][1]),
        (A[1][0] * B[0][0] + A[1][1] * B[1][0], A[1][0] * B[0][1] + A[1][1] * B[1][1]),
    )


def _one_step(E, v):
    return ((E - v, -1), (1, 0))


def transfer_matrix(params: ModelParams, E, k: int, lam=None):
    """M_k(E) as nested tuples, by direct product for k >= 1.

    Entries take the arithmetic of ``E`` (Fraction, int, mpfr, float), so an
    exact oracle is just a Fraction energy.  ``lam`` overrides the coupling
    (pass a Fraction for exact work).
    """
    if k < -1:
        raise ValidationError("k must be >= -1")
    lam = params.lam if lam is None else lam
    one, zero = E ** 0, E * 0
    if k == -1:
        return ((one, -lam * one), (zero, one))
    if k == 0:
        return ((E, -one), (one, zero))
    n = denominators(params.cf, k)[k]
    if n > DIRECT_PRODUCT_LIMIT:
        raise ValidationError(f"direct product over {n} sites exceeds the oracle limit")
    R = ((one, zero), (zero, one))
    for b in sturmian_bits(params.cf, 1, n):
        R = _mul(_one_step(E, lam if b else zero), R)
    return R


def matrix_trace(A):
    return A[0][0] + A[1][1]


def matrix_power(A, e: int):
    R = ((A[0][0] ** 0, A[0][0] * 0), (A[0][0] * 0, A[0][0] ** 0))
    for _ in range(e):
        R = _mul(R, A)
    return R


def alignment_probe(cf: CFExpansion, lam: int = 30, K: int = 5,
                    energies=(Fraction(7, 3), Fraction(-1, 5))) -> dict[str, bool]:
    """Which exponent makes M_{k+1} = M_{k-1} M_k^{a} exact, for k = 1..K-1.

    Returns {"a_{k+1}": ok, "a_k": ok}, each true when that reading reproduces
    the direct product at every probe energy and level.  Exact rationals.
    """
    params = ModelParams(cf, float(lam))
    lam_q = Fraction(lam)
    ok = {"a_{k+1}": True, "a_k": True}
    for E in energies:
        Ms = {j: transfer_matrix(params, E, j, lam=lam_q) for j in range(-1, K + 1)}
        for k in range(1, K):
            lhs = Ms[k + 1]
            for name, idx in (("a_{k+1}", k + 1), ("a_k", k)):
                rhs = _mul(Ms[k - 1], matrix_power(Ms[k], cf.coefficient(idx)))
                if rhs != lhs:
                    ok[name] = False
    return ok
