from __future__ import annotations

from fractions import Fraction

import gmpy2
import numpy as np
import pytest
from gmpy2 import mpfr

from qspec.contfrac import denominators, parse_cf
from qspec.errors import PrecisionExhausted, ValidationError
from qspec.schrodinger import ModelParams
from qspec import tracemap
from qspec.tracemap import (
    TraceState,
    advance_state, alignment_probe, fricke_residual, fricke_value, level0, matrix_power, matrix_trace,
    state_at, trace_degree, trace_x, transfer_matrix,
)
from qspec.verify import _degree, trace_polynomial

CFS = ["1*", "2*", "3*", "[1,2]*", "k", "2,1,3*"]


def test_level0_and_fricke_identity(fib):
    s = level0(fib, 1)
    assert (s.t_prev, s.t_cur, s.t_mix) == (2, 1, 1 - 30)
    assert fricke_residual(fib, s) == 0
    for E in (-3, 0.25, 17, 1e6):
        assert fricke_value(2, mpfr(E), mpfr(E) - 30) == 900


def test_transfer_matrix_examples(fib):
    E = Fraction(7, 5)
    assert transfer_matrix(fib, E, 0) == ((E, -1), (1, 0))
    for k in range(-1, 8):
        M = transfer_matrix(fib, E, k, lam=Fraction(30))
        assert M[0][0] * M[1][1] - M[0][1] * M[1][0] == 1


@pytest.mark.parametrize("cf", CFS)
def test_matrix_recursion_uses_next_coefficient(cf):
    # M_(k+1) = M_(k-1) M_k^(a_(k+1)), exactly
    params = ModelParams(parse_cf(cf), 30.0)
    E = Fraction(-3, 7)
    Ms = [transfer_matrix(params, E, k, lam=Fraction(30)) for k in range(-1, 6)]
    for k in range(1, 5):
        lhs = Ms[k + 2]
        rhs = ((Ms[k][0][0], Ms[k][0][1]), (Ms[k][1][0], Ms[k][1][1]))
        P = matrix_power(Ms[k + 1], params.cf.coefficient(k + 1))
        rhs = tuple(tuple(sum(rhs[i][m] * P[m][j] for m in range(2)) for j in range(2)) for i in range(2))
        assert lhs == rhs


def test_alignment_probe_picks_next_coefficient():
    assert alignment_probe(parse_cf("[1,2]*")) == {"a_{k+1}": True, "a_k": False}
    # constant streams cannot tell the readings apart
    assert alignment_probe(parse_cf("3*")) == {"a_{k+1}": True, "a_k": True}


def test_trace_examples(fib):
    for E in (Fraction(1, 8), Fraction(-2), Fraction(61, 2)):  # exact in binary
        assert trace_x(fib, E, 0, 1) == E - 30
        assert trace_x(fib, E, 0, -1) == E + 30
        assert trace_x(fib, E, 1, 1) == E * E - 30 * E - 2


@pytest.mark.parametrize("cf", CFS)
def test_recursion_matches_exact_products(cf):
    params = ModelParams(parse_cf(cf), 30.0)
    rng = np.random.default_rng(1)
    with gmpy2.context(gmpy2.get_context(), precision=256):
        for k in range(0, 6):
            for num in rng.integers(-200, 2100, 6):
                E = Fraction(int(num), 64)
                exact = matrix_trace(transfer_matrix(params, E, k, lam=Fraction(30)))
                got = state_at(params, E, k).t_cur
                assert abs(got - exact) <= abs(exact) * mpfr(2) ** -240 + mpfr(2) ** -240


@pytest.mark.parametrize("cf", CFS)
def test_degree_law(cf):
    params = ModelParams(parse_cf(cf), 30.0)
    q = denominators(params.cf, 8)
    for k in range(1, 5):
        a = params.cf.coefficient(k + 1)
        if (a + 1) * q[k] > 60:
            break
        for p in range(-1, a + 2):
            if p == -1 and q[k] == q[k - 1]:
                continue  # x_(1,-1) is constant when a_1 = 1
            poly = trace_polynomial(params, k, p) if p >= 0 else None
            if poly is not None:
                assert _degree(poly) == trace_degree(params.cf, k, p) == p * q[k] + q[k - 1]
                # leading coefficient 1: traces of E-monic transfer products
                assert poly.coef[_degree(poly)] == 1


def test_x_minus_one_identity(three):
    # x_(k,-1) = t_(k-1) t_k - x_(k,1)
    for E in (mpfr("0.3"), mpfr("29.7")):
        s = state_at(three, E, 3)
        assert s.x(-1) == s.t_prev * s.t_cur - s.t_mix
        assert s.x(0) == s.t_prev and s.x(1) == s.t_mix
    with pytest.raises(ValidationError):
        trace_x(three, 0, 2, -2)
    with pytest.raises(ValidationError):
        state_at(three, 0, -1)


def test_consistency_two_levels_up(three):
    for E in (mpfr("-1.1"), mpfr("0.01"), mpfr("30.5")):
        for k in range(0, 5):
            a = three.cf.coefficient(k + 1)
            assert trace_x(three, E, k + 2, 0) == trace_x(three, E, k, a)


def test_fricke_alarm_on_inconsistent_state(fib):
    bad = TraceState(0, mpfr(1), mpfr(2), mpfr(1), mpfr(-28.5), 256)  # t_mix off by 1/2
    with pytest.raises(PrecisionExhausted):
        advance_state(fib, bad)


def test_precision_doubles_on_alarm(fib, monkeypatch):
    # a tolerance only met at 1024 bits forces two doublings from 256
    real = tracemap.fricke_tolerance
    monkeypatch.setattr(tracemap, "fricke_tolerance",
                        lambda lam, bits, scale: real(lam, bits, scale) if bits >= 1024 else mpfr(-1))
    out = state_at(fib, mpfr("0.5"), 6)
    assert out.bits == 1024
    assert fricke_residual(fib, out) <= 1e-20 * 900


def test_precision_cap_raises(fib, monkeypatch):
    monkeypatch.setattr(tracemap, "fricke_tolerance", lambda lam, bits, scale: mpfr(-1))
    with pytest.raises(PrecisionExhausted):
        state_at(fib, mpfr("0.5"), 3)


def test_fricke_residual_small_in_band(fib):
    from qspec.bands import build_generating_tree
    tree = build_generating_tree(fib, 10)
    lev = tree.levels[10]
    for i in range(0, len(lev), 7):
        s = level0(fib, lev.z[i])
        for _ in range(10):
            s = advance_state(fib, s)
            assert fricke_residual(fib, s) <= 1e-20 * 900
