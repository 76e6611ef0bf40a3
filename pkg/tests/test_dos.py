from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qspec.bands import build_generating_tree
from qspec.contfrac import denominators, parse_cf
from qspec.dos import DOSApprox, dos_compare, dos_direct, dos_from_bands
from qspec.errors import CountMismatch, ValidationError
from qspec.schrodinger import ModelParams, restriction


def test_examples(fib):
    d = dos_from_bands(fib, 1)
    assert d.weight == 1 and len(d.bands) == 1
    assert (d.bands[0].lo, d.bands[0].hi) == (28, 32)
    d4 = dos_from_bands(fib, 4)
    assert d4.weight == Fraction(1, 5) and len(d4.bands) == 5
    assert dos_direct(fib, 1, 29, 31) == 1.0
    assert dos_direct(fib, 2, -1, 1) == 0.5
    for n in (1, 10, 89):
        assert dos_direct(fib, n, -10, -2.5) == 0.0


@pytest.mark.parametrize("cf, k", [("1*", 6), ("2*", 4), ("3*", 3), ("k", 3)])
def test_normalization_and_monotonicity(cf, k):
    params = ModelParams(parse_cf(cf), 30.0)
    d = dos_from_bands(params, k)
    assert d.total_mass == 1
    assert d.N(-100) == 0 and d.N(100) == 1.0
    xs = np.linspace(-3, 33, 400)
    Ns = [d.N(x) for x in xs]
    assert Ns == sorted(Ns)
    steps = d.steps()
    assert steps[0][1] == 0 and steps[-1][1] == pytest.approx(1.0)


def test_partial_band_is_linear(fib):
    d = dos_from_bands(fib, 3)
    b = d.bands[0]
    mid = (b.lo + b.hi) / 2
    assert d.N(mid) == pytest.approx(0.5 * float(d.weight))


def test_tree_and_enumeration_agree(three):
    a = dos_from_bands(three, 3, "enumerate")
    b = dos_from_bands(three, 3, "tree")
    assert len(a.bands) == len(b.bands) == 33
    for x, y in zip(a.bands, b.bands):
        assert abs(float(x.lo - y.lo)) < 1e-40 and abs(float(x.hi - y.hi)) < 1e-40


def test_direct_matches_dense_eigenvalues(three):
    n = 250
    ev = np.linalg.eigvalsh(restriction(three, n).dense())
    for lo, hi in [(-3, 0), (0.1, 0.5), (-1, 33), (29, 31), (5, 20)]:
        assert dos_direct(three, n, lo, hi) * n == np.sum((ev >= lo) & (ev <= hi))


def test_compare_full_line_and_single_band(fib):
    assert dos_compare(fib, 5, [(-3, 33)]).max_discrepancy == 0
    k = 6
    approx = dos_from_bands(fib, k)
    q = denominators(fib.cf, k + 2)
    n = q[k + 2]
    for b in approx.bands:
        r = dos_compare(fib, k, [(float(b.lo), float(b.hi))], approx).rows[0]
        assert r[2] == pytest.approx(1 / q[k])
        assert abs(r[2] - r[3]) <= 2 / n + 1 / q[k]


def test_discrepancy_shrinks_with_k(fib):
    tree = build_generating_tree(fib, 3)
    lev = tree.levels[3]
    intervals = [(float(lev.lo(i)), float(lev.hi(i))) for i in range(len(lev))]
    d = [dos_compare(fib, k, intervals).max_discrepancy for k in (3, 5, 7)]
    assert d[0] > d[1] > d[2]


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 33), st.floats(0, 36))
def test_nested_intervals_monotone(lo, width):
    params = ModelParams(parse_cf("1*"), 30.0)
    hi = min(lo + width, 33.0)
    inner = (lo + 0.25 * (hi - lo), lo + 0.75 * (hi - lo))
    rows = dos_compare(params, 5, [inner, (lo, hi)]).rows
    assert rows[0][2] <= rows[1][2] + 1e-15
    assert rows[0][3] <= rows[1][3]


def test_validation(fib):
    with pytest.raises(ValidationError):
        dos_compare(fib, 4, [(-5, 0)])
    with pytest.raises(ValidationError):
        dos_compare(fib, 4, [(1, 0)])
    with pytest.raises(ValidationError):
        dos_from_bands(fib, 3, "magic")
    with pytest.raises(ValidationError):
        dos_from_bands(fib, 0, "tree")
    with pytest.raises(ValidationError):
        dos_direct(fib, 0, 0, 1)
    d = dos_from_bands(fib, 3)
    with pytest.raises(ValidationError):
        d.mass(1, 0)
    with pytest.raises(CountMismatch):
        DOSApprox(3, Fraction(1, 4), d.bands)
