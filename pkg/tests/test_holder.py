from __future__ import annotations

import math

import numpy as np
import pytest

from qspec.bands import build_generating_tree
from qspec.contfrac import CFExpansion, denominators, parse_cf
from qspec.errors import ValidationError
from qspec.holder import (
    GEOMETRIC, INCONCLUSIVE, SUPER, C_est, DichotomyConfig, asymptotic_targets, bound_L, bound_U,
    corollary_asymptotics, dichotomy_check, empirical_exponents, gamma_k_sequence, gamma_lower,
    gamma_upper, holder_report, kind_masses, measured_log_min, path_log_bounds,
)
from qspec.schrodinger import ModelParams, eig_count_interval, restriction

GOLDEN_LOG = math.log((math.sqrt(5) - 1) / 2)


def test_theorem_values_b1():
    assert gamma_lower(1, 30) == pytest.approx(3 * GOLDEN_LOG / (-2 * math.log(945)), rel=1e-14)
    assert gamma_lower(1, 30) == pytest.approx(0.1054, abs=1e-4)
    assert gamma_upper(1, 30) == pytest.approx(3 * GOLDEN_LOG / (-2 * math.log(66)), rel=1e-14)
    assert gamma_upper(1, 30) == pytest.approx(0.1723, abs=1e-4)
    assert gamma_upper(1, 30) > gamma_lower(1, 30)


@pytest.mark.parametrize("b", range(1, 9))
def test_theorem_values_positive_and_decreasing(b):
    lams = [24.5, 30, 100, 1e3, 1e6, 1e12]
    lo = [gamma_lower(b, x) for x in lams]
    up = [gamma_upper(b, x) for x in lams]
    assert all(v > 0 for v in lo + up)
    assert lo == sorted(lo, reverse=True) and up == sorted(up, reverse=True)
    assert up[-1] < 0.05


def test_domain():
    for fn in (gamma_lower, gamma_upper):
        with pytest.raises(ValidationError):
            fn(1, 24)
        with pytest.raises(ValidationError):
            fn(0, 30)
    with pytest.raises(ValidationError):
        bound_L(1, 30, -1)


def test_bound_examples():
    for b in (1, 2, 3, 5):
        assert bound_L(b, 30, 0) == 0 and bound_U(b, 30, 0) == 0
    assert bound_L(2, 30, 1) == pytest.approx(-math.log(35) - 3 * math.log(4), rel=1e-14)
    assert bound_L(2, 30, 1) == pytest.approx(-7.714, abs=1e-3)
    assert bound_L(1, 30, 3) == pytest.approx(-13.703, abs=1e-3)
    assert bound_U(1, 30, 3) == pytest.approx(-2 * (math.log(22) + math.log(3)), rel=1e-14)
    assert bound_U(1, 30, 3) == pytest.approx(-8.379, abs=1e-3)
    assert bound_U(3, 30, 2) == pytest.approx(-2 * (math.log(22) - math.log(3)) - math.log(22), rel=1e-14)
    assert bound_U(3, 30, 2) == pytest.approx(-7.077, abs=2e-3)


def test_corollary_target_b5():
    beta5 = (math.sqrt(29) - 5) / 2
    lo_t, up_t = asymptotic_targets(5)
    assert lo_t == up_t == pytest.approx(-2 * math.log(beta5) / 5, rel=1e-14)
    assert lo_t == pytest.approx(0.65896, abs=1e-4)
    rows = corollary_asymptotics(5, [1e3, 1e4, 1e5, 1e6])
    for r in rows:
        assert r["upper_times_log"] >= r["lower_times_log"]
    dl = [abs(r["lower_times_log"] - lo_t) for r in rows]
    du = [abs(r["upper_times_log"] - lo_t) for r in rows]
    assert dl == sorted(dl, reverse=True) and du == sorted(du, reverse=True)


def test_b3_branches_disagree():
    # the two theorems use different b = 3 branches
    lo_t, up_t = asymptotic_targets(3)
    assert lo_t != up_t
    assert gamma_upper(3, 1e8) < gamma_lower(3, 1e8)
    assert corollary_asymptotics(3, [1e4])[0]["target"] is None


@pytest.mark.parametrize("cf", ["1*", "2*", "3*", "5*", "[1,2]*", "k"])
def test_path_bounds_sandwich_measured_shortest_band(cf):
    params = ModelParams(parse_cf(cf), 30.0)
    depth = 6 if cf != "5*" else 4
    tree = build_generating_tree(params, depth, beam=64)
    lo, up = path_log_bounds(params.cf, 30.0, depth)
    lm = measured_log_min(tree)
    for k in range(depth + 1):
        assert lo[k] - 1e-9 <= lm[k] - math.log(4) <= up[k] + 1e-9


@pytest.mark.parametrize("b", [2, 3, 5])
def test_closed_form_sandwich(b):
    params = ModelParams(CFExpansion.constant(b), 30.0)
    depth = 6 if b < 5 else 4
    lm = measured_log_min(build_generating_tree(params, depth, beam=64))
    for k in range(depth + 1):
        assert bound_L(b, 30, k) - 1e-9 <= lm[k] - math.log(4) <= bound_U(b, 30, k) + 1e-9


def test_closed_form_b1_disagrees_with_measurement(fib):
    # the b = 1 closed forms put L(1) = 0, i.e. every level-1 band at least 4 long
    lm = measured_log_min(build_generating_tree(fib, 4))
    assert bound_L(1, 30, 1) == 0
    assert lm[1] - math.log(4) < bound_L(1, 30, 1)


def test_masses_partition_each_level(fib):
    tree = build_generating_tree(fib, 8)
    m = kind_masses(fib.cf, 8)
    for k, lev in enumerate(tree.levels):
        assert sum(c * x for c, x in zip(lev.kind_counts(), m[k])) == pytest.approx(1.0, abs=1e-14)


def test_masses_match_eigenvalue_counts(fib):
    tree = build_generating_tree(fib, 4)
    m = kind_masses(fib.cf, 4)
    n = denominators(fib.cf, 16)[16]
    op = restriction(fib, n)
    lev = tree.levels[4]
    for i in range(len(lev)):
        direct = eig_count_interval(fib, n, float(lev.lo(i)), float(lev.hi(i)), op) / n
        assert direct == pytest.approx(m[4][lev.kind[i]], abs=3 / n)


def test_gamma_k_trivial_and_trend(fib):
    gk = gamma_k_sequence(fib, 10, C=1.0)
    assert gk[0] == 0  # q_1 = 1 and C = 1
    gk = gamma_k_sequence(fib, 10)
    assert all(g > 0 for g in gk)
    assert abs(np.mean(gk[-4:]) - gamma_lower(1, 30)) < 0.03


def test_c_est_reasonable(fib):
    c = C_est(build_generating_tree(fib, 8))
    assert 0 < c <= 1


def test_empirical_exponents_b2_above_lower():
    params = ModelParams(CFExpansion.constant(2), 30.0)
    emin, emax, table = empirical_exponents(build_generating_tree(params, 8))
    assert emin >= gamma_lower(2, 30)
    assert emin <= emax
    assert np.all(table.log_length < 0)


def test_dichotomy_examples():
    geo = dichotomy_check(parse_cf("2*"), 30.0, 8)
    assert geo.classification == GEOMETRIC and geo.residual_ok and geo.consistent
    sup = dichotomy_check(parse_cf("k"), 30.0, 8)
    assert sup.classification == SUPER and sup.consistent
    inc = -np.diff(sup.log_min)
    assert inc[-2:].mean() > 2 * inc[:2].mean()  # increments grow with a_k
    inc2 = -np.diff(geo.log_min)
    assert inc2.max() - inc2.min() < 0.1  # constant step for bounded a_k
    assert dichotomy_check(parse_cf("2*"), 30.0, 2).classification == INCONCLUSIVE
    strict = DichotomyConfig(geometric_growth=0.5, super_growth=5.0)
    assert dichotomy_check(parse_cf("2*"), 30.0, 8, strict).classification == INCONCLUSIVE


def test_holder_report(fib):
    rep = holder_report(fib, 8)
    assert rep.b == 1 and rep.gamma_lower == gamma_lower(1, 30)
    assert len(rep.L_seq) == len(rep.U_seq) == len(rep.L_path) == 9
    assert len(rep.gamma_k_seq) == 7
    assert 0 < rep.delta <= 4
    assert rep.empirical_min <= rep.empirical_max
    with pytest.raises(ValidationError):
        holder_report(ModelParams(parse_cf("1*"), 10.0), 4)
