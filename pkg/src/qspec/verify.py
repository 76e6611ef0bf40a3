"""Invariant suite across all modules, as used by ``qspec verify``.

Each ``check_*`` function returns a list of :class:`~qspec.bands.Check`; the
checks lean on independent oracles (exact rationals, dense eigenvalues, exact
polynomials) wherever the module under test has a fast path.
"""

from __future__ import annotations

import math
from fractions import Fraction

import gmpy2
import numpy as np
from gmpy2 import mpfr
from numpy.polynomial import Polynomial

from .bands import BandTree, Check, VerifyReport, build_generating_tree, verify_tree
from .contfrac import CFExpansion, cf_value, convergents, denominators
from .dos import dos_compare, dos_from_bands
from .errors import QspecError, ValidationError
from .holder import (
    INCONCLUSIVE, GEOMETRIC, bound_L, bound_U, dichotomy_check, empirical_exponents, gamma_k_sequence,
    gamma_lower, gamma_upper, measured_log_min, path_log_bounds,
)
from .schrodinger import ModelParams, potential, restriction, sturm_count_below
from .tracemap import (
    advance_state, fricke_residual, matrix_trace, state_at, trace_degree, trace_x, transfer_matrix,
)

LOG4 = math.log(4.0)


# -- oracles ------------------------------------------------------------------------

def exact_fraction(cf: CFExpansion, K: int) -> Fraction:
    """[0; a_1, ..., a_K] folded from the tail in exact rationals."""
    x = Fraction(0)
    for a in reversed(cf.coefficients(K)):
        x = 1 / (a + x)
    return x


def charpoly_roots(diag) -> list[tuple[Fraction, Fraction]]:
    """Disjoint rational brackets, one per eigenvalue of tridiag(1, diag, 1).

    The characteristic polynomial is built exactly from the three-term
    recurrence.  Dense float eigenvalues only seed the brackets; each bracket
    is accepted on an exact sign change and then shrunk by exact bisection.
    """
    if len(diag) == 0:
        raise ValidationError("empty matrix")
    x = Polynomial(np.array([0, 1], dtype=object))
    p_prev, p = Polynomial(np.array([1], dtype=object)), x - Fraction(diag[0])
    for v in diag[1:]:
        p_prev, p = p, (x - Fraction(v)) * p - p_prev
    coef = [Fraction(c) for c in p.coef]

    def ev(t: Fraction) -> Fraction:
        acc = Fraction(0)
        for c in reversed(coef):
            acc = acc * t + c
        return acc

    n = len(diag)
    dense = np.diag(np.asarray(diag, dtype=float)) + np.eye(n, k=1) + np.eye(n, k=-1)
    seeds = np.linalg.eigvalsh(dense)
    out = []
    for r in seeds:
        h = Fraction(1, 10**9)
        lo, hi = Fraction(r) - h, Fraction(r) + h
        flo, fhi = ev(lo), ev(hi)
        if flo == 0 or fhi == 0 or (flo > 0) == (fhi > 0):
            raise QspecError("characteristic polynomial root not bracketed")
        for _ in range(40):
            mid = (lo + hi) / 2
            fm = ev(mid)
            if fm == 0:
                lo = hi = mid
                break
            if (fm > 0) == (flo > 0):
                lo, flo = mid, fm
            else:
                hi = mid
        out.append((lo, hi))
    for (_, h1), (l2, _) in zip(out, out[1:]):
        if not h1 < l2:
            raise QspecError("characteristic polynomial brackets overlap")
    return out


def trace_polynomial(params: ModelParams, k: int, p: int) -> Polynomial:
    """x_(k,p) as an exact polynomial in E, from direct transfer-matrix products."""
    E = Polynomial(np.array([0, 1], dtype=object))
    lam = Fraction(params.lam)
    A = transfer_matrix(params, E, k - 1, lam=lam)
    B = transfer_matrix(params, E, k, lam=lam)
    R = A
    for _ in range(p):
        R = (
            (R[0][0] * B[0][0] + R[0][1] * B[1][0], R[0][0] * B[0][1] + R[0][1] * B[1][1]),
            (R[1][0] * B[0][0] + R[1][1] * B[1][0], R[1][0] * B[0][1] + R[1][1] * B[1][1]),
        )
    return matrix_trace(R)


def _degree(poly: Polynomial) -> int:
    c = list(poly.coef)
    while len(c) > 1 and c[-1] == 0:
        c.pop()
    return len(c) - 1


# -- per-module checks -------------------------------------------------------------------

def check_contfrac(cf: CFExpansion, K: int = 40, bits: int = 256) -> list[Check]:
    out = []
    q = denominators(cf, K)
    bad = [k for k in range(1, K + 1) if exact_fraction(cf, k).denominator != q[k]]
    out.append(Check("q_k recursion = denominator of the reduced fraction", not bad,
                     f"k = 1..{K}" + (f", mismatched {bad}" if bad else "")))
    beta = cf_value(cf, bits)
    conv = convergents(cf, K + 1)  # conv[j] is p_(j+1)/q_(j+1)
    bad = []
    with gmpy2.context(gmpy2.get_context(), precision=bits + 32):
        for c, nxt in zip(conv, conv[1:]):
            if c.q * nxt.q > 2 ** (bits - 16):
                break
            if not abs(beta - mpfr(c.p) / c.q) < mpfr(1) / (c.q * nxt.q):
                bad.append(c.k)
    out.append(Check("|beta - p_k/q_k| < 1/(q_k q_(k+1))", not bad, f"violations {bad}" if bad else "ok"))
    b = cf.constant_value
    if b is not None:
        bad = [k for k in range(K + 1) if not b ** k <= q[k] <= (b + 1) ** k]
        out.append(Check(f"b^k <= q_k <= (b+1)^k for b = {b}, k <= {K}", not bad,
                         f"violations {bad}" if bad else "ok"))
    return out


def check_schrodinger(params: ModelParams, n: int = 610, oracle_n: int = 8) -> list[Check]:
    out = []
    lam = params.lam
    op = restriction(params, n)
    xs = np.linspace(-3.0, lam + 3.0, 65)
    counts = [sturm_count_below(params, n, float(x), op) for x in xs]
    mono = all(a <= b for a, b in zip(counts, counts[1:]))
    out.append(Check(f"Sturm counts monotone in x and total n at lambda + 3 (n = {n})",
                     mono and counts[-1] == n, f"count at lambda+3 = {counts[-1]}"))
    bad = 0
    for m in range(1, oracle_n + 1):
        diag = potential(params, 1, m)
        roots = charpoly_roots(diag)
        for lo, hi in roots:
            # one eigenvalue in [lo, hi]: counts just outside must differ by one
            below = sturm_count_below(params, m, float(lo) - 1e-9)
            above = sturm_count_below(params, m, float(hi) + 1e-9)
            if above - below != 1:
                bad += 1
    out.append(Check(f"Sturm counts vs exact characteristic polynomial (n <= {oracle_n})", bad == 0,
                     f"{bad} disagreements"))
    short, long = potential(params, 1, 50), potential(params, 1, 200)
    out.append(Check("potential(1..n) is a prefix of potential(1..m)", long[:50] == short, "n = 50, m = 200"))
    return out


def _band_energies(tree: BandTree, k: int, count: int) -> list:
    lev = tree.levels[k]
    idx = np.unique(np.linspace(0, len(lev) - 1, count).round().astype(int))
    return [lev.z[i] for i in idx]


def check_tracemap(params: ModelParams, depth: int, degree_limit: int = 40,
                   samples: int = 32) -> list[Check]:
    out = []
    cf = params.cf
    q = denominators(cf, depth + 2)
    bad, checked = [], 0
    for k in range(1, depth + 1):
        a = cf.coefficient(k + 1)
        if (a + 1) * q[k] + q[k - 1] > degree_limit:
            break
        for p in range(0, a + 2):
            checked += 1
            if _degree(trace_polynomial(params, k, p)) != trace_degree(cf, k, p):
                bad.append((k, p))
    out.append(Check("deg x_(k,p) = p q_k + q_(k-1) (exact polynomials)", not bad and checked > 0,
                     f"{checked} traces" + (f", mismatched {bad}" if bad else "")))

    # x_(k+2,0) = x_(k, a_(k+1)), and both against direct products where small
    rng = np.random.default_rng(0)
    energies = [Fraction(int(v), 64) for v in rng.integers(-3 * 64, int((params.lam + 3) * 64), samples)]
    worst, direct_bad = 0.0, 0
    ctx = gmpy2.context(gmpy2.get_context(), precision=params.precision_bits)
    for k in range(0, depth - 1):
        a = cf.coefficient(k + 1)
        small = q[k + 1] <= 300
        for E in energies:
            with ctx:
                x1 = trace_x(params, E, k + 2, 0)
                x2 = trace_x(params, E, k, a)
                worst = max(worst, float(abs(x1 - x2) / max(abs(x1), 1)))
                if small:
                    exact = matrix_trace(transfer_matrix(params, E, k + 1, lam=Fraction(params.lam)))
                    if float(abs(x1 - exact) / max(abs(exact), 1)) > 1e-40:
                        direct_bad += 1
    out.append(Check("x_(k+2,0) = x_(k,a_(k+1)) at sampled energies", worst < 1e-40,
                     f"{samples} energies x {max(depth - 1, 0)} levels, worst relative gap {worst:.3g}"))
    out.append(Check("trace recursion = exact transfer-matrix trace", direct_bad == 0,
                     f"{direct_bad} disagreements"))
    return out


def fricke_scan(params: ModelParams, depth: int, tree: BandTree, per_level: int = 64) -> tuple[float, int]:
    """Largest Fricke residual along the recursion for in-band energies at every level.

    Energies are reference points of generating bands of G_k (64 spread over
    each level); the whole chain 0..k is checked for each.  Returns
    (max residual, number of evaluations).
    """
    worst, n = 0.0, 0
    for k in range(1, depth + 1):
        for E in _band_energies(tree, k, per_level):
            with gmpy2.context(gmpy2.get_context(), precision=params.precision_bits):
                s = state_at(params, E, 0)
                for _ in range(k):
                    s = advance_state(params, s)
                    worst = max(worst, float(fricke_residual(params, s)))
                    n += 1
    return worst, n


def check_dos(params: ModelParams, k: int = 4) -> list[Check]:
    """Monotone masses, convergence in k and gap insensitivity, on G_2 test intervals."""
    out = []
    tree = build_generating_tree(params, 2)
    lev = tree.levels[2]
    intervals = [(float(lev.lo(i)), float(lev.hi(i))) for i in range(len(lev))]
    # nested: growing windows from the left end of the spectrum
    lo0 = -3.0
    his = sorted(h for _, h in intervals)
    approx = dos_from_bands(params, k)
    cmp_ = dos_compare(params, k, [(lo0, h) for h in his], approx)
    band = [r[2] for r in cmp_.rows]
    direct = [r[3] for r in cmp_.rows]
    mono = all(a <= b + 1e-15 for a, b in zip(band, band[1:])) and all(a <= b for a, b in zip(direct, direct[1:]))
    out.append(Check("DOS masses monotone under nested intervals", mono, f"{len(his)} windows, k = {k}"))
    d = []
    ks = (k - 2, k) if k >= 3 else (k, k + 2)
    for kk in ks:
        d.append(dos_compare(params, kk, intervals).max_discrepancy)
    out.append(Check("band-count vs eigenvalue-count discrepancy decreases with k", d[1] < d[0],
                     f"k = {ks[0]}: {d[0]:.4g}, k = {ks[1]}: {d[1]:.4g}"))
    # Shifting an endpoint within a gap of G_2 (a gap of the spectrum).  The
    # band count cannot move; H_n is a rank-2 perturbation of its periodic
    # closure, whose eigenvalues avoid the gap, so at most 2 of its own
    # eigenvalues (boundary states) can sit there.
    moved, worst = 0, 0
    n = cmp_.n
    for i in range(len(intervals) - 1):
        g_lo, g_hi = intervals[i][1], intervals[i + 1][0]
        a = (intervals[0][0], g_lo + 0.25 * (g_hi - g_lo))
        b = (intervals[0][0], g_lo + 0.75 * (g_hi - g_lo))
        r = dos_compare(params, k, [a, b], approx).rows
        jump = round(abs(r[0][3] - r[1][3]) * n)
        worst = max(worst, jump)
        if r[0][2] != r[1][2] or jump > 2:
            moved += 1
    out.append(Check("moving an endpoint inside a spectral gap: band count fixed, eigenvalue count within 2/n",
                     moved == 0, f"{moved} of {len(intervals) - 1} gaps; largest eigenvalue-count change {worst}"))
    return out


def check_holder(params: ModelParams, tree: BandTree) -> list[Check]:
    """Holder-module invariants; theorem values need constant coefficients and lambda > 24."""
    out = []
    b = params.cf.constant_value
    lam = params.lam
    depth = tree.depth
    lm = measured_log_min(tree)
    lo_path, up_path = path_log_bounds(params.cf, lam, depth)
    bad = [k for k in range(1, depth + 1)
           if not (lo_path[k] <= lm[k] - LOG4 + 1e-9 and lm[k] - LOG4 <= up_path[k] + 1e-9)]
    out.append(Check("shortest band between extreme length-matrix path products", not bad,
                     f"levels 1..{depth}" + (f", violated at {bad}" if bad else "")))
    if b is None or not lam > 24:
        return out
    grid = [lam, 2 * lam, 10 * lam, 100 * lam]
    mono = all(gamma_lower(b, x) > gamma_lower(b, y) and gamma_upper(b, x) > gamma_upper(b, y)
               for x, y in zip(grid, grid[1:]))
    out.append(Check("gamma_lower and gamma_upper decrease in lambda", mono, f"lambda in {grid}"))
    kmax = min(depth, 8)
    bad = [k for k in range(1, kmax + 1)
           if not (bound_L(b, lam, k) <= lm[k] - LOG4 + 1e-9 and lm[k] - LOG4 <= bound_U(b, lam, k) + 1e-9)]
    out.append(Check("closed-form sandwich L(k) <= log(m_k/4) <= U(k)", not bad,
                     f"levels 1..{kmax}" + (f", violated at {bad}" if bad else "")))
    gl, gu = gamma_lower(b, lam), gamma_upper(b, lam)
    _, _, table = empirical_exponents(tree, min_level=1)
    deep = table.exponent[table.level == depth]
    e_min = float(deep.min())
    out.append(Check("gamma_lower <= min e(B) at the deepest level", gl <= e_min,
                     f"gamma_lower {gl:.5f}, min e {e_min:.5f}"))
    per_level_max = []
    for k in np.unique(table.level):
        sel = table.level == k
        j = int(np.argmax(table.exponent[sel]))
        per_level_max.append((float(table.exponent[sel][j]), abs(LOG4 / float(table.log_length[sel][j]))))
    e_max, corr = min(per_level_max)
    out.append(Check("min over levels of max e(B) <= gamma_upper + |log 4 / log|B||", e_max <= gu + corr,
                     f"{e_max:.5f} vs {gu:.5f} + {corr:.5f}"))
    if depth >= 4:
        dich = dichotomy_check(params.cf, lam, depth, tree=tree)
        gk = gamma_k_sequence(params, depth, tree=tree)
        liminf = min(gk[len(gk) // 2:])
        if dich.classification == INCONCLUSIVE:
            out.append(Check("liminf gamma_k > 0 iff geometric decay", True, "classification inconclusive"))
        else:
            agree = (liminf > 0) == (dich.classification == GEOMETRIC)
            out.append(Check("liminf gamma_k > 0 iff geometric decay", agree,
                             f"liminf {liminf:.4f}, {dich.classification}"))
    return out


def verify_all(params: ModelParams, depth: int, tree: BandTree | None = None,
               fricke: bool = True) -> VerifyReport:
    """Every module's invariants for one (beta, lambda, depth)."""
    params.require_bands()
    tree = tree or build_generating_tree(params, depth)
    checks = []
    checks += check_contfrac(params.cf, bits=params.precision_bits)
    checks += check_schrodinger(params)
    checks += check_tracemap(params, depth)
    if fricke:
        worst, n = fricke_scan(params, depth, tree)
        tol = 1e-20 * params.lam ** 2
        checks.append(Check("Fricke residual <= 1e-20 lambda^2 at in-band energies", worst <= tol,
                            f"{n} evaluations, levels 1..{depth}, max {worst:.3g}"))
    checks += verify_tree(tree).checks
    checks += check_dos(params)
    checks += check_holder(params, tree)
    return VerifyReport(checks)


__all__ = [
    "exact_fraction", "charpoly_roots", "trace_polynomial", "check_contfrac", "check_schrodinger",
    "check_tracemap", "fricke_scan", "check_dos", "check_holder", "verify_all",
]
