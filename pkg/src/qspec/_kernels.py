"""Float perturbation kernels around a high-precision reference orbit.

A band is handled in its own frame: one high-precision evaluation at a
reference energy z stores every chain value X of the trace recursion (as
floats), and energies z + d are evaluated through the recursion for the
differences,

    dx_{p+1} = T dx_p + dt (X_p + dx_p) - dx_{p-1},

which never subtracts two large numbers.  Derivatives in E ride along.

Row layout of a reference, for steps j = 0..K with e_j = a_{j+1}:
``[T_j, X_0, X_1, ..., X_{e_j+1}]`` where T_j = t_j and X_p = x_(j,p).
After evaluation ``vals[0] = t_K`` and ``vals[1 + p] = x_(K,p)``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# status codes returned per parent
OK = 0
REF_OUTSIDE = 1  # the reference energy is not inside the band
EDGE_BRACKET = 2  # could not bracket an edge of the band
SEPARATORS = 3  # separator values not alternating/large
TYPE_I_CHILD = 4  # type-I parent: child function has no sign change
SOLVE_FAILED = 5

KIND_I, KIND_II, KIND_III = 0, 1, 2

# sample-check flags
FLAG_INTERIOR = 1  # |f| > 2 inside the band
FLAG_MONOTONE = 2  # f not monotone across samples
FLAG_ENDPOINT = 4  # |f| != 2 at an endpoint
FLAG_KIND = 8  # containment predicate of the assigned kind fails
FLAG_ITEM6 = 16  # both t-band predicates hold, or t_K in [-2,2] inside a type-I band

EDGE_VALUE_TOL = 1e-6
CONTAIN_TOL = 1e-9


@njit(cache=True)
def chain(row, starts, es, K, d, vals, ders):
    dtp = 0.0
    dtc = d
    dtm = d
    gp = 0.0
    gc = 1.0
    gm = 1.0
    for j in range(K + 1):
        s = starts[j]
        e = es[j]
        T = row[s]
        t = T + dtc
        dx0 = dtp
        dx1 = dtm
        g0 = gp
        g1 = gm
        if j == K:
            vals[0] = t
            ders[0] = gc
            vals[1] = row[s + 1] + dx0
            ders[1] = g0
            vals[2] = row[s + 2] + dx1
            ders[2] = g1
        for p in range(1, e + 1):
            xp = row[s + 1 + p] + dx1
            dxn = T * dx1 + dtc * xp - dx0
            gn = t * g1 + gc * xp - g0
            dx0 = dx1
            dx1 = dxn
            g0 = g1
            g1 = gn
            if j == K:
                vals[2 + p] = row[s + 2 + p] + dx1
                ders[2 + p] = g1
        dtp = dtc
        dtc = dx0
        dtm = dx1
        gp = gc
        gc = g0
        gm = g1


@njit(cache=True)
def _g(row, starts, es, K, fi, target, d, vals, ders):
    chain(row, starts, es, K, d, vals, ders)
    return vals[fi] - target, ders[fi]


@njit(cache=True)
def rtsafe(row, starts, es, K, fi, target, a, b, rtol, vals, ders):
    """Root of x_fi - target in [a, b]: Newton safeguarded by bisection.

    Stops once the Newton step is below ``rtol`` times the local band-width
    scale 4/|f'|, or the bracket is a few ulps wide.  NaN if no sign change.
    """
    fa, _ = _g(row, starts, es, K, fi, target, a, vals, ders)
    fb, _ = _g(row, starts, es, K, fi, target, b, vals, ders)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if (fa > 0.0) == (fb > 0.0) or math.isnan(fa) or math.isnan(fb):
        return np.nan
    if fa < 0.0:
        xl = a
        xh = b
    else:
        xl = b
        xh = a
    # secant start
    x = a - fa * (b - a) / (fb - fa)
    if not (min(a, b) < x < max(a, b)):
        x = 0.5 * (a + b)
    dxold = abs(b - a)
    dx = dxold
    f, df = _g(row, starts, es, K, fi, target, x, vals, ders)
    for _ in range(300):
        if f == 0.0:
            return x
        if f < 0.0:
            xl = x
        else:
            xh = x
        if (((x - xh) * df - f) * ((x - xl) * df - f) > 0.0) or (abs(2.0 * f) > abs(dxold * df)):
            dxold = dx
            dx = 0.5 * (xh - xl)
            x = xl + dx
        else:
            dxold = dx
            dx = f / df
            x = x - dx
        scale = 4.0 / abs(df) if df != 0.0 else abs(xh - xl)
        width = abs(xh - xl)
        if abs(dx) <= rtol * scale or width <= 4.0 * np.spacing(max(abs(xl), abs(xh))):
            return x
        f, df = _g(row, starts, es, K, fi, target, x, vals, ders)
    return x


@njit(cache=True)
def _edge(row, starts, es, K, fi, target, d0, step, vals, ders):
    """Bracket the crossing of f = target walking from d0 by doubling steps."""
    fprev, _ = _g(row, starts, es, K, fi, target, d0, vals, ders)
    a = d0
    for _ in range(80):
        b = d0 + step
        fb, _ = _g(row, starts, es, K, fi, target, b, vals, ders)
        if (fb > 0.0) != (fprev > 0.0) or fb == 0.0:
            return rtsafe(row, starts, es, K, fi, target, a, b, 1e-15, vals, ders)
        a = b
        fprev = fb
        step *= 2.0
    return np.nan


@njit(cache=True)
def recenter(row, starts, es, K, fi, w):
    """Offset of the zero of x_fi nearest 0, searching outward from a width scale w."""
    vals = np.empty(es[K] + 4)
    ders = np.empty(es[K] + 4)
    f0, _ = _g(row, starts, es, K, fi, 0.0, 0.0, vals, ders)
    if f0 == 0.0:
        return 0.0
    step = 0.25 * w
    for _ in range(120):
        for sgn in (1.0, -1.0):
            f1, _ = _g(row, starts, es, K, fi, 0.0, sgn * step, vals, ders)
            if (f1 > 0.0) != (f0 > 0.0):
                return rtsafe(row, starts, es, K, fi, 0.0, 0.0, sgn * step, 1e-12, vals, ders)
        step *= 2.0
    return np.nan


@njit(cache=True)
def polish(row, starts, es, K, fi, vals, ders):
    """Edges (lo, hi) of the band containing offset 0, plus a status code."""
    chain(row, starts, es, K, 0.0, vals, ders)
    f0 = vals[fi]
    d0 = ders[fi]
    if not abs(f0) < 2.0 or d0 == 0.0:
        return np.nan, np.nan, REF_OUTSIDE
    h = (2.0 - abs(f0)) / abs(d0) + 1e-300
    sgn = 1.0 if d0 > 0.0 else -1.0
    # increasing f: hi edge where f = +2; decreasing: hi edge where f = -2
    hi = _edge(row, starts, es, K, fi, 2.0 * sgn, 0.0, 0.5 * h, vals, ders)
    lo = _edge(row, starts, es, K, fi, -2.0 * sgn, 0.0, -0.5 * h, vals, ders)
    if math.isnan(hi) or math.isnan(lo) or not lo < hi:
        return lo, hi, EDGE_BRACKET
    return lo, hi, OK


@njit(cache=True)
def _children_in_band(row, starts, es, K, lo, hi, fi_t, p, ntheta, theta_den,
                      out_d, out_w, base, vals, ders):
    """Bands of x_(K,p) inside a band of t_K, bracketed by separators.

    Separators sit where t_K = 2cos(theta) with theta = (j + 1/2) pi / theta_den,
    j = 0..ntheta-1; consecutive ones bracket one zero of x_(K,p) each.
    Returns the number of children written, or -1 on a separator failure.
    """
    seps = np.empty(ntheta)
    for j in range(ntheta):
        th = (j + 0.5) * math.pi / theta_den
        c = 2.0 * math.cos(th)
        s = rtsafe(row, starts, es, K, fi_t, c, lo, hi, 1e-6, vals, ders)
        if math.isnan(s):
            return -1
        seps[j] = s
    seps.sort()
    fi = 1 + p
    prev = 0.0
    for j in range(ntheta):
        chain(row, starts, es, K, seps[j], vals, ders)
        v = vals[fi]
        if not abs(v) > 2.0:
            return -1
        if j > 0 and (v > 0.0) == (prev > 0.0):
            return -1
        prev = v
    n = 0
    for j in range(ntheta - 1):
        z = rtsafe(row, starts, es, K, fi, 0.0, seps[j], seps[j + 1], 1e-9, vals, ders)
        if math.isnan(z):
            return -1
        chain(row, starts, es, K, z, vals, ders)
        out_d[base + n] = z
        out_w[base + n] = 4.0 / abs(ders[fi]) if ders[fi] != 0.0 else 0.0
        n += 1
    return n


@njit(cache=True)
def process(rows, starts, es, K, kinds, find_children, lo_out, hi_out, status,
            child_d, child_w, child_kind, nchild):
    """Polish every band's edges in its own frame and locate its children.

    Children of a band of type II/III: the bands of x_(K,e) (type III) and of
    x_(K,e+1) (type I).  Type I: the single band of x_(K,e) (type II).
    """
    n = rows.shape[0]
    e = es[K]
    vals = np.empty(e + 4)
    ders = np.empty(e + 4)
    for i in range(n):
        row = rows[i]
        kind = kinds[i]
        fi = 2 if kind == KIND_I else 0
        lo, hi, st = polish(row, starts, es, K, fi, vals, ders)
        lo_out[i] = lo
        hi_out[i] = hi
        status[i] = st
        nchild[i] = 0
        if st != OK or not find_children:
            continue
        if kind == KIND_I:
            if e == 1:
                child_d[i, 0] = 0.0
                child_w[i, 0] = hi - lo
                child_kind[i, 0] = KIND_II
                nchild[i] = 1
                continue
            fi_c = 1 + e
            chain(row, starts, es, K, lo, vals, ders)
            va = vals[fi_c]
            chain(row, starts, es, K, hi, vals, ders)
            vb = vals[fi_c]
            if not (abs(va) >= 2.0 and abs(vb) >= 2.0 and (va > 0.0) != (vb > 0.0)):
                status[i] = TYPE_I_CHILD
                continue
            z = rtsafe(row, starts, es, K, fi_c, 0.0, lo, hi, 1e-9, vals, ders)
            if math.isnan(z):
                status[i] = SOLVE_FAILED
                continue
            chain(row, starts, es, K, z, vals, ders)
            child_d[i, 0] = z
            child_w[i, 0] = 4.0 / abs(ders[fi_c])
            child_kind[i, 0] = KIND_II
            nchild[i] = 1
            continue
        # type II: separators (j+1/2)pi/(p+1), j=0..p ; type III: (j+1/2)pi/p, j=0..p-1
        base = 0
        for p in (e, e + 1):
            if kind == KIND_II:
                nth = p + 1
                den = p + 1.0
            else:
                nth = p
                den = float(p)
            if nth < 2:
                continue
            got = _children_in_band(row, starts, es, K, lo, hi, 0, p, nth, den,
                                    child_d[i], child_w[i], base, vals, ders)
            if got < 0:
                status[i] = SEPARATORS
                break
            ck = KIND_III if p == e else KIND_I
            for q in range(base, base + got):
                child_kind[i, q] = ck
            base += got
        nchild[i] = base


@njit(cache=True)
def sample_checks(rows, starts, es, K, kinds, lo, hi, out_flags, out_vals):
    """Sampled band invariants and type predicates at 5 points per band.

    out_vals[i] receives (f(lo), f(hi)) for reporting.
    """
    n = rows.shape[0]
    e = es[K]
    vals = np.empty(e + 4)
    ders = np.empty(e + 4)
    fs = np.empty(5)
    for i in range(n):
        row = rows[i]
        kind = kinds[i]
        fi = 2 if kind == KIND_I else 0
        flags = 0
        all_tprev = True
        all_xm = True
        any_tcur = False
        for s in range(5):
            d = lo[i] + (hi[i] - lo[i]) * s / 4.0
            if s == 4:
                d = hi[i]
            chain(row, starts, es, K, d, vals, ders)
            fs[s] = vals[fi]
            t_prev = vals[1]
            t_cur = vals[0]
            xm = t_cur * t_prev - vals[2]
            if abs(t_prev) > 2.0 + CONTAIN_TOL:
                all_tprev = False
            if abs(xm) > 2.0 + CONTAIN_TOL:
                all_xm = False
            if abs(t_cur) <= 2.0:
                any_tcur = True
        for s in range(1, 4):
            if abs(fs[s]) > 2.0:
                flags |= FLAG_INTERIOR
        inc = fs[4] > fs[0]
        for s in range(4):
            if (fs[s + 1] > fs[s]) != inc:
                flags |= FLAG_MONOTONE
        if abs(abs(fs[0]) - 2.0) > EDGE_VALUE_TOL or abs(abs(fs[4]) - 2.0) > EDGE_VALUE_TOL:
            flags |= FLAG_ENDPOINT
        if kind == KIND_I:
            if not all_tprev:
                flags |= FLAG_KIND
            if any_tcur:
                flags |= FLAG_ITEM6
        elif kind == KIND_II:
            if not all_xm:
                flags |= FLAG_KIND
            if all_tprev:
                flags |= FLAG_ITEM6
        else:
            if not all_tprev:
                flags |= FLAG_KIND
            if all_xm:
                flags |= FLAG_ITEM6
        out_flags[i] = flags
        out_vals[i, 0] = fs[0]
        out_vals[i, 1] = fs[4]
