"""Bands of sigma_(k,p), the spectral generating tree, and its checks.

Two independent band finders live here.

* :func:`enumerate_bands` works globally.  The N - 1 Dirichlet eigenvalues of
  one period of the word behind x_(k,p) sit one per spectral gap, so they
  bracket the N bands.  Everything is then solved in mpfr.
* :func:`build_generating_tree` works locally.  Each band is handled in its
  own frame around a high-precision reference orbit (see ``_kernels``), and
  its children are searched only inside it.

Band kinds at level k (with e = a_{k+1}):

* I: a band of x_(k,1) = m_k inside a band of t_{k-1}.  It has 1 child of kind II.
* II: a band of t_k inside a band of x_(k,-1).  It has e+1 children of kind I
  and e of kind III.
* III: a band of t_k inside a band of t_{k-1}.  It has e children of kind I
  and e-1 of kind III.

Level 0 holds the formal roots [-2, 2] (III) and [lam-2, lam+2] (I).  They
follow from the definitions once sigma_(0,0) is taken to be the full line.
Level 1 is built by global enumeration and classification.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import gmpy2
import numpy as np
from gmpy2 import mpfr
from scipy.linalg import eigvalsh_tridiagonal

from . import _kernels as kern
from .contfrac import denominators
from .errors import ClassificationError, CountMismatch, PrecisionExhausted, ValidationError
from .schrodinger import ModelParams, potential, sturm_count, sturmian_bits
from .tracemap import MAX_BITS, alignment_probe, fricke_tolerance, fricke_value

KINDS = ("I", "II", "III")
KIND_CODE = {"I": 0, "II": 1, "III": 2}
GUARD_BITS = 96
ENDPOINT_ABS_TOL = 1e-30
COVER_FLOAT_TOL = 1e-11  # dense float eigenvalues vs mpfr band endpoints


# -- combinatorial and length matrices -----------------------------------------

def transition_matrix(a: int) -> np.ndarray:
    """T: a band of kind i spawns T[i, j] children of kind j (order I, II, III)."""
    return np.array([[0, 1, 0], [a + 1, 0, a], [a, 0, a - 1]], dtype=object)


def length_matrices(a: int, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """(P, Q): per-step upper and lower length factors."""
    u = 3.0 / (a * (lam - 8.0))
    v = 1.0 / ((lam + 5.0) * (a + 2.0) ** 3)
    P = np.array([[0.0, (3.0 / (lam - 8.0)) ** (a - 1), 0.0], [u, 0.0, u], [u, 0.0, u]])
    Q = np.array([[0.0, (1.0 / (lam + 5.0)) ** (a - 1), 0.0], [v, 0.0, v], [v, 0.0, v]])
    return P, Q


def log_length_factors(a: int, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Logs of P and Q (zero entries map to -inf; they never occur on admissible paths)."""
    lu = math.log(3.0) - math.log(a) - math.log(lam - 8.0)
    lv = -math.log(lam + 5.0) - 3.0 * math.log(a + 2.0)
    ninf = -math.inf
    logP = np.array([[ninf, (a - 1) * (math.log(3.0) - math.log(lam - 8.0)), ninf],
                     [lu, ninf, lu], [lu, ninf, lu]])
    logQ = np.array([[ninf, -(a - 1) * math.log(lam + 5.0), ninf],
                     [lv, ninf, lv], [lv, ninf, lv]])
    return logP, logQ


def band_length_bounds(params: ModelParams, band: Band | tuple[str, ...]) -> tuple[float, float]:
    """(4 prod Q, 4 prod P) along the type index; step l -> l+1 uses a_{l+1}."""
    tau = band.type_index if isinstance(band, Band) else tuple(band)
    lo = hi = 4.0
    for l in range(len(tau) - 1):
        P, Q = length_matrices(params.cf.coefficient(l + 1), params.lam)
        i, j = KIND_CODE[tau[l]], KIND_CODE[tau[l + 1]]
        lo *= Q[i, j]
        hi *= P[i, j]
    return lo, hi


# -- band values ------------------------------------------------------------------

@dataclass(frozen=True)
class Band:
    """A closed interval of some sigma_(k,p).

    For enumerated bands (k, p) are the trace indices.  For generating bands
    ``k`` is the level and ``p`` the trace index of the band's own function:
    kind I bands belong to sigma_(k,1), kinds II and III to sigma_(k+1,0).
    """

    lo: object
    hi: object
    k: int
    p: int
    kind: str | None = None
    type_index: tuple[str, ...] = ()
    parent: tuple[int, int] | None = None
    ident: tuple[int, int] | None = None

    @property
    def width(self) -> float:
        return float(self.hi - self.lo)

    @property
    def trace(self) -> tuple[int, int]:
        if self.kind in ("II", "III"):
            return (self.k + 1, 0)
        return (self.k, self.p)

    def contains(self, other: Band, tol=0) -> bool:
        return self.lo - tol <= other.lo and other.hi <= self.hi + tol


# -- mpfr evaluation and scalar solving -------------------------------------------------

def _coeffs(params: ModelParams, n: int) -> list[int]:
    return params.cf.coefficients(n)


def _make_x(params: ModelParams, k: int, p: int):
    """Fast mpfr evaluator of x_(k,p) (caller sets the context)."""
    es = _coeffs(params, k)
    lam = mpfr(params.lam)
    two = mpfr(2)

    def f(E):
        tp, tc, tm = two, E, E - lam
        for e in es:
            x0, x1 = tp, tm
            for _ in range(e - 1):
                x0, x1 = x1, tc * x1 - x0
            tp, tc, tm = tc, x1, tc * x1 - x0
        if p == -1:
            return tp * tc - tm
        if p == 0:
            return tp
        x0, x1 = tp, tm
        for _ in range(p - 1):
            x0, x1 = x1, tc * x1 - x0
        return x1

    return f


def _make_state(params: ModelParams, k: int):
    es = _coeffs(params, k)
    lam = mpfr(params.lam)
    two = mpfr(2)

    def s(E):
        tp, tc, tm = two, E, E - lam
        for e in es:
            x0, x1 = tp, tm
            for _ in range(e - 1):
                x0, x1 = x1, tc * x1 - x0
            tp, tc, tm = tc, x1, tc * x1 - x0
        return tp, tc, tm

    return s


def _compress(x):
    """x on [-4, 4], continued C^1 by +-(4 + 4 log(|x|/4)) outside.

    Traces span hundreds of decades across a gap; on the log scale the secant
    steps stay useful.  The outer branch only steers the solver, so float
    accuracy suffices there.
    """
    if -4 <= x <= 4:
        return x
    m, e = gmpy2.frexp(abs(x) / 4)
    v = 4 + 4 * (math.log(float(m)) + e * _LN2)
    return mpfr(v) if x > 0 else mpfr(-v)


_LN2 = math.log(2)


def _anderson_bjorck(f, a, b, fa, fb, tol, maxit=400):
    """Bracketed root of f in [a, b] (fa, fb of opposite sign)."""
    if fa == 0:
        return a
    if fb == 0:
        return b
    for _ in range(maxit):
        if abs(b - a) <= tol:
            break
        c = b - fb * (b - a) / (fb - fa)
        if abs(c - b) < tol / 2:
            # a step below tolerance (or one ulp): overshoot by tol/2 so the
            # next sign change closes the bracket
            c = b + tol / 2 if a > b else b - tol / 2
        if not (min(a, b) < c < max(a, b)):
            c = (a + b) / 2
        fc = f(c)
        if fc == 0:
            return c
        if (fc > 0) != (fb > 0):
            a, fa = b, fb
        else:
            m = 1 - fc / fb
            fa = fa * (m if m > 0 else mpfr(0.5))
        b, fb = c, fc
    return (a + b) / 2 if abs(b - a) > tol else b


def _word(params: ModelParams, k: int, p: int) -> list[float]:
    """Potential word of one period whose monodromy trace is x_(k,p)."""
    lam = params.lam
    if p == -1:
        if k == 0:
            return [-lam]
        a = params.cf.coefficient(k)
        if k == 1 and a == 1:
            raise ValidationError("x_(1,-1) is the constant 2 when a_1 = 1; its set is the full line")
        return _word(params, k - 1, a - 1)
    if k == 0:
        if p == 0:
            raise ValidationError("x_(0,0) is the constant 2; sigma_(0,0) is the full line")
        return [0.0] * (p - 1) + [lam]
    q = denominators(params.cf, k)
    cur = [lam if b else 0.0 for b in sturmian_bits(params.cf, 1, q[k])]
    prev = [0.0] if k == 1 else cur[: q[k - 1]]
    return cur * p + prev


def _dirichlet_brackets(word: list[float], f, bits: int):
    """Bracketing points mu_0 < ... < mu_N with |x| > 2 and alternating signs.

    Gap j (between bands j and j+1) holds the j-th Dirichlet eigenvalue of the
    word with its last site removed, and x has sign (-1)^(N-j) there.  Float
    eigenvalues seed the points; clustered bands below float resolution are
    separated by exact inertia bisection.
    """
    N = len(word)
    lo_b = mpfr(min(word) - 3.0)
    hi_b = mpfr(max(word) + 3.0)
    if N == 1:
        return [lo_b, hi_b]
    d = np.asarray(word[:-1], dtype=float)
    mus = list(eigvalsh_tridiagonal(d, np.ones(N - 2)) if N > 2 else d)
    pts = [lo_b] + [mpfr(float(m)) for m in mus] + [hi_b]
    vals = [f(x) for x in pts]
    want = [(N - j) % 2 == 0 for j in range(N + 1)]
    for j in range(1, N):
        if not (abs(vals[j]) > 2 and (vals[j] > 0) == want[j]):
            found = _step_off(f, pts[j - 1], pts[j], pts[j + 1], want[j])
            if found is not None:
                pts[j], vals[j] = found
    # a misplaced point breaks the ordering next to it; exact points are
    # final, so each round strictly shrinks the set of suspects
    diag, exact = None, set()
    bad = [j for j in range(1, N) if not _bracket_ok(pts, vals, want, j)]
    while bad:
        if diag is None:
            diag = [mpfr(v) for v in word[:-1]]
        for j in bad:
            # the point itself first, its neighbours once it is exact
            todo = [j] if j not in exact else [j - 1, j + 1]
            for i in todo:
                if 0 < i < N and i not in exact:
                    pts[i], vals[i] = _exact_gap_point(diag, i, want[i], f, bits, pts[i])
                    exact.add(i)
        bad = [j for j in range(1, N) if not _bracket_ok(pts, vals, want, j)
               and any(0 < i < N and i not in exact for i in (j - 1, j, j + 1))]
    for j in range(1, N):
        # a Dirichlet value may sit exactly on a band edge; move it into the gap
        if abs(vals[j]) <= 2 * (1 + mpfr(2) ** (-bits // 2)):
            pts[j], vals[j] = _into_gap(f, pts, vals, j)
    # N + 1 increasing points with alternating signs around a degree-N
    # polynomial isolate exactly one band per interval
    for j in range(N + 1):
        if not (abs(vals[j]) > 2 and (vals[j] > 0) == want[j]
                and (j == 0 or pts[j - 1] < pts[j])):
            raise CountMismatch(f"Dirichlet bracket {j} of {N} failed to separate bands")
    return pts


def _bracket_ok(pts, vals, want, j) -> bool:
    return (abs(vals[j]) > 2 and (vals[j] > 0) == want[j]
            and pts[j - 1] < pts[j] < pts[j + 1])


def _into_gap(f, pts, vals, j):
    """A point next to pts[j], strictly inside its gap (|x| > 2, same sign)."""
    mu, sgn = pts[j], vals[j] > 0
    for i in range(1, 200):
        for side in (-1, 1):
            c = mu + (pts[j + side] - mu) / mpfr(2) ** i
            v = f(c)
            if abs(v) > 2 and (v > 0) == sgn:
                return c, v
    raise CountMismatch("could not step off a degenerate Dirichlet point")


def _step_off(f, left, mu, right, want: bool):
    """A gap point near a float Dirichlet value that landed in (or next to) a band.

    Steps geometrically away from ``mu`` on both sides, staying strictly
    between the neighbouring points.  The sign test rejects the gap on the
    far side of the band, whose trace has the other sign.
    """
    d = mpfr(2.0 ** -50) * max(abs(mu), 1)
    for _ in range(40):
        for c in (mu - d, mu + d):
            if left < c < right:
                v = f(c)
                if abs(v) > 2 and (v > 0) == want:
                    return c, v
        d *= 4
    return None


def _exact_gap_point(diag, j: int, want: bool, f, bits: int, guess):
    """A point of gap j by mpfr bisection on inertia.

    Inside gap j the count below is j-1 or j; the neighbouring gaps with
    those counts have the other sign, so count and sign together pin gap j.
    """
    lo, hi = min(diag) - mpfr(2.5), max(diag) + mpfr(2.5)
    r = mpfr(1e-11) * max(abs(guess), 1)
    if _count_below(diag, guess - r) < j <= _count_below(diag, guess + r):
        lo, hi = guess - r, guess + r
    for _ in range(4 * bits):
        mid = (lo + hi) / 2
        c = _count_below(diag, mid)
        v = f(mid)
        if abs(v) > 2 and (v > 0) == want and j - 1 <= c <= j:
            return mid, v
        if c >= j:
            hi = mid
        else:
            lo = mid
    raise CountMismatch(f"gap {j} could not be separated from its bands")


def _count_below(diag, x) -> int:
    count = 0
    d = None
    for v in diag:
        d = (v - x) if d is None else (v - x) - 1 / d
        if d == 0:
            d = mpfr("1e-300")  # a vanishing pivot counts as positive (x nudged up)
        if d < 0:
            count += 1
    return count


def _enumerate(params: ModelParams, k: int, p: int, bits: int | None = None):
    """[(lo, zero, hi)] for every band of sigma_(k,p), in mpfr, sorted."""
    params.require_bands()
    if k < 0 or p < -1:
        raise ValidationError("need k >= 0 and p >= -1")
    bits = bits or params.precision_bits
    while True:
        with gmpy2.context(gmpy2.get_context(), precision=bits):
            f = _make_x(params, k, p)
            word = _word(params, k, p)
            pts = _dirichlet_brackets(word, f, bits)
            tol_rel = mpfr(2) ** (-(bits - 24))
            h = lambda E: _compress(f(E))  # noqa: E731
            edge = 2
            out = []
            for j in range(1, len(pts)):
                a, b = pts[j - 1], pts[j]
                ha, hb = h(a), h(b)
                tol = tol_rel * max(abs(a), abs(b), 1)
                z = _anderson_bjorck(h, a, b, ha, hb, tol)
                s = edge if ha > 0 else -edge
                g1 = lambda E: h(E) - s  # noqa: E731
                g2 = lambda E: h(E) + s  # noqa: E731
                e1 = _anderson_bjorck(g1, a, z, ha - s, -s, tol)
                e2 = _anderson_bjorck(g2, z, b, s, hb + s, tol)
                out.append((e1, z, e2))
            if _fricke_ok(params, k, [z for _, z, _ in out], bits):
                return out
        if bits >= MAX_BITS:
            raise PrecisionExhausted(f"enumeration of sigma_({k},{p}) failed the Fricke check")
        bits *= 2


def _fricke_ok(params: ModelParams, k: int, energies, bits: int) -> bool:
    st = _make_state(params, k)
    lam2 = mpfr(params.lam) ** 2
    for E in energies:
        tp, tc, tm = st(E)
        res = abs(fricke_value(tp, tc, tm) - lam2)
        if not res <= fricke_tolerance(params.lam, bits, max(abs(tp), abs(tc), abs(tm))):
            return False
    return True


def enumerate_bands(params: ModelParams, k: int, p: int, window=None,
                    bits: int | None = None) -> list[Band]:
    """All bands of sigma_(k,p) meeting ``window`` (default: the whole line).

    The count over the whole line always equals the degree of x_(k,p);
    anything else raises CountMismatch.
    """
    if (k, p) == (0, 0):
        raise ValidationError("sigma_(0,0) is the full line and has no bands")
    raw = _enumerate(params, k, p, bits)
    bands = [Band(lo, hi, k, p) for lo, _, hi in raw]
    if window is not None:
        wlo, whi = window
        bands = [b for b in bands if b.hi >= wlo and b.lo <= whi]
    return bands


# -- generating tree ------------------------------------------------------------------

@dataclass
class Level:
    """Compact storage of one level of generating bands.

    Band i spans ``z[i] + lo_off[i]`` to ``z[i] + hi_off[i]``, where z[i] is
    its mpfr reference energy (inside the band).
    """

    k: int
    z: list
    lo_off: np.ndarray
    hi_off: np.ndarray
    kind: np.ndarray
    parent: np.ndarray
    log_lower: np.ndarray
    log_upper: np.ndarray
    flags: np.ndarray
    bits: np.ndarray
    child_counts: np.ndarray | None = None  # (n, 3) realized children by kind
    delta: np.ndarray | None = None  # child reference offset inside the parent frame

    def __len__(self):
        return len(self.z)

    @property
    def widths(self) -> np.ndarray:
        return self.hi_off - self.lo_off

    def lo(self, i: int):
        with gmpy2.context(gmpy2.get_context(), precision=int(self.bits[i]) + 64):
            return self.z[i] + mpfr(self.lo_off[i])

    def hi(self, i: int):
        with gmpy2.context(gmpy2.get_context(), precision=int(self.bits[i]) + 64):
            return self.z[i] + mpfr(self.hi_off[i])

    def kind_counts(self) -> tuple[int, int, int]:
        c = np.bincount(self.kind, minlength=3)
        return int(c[0]), int(c[1]), int(c[2])


@dataclass
class BandTree:
    params: ModelParams
    levels: list[Level]
    beam: int | None = None
    transitions: list[dict] = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def band(self, k: int, i: int) -> Band:
        lev = self.levels[k]
        kind = KINDS[lev.kind[i]]
        par = int(lev.parent[i])
        return Band(lev.lo(i), lev.hi(i), k, 1 if kind == "I" else 0, kind,
                    self.type_index(k, i), (k - 1, par) if par >= 0 else None, (k, i))

    def bands(self, k: int) -> list[Band]:
        return [self.band(k, i) for i in range(len(self.levels[k]))]

    def type_index(self, k: int, i: int) -> tuple[str, ...]:
        tau = []
        while k >= 0 and i >= 0:
            lev = self.levels[k]
            tau.append(KINDS[lev.kind[i]])
            i = int(lev.parent[i])
            k -= 1
        return tuple(reversed(tau))

    def min_width(self, k: int) -> float:
        return float(self.levels[k].widths.min())


def _bits_for(z, w: float, base: int) -> int:
    scale = max(abs(float(z)), 1.0)
    w = max(w, 1e-300)
    need = math.ceil(math.log2(scale / w)) + GUARD_BITS
    return int(min(MAX_BITS, max(base, 32 * math.ceil(need / 32))))


def _layout(es: list[int], K: int):
    starts = np.zeros(K + 1, dtype=np.int64)
    pos = 0
    for j in range(K + 1):
        starts[j] = pos
        pos += es[j] + 3
    return starts, pos


def _reference(z, lam, es: list[int], K: int, bits: int, width: int):
    """Chain values at z for steps 0..K, as floats; escalates precision on a Fricke alarm."""
    while True:
        with gmpy2.context(gmpy2.get_context(), precision=bits):
            lam_m = mpfr(lam)
            zz = mpfr(z)
            tp, tc, tm = mpfr(2), zz, zz - lam_m
            vals = []
            for j in range(K + 1):
                e = es[j]
                x0, x1 = tp, tm
                vals.append(tc)
                vals.append(x0)
                vals.append(x1)
                for _ in range(e):
                    x0, x1 = x1, tc * x1 - x0
                    vals.append(x1)
                if j < K:
                    tp, tc, tm = tc, x0, x1
            res = abs(fricke_value(tp, tc, tm) - lam_m * lam_m)
            if res <= fricke_tolerance(lam, bits, max(abs(tp), abs(tc), abs(tm))):
                return [float(v) for v in vals], bits
        if bits >= MAX_BITS:
            raise PrecisionExhausted(f"reference at level {K} failed the Fricke check at {bits} bits")
        bits = min(2 * bits, MAX_BITS)


@dataclass
class _Pending:
    z: list
    w: list
    kind: list
    parent: list
    log_lower: list
    log_upper: list


def _roots(params: ModelParams) -> Level:
    lam = params.lam
    z = [mpfr(0), mpfr(lam)]
    return Level(
        k=0, z=z, lo_off=np.array([-2.0, -2.0]), hi_off=np.array([2.0, 2.0]),
        kind=np.array([2, 0], dtype=np.uint8), parent=np.array([-1, -1], dtype=np.int32),
        log_lower=np.full(2, math.log(4.0)), log_upper=np.full(2, math.log(4.0)),
        flags=np.zeros(2, dtype=np.uint8), bits=np.array([params.precision_bits] * 2, dtype=np.int32),
    )


def _inside(f, lo, hi, tol=mpfr("1e-9")):
    """|f| <= 2 at five points of [lo, hi] (mpfr)."""
    for s in range(5):
        E = lo + (hi - lo) * s / 4
        if abs(f(E)) > 2 + tol:
            return False
    return True


def _level_one(params: ModelParams) -> tuple[_Pending, dict]:
    """G_1 by global enumeration of sigma_(1,1) and sigma_(2,0), then classification."""
    bits = params.precision_bits
    m_bands = _enumerate(params, 1, 1, bits)
    t_bands = _enumerate(params, 2, 0, bits)
    a1 = params.cf.coefficient(1)
    entries = []
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        t0 = _make_x(params, 1, 0)  # t_0 = E
        xm = None if a1 == 1 else _make_x(params, 1, -1)
        for lo, z, hi in m_bands:
            if _inside(t0, lo, hi):
                entries.append((z, float(hi - lo), 0, lo, hi))
        for lo, z, hi in t_bands:
            in3 = _inside(t0, lo, hi)
            in2 = True if xm is None else _inside(xm, lo, hi)
            if in2 == in3:
                raise ClassificationError(
                    f"level-1 band [{float(lo):.6g}, {float(hi):.6g}] matches {'both' if in2 else 'no'} t-band types")
            entries.append((z, float(hi - lo), 1 if in2 else 2, lo, hi))
    entries.sort(key=lambda t: t[0])
    roots = [(mpfr(-2), mpfr(2), 2), (mpfr(params.lam - 2), mpfr(params.lam + 2), 0)]
    logP, logQ = log_length_factors(a1, params.lam)
    pend = _Pending([], [], [], [], [], [])
    for z, w, kind, lo, hi in entries:
        par = -1
        for r, (rlo, rhi, _) in enumerate(roots):
            if rlo <= lo and hi <= rhi:
                par = r
        if par < 0:
            raise ClassificationError(f"level-1 band near {float(z):.6g} lies in no level-0 root")
        pk = roots[par][2]
        pend.z.append(z)
        pend.w.append(w)
        pend.kind.append(kind)
        pend.parent.append(par)
        pend.log_lower.append(math.log(4.0) + logQ[pk, kind])
        pend.log_upper.append(math.log(4.0) + logP[pk, kind])
    return pend, {"sigma_(1,1)": len(m_bands), "sigma_(2,0)": len(t_bands)}


def _seal(params: ModelParams, pend: _Pending, K: int, es: list[int], find_children: bool,
          chunk: int = 4096):
    """Polish, check, and (optionally) expand one level."""
    n = len(pend.z)
    starts, L = _layout(es, K)
    es_arr = np.asarray(es[: K + 1], dtype=np.int64)
    e = es[K]
    cmax = 2 * e + 1
    lo_off = np.empty(n)
    hi_off = np.empty(n)
    flags = np.zeros(n, dtype=np.uint8)
    bits_arr = np.empty(n, dtype=np.int32)
    kinds = np.asarray(pend.kind, dtype=np.uint8)
    z = list(pend.z)
    child_d = np.zeros((n, cmax)) if find_children else None
    child_w = np.zeros((n, cmax)) if find_children else None
    child_k = np.zeros((n, cmax), dtype=np.uint8) if find_children else None
    nchild = np.zeros(n, dtype=np.int64)
    lam = params.lam
    base = params.precision_bits
    for c0 in range(0, n, chunk):
        c1 = min(n, c0 + chunk)
        m = c1 - c0
        rows = np.empty((m, L))
        for i in range(m):
            b = _bits_for(z[c0 + i], pend.w[c0 + i], base)
            rows[i], bits_arr[c0 + i] = _reference(z[c0 + i], lam, es, K, b, L)
        st = np.zeros(m, dtype=np.int64)
        lo_c = np.empty(m)
        hi_c = np.empty(m)
        if find_children:
            cd, cw, ck, nc = child_d[c0:c1], child_w[c0:c1], child_k[c0:c1], nchild[c0:c1]
        else:
            cd = np.zeros((m, 1))
            cw = np.zeros((m, 1))
            ck = np.zeros((m, 1), dtype=np.uint8)
            nc = np.zeros(m, dtype=np.int64)
        kern.process(rows, starts, es_arr, K, kinds[c0:c1], find_children, lo_c, hi_c, st, cd, cw, ck, nc)
        for i in np.nonzero(st)[0]:
            _repair(params, z, pend, c0 + int(i), rows, int(i), K, es, es_arr, starts, kinds,
                    find_children, lo_c, hi_c, st, cd, cw, ck, nc, bits_arr)
        lo_off[c0:c1] = lo_c
        hi_off[c0:c1] = hi_c
        fl = np.zeros(m, dtype=np.int64)
        fv = np.zeros((m, 2))
        kern.sample_checks(rows, starts, es_arr, K, kinds[c0:c1], lo_c, hi_c, fl, fv)
        flags[c0:c1] = fl
    return z, lo_off, hi_off, flags, bits_arr, (child_d, child_w, child_k, nchild)


def _repair(params, z, pend, gi, rows, i, K, es, es_arr, starts, kinds, find_children,
            lo_c, hi_c, st, cd, cw, ck, nc, bits_arr):
    """Re-reference a band whose first pass failed, at higher precision and a better center."""
    L = rows.shape[1]
    fi = 2 if kinds[gi] == 0 else 0
    bits = int(bits_arr[gi])
    for _ in range(4):
        bits = min(2 * bits, MAX_BITS)
        row = rows[i]
        d = kern.recenter(row, starts, es_arr, K, fi, max(pend.w[gi], 1e-300))
        if not math.isnan(d) and d != 0.0:
            with gmpy2.context(gmpy2.get_context(), precision=bits):
                z[gi] = z[gi] + mpfr(d)
        rows[i], bits_arr[gi] = _reference(z[gi], params.lam, es, K, bits, L)
        one = slice(i, i + 1)
        kern.process(rows[one], starts, es_arr, K, kinds[gi:gi + 1], find_children,
                     lo_c[one], hi_c[one], st[one], cd[one], cw[one], ck[one], nc[one])
        if st[i] == kern.OK:
            return
        if bits >= MAX_BITS:
            break
    raise CountMismatch(f"level {K} band near {float(z[gi]):.17g}: kernel status {int(st[i])}")


def build_generating_tree(params: ModelParams, depth: int, beam: int | None = None,
                          chunk: int = 4096) -> BandTree:
    """Levels G_0..G_depth with ancestry, kinds, and realized transition counts.

    With ``beam`` set, only the ``beam`` shortest bands of each kind survive
    each level.  That is enough to follow minimal band lengths deep into
    fast-growing expansions, where the full tree is out of reach.
    """
    params.require_bands()
    if depth < 1:
        raise ValidationError("depth must be >= 1")
    es = _coeffs(params, depth + 1)  # es[j] = a_{j+1}
    levels = [_roots(params)]
    pend, info = _level_one(params)
    transitions = []
    for K in range(1, depth + 1):
        more = K < depth
        z, lo, hi, flags, bits, (cd, cw, ck, nc) = _seal(params, pend, K, es, more, chunk)
        lev = Level(K, z, lo, hi, np.asarray(pend.kind, dtype=np.uint8),
                    np.asarray(pend.parent, dtype=np.int32), np.asarray(pend.log_lower),
                    np.asarray(pend.log_upper), flags, bits)
        keep = None
        if beam is not None and len(lev) > 3 * beam:
            keep = _beam_select(lev, beam)
        if more:
            counts = np.zeros((len(lev), 3), dtype=np.int64)
            for i in range(len(lev)):
                for q in range(nc[i]):
                    counts[i, ck[i, q]] += 1
            lev.child_counts = counts
        if keep is not None:
            lev = _subset(lev, keep)
            if more:
                cd, cw, ck, nc = cd[keep], cw[keep], ck[keep], nc[keep]
        levels.append(lev)
        transitions.append(_transition_record(lev, es[K]) if more else {})
        if more:
            pend = _children(params, lev, cd, cw, ck, nc, es[K])
    tree = BandTree(params, levels, beam, transitions)
    tree.stats["level1_enumeration"] = info
    return tree


def polish_endpoints(tree: BandTree, k: int, indices=None) -> list[tuple[object, object]]:
    """Endpoints of generating bands at level k refined to full mpfr precision.

    Stored endpoints carry float offsets from an mpfr reference, i.e. about
    1e-16 of the band width.  Each edge is re-solved for x = +-2 on the band's
    own trace (x_(k,1) for kind I, x_(k+1,0) otherwise) by a bracketed secant
    seeded at the stored value.
    """
    lev = tree.levels[k]
    params = tree.params
    if k == 0:
        raise ValidationError("level-0 roots are exact intervals")
    idx = range(len(lev)) if indices is None else indices
    evals: dict = {}
    out = []
    for i in idx:
        bits = int(lev.bits[i])
        kind = int(lev.kind[i])
        key = (kind == 0, bits)
        with gmpy2.context(gmpy2.get_context(), precision=bits):
            if key not in evals:
                evals[key] = _make_x(params, k, 1) if kind == 0 else _make_x(params, k + 1, 0)
            f = evals[key]
            w = mpfr(float(lev.widths[i]))
            edges = []
            for e in (lev.lo(i), lev.hi(i)):
                e = +e  # round to working precision
                s = 2 if f(e) > 0 else -2
                edges.append(_polish_edge(lambda E: f(E) - s, e, w, bits))
            out.append((edges[0], edges[1]))
    return out


def _polish_edge(g, e, w, bits: int):
    r = w * mpfr(2.0 ** -40)
    ge = g(e)
    if ge == 0:
        return e
    for _ in range(60):
        a, b = e - r, e + r
        ga, gb = g(a), g(b)
        if (ga > 0) != (gb > 0):
            return _anderson_bjorck(g, a, b, ga, gb, abs(e) * mpfr(2) ** (-(bits - 8)))
        r *= 4
    raise CountMismatch("could not bracket a band edge near its stored value")


def _beam_select(lev: Level, beam: int) -> np.ndarray:
    w = lev.widths
    keep = []
    for kind in range(3):
        idx = np.nonzero(lev.kind == kind)[0]
        keep.extend(idx[np.argsort(w[idx], kind="stable")[:beam]].tolist())
    return np.array(sorted(keep), dtype=np.int64)


def _subset(lev: Level, keep: np.ndarray) -> Level:
    return Level(lev.k, [lev.z[i] for i in keep], lev.lo_off[keep], lev.hi_off[keep], lev.kind[keep],
                 lev.parent[keep], lev.log_lower[keep], lev.log_upper[keep], lev.flags[keep],
                 lev.bits[keep], None if lev.child_counts is None else lev.child_counts[keep])


def _transition_record(lev: Level, e: int) -> dict:
    T = transition_matrix(e)
    rec = {"a": e, "counts": {}, "mismatched_parents": 0}
    for pk in range(3):
        idx = lev.kind == pk
        if not idx.any():
            continue
        cc = lev.child_counts[idx]
        expected = np.array([int(T[pk, j]) for j in range(3)])
        rec["mismatched_parents"] += int(np.any(cc != expected, axis=1).sum())
        for j in range(3):
            rec["counts"][(KINDS[pk], KINDS[j])] = int(cc[:, j].sum())
    return rec


def _children(params: ModelParams, lev: Level, cd, cw, ck, nc, e: int) -> _Pending:
    logP, logQ = log_length_factors(e, params.lam)
    pend = _Pending([], [], [], [], [], [])
    base = params.precision_bits
    ctxs: dict[int, object] = {}
    for i in range(len(lev)):
        n = int(nc[i])
        if n == 0:
            continue
        order = np.argsort(cd[i, :n], kind="stable")
        zp = lev.z[i]
        pk = int(lev.kind[i])
        for q in order:
            d = float(cd[i, q])
            w = float(cw[i, q])
            kind = int(ck[i, q])
            b = _bits_for(zp, w, base)
            ctx = ctxs.get(b)
            if ctx is None:
                ctx = ctxs[b] = gmpy2.context(precision=b)
            pend.z.append(ctx.add(zp, d) if d != 0.0 else zp)
            pend.w.append(w)
            pend.kind.append(kind)
            pend.parent.append(i)
            pend.log_lower.append(lev.log_lower[i] + logQ[pk, kind])
            pend.log_upper.append(lev.log_upper[i] + logP[pk, kind])
    return pend


# -- verification ------------------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class VerifyReport:
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        return [f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}" for c in self.checks]


def _predicted_counts(params: ModelParams, depth: int) -> list[np.ndarray]:
    """Kind-count vectors of G_0..G_depth from the roots and the T matrices."""
    v = np.array([1, 0, 1], dtype=object)
    out = [v]
    for K in range(depth):
        v = v.dot(transition_matrix(params.cf.coefficient(K + 1)))
        out.append(v)
    return out


def verify_tree(tree: BandTree, tol: float = ENDPOINT_ABS_TOL, global_limit: int = 1500,
                probe: bool = True) -> VerifyReport:
    """Pass/fail for every structural claim the tree can be checked against."""
    if global_limit < 1:
        raise ValidationError("global_limit must be >= 1")
    params = tree.params
    checks: list[Check] = []
    q = denominators(params.cf, tree.depth + 1)

    # kind counts against T products (only meaningful without a beam)
    if tree.beam is None:
        pred = _predicted_counts(params, tree.depth)
        bad = [k for k in range(tree.depth + 1) if tuple(tree.levels[k].kind_counts()) != tuple(int(x) for x in pred[k])]
        checks.append(Check("level kind counts = T products", not bad,
                            f"levels checked 0..{tree.depth}" + (f", mismatched {bad}" if bad else "")))
        bad = [k for k in range(1, tree.depth + 1)
               if sum(tree.levels[k].kind_counts()[1:]) != q[k]]
        checks.append(Check("#(II+III) at level k = q_k = #sigma_(k+1,0)", not bad,
                            f"mismatched {bad}" if bad else "all levels"))
    mism = sum(t.get("mismatched_parents", 0) for t in tree.transitions)
    checks.append(Check("per-parent child counts = T rows", mism == 0, f"{mism} mismatched parents"))

    # nesting and disjointness
    worst_nest = math.inf
    nest_fail = 0
    coincident = 0
    for k in range(2, tree.depth + 1):
        lev, par = tree.levels[k], tree.levels[k - 1]
        nf, wm, co = _nesting(lev, par, tol)
        nest_fail += nf
        worst_nest = min(worst_nest, wm)
        coincident += co
    nf1 = 0
    for i in range(len(tree.levels[1])):
        p = int(tree.levels[1].parent[i])
        if not (tree.levels[1].lo(i) >= tree.levels[0].lo(p) - tol and tree.levels[1].hi(i) <= tree.levels[0].hi(p) + tol):
            nf1 += 1
    checks.append(Check("nesting: every band inside its parent", nest_fail + nf1 == 0,
                        f"{nest_fail + nf1} violations; smallest relative margin {worst_nest:.3g};"
                        f" {coincident} coincident with parent (a = 1 steps)"))
    dis = 0
    for k in range(1, tree.depth + 1):
        dis += _overlaps(tree.levels[k], tol)
    checks.append(Check("disjointness: bands of one level pairwise disjoint", dis == 0, f"{dis} overlaps"))

    # band invariants and classification
    names = {kern.FLAG_INTERIOR: "interior |x|>2", kern.FLAG_MONOTONE: "non-monotone",
             kern.FLAG_ENDPOINT: "endpoint |x|!=2", kern.FLAG_KIND: "kind predicate",
             kern.FLAG_ITEM6: "triple intersection"}
    for flag, label in names.items():
        cnt = sum(int(np.count_nonzero(lev.flags & flag)) for lev in tree.levels[1:])
        title = ("empty triple intersection (sampled)" if flag == kern.FLAG_ITEM6
                 else f"sampled band check: {label}")
        checks.append(Check(title, cnt == 0, f"{cnt} bands flagged"))

    # length sandwich
    viol = 0
    total = 0
    for lev in tree.levels[1:]:
        lw = np.log(lev.widths)
        viol += int(np.count_nonzero(lw < lev.log_lower - 1e-9) + np.count_nonzero(lw > lev.log_upper + 1e-9))
        total += len(lev)
    checks.append(Check("length sandwich 4prodQ <= |B| <= 4prodP", viol == 0, f"{viol} of {total} bands outside"))

    # global enumeration cross-checks where feasible
    if tree.beam is None:
        checks.extend(_global_checks(tree, q, global_limit))
        checks.append(_cover_check(tree, global_limit))
    if probe:
        from .contfrac import parse_cf
        res = alignment_probe(parse_cf("[1,2]*"), K=5)
        checks.append(Check("exponent alignment probe on [0;1,2,1,2,...]",
                            res["a_{k+1}"] and not res["a_k"],
                            f"a_(k+1): {res['a_{k+1}']}, a_k: {res['a_k']}"))
    return VerifyReport(checks)


def _nesting(lev: Level, par: Level, tol: float):
    fails = 0
    worst = math.inf
    coincident = 0
    for i in range(len(lev)):
        p = int(lev.parent[i])
        with gmpy2.context(gmpy2.get_context(), precision=int(max(lev.bits[i], par.bits[p])) + 64):
            d = float(lev.z[i] - par.z[p])
        lo_gap = d + lev.lo_off[i] - par.lo_off[p]
        hi_gap = par.hi_off[p] - (d + lev.hi_off[i])
        pw = par.hi_off[p] - par.lo_off[p]
        if lo_gap < -tol or hi_gap < -tol:
            fails += 1
        m = min(lo_gap, hi_gap) / pw
        if m <= 1e-12:
            coincident += 1
        else:
            worst = min(worst, m)
    return fails, worst, coincident


def _overlaps(lev: Level, tol: float) -> int:
    bad = 0
    for i in range(len(lev) - 1):
        with gmpy2.context(gmpy2.get_context(), precision=int(max(lev.bits[i], lev.bits[i + 1])) + 64):
            gap = (lev.z[i + 1] - lev.z[i]) + (mpfr(lev.lo_off[i + 1]) - mpfr(lev.hi_off[i]))
        if not gap > 0:
            bad += 1
    return bad


def _global_checks(tree: BandTree, q: list[int], limit: int) -> list[Check]:
    """Independent counts: globally enumerated bands located inside tree parents."""
    params = tree.params
    out = []
    sig_ok, sig_levels = True, []
    for k in range(1, tree.depth + 2):
        if q[k - 1] > limit:
            break
        n = len(_enumerate(params, k, 0))
        sig_levels.append(k)
        if n != q[k - 1]:
            sig_ok = False
    out.append(Check("#bands of sigma_(k,0) = q_(k-1) (global enumeration)", sig_ok,
                     f"levels {sig_levels[0]}..{sig_levels[-1]}" if sig_levels else "none within limit"))
    bad_parents = 0
    checked = []
    max_dev = 0.0
    for K in range(1, tree.depth):
        if q[K + 1] + q[K] > limit:
            break
        lev = tree.levels[K]
        child = tree.levels[K + 1]
        los = [lev.lo(i) for i in range(len(lev))]
        his = [lev.hi(i) for i in range(len(lev))]
        counts = np.zeros((len(lev), 3), dtype=np.int64)
        found = []
        ctx = gmpy2.context(gmpy2.get_context(), precision=int(np.max(lev.bits)) + 64)
        for (kk, pp), ckind in (((K + 1, 1), "m"), ((K + 2, 0), "t")):
            for lo, _, hi in _enumerate(params, kk, pp):
                with ctx:
                    hit = _locate(los, his, lo, hi)
                if hit is None:
                    continue
                j = hit
                if ckind == "m":
                    # an m-band is generating only inside a t_K band, i.e. a II/III parent
                    if lev.kind[j] == 0:
                        continue
                    counts[j, 0] += 1
                else:
                    counts[j, 1 if lev.kind[j] == 0 else 2] += 1
                found.append((lo, hi))
        T = transition_matrix(params.cf.coefficient(K + 1))
        for j in range(len(lev)):
            exp = [int(T[lev.kind[j], c]) for c in range(3)]
            if list(counts[j]) != exp:
                bad_parents += 1
        max_dev = max(max_dev, _endpoint_agreement(child, found))
        checked.append(K)
    if checked:
        out.append(Check("per-parent counts from global enumeration = T rows", bad_parents == 0,
                         f"parent levels {checked[0]}..{checked[-1]}, {bad_parents} mismatched"))
        out.append(Check("tree endpoints agree with global enumeration", max_dev < 1e-9,
                         f"max deviation {max_dev:.3g} band widths"))
    return out


def _cover_check(tree: BandTree, limit: int) -> Check:
    """Spectrum samples from a dense periodic approximant lie in every level's union.

    The period-q_m operator with Bloch phase pi/2 has its eigenvalues on the
    zeros of the period trace, which sit inside sigma_(m+1,0) and hence in the
    generating bands of each level.  LAPACK supplies the samples, so nothing
    here shares code with the trace recursion.
    """
    params = tree.params
    q = denominators(params.cf, tree.depth + 8)
    m = max(j for j in range(len(q)) if q[j] <= limit)
    n = q[m]
    H = np.diag(np.asarray(potential(params, 1, n), dtype=complex))
    if n > 1:
        H += np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
    H[0, n - 1] += 1j
    H[n - 1, 0] -= 1j
    ev = np.linalg.eigvalsh(H)
    slack = COVER_FLOAT_TOL * max(1.0, float(np.max(np.abs(ev))))
    missed = 0
    for lev in tree.levels[1:]:
        lo = np.array([float(lev.lo(i)) for i in range(len(lev))])
        hi = np.array([float(lev.hi(i)) for i in range(len(lev))])
        j = np.searchsorted(lo, ev, side="right") - 1
        inside = (j >= 0) & (ev <= hi[np.maximum(j, 0)] + slack)
        # a sample a hair below the next band's lo (float noise) also counts
        nxt = j + 1 < len(lo)
        inside |= nxt & (ev >= lo[np.minimum(j + 1, len(lo) - 1)] - slack)
        missed += int(np.count_nonzero(~inside))
    return Check("cover: periodic-approximant spectrum inside every level", missed == 0,
                 f"{n} samples (period q_{m}), {missed} misses over {tree.depth} levels")


def _locate(los, his, lo, hi):
    """Index of the band in (los, his) containing [lo, hi], up to 1e-9 of its width."""
    slack = (hi - lo) * mpfr(1e-9)
    j = bisect.bisect_right(los, lo + slack) - 1
    if j < 0 or hi > his[j] + slack:
        return None
    return j


def _endpoint_agreement(child: Level, found: list) -> float:
    """Largest endpoint discrepancy, in units of band width, between tree and enumeration."""
    glob = sorted(found, key=lambda t: t[0])
    los = [g[0] for g in glob]
    worst = 0.0
    with gmpy2.context(gmpy2.get_context(), precision=int(np.max(child.bits)) + 64):
        for i in range(len(child)):
            worst = max(worst, _nearest_deviation(child, i, glob, los))
    return worst


def _nearest_deviation(child: Level, i: int, glob: list, los: list) -> float:
    lo, hi = child.lo(i), child.hi(i)
    j = bisect.bisect_left(los, lo)
    best = math.inf
    w = float(hi - lo)
    for c in (j - 1, j, j + 1):
        if 0 <= c < len(glob):
            dev = max(abs(float(glob[c][0] - lo)), abs(float(glob[c][1] - hi))) / w
            best = min(best, dev)
    return best
