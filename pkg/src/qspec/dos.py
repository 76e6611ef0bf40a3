"""Density of states two ways: band counting and finite-volume eigenvalue counting.

Band counting gives each of the q_k bands of sigma_(k+1,0) the mass 1/q_k.
Eigenvalue counting divides the Sturm count of H_n on an interval by n, with n
a convergent denominator.  The two share no code below the potential itself.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from fractions import Fraction

import gmpy2
from gmpy2 import mpfr

from .bands import Band, build_generating_tree, enumerate_bands, polish_endpoints
from .contfrac import denominators
from .errors import CountMismatch, ValidationError
from .schrodinger import ModelParams, eig_count_interval, restriction

# above this many bands, sigma_(k+1,0) is read off the generating tree
ENUMERATION_LIMIT = 1500


@dataclass(frozen=True)
class DOSApprox:
    """N_k: mass 1/q_k on each band of sigma_(k+1,0), linear inside a band."""

    k: int
    weight: Fraction
    bands: tuple[Band, ...]
    bits: int = 256

    def __post_init__(self):
        if len(self.bands) * self.weight != 1:
            raise CountMismatch(f"{len(self.bands)} bands at weight {self.weight} do not sum to 1")

    @property
    def total_mass(self) -> Fraction:
        return len(self.bands) * self.weight

    def N(self, x) -> float:
        """Band mass below x; a band containing x contributes pro rata."""
        with gmpy2.context(gmpy2.get_context(), precision=self.bits + 64):
            x = mpfr(x)
            his = [b.hi for b in self.bands]
            below = bisect.bisect_left(his, x)  # bands with hi < x
            frac = 0.0
            if below < len(self.bands):
                b = self.bands[below]
                if b.lo < x:
                    frac = float((x - b.lo) / (b.hi - b.lo))
        return float(self.weight) * (below + frac)

    def mass(self, lo, hi) -> float:
        if lo > hi:
            raise ValidationError("need lo <= hi")
        return self.N(hi) - self.N(lo)

    def steps(self) -> list[tuple[object, float]]:
        """(x, N(x)) at every band endpoint, in order."""
        out = []
        w = float(self.weight)
        for i, b in enumerate(self.bands):
            out.append((b.lo, w * i))
            out.append((b.hi, w * (i + 1)))
        return out


def _sigma_from_tree(params: ModelParams, k: int) -> list[Band]:
    tree = build_generating_tree(params, k)
    lev = tree.levels[k]
    idx = [i for i in range(len(lev)) if lev.kind[i] != 0]
    ends = polish_endpoints(tree, k, idx)
    return sorted((Band(lo, hi, k + 1, 0) for lo, hi in ends), key=lambda b: b.lo)


def dos_from_bands(params: ModelParams, k: int, method: str = "auto") -> DOSApprox:
    """N_k from the q_k bands of sigma_(k+1,0).

    ``method`` is "enumerate" (global solve of x_(k+1,0)), "tree" (kinds II and
    III of the generating tree at level k, which are the same bands), or
    "auto" (enumerate up to ENUMERATION_LIMIT bands).
    """
    params.require_bands()
    if k < 0:
        raise ValidationError("k must be >= 0")
    q = denominators(params.cf, k)[k]
    if method == "auto":
        method = "enumerate" if q <= ENUMERATION_LIMIT else "tree"
    if method == "enumerate":
        bands = enumerate_bands(params, k + 1, 0)
    elif method == "tree":
        if k == 0:
            raise ValidationError("the tree method needs k >= 1")
        bands = _sigma_from_tree(params, k)
    else:
        raise ValidationError(f"unknown method {method!r}")
    if len(bands) != q:
        raise CountMismatch(f"sigma_({k + 1},0) has {len(bands)} bands, expected q_{k} = {q}")
    return DOSApprox(k, Fraction(1, q), tuple(bands), params.precision_bits)


def dos_direct(params: ModelParams, n: int, lo, hi, op=None) -> float:
    """(eigenvalues of H_n in [lo, hi]) / n."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    return eig_count_interval(params, n, lo, hi, op) / n


@dataclass(frozen=True)
class DOSComparison:
    k: int
    n: int
    rows: tuple[tuple[object, object, float, float], ...]  # (lo, hi, band mass, direct)

    @property
    def max_discrepancy(self) -> float:
        return max((abs(a - b) for _, _, a, b in self.rows), default=0.0)


def dos_compare(params: ModelParams, k: int, intervals, approx: DOSApprox | None = None) -> DOSComparison:
    """Band-count mass vs eigenvalue count at n = q_{k+2}, per interval."""
    lam = params.lam
    for lo, hi in intervals:
        if lo > hi or lo < -3 or hi > lam + 3:
            raise ValidationError(f"interval [{lo}, {hi}] must lie within [-3, lambda + 3]")
    approx = approx or dos_from_bands(params, k)
    n = denominators(params.cf, k + 2)[k + 2]
    op = restriction(params, n)
    rows = tuple((lo, hi, approx.mass(lo, hi), dos_direct(params, n, lo, hi, op)) for lo, hi in intervals)
    return DOSComparison(k, n, rows)
