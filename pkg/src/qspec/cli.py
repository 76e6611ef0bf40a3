"""``qspec`` command line: cf, potential, bands, dos, holder, verify.

Exit codes: 0 success, 1 invalid input, 2 computation failure (including a
failed ``verify``).  Every real in the output is a decimal string; mpfr values
carry all digits of their working precision.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from fractions import Fraction

import gmpy2
import numpy as np

from . import __version__
from .bands import KINDS, build_generating_tree, polish_endpoints
from .contfrac import CFExpansion, cf_statistics, cf_value, convergents, denominators, parse_cf
from .dos import dos_direct, dos_from_bands
from .errors import QspecError, ValidationError
from .holder import corollary_asymptotics, dichotomy_check, empirical_exponents, holder_report
from .schrodinger import ModelParams, potential, restriction
from .verify import verify_all

CSV_VERSION = 1
JSON_VERSION = 1
MAX_DEPTH = 40


# -- serialization -----------------------------------------------------------------------

def decimal_string(x) -> str:
    """Decimal text for a real: all significant digits of an mpfr, repr for floats."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)
    if isinstance(x, type(gmpy2.mpfr(0))):
        if gmpy2.is_nan(x) or gmpy2.is_infinite(x):
            return str(float(x))
        if x == 0:
            return "0"
        n = math.ceil(x.precision * math.log10(2)) + 1
        mant, exp, _ = x.digits(10, n)
        sign = "-" if mant.startswith("-") else ""
        mant = mant.lstrip("-").rstrip("0") or "0"
        frac = mant[1:]
        return f"{sign}{mant[0]}{'.' + frac if frac else ''}e{exp - 1:+d}"
    return repr(float(x))


def to_jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [to_jsonable(v) for v in obj]
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        return int(obj)
    return decimal_string(obj)


def _params_block(params: ModelParams, depth: int | None = None) -> dict:
    out = {"cf": params.cf.spec_string(), "lambda": decimal_string(params.lam),
           "precision_bits": params.precision_bits}
    if depth is not None:
        out["depth"] = depth
    return out


def _emit_json(doc: dict, out):
    json.dump(doc, out, indent=2, ensure_ascii=False)
    out.write("\n")


def _emit_csv(name: str, header: list[str], rows, out):
    out.write(f"# qspec-{name} csv v{CSV_VERSION}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else decimal_string(v) for v in r])


# -- argument handling ---------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _interval(text: str) -> tuple[float, float]:
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError:
        raise ValidationError(f"interval must be lo:hi, got {text!r}") from None


def _lambdas(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ValidationError(f"--lambdas must be comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--cf", help='continued fraction, e.g. "1*", "1,2*", "[1,2]*", "k"')
    common.add_argument("--precision", type=int, default=256, help="working precision in bits (default 256)")
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    p = _Parser(prog="qspec", description="Spectra of Sturmian Schrödinger operators.")
    p.add_argument("--version", action="version", version=f"qspec {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("cf", parents=[common], help="convergents and coefficient statistics")
    s.add_argument("--depth", type=int, default=10, help="number of convergents")

    s = sub.add_parser("potential", parents=[common], help="V(1..n)")
    s.add_argument("--lambda", dest="lam", type=float, required=True)
    s.add_argument("--n", type=int, required=True)

    s = sub.add_parser("bands", parents=[common], help="build and export the generating-band tree")
    s.add_argument("--lambda", dest="lam", type=float, required=True)
    s.add_argument("--depth", type=int, required=True)
    s.add_argument("--beam", type=int, help="keep only the shortest N bands per level")
    s.add_argument("--no-polish", action="store_true",
                   help="write tree endpoints (about 16 digits relative to band width) without refinement")

    s = sub.add_parser("dos", parents=[common], help="density of states from bands and from eigenvalue counts")
    s.add_argument("--lambda", dest="lam", type=float, required=True)
    s.add_argument("--depth", type=int, required=True, help="k: use the q_k bands of sigma_(k+1,0)")
    s.add_argument("--n", type=int, help="size of H_n for the direct count (default q_(k+2))")
    s.add_argument("--interval", type=_interval, action="append", default=[], metavar="LO:HI")
    s.add_argument("--method", choices=("auto", "enumerate", "tree"), default="auto")

    s = sub.add_parser("holder", parents=[common], help="Hölder report: theorem values, bounds, exponents")
    s.add_argument("--b", type=int, help="constant coefficient (alternative to --cf)")
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--lambdas", type=_lambdas, help="comma-separated sweep")
    s.add_argument("--depth", type=int, required=True)

    s = sub.add_parser("verify", parents=[common], help="run the invariant suite; nonzero exit on failure")
    s.add_argument("--lambda", dest="lam", type=float, required=True)
    s.add_argument("--depth", type=int, required=True)
    return p


def _cf(args) -> CFExpansion:
    if getattr(args, "b", None) is not None:
        if args.cf is not None:
            raise ValidationError("give --cf or --b, not both")
        if args.b < 1:
            raise ValidationError("--b must be >= 1")
        return CFExpansion.constant(args.b)
    if args.cf is None:
        raise ValidationError("--cf is required")
    return parse_cf(args.cf)


def _depth(args, lo: int = 0) -> int:
    if not lo <= args.depth <= MAX_DEPTH:
        raise ValidationError(f"--depth must be in [{lo}, {MAX_DEPTH}]")
    return args.depth


# -- subcommands -------------------------------------------------------------------------------

def cmd_cf(args, out) -> int:
    cf = _cf(args)
    K = _depth(args, 1)
    conv = convergents(cf, K)
    beta = cf_value(cf, args.precision)
    gm, am = cf_statistics(cf, K)
    if args.format == "csv":
        _emit_csv("cf", ["k", "a_k", "p_k", "q_k"], [(c.k, cf.coefficient(c.k), c.p, c.q) for c in conv], out)
        return 0
    _emit_json({
        "schema": f"qspec.cf/{JSON_VERSION}",
        "cf": cf.spec_string(), "depth": K, "precision_bits": args.precision,
        "beta": decimal_string(beta),
        "coefficients": cf.coefficients(K),
        "convergents": [{"k": c.k, "p": c.p, "q": c.q} for c in conv],
        "statistics": {"geometric_mean": decimal_string(gm), "arithmetic_mean": decimal_string(am)},
    }, out)
    return 0


def cmd_potential(args, out) -> int:
    params = ModelParams(_cf(args), args.lam, args.precision)
    if args.n < 1:
        raise ValidationError("--n must be >= 1")
    V = potential(params, 1, args.n)
    if args.format == "csv":
        _emit_csv("potential", ["n", "V"], [(i, v) for i, v in enumerate(V, start=1)], out)
        return 0
    _emit_json({"schema": f"qspec.potential/{JSON_VERSION}", "params": _params_block(params),
                "n": args.n, "potential": [decimal_string(v) for v in V]}, out)
    return 0


def _band_rows(tree, polish: bool):
    for k, lev in enumerate(tree.levels):
        # level-0 roots are exact; deeper levels are refined on request
        if polish and k > 0:
            ends = polish_endpoints(tree, k)
        else:
            ends = [(lev.lo(i), lev.hi(i)) for i in range(len(lev))]
        for i, (lo, hi) in enumerate(ends):
            par = int(lev.parent[i])
            yield k, i, lo, hi, KINDS[lev.kind[i]], par, ".".join(tree.type_index(k, i))


def cmd_bands(args, out) -> int:
    params = ModelParams(_cf(args), args.lam, args.precision)
    params.require_bands()
    depth = _depth(args)
    if args.beam is not None and args.beam < 1:
        raise ValidationError("--beam must be >= 1")
    tree = build_generating_tree(params, depth, beam=args.beam)
    rows = _band_rows(tree, not args.no_polish)
    if args.format == "csv":
        _emit_csv("bands", ["level", "index", "lo", "hi", "kind", "parent", "type_index"], rows, out)
        return 0
    levels = [{"k": k, "bands": []} for k in range(depth + 1)]
    for k, i, lo, hi, kind, par, tau in rows:
        levels[k]["bands"].append({"lo": decimal_string(lo), "hi": decimal_string(hi), "kind": kind,
                                   "parent": par if par >= 0 else None, "type_index": tau.split(".")})
    _emit_json({"schema": f"qspec.bands/{JSON_VERSION}", "params": _params_block(params, depth),
                "beam": args.beam, "polished": not args.no_polish, "levels": levels}, out)
    return 0


def cmd_dos(args, out) -> int:
    params = ModelParams(_cf(args), args.lam, args.precision)
    params.require_bands()
    k = _depth(args)
    for lo, hi in args.interval:
        if lo > hi or lo < -3 or hi > args.lam + 3:
            raise ValidationError(f"interval {lo}:{hi} must satisfy -3 <= lo <= hi <= lambda + 3")
    if args.n is not None and args.n < 1:
        raise ValidationError("--n must be >= 1")
    approx = dos_from_bands(params, k, args.method)
    if args.format == "csv":
        _emit_csv("dos", ["x", "N"], approx.steps(), out)
        return 0
    n = args.n or denominators(params.cf, k + 2)[k + 2]
    op = restriction(params, n)
    rows = []
    for lo, hi in args.interval:
        band, direct = approx.mass(lo, hi), dos_direct(params, n, lo, hi, op)
        rows.append({"lo": decimal_string(lo), "hi": decimal_string(hi), "band_count": decimal_string(band),
                     "eigenvalue_count": decimal_string(direct), "discrepancy": decimal_string(abs(band - direct))})
    _emit_json({
        "schema": f"qspec.dos/{JSON_VERSION}", "params": _params_block(params), "k": k,
        "band_mass": decimal_string(approx.weight),
        "bands": [{"lo": decimal_string(b.lo), "hi": decimal_string(b.hi), "mass": decimal_string(approx.weight)}
                  for b in approx.bands],
        "comparison": {"n": n, "rows": rows},
    }, out)
    return 0


def cmd_holder(args, out) -> int:
    cf = _cf(args)
    depth = _depth(args, 2)
    if (args.lam is None) == (args.lambdas is None):
        raise ValidationError("give exactly one of --lambda and --lambdas")
    lams = [args.lam] if args.lam is not None else args.lambdas
    if not lams:
        raise ValidationError("--lambdas is empty")
    for lam in lams:
        ModelParams(cf, lam, args.precision).require_theorems()
    reports = []
    for lam in lams:
        params = ModelParams(cf, lam, args.precision)
        b = cf.constant_value
        tree = build_generating_tree(params, depth, beam=None if b is not None else 256)
        rep = holder_report(params, depth, tree=tree)
        dich = dichotomy_check(cf, lam, depth, tree=tree) if depth >= 4 else None
        reports.append((lam, tree, rep, dich))
    if args.format == "csv":
        rows = []
        for lam, tree, _, _ in reports:
            _, _, t = empirical_exponents(tree)
            for j in range(len(t.level)):
                rows.append((lam, t.level[j], t.index[j], KINDS[t.kind[j]], t.log_mass[j],
                             t.log_length[j], t.exponent[j]))
        _emit_csv("exponents", ["lambda", "level", "index", "kind", "log_mass", "log_length", "exponent"],
                  rows, out)
        return 0
    doc = {"schema": f"qspec.holder/{JSON_VERSION}", "cf": cf.spec_string(), "depth": depth,
           "precision_bits": args.precision,
           "reports": [dict(to_jsonable(rep), dichotomy=to_jsonable(dich)) for _, _, rep, dich in reports]}
    if cf.constant_value is not None:
        doc["asymptotics"] = to_jsonable(corollary_asymptotics(cf.constant_value, lams))
    _emit_json(doc, out)
    return 0


def cmd_verify(args, out) -> int:
    params = ModelParams(_cf(args), args.lam, args.precision)
    params.require_bands()
    depth = _depth(args, 1)
    report = verify_all(params, depth)
    for line in report.lines():
        print(line, file=sys.stderr)
    if args.format == "csv":
        _emit_csv("verify", ["check", "passed", "detail"],
                  [(c.name, "true" if c.passed else "false", c.detail) for c in report.checks], out)
    elif args.format == "json":
        _emit_json({"schema": f"qspec.verify/{JSON_VERSION}", "params": _params_block(params, depth),
                    "passed": report.passed,
                    "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in report.checks]},
                   out)
    return 0 if report.passed else 2


COMMANDS = {"cf": cmd_cf, "potential": cmd_potential, "bands": cmd_bands, "dos": cmd_dos,
            "holder": cmd_holder, "verify": cmd_verify}


def _join_negative_values(argv: list[str]) -> list[str]:
    """``--interval -3:1`` as ``--interval=-3:1`` (argparse would read -3:1 as a flag)."""
    out, i = [], 0
    while i < len(argv):
        if argv[i] in ("--interval", "--lambdas") and i + 1 < len(argv):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(_join_negative_values(argv))
        if args.precision < 53:
            raise ValidationError("--precision must be >= 53")
        buf = io.StringIO()
        code = COMMANDS[args.command](args, buf)
    except ValidationError as exc:
        print(f"qspec: invalid input: {exc}", file=sys.stderr)
        return 1
    except QspecError as exc:
        print(f"qspec: computation failed: {exc}", file=sys.stderr)
        return 2
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    if code and args.command == "verify":
        print("qspec: verification failed", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
