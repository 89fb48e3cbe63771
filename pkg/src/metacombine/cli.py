"""Command-line interface: ``metacombine {combine,critical,power,curve}``.

Bad input exits with status 2. A grid too short for the requested quantile
exits with status 3 and suggests a larger ``--grid-n``.
"""

import argparse
import csv
import io
import json
import math
import re
import sys

import numpy as np

from . import __version__
from .alternatives import AlternativeSpec
from .bounded_dist import Grid
from .combiners import combined_pvalue, statistic
from .errors import InvalidInputError, MetaCombineError, ResolutionError
from .methods import Family, Side, TestMethod
from .power import FIGURE_METHODS, critical_bounds, power_bounds, power_curve
from .special import norm_cdf, norm_quantile

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RESOLUTION = 3

_SPLIT = re.compile(r"[,\s]+")


class InputError(Exception):
    """Malformed input; the message already carries the line number."""


# ---------------------------------------------------------------------------
# formatting


def _text(x):
    if x is None:
        return "-"
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _full(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _json_value(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x


def _emit(records, fields, fmt, out):
    if fmt == "json":
        json.dump([{f: _json_value(r[f]) for f in fields} for r in records], out, indent=2)
        out.write("\n")
    elif fmt == "csv":
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(fields)
        for r in records:
            writer.writerow([_full(r[f]) for f in fields])
    else:
        rows = [[_text(r[f]) for f in fields] for r in records]
        widths = [max(len(f), *(len(row[i]) for row in rows)) if rows else len(f) for i, f in enumerate(fields)]
        out.write("  ".join(f.ljust(w) for f, w in zip(fields, widths)).rstrip() + "\n")
        for row in rows:
            out.write("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() + "\n")


# ---------------------------------------------------------------------------
# input parsing


def _parse_floats(tokens, lineno):
    values = []
    for tok in tokens:
        try:
            values.append(float(tok))
        except ValueError:
            raise InputError(f"line {lineno}: cannot parse {tok!r} as a number") from None
    return values


def read_table(stream, row_ids=False):
    """Parse a whitespace- or comma-separated table.

    Returns ``(ids, rows, linenos)``. Blank lines and lines starting with
    ``#`` are skipped; rows must all have the same width.
    """
    ids, rows, linenos = [], [], []
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tokens = [t for t in _SPLIT.split(line) if t]
        if row_ids:
            ids.append(tokens[0])
            tokens = tokens[1:]
        if not tokens:
            raise InputError(f"line {lineno}: no values")
        values = _parse_floats(tokens, lineno)
        if rows and len(values) != len(rows[0]):
            raise InputError(f"line {lineno}: expected {len(rows[0])} values, found {len(values)}")
        rows.append(values)
        linenos.append(lineno)
    if not rows:
        raise InputError("input has no data rows")
    if not row_ids:
        ids = [str(i) for i in range(1, len(rows) + 1)]
    return ids, rows, linenos


def _to_method_input(method, kind, values, lineno):
    # returns the vector that combiners.statistic expects for this method
    v = np.asarray(values, dtype=float)
    if kind == "ptilde":
        if np.any(~((v >= 0.0) & (v <= 1.0))):
            raise InputError(f"line {lineno}: p-values must lie in [0, 1]")
        if method.family in (Family.FISHER, Family.STOUFFER):
            return v
        if method.family is Family.TLRT:
            raise InputError("tlrt needs --input-kind t")
        z = norm_quantile(v)
        if not np.all(np.isfinite(z)):
            raise InputError(f"line {lineno}: p-values of 0 or 1 give infinite z-scores")
        return z
    if not np.all(np.isfinite(v)):
        raise InputError(f"line {lineno}: statistics must be finite")
    if kind == "t":
        if method.family is not Family.TLRT:
            raise InputError("--input-kind t is only valid with --method tlrt")
        return v
    if method.family is Family.TLRT:
        raise InputError("tlrt needs --input-kind t")
    if method.family in (Family.FISHER, Family.STOUFFER):
        return norm_cdf(v)
    return v


def _grid(args):
    if args.eta is None and args.grid_n is None:
        return None
    defaults = Grid()
    return Grid(args.eta if args.eta is not None else defaults.eta,
                args.grid_n if args.grid_n is not None else defaults.n)


def _method(args):
    side = args.side
    if side is None:
        side = {"zu": "undirected", "tlrt": "right"}.get(args.method)
        if side is None:
            raise InvalidInputError(f"--side is required for --method {args.method}")
    return TestMethod(args.method, side)


# ---------------------------------------------------------------------------
# commands


def cmd_combine(args, out):
    method = _method(args)
    grid = _grid(args)
    with _open_input(args.input) as stream:
        ids, rows, linenos = read_table(stream, args.row_ids)
    dof = None
    if method.family is Family.TLRT:
        if args.dof is None:
            raise InputError("tlrt needs --dof")
        dof = _float_list(args.dof, "--dof")
        if len(dof) == 1:
            dof = dof * len(rows[0])
        if len(dof) != len(rows[0]):
            raise InputError(f"--dof has {len(dof)} entries but rows have {len(rows[0])}")
    records = []
    for rid, values, lineno in zip(ids, rows, linenos):
        x = _to_method_input(method, args.input_kind, values, lineno)
        try:
            stat = statistic(method, x, dof)
        except InvalidInputError as exc:
            raise InputError(f"line {lineno}: {exc}") from None
        if method.family is Family.TLRT:
            lo = hi = exact = None
        else:
            p = combined_pvalue(method, stat, len(values), grid)
            lo, hi, exact = p.lower, p.upper, p.exact
        records.append({"id": rid, "method": method.name, "m": len(values), "statistic": stat,
                        "p_lower": lo, "p_upper": hi, "exact": exact})
    _emit(records, ("id", "method", "m", "statistic", "p_lower", "p_upper", "exact"), args.format, out)


def cmd_critical(args, out):
    method = _method(args)
    crit = critical_bounds(method, args.m, args.alpha, _grid(args))
    record = {"method": method.name, "m": args.m, "alpha": args.alpha,
              "critical_lo": crit.lo, "critical_hi": crit.hi,
              "level_lo": crit.level_lo, "level_hi": crit.level_hi}
    if args.format == "text":
        out.write(f"method    {method.name}\n")
        out.write(f"critical  [{_text(crit.lo)}, {_text(crit.hi)}]\n")
        out.write(f"level     [{_text(crit.level_lo)}, {_text(crit.level_hi)}]\n")
    else:
        _emit([record], tuple(record), args.format, out)


def _spec(args):
    if (args.pattern is None) == (args.beta is None):
        raise InvalidInputError("give exactly one of --pattern and --beta")
    if args.pattern is not None:
        return AlternativeSpec.parse_pattern(args.pattern)
    try:
        return AlternativeSpec(tuple(float(t) for t in _SPLIT.split(args.beta.strip()) if t))
    except ValueError:
        raise InvalidInputError(f"cannot parse --beta {args.beta!r}") from None


def cmd_power(args, out):
    method = _method(args)
    spec = _spec(args)
    p = power_bounds(method, spec, args.alpha, _grid(args), n_mc=args.mc, seed=args.seed,
                     ci_alpha=args.ci_alpha)
    record = {"method": method.name, "m": spec.m, "alpha": args.alpha,
              "power_lo": p.lower, "power_hi": p.upper,
              "mc": p.mc_estimate,
              "mc_lo": p.mc_ci[0] if p.mc_ci else None,
              "mc_hi": p.mc_ci[1] if p.mc_ci else None,
              "n_mc": p.n_mc, "seed": p.seed, "consistent": p.consistent}
    _emit([record], tuple(record), args.format, out)


def _float_list(text, flag):
    try:
        return [float(t) for t in _SPLIT.split(text.strip()) if t]
    except ValueError:
        raise InvalidInputError(f"cannot parse {flag} {text!r}") from None


def _int_list(text, flag):
    items = []
    for tok in (t for t in _SPLIT.split(text.strip()) if t):
        lo, dash, hi = tok.partition("-")
        try:
            items.extend(range(int(lo), int(hi) + 1) if dash else [int(lo)])
        except ValueError:
            raise InvalidInputError(f"cannot parse {flag} {text!r}") from None
    return items


def cmd_curve(args, out):
    ks = _int_list(args.k, "--k") if args.k else None
    deltas = _float_list(args.deltas, "--deltas") if args.deltas else None
    if args.figure is not None:
        mode = f"figure{args.figure}"
        methods = args.methods.split(",") if args.methods else list(FIGURE_METHODS[args.figure])
        if args.figure == 5:
            ks = ks or [2, 4, 8, 16]
            deltas = deltas or [round(0.25 * i, 2) for i in range(13)]
    else:
        mode = "explicit"
        if not args.methods:
            raise InvalidInputError("an explicit sweep needs --methods")
        methods = args.methods.split(",")
    rows = power_curve(methods, args.m, args.alpha, mode=mode, ks=ks, deltas=deltas,
                       target=args.target, k_neg=args.k_neg, grid=_grid(args),
                       n_mc=args.mc, seed=args.seed, ci_alpha=args.ci_alpha)
    fields = rows[0].FIELDS if rows else ()
    _emit([r.as_dict() for r in rows], fields, "csv", out)


class _open_input:
    def __init__(self, path):
        self.path = path
        self.handle = None

    def __enter__(self):
        if self.path in (None, "-"):
            return sys.stdin
        try:
            self.handle = open(self.path, encoding="utf-8")
        except OSError as exc:
            raise InputError(f"cannot read {self.path}: {exc.strerror}") from None
        return self.handle

    def __exit__(self, *exc):
        if self.handle is not None:
            self.handle.close()


# ---------------------------------------------------------------------------
# argument parsing


def _add_grid(p):
    p.add_argument("--eta", type=float, help="grid step (default 0.001, automatic range)")
    p.add_argument("--grid-n", type=int, help="number of grid points (default: sized automatically)")


def _add_method(p, required=True):
    p.add_argument("--method", required=required, choices=[f.value for f in Family])
    p.add_argument("--side", choices=[s.value for s in Side])


def _add_mc(p):
    p.add_argument("--mc", type=int, default=0, metavar="N", help="Monte Carlo draws (0 disables)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ci-alpha", type=float, default=0.001,
                   help="Monte Carlo interval has confidence 1 - ci_alpha")


def build_parser():
    parser = argparse.ArgumentParser(prog="metacombine", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("combine", help="combine each input row into one statistic and p-value")
    p.add_argument("input", nargs="?", default="-", help="input file (default: standard input)")
    _add_method(p)
    p.add_argument("--input-kind", choices=["ptilde", "z", "t"], default="ptilde",
                   help="one-tailed p-values, z-scores or t-statistics")
    p.add_argument("--dof", help="degrees of freedom for t inputs (one value or one per column)")
    p.add_argument("--row-ids", action="store_true", help="first column holds a row identifier")
    p.add_argument("--format", choices=["text", "csv", "json"], default="text")
    _add_grid(p)
    p.set_defaults(func=cmd_combine)

    p = sub.add_parser("critical", help="critical value bracket of a level-alpha test")
    _add_method(p)
    p.add_argument("-m", type=int, required=True, help="number of combined tests")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--format", choices=["text", "csv", "json"], default="text")
    _add_grid(p)
    p.set_defaults(func=cmd_critical)

    p = sub.add_parser("power", help="power bracket under a Gaussian alternative")
    _add_method(p)
    p.add_argument("--pattern", help="e.g. 8:+0.5,1:-0.5,m=16")
    p.add_argument("--beta", help="comma-separated mean vector")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--format", choices=["text", "csv", "json"], default="text")
    _add_mc(p)
    _add_grid(p)
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("curve", help="power table over a sweep (CSV)")
    p.add_argument("--figure", type=int, choices=[5, 6, 7],
                   help="preset sweep: 5 varies delta at fixed k; 6 and 7 calibrate delta per k "
                        "(7 with one negative entry)")
    p.add_argument("--methods", help="comma-separated method names, e.g. zu,fisher-concordant")
    p.add_argument("-m", type=int, default=16)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--target", type=float, default=0.8, help="calibration power for the calibrated presets")
    p.add_argument("--k", help="nonzero counts, e.g. 1-16 or 2,4,8")
    p.add_argument("--k-neg", type=int, default=0, help="negative entries in explicit sweeps")
    p.add_argument("--deltas", help="effect sizes for explicit sweeps and preset 5")
    _add_mc(p)
    _add_grid(p)
    p.set_defaults(func=cmd_curve)
    return parser


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    buf = io.StringIO()
    try:
        args.func(args, buf)
    except ResolutionError as exc:
        print(f"metacombine: {exc} (suggested --grid-n {exc.suggested_n})", file=stderr)
        return EXIT_RESOLUTION
    except (InputError, MetaCombineError, ValueError) as exc:
        print(f"metacombine: {exc}", file=stderr)
        return EXIT_INPUT
    stdout.write(buf.getvalue())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
