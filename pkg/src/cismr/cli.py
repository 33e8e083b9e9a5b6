"""Command-line interface: ``cismr analyze | scree | simulate | report``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from . import __version__
from .analysis import AnalysisConfig, file_sha256, run_analysis
from .errors import NumericalError, ValidationError
from .factors import parse_rank_policy, scree, suggest_rank
from .report import render_table
from .simulation import ALL_METHODS, CSV_COLUMNS, DESIGN_KINDS, gen_base_population, make_design, run_power
from .summary_data import load_dataset, read_ld_file, validate_correlation

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3

SIMULATE_EPILOG = (
    "Output CSV columns: "
    + ", ".join(CSV_COLUMNS)
    + ". 'rate' is the rejection rate of H0: theta = --theta0 among replicates where the "
    "method reached a decision ('reps'); 'errors' counts replicates where it could not "
    "(e.g. no factor passed the pre-test); 'mc_se' = sqrt(rate (1 - rate) / reps)."
)
SCREE_EPILOG = (
    "Output CSV columns: k, eigenvalue, cum_share, suggested_by. 'suggested_by' lists the "
    "rank policies (gap, ratio, share=<t>) whose suggestion is k, separated by ';'."
)


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _grid(text):
    parts = text.split(",")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except (IndexError, ValueError):
        raise argparse.ArgumentTypeError(f"expected lo,hi,n, got {text!r}") from None
    if len(parts) != 3 or not lo < hi or n < 2:
        raise argparse.ArgumentTypeError(f"invalid grid {text!r}")
    return (lo, hi, n)


def _theta_grid(text):
    """``"0"``, ``"0,0.5,1"`` or ``"lo:hi:n"``."""
    if ":" in text:
        parts = text.split(":")
        try:
            lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        except (IndexError, ValueError):
            raise argparse.ArgumentTypeError(f"expected lo:hi:n, got {text!r}") from None
        return [float(x) for x in np.linspace(lo, hi, n)]
    return _float_list(text)


def _methods(text):
    return [m.strip() for m in text.split(",") if m.strip()]


class _Parser(argparse.ArgumentParser):
    """Argument errors exit with the validation code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="cismr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cismr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="run estimators and tests on one dataset")
    a.add_argument("--assoc", required=True, help="association file (variant_id, beta_x, se_x, beta_y, se_y)")
    a.add_argument("--ld", required=True, help="variant correlation matrix file")
    a.add_argument("--r", default="auto:gap", help="factor count: integer, auto:gap, auto:ratio or auto:share=<t>")
    a.add_argument("--k-max", type=int, default=20, help="largest rank considered by auto policies")
    a.add_argument("--methods", type=_methods, default=None,
                   help="comma list from F-LIML, S-LIML, F-AR, F-LM, F-CLR, CLR-<100*R2>")
    a.add_argument("--alpha", type=float, default=0.05)
    a.add_argument("--delta", type=float, default=0.01, help="factor pre-test level for S-LIML")
    a.add_argument("--theta0", type=float, default=0.0, help="reference null value for reported p-values")
    a.add_argument("--grid", type=_grid, default=None, help="confidence-set grid lo,hi,n")
    a.add_argument("--prune-r2", type=float, action="append", default=None,
                   help="pruning threshold (repeatable); adds a CLR-<100*R2> method")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--mc-draws", type=int, default=100_000, help="Monte-Carlo draws for CLR p-values")
    a.add_argument("--sel-draws", type=int, default=200_000, help="Monte-Carlo draws for the S-LIML test")
    a.add_argument("--out", required=True, help="output directory (report.json, report.txt)")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("scree", help="eigenvalue table and suggested factor counts", epilog=SCREE_EPILOG)
    s.add_argument("--ld", required=True)
    s.add_argument("--k-max", type=int, default=30)
    s.add_argument("--share", type=float, action="append", default=None,
                   help="cumulative-share threshold (repeatable; default 0.96)")
    s.add_argument("--out", default=None, help="CSV path (default: standard output)")
    s.set_defaults(func=cmd_scree)

    m = sub.add_parser("simulate", help="rejection-rate curves on a synthetic design", epilog=SIMULATE_EPILOG)
    m.add_argument("--design", required=True, choices=DESIGN_KINDS)
    m.add_argument("--param", type=float, required=True, help="eta, tau-bar or kappa-bar")
    m.add_argument("--p", type=int, default=196)
    m.add_argument("--r", type=int, default=8)
    m.add_argument("--signal-share", type=float, default=0.95)
    m.add_argument("--reps", type=int, default=1000)
    m.add_argument("--theta-grid", type=_theta_grid, default=[0.0], help="'0', '0,0.5,1' or 'lo:hi:n'")
    m.add_argument("--theta0", type=float, default=0.0)
    m.add_argument("--methods", type=_methods, default=list(ALL_METHODS))
    m.add_argument("--alpha", type=float, default=0.05)
    m.add_argument("--delta", type=float, default=None)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--threads", type=int, default=1)
    m.add_argument("--clr-draws", type=int, default=20_000)
    m.add_argument("--sel-draws", type=int, default=20_000)
    m.add_argument("--out", default=None, help="CSV path (default: standard output)")
    m.set_defaults(func=cmd_simulate)

    rp = sub.add_parser("report", help="render a report.json as a table")
    rp.add_argument("report", help="path to report.json")
    rp.set_defaults(func=cmd_report)
    return parser


def _write_text(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def cmd_analyze(args):
    if not 0 < args.alpha < 1:
        raise ValidationError("--alpha must lie in (0, 1).")
    if args.mc_draws < 1 or args.sel_draws < 1:
        raise ValidationError("Monte-Carlo draw counts must be positive.")
    r, policy, threshold = parse_rank_policy(args.r)
    for path in (args.assoc, args.ld):
        if not os.path.isfile(path):
            raise ValidationError(f"no such file: {path}")
    ds = load_dataset(args.assoc, args.ld)
    kwargs = {}
    if args.prune_r2:
        kwargs["prune_r2"] = tuple(args.prune_r2)
    config = AnalysisConfig(
        r=r,
        rank_policy=policy,
        rank_threshold=threshold,
        k_max=args.k_max,
        methods=tuple(args.methods) if args.methods else None,
        alpha=args.alpha,
        delta=args.delta,
        theta0=args.theta0,
        grid=args.grid,
        seed=args.seed,
        mc_draws=args.mc_draws,
        sel_draws=args.sel_draws,
        **kwargs,
    )
    inputs = {
        "assoc": {"name": os.path.basename(args.assoc), "sha256": file_sha256(args.assoc)},
        "ld": {"name": os.path.basename(args.ld), "sha256": file_sha256(args.ld)},
    }
    report = run_analysis(ds, config, inputs=inputs)
    os.makedirs(args.out, exist_ok=True)
    _write_text(os.path.join(args.out, "report.json"), report.to_json() + "\n")
    _write_text(os.path.join(args.out, "report.txt"), render_table(report))
    return report


def scree_rows(rho, k_max=30, shares=(0.96,)):
    """Rows ``(k, eigenvalue, cum_share, suggested_by)`` of the scree table."""
    eig, cum = scree(rho)
    p = eig.size
    suggestions = {}
    if p > 1:
        km = min(k_max, p - 1)
        for policy in ("gap", "ratio"):
            suggestions.setdefault(suggest_rank(eig, policy, k_max=km), []).append(policy)
    for t in shares:
        k = suggest_rank(eig, "share", threshold=t)
        suggestions.setdefault(k, []).append(f"share={t:g}")
    return [(k + 1, float(eig[k]), float(cum[k]), ";".join(suggestions.get(k + 1, []))) for k in range(p)]


def cmd_scree(args):
    _, rho = read_ld_file(args.ld)
    rho = validate_correlation(rho)
    rows = scree_rows(rho, args.k_max, tuple(args.share or (0.96,)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("k", "eigenvalue", "cum_share", "suggested_by"))
    for k, e, c, s in rows:
        w.writerow((k, f"{e:.10g}", f"{c:.10g}", s))
    _write_text(args.out, buf.getvalue())
    return rows


def cmd_simulate(args):
    if args.threads < 1:
        raise ValidationError("--threads must be at least 1.")
    base = gen_base_population(args.p, args.r, args.signal_share, seed=args.seed)
    design = make_design(base, args.design, args.param, seed=args.seed)
    print(f"simulating {design.label()}: p={args.p}, r={args.r}, reps={args.reps}, "
          f"{len(args.theta_grid)} true effect(s)", file=sys.stderr)
    curve = run_power(
        base,
        design,
        methods=args.methods,
        theta_grid=args.theta_grid,
        reps=args.reps,
        alpha=args.alpha,
        delta=args.delta,
        seed=args.seed,
        theta0=args.theta0,
        threads=args.threads,
        clr_draws=args.clr_draws,
        sel_draws=args.sel_draws,
        progress=True,
    )
    _write_text(args.out, curve.to_csv())
    return curve


def cmd_report(args):
    try:
        with open(args.report) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read report: {exc}") from exc
    sys.stdout.write(render_table(data))
    return data


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"cismr: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"cismr: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"cismr: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
