"""Command-line front end.

    addtfit fit --dataset adhesive-bond-b --method all
    addtfit fit --input my.csv --method ml --conf-level 0.99 --output report.json
    addtfit datasets seal-strength > seal.csv

Exit codes: 0 success, 1 usage error, 2 data error, 3 convergence error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import operator
import re
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (BUNDLED, UNBUNDLED, DegradationDataset, load_bundled,
                      load_csv, remap_time_zero)
from .errors import ADDTError, ConvergenceError, DataError
from .mlfit import PARAM_NAMES, fit_ml, mean_path
from .semifit import fit_semi, scale_time
from .tradls import fit_ls

SCHEMA_VERSION = "1.0"
JSON_DIGITS = 10
GRID_POINTS = 200
METHOD_ORDER = ("ls", "ml", "semi")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- subset expressions -------------------------------------------------------

_OPS = {"<=": operator.le, ">=": operator.ge, "==": operator.eq,
        "!=": operator.ne, "<": operator.lt, ">": operator.gt, "=": operator.eq}
_FIELDS = {"tempc": 0, "temp": 0, "timeh": 1, "time": 1, "response": 2}
_CLAUSE = re.compile(r"^\s*([A-Za-z]+)\s*(<=|>=|==|!=|<|>|=)\s*([-+0-9.eE]+)\s*$")


def parse_subset(expr: str):
    """Parse ``FIELD OP NUMBER[, ...]`` into a list of (column, op, value).

    FIELD is TempC, TimeH or Response (case-insensitive); clauses are
    combined with AND.
    """
    clauses = []
    for part in expr.split(","):
        if not part.strip():
            continue
        m = _CLAUSE.match(part)
        if not m or m.group(1).lower() not in _FIELDS:
            raise UsageError(
                f"bad subset clause {part.strip()!r}; expected e.g. 'TempC>=60' "
                "with field TempC, TimeH or Response")
        try:
            value = float(m.group(3))
        except ValueError:
            raise UsageError(f"bad number in subset clause {part.strip()!r}") from None
        clauses.append((_FIELDS[m.group(1).lower()], m.group(2), value))
    if not clauses:
        raise UsageError("empty subset expression")
    return clauses


def apply_subset(ds: DegradationDataset, clauses) -> DegradationDataset:
    """Keep rows satisfying every clause.

    Time-0 rows are exempt from temperature clauses: they are the shared
    baseline and their nominal temperature carries no information.
    """
    cols = (ds.temp_c, ds.time_h, ds.response)
    keep = np.ones(len(ds), dtype=bool)
    for col, op, value in clauses:
        hit = _OPS[op](cols[col], value)
        if col == 0:
            hit |= ds.time_h == 0
        keep &= hit
    if not keep.any():
        raise DataError("subset expression removed every row")
    return ds.subset(keep)


# -- report -------------------------------------------------------------------

def _round_json(obj):
    if isinstance(obj, dict):
        return {k: _round_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_json(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        obj = obj.item()
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return None
        return float(f"{obj:.{JSON_DIGITS}g}")
    return obj


def dump_report(report: dict) -> str:
    return json.dumps(_round_json(report), indent=2) + "\n"


def _f(v, nd=4):
    if v is None or not math.isfinite(v):
        return "NA"
    s = f"{v:.{nd}f}"
    return s[1:] if s.startswith("-") and float(s) == 0 else s


def _table(header, rows):
    cells = [list(header)] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[j]) for r in cells) for j in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells)


def format_ls(fit) -> str:
    rows = [(f"{t:g}", _f(m)) for t, m in fit.failure_times]
    out = ["Least Squares Approach:",
           _table(("beta0", "beta1"), [(_f(fit.line.beta0), _f(fit.line.beta1))]),
           f"est.TI: {fit.display_ti}",
           "Interpolation time:",
           _table(("Temp", "Time"), rows)]
    if fit.excluded:
        out.append("Excluded levels: " + ", ".join(f"{t:g}" for t in fit.excluded))
    return "\n".join(out)


def format_ml(fit) -> str:
    est, std, ci = fit.params.as_array(), fit.std, fit.param_ci()
    pct = f"{100 * fit.conf_level:g}%"
    rows = [(n, _f(e), _f(s), _f(c[0]), _f(c[1]))
            for n, e, s, c in zip(PARAM_NAMES, est, std, ci)]
    ti = fit.ti
    return "\n".join([
        "Maximum Likelihood Approach:",
        "Parameters:",
        _table(("", "mean", "std", f"{pct} lower", f"{pct} upper"), rows),
        f"Loglikelihood: {_f(fit.loglik)}",
        "Temperature-Time Relationship:",
        _table(("beta0", "beta1"), [(_f(fit.line.beta0), _f(fit.line.beta1))]),
        "TI:",
        _table(("est.", "s.e.", "lower", "upper"),
               [(_f(ti.ti_c), _f(ti.std), _f(ti.ci[0]), _f(ti.ci[1]))]),
    ])


def format_semi(fit) -> str:
    p = fit.params
    head = ("betahat", "rho") if p.rho is not None else ("betahat",)
    vals = (_f(p.beta),) + ((_f(p.rho),) if p.rho is not None else ())
    knots = fit.basis.interior_knots
    return "\n".join([
        "Semiparametric Approach:",
        _table(head, [vals]),
        "TI estimates:",
        _table(("TI.semi", "beta0", "beta1"),
               [(_f(fit.ti.ti_c), _f(fit.line.beta0), _f(fit.line.beta1))]),
        "Model Evaluations:",
        _table(("Loglikelihood", "AICC", "Loglik.compat", "AICC.compat"),
               [(_f(fit.loglik), _f(fit.aicc), _f(fit.loglik_compat), _f(fit.aicc_compat))]),
        "B-spline:",
        _table(("Left Boundary",) + ("knots",) * len(knots) + ("Right Boundary",),
               [(_f(fit.basis.boundary[0]),) + tuple(_f(k) for k in knots)
                + (_f(fit.basis.boundary[1]),)]),
    ])


FORMATTERS = {"ls": format_ls, "ml": format_ml, "semi": format_semi}
TITLES = {"ls": "LS", "ml": "ML", "semi": "SEMI"}


# -- plot data ----------------------------------------------------------------

def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.{JSON_DIGITS}g}" if isinstance(v, float) else v for v in r])


def write_plot_data(plot_dir: Path, ds: DegradationDataset, fits: dict):
    plot_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(plot_dir / "observed.csv", ("TempC", "TimeH", "Response"),
               zip(ds.temp_c.tolist(), ds.time_h.tolist(), ds.response.tolist()))
    levels = ds.stress_levels
    t_end = float(ds.time_h.max())
    if "ls" in fits:
        rows = []
        for poly in fits["ls"].polyfits:
            for t in np.linspace(0.0, poly.t_max, GRID_POINTS):
                rows.append((poly.temp_c, float(t), float(poly(t))))
        _write_csv(plot_dir / "ls_curves.csv", ("TempC", "TimeH", "Fitted"), rows)
    if "ml" in fits:
        rows = []
        for level in levels:
            for t in np.linspace(0.0, t_end, GRID_POINTS):
                rows.append((float(level), float(t),
                             float(mean_path(t, level, fits["ml"].params))))
        _write_csv(plot_dir / "ml_curves.csv", ("TempC", "TimeH", "Fitted"), rows)
    if "semi" in fits:
        fit = fits["semi"]
        rows = []
        for level in levels:
            for t in np.linspace(0.0, t_end, GRID_POINTS):
                eta = float(scale_time(t, level, fit.params.beta, fit.x_max))
                rows.append((float(level), float(t), eta, float(fit.mean(t, level))))
        _write_csv(plot_dir / "semi_curves.csv",
                   ("TempC", "TimeH", "ScaledTime", "Fitted"), rows)
        eta_obs = scale_time(ds.time_h, ds.temp_c, fit.params.beta, fit.x_max)
        _write_csv(plot_dir / "semi_scaled_points.csv",
                   ("TempC", "ScaledTime", "Response"),
                   zip(ds.temp_c.tolist(), eta_obs.tolist(), ds.response.tolist()))
    lines = {TITLES[m]: f.line for m, f in fits.items()}
    if lines:
        tis = [f.ti.ti_c for f in fits.values()]
        lo = min(min(tis), float(levels.min())) - 10.0
        hi = float(levels.max())
        rows = []
        for name, line in lines.items():
            for temp in np.linspace(lo, hi, GRID_POINTS):
                rows.append((name, float(temp), float(line.log10_time(temp))))
        _write_csv(plot_dir / "ti_lines.csv", ("Method", "TempC", "Log10TimeH"), rows)


# -- commands -----------------------------------------------------------------

def _load(args) -> DegradationDataset:
    if args.input and args.dataset:
        raise UsageError("give either --input or --dataset, not both")
    if args.dataset:
        if args.dataset not in BUNDLED and args.dataset not in UNBUNDLED:
            raise UsageError(_unknown(args.dataset))
        ds = load_bundled(args.dataset)
    elif args.input:
        ds = load_csv(args.input)
    else:
        raise UsageError("one of --input or --dataset is required")
    if not args.no_remap:
        ds = remap_time_zero(ds)
    if args.subset:
        ds = apply_subset(ds, parse_subset(args.subset))
    return ds


def _unknown(name):
    choices = ", ".join(list(BUNDLED) + list(UNBUNDLED))
    return f"unknown dataset {name!r}; choose one of: {choices}"


def _run_method(method, ds, args, knots):
    if method == "ls":
        return fit_ls(ds, args.failure_threshold, args.time_rti, args.initial_value)
    if method == "ml":
        return fit_ml(ds, args.failure_threshold, args.time_rti, args.conf_level,
                      initial=args.initial_value)
    return fit_semi(ds, args.failure_threshold, args.time_rti,
                    with_rho=args.semi_cor, knots=knots)


def _exit_code(exc):
    if isinstance(exc, ConvergenceError):
        return EXIT_CONVERGENCE
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    return EXIT_DATA


def cmd_fit(args, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    if not 0 < args.failure_threshold < 100:
        raise UsageError("--failure-threshold must be between 0 and 100")
    if not 0 < args.conf_level < 1:
        raise UsageError("--conf-level must be between 0 and 1")
    if not args.time_rti > 0:
        raise UsageError("--time-rti must be positive")
    knots = None
    if args.knots:
        try:
            knots = [float(k) for k in args.knots.split(",") if k.strip()]
        except ValueError:
            raise UsageError(f"--knots must be comma-separated numbers: {args.knots!r}") from None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ds = _load(args)
    load_notes = [str(w.message) for w in caught]
    methods = METHOD_ORDER if args.method == "all" else (args.method,)

    results, failures = {}, {}
    # Each fit records its own notes; the warnings module is silenced here
    # because its filter state is process-wide and the fits run in threads.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with ThreadPoolExecutor(max_workers=len(methods)) as pool:
            futures = {m: pool.submit(_run_method, m, ds, args, knots) for m in methods}
            for m in methods:
                try:
                    results[m] = futures[m].result()
                except (ADDTError, ValueError, np.linalg.LinAlgError) as exc:
                    failures[m] = exc
    notes = list(load_notes)
    for m in methods:
        if m in results:
            notes.extend(f"{TITLES[m]}: {n}" for n in results[m].warnings)

    report = {
        "schema_version": SCHEMA_VERSION,
        "metadata": {
            "dataset": ds.source,
            "n_obs": len(ds),
            "failure_threshold_pct": args.failure_threshold,
            "time_rti_h": args.time_rti,
            "conf_level": args.conf_level,
            "methods": list(methods),
            "semi_cor": args.semi_cor,
            "knots": knots,
            "initial_value": args.initial_value,
            "subset": args.subset,
            "time_zero_remapped": not args.no_remap,
            "version": __version__,
        },
    }
    blocks = []
    for m in methods:
        if m in results:
            report[TITLES[m]] = results[m].to_dict()
            blocks.append(FORMATTERS[m](results[m]))
        else:
            report[TITLES[m]] = {"error": f"{type(failures[m]).__name__}: {failures[m]}"}
            blocks.append(f"{TITLES[m]}: failed: {failures[m]}")
    report["warnings"] = notes
    report["errors"] = {TITLES[m]: str(e) for m, e in failures.items()}

    out.write("\n\n".join(blocks) + "\n")
    for n in notes:
        err.write(f"warning: {n}\n")
    for m, exc in failures.items():
        err.write(f"error ({TITLES[m]}): {exc}\n")

    write = not failures or args.keep_partial
    if args.output and write:
        Path(args.output).write_text(dump_report(report), encoding="utf-8")
    if args.plot_dir and write:
        write_plot_data(Path(args.plot_dir), ds, results)
    if failures:
        return max(_exit_code(e) for e in failures.values())
    return EXIT_OK


def cmd_datasets(args, out=None) -> int:
    out = out or sys.stdout
    if not args.name:
        for name in BUNDLED:
            out.write(f"{name}\n")
        for name in UNBUNDLED:
            out.write(f"{name} (not bundled)\n")
        return EXIT_OK
    if args.name not in BUNDLED and args.name not in UNBUNDLED:
        raise UsageError(_unknown(args.name))
    out.write(load_bundled(args.name).to_csv())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="addtfit", description="Thermal index estimation from ADDT data.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit LS, ML and/or semiparametric models")
    src = f.add_argument_group("data")
    src.add_argument("--input", metavar="PATH", help="CSV with TempC,TimeH,Response columns")
    src.add_argument("--dataset", metavar="NAME", help="bundled dataset name")
    src.add_argument("--subset", metavar="EXPR",
                     help="row filter such as 'TempC>=60,TimeH<=2016' (AND of clauses)")
    src.add_argument("--no-remap", action="store_true",
                     help="keep the nominal temperature of time-0 rows")
    f.add_argument("--method", choices=("ls", "ml", "semi", "all"), default="all")
    f.add_argument("--failure-threshold", type=float, default=70.0, metavar="PCT",
                   help="failure threshold, percent of initial level (default 70; "
                        "industry practice is often 50)")
    f.add_argument("--time-rti", type=float, default=100_000.0, metavar="HOURS",
                   help="target time for the thermal index (default 100000)")
    f.add_argument("--conf-level", type=float, default=0.95)
    f.add_argument("--semi-cor", action="store_true",
                   help="include within-cell correlation in the semiparametric model")
    f.add_argument("--knots", metavar="LIST",
                   help="comma-separated interior knots on the scaled-time axis")
    f.add_argument("--initial-value", type=float, metavar="REAL",
                   help="override the initial degradation level")
    f.add_argument("--output", metavar="PATH", help="write the JSON report here")
    f.add_argument("--plot-dir", metavar="PATH", help="write plot-data CSVs here")
    f.add_argument("--keep-partial", action="store_true",
                   help="write report files even when some method fails")
    f.set_defaults(func=cmd_fit)

    d = sub.add_parser("datasets", help="list or print bundled datasets")
    d.add_argument("name", nargs="?")
    d.set_defaults(func=cmd_datasets)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"addtfit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"addtfit: convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (DataError, OSError) as exc:
        print(f"addtfit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
