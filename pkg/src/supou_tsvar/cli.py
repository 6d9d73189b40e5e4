"""Command-line front end.

Subcommands
-----------
fit       identify a model from an hourly ``timestamp,discharge`` CSV
stats     stationary statistics of a model
tsvar     one upper/lower TsVaR evaluation (one CSV row)
converge  TsVaR against the quadrature resolution ``N = 2**m``
sweep     TsVaR along an accuracy grid, or ambiguity scenarios along a lambda0 grid
rnderiv   worst-case Radon-Nikodym derivative on the quadrature nodes

Every failure exits with the ``exit_code`` of its error class and prints
``error: <Category>: <message>`` to stderr.
"""

import argparse
import csv
import io
import math
import sys

import numpy as np

from . import modelfile
from .ambiguity import scenario, scenario_sweep
from .errors import SupOUError
from .identify import STAT_NAMES, identify, load_series
from .parallel import map_ordered
from .reversion import discretize, inverse_moment
from .solver import DEFAULT_N, TsVaRProblem, accuracy_sweep, descend
from .supou import STATIONS, activity_class, station, stationary_stats

IO_EXIT = 7
DEFAULT_Q = {"upper": 0.33, "lower": 1.33}


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


class _Output:
    """CSV writer to a file or stdout; comment lines start with ``#``."""

    def __init__(self, path):
        self.path = path
        self.buffer = io.StringIO()
        self.writer = csv.writer(self.buffer, lineterminator="\n")

    def comment(self, text):
        self.buffer.write(f"# {text}\n")

    def row(self, values):
        self.writer.writerow([_fmt(v) for v in values])

    def close(self):
        text = self.buffer.getvalue()
        if self.path in (None, "-"):
            sys.stdout.write(text)
        else:
            with open(self.path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def parse_grid(text):
    """``start:stop:points[:log]`` to an array; ``log`` spaces points geometrically."""
    parts = text.split(":")
    if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] not in ("log", "lin")):
        raise argparse.ArgumentTypeError("grid must be start:stop:points[:log]")
    try:
        start, stop, points = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None
    if points < 1:
        raise argparse.ArgumentTypeError("grid needs at least one point")
    if len(parts) == 4 and parts[3] == "log":
        if not (start > 0 and stop > 0):
            raise argparse.ArgumentTypeError("log grid needs positive ends")
        return np.logspace(math.log10(start), math.log10(stop), points)
    return np.linspace(start, stop, points)


def _parse_m_range(text):
    try:
        if ":" in text:
            lo, hi = (int(t) for t in text.split(":"))
            values = list(range(lo, hi + 1))
        else:
            values = [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad m range {text!r}") from None
    if not values or min(values) < 0 or max(values) > 24:
        raise argparse.ArgumentTypeError("m values must lie in 0..24")
    return values


def _float_list(text):
    try:
        return [float(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _model(args):
    if getattr(args, "model", None):
        model, meta = modelfile.load(args.model)
        return model, meta.get("station", args.model)
    name = getattr(args, "station", None) or "kazarashi"
    return station(name), name


def _resolution(args):
    if getattr(args, "m", None) is not None:
        return 2 ** args.m
    if getattr(args, "n", None) is not None:
        return args.n
    return DEFAULT_N


def _q(args, side=None):
    side = side or args.side
    return args.q if args.q is not None else DEFAULT_Q[side]


# ---------------------------------------------------------------- commands


def cmd_fit(args):
    series = load_series(args.input)
    report = identify(series, args.max_lag)
    name = args.station_name or args.input
    meta = {
        "station": name,
        "record_span": report.metadata.get("span"),
        "samples": report.metadata.get("samples"),
        "acf_lag_cutoff": report.acf_lag_cutoff,
        "fit_residuals": report.residuals,
        "objective_value": report.objective_value,
    }
    text = modelfile.dumps(report.model, meta)
    with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    fitted = stationary_stats(report.model)
    out = _Output("-")
    out.comment(f"station {name}; autocorrelation fitted up to lag {report.acf_lag_cutoff} h")
    out.row(["statistic", "observed", "fitted", "relative_error"])
    for stat, obs, fit in zip(STAT_NAMES, report.observed.as_tuple(), fitted.as_tuple()):
        out.row([stat, obs, fit, report.residuals[stat]])
    out.row(["parameter", "value", "", ""])
    for key, value in report.model.parameters().items():
        out.row([key, value, "", ""])
    out.row(["objective", report.objective_value, "", ""])
    out.close()
    return 0


def cmd_stats(args):
    model, name = _model(args)
    st = stationary_stats(model)
    out = _Output(args.output)
    out.row(["station", "R", "mean", "variance", "third_central", "fourth_cumulant",
             "skewness", "kurtosis", "activity"])
    out.row([name, inverse_moment(model.reversion), st.mean, st.variance, st.third_central,
             st.fourth_cumulant, st.skew_normalized, st.kurt_normalized,
             activity_class(model.levy)])
    out.close()
    return 0


def cmd_tsvar(args):
    model, _ = _model(args)
    q = _q(args)
    n = _resolution(args)
    p = TsVaRProblem(model.reversion, args.side, q, args.a, n, args.scheme)
    sol = descend(p)
    out = _Output(args.output)
    out.row(["side", "q", "a", "N", "scheme", "value", "lambda_star", "iterations", "normalized"])
    out.row([args.side, q, args.a, n, p.scheme, sol.value, sol.lambda_star, sol.iterations,
             sol.normalized])
    out.close()
    return 0


def cmd_converge(args):
    model, _ = _model(args)
    q = _q(args)
    ms = args.m_range
    schemes = args.schemes or (["tilted", "plain"] if args.side == "upper" else ["plain"])
    # fail eagerly on infeasible q before any work
    for scheme in schemes:
        TsVaRProblem(model.reversion, args.side, q, args.a, 1, scheme)
    cells = [(scheme, m) for scheme in schemes for m in ms]

    def run(cell):
        scheme, m = cell
        p = TsVaRProblem(model.reversion, args.side, q, args.a, 2 ** m, scheme)
        return descend(p).value

    values = dict(zip(cells, map_ordered(run, cells, args.threads)))
    out = _Output(args.output)
    out.comment(f"side={args.side} q={q!r} a={args.a!r}; error is |value - value at m={max(ms)}|")
    header = ["m"]
    for scheme in schemes:
        header += [f"{scheme}_value", f"{scheme}_error"]
    out.row(header)
    for m in ms:
        row = [m]
        for scheme in schemes:
            value = values[(scheme, m)]
            ref = values[(scheme, max(ms))]
            row += [value, None if m == max(ms) else abs(value - ref)]
        out.row(row)
    out.close()
    return 0


def cmd_sweep(args):
    model, _ = _model(args)
    n = _resolution(args)
    qs = args.qs if args.qs else [_q(args)]
    out = _Output(args.output)
    if args.over == "a":
        out.row(["q", "a", "feasible", "value", "normalized", "lambda_star", "iterations"])
        for q in qs:
            template = TsVaRProblem(model.reversion, args.side, q, 1.0, n, args.scheme)
            for pt in accuracy_sweep(template, args.grid, args.threads):
                s = pt.solution
                if s is None:
                    out.row([q, pt.a, 0, None, None, None, None])
                else:
                    out.row([q, pt.a, 1, s.value, s.normalized, s.lambda_star, s.iterations])
    else:
        d = discretize(model.reversion, n)
        out.row(["q", "lambda0", "feasible", "a_star", "tsvar", "normalized", "lambda_star"])
        for q in qs:
            for r in scenario_sweep(args.side, q, d, args.grid, model.reversion, args.threads):
                s = r.scenario
                if s is None:
                    out.row([q, r.lambda0, 0, None, None, None, None])
                else:
                    out.row([q, r.lambda0, 1, s.a_star, s.tsvar, s.normalized, s.lambda_star])
    out.close()
    return 0


def cmd_rnderiv(args):
    model, _ = _model(args)
    q = _q(args)
    n = _resolution(args)
    d = discretize(model.reversion, n)
    s = scenario(args.side, args.lambda0, q, d, model.reversion)
    out = _Output(args.output)
    out.comment(f"side={args.side} q={q!r} lambda0={args.lambda0!r}")
    out.comment(f"a_star={s.a_star!r} tsvar={s.tsvar!r} normalized={s.normalized!r}")
    out.row(["r", "phi"])
    for r, phi in zip(d.nodes, s.phi_star):
        out.row([float(r), float(phi)])
    out.close()
    return 0


# ---------------------------------------------------------------- parser


def _add_model_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--model", help="JSON model file")
    g.add_argument("--station", choices=sorted(STATIONS), help="preset model (default kazarashi)")


def _add_problem_args(p, need_a=True):
    p.add_argument("--side", choices=("upper", "lower"), default="upper")
    p.add_argument("--q", type=float, default=None,
                   help="shape parameter (default 0.33 upper, 1.33 lower)")
    if need_a:
        p.add_argument("--a", type=float, default=0.99, help="accuracy parameter in (0, 1]")


def _add_resolution_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--n", type=_positive_int, help=f"quadrature nodes (default {DEFAULT_N})")
    g.add_argument("--m", type=int, help="log2 of the number of nodes")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="supou-tsvar",
        description="supOU stationary statistics and Tsallis Value-at-Risk bounds",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads for grid cells (default $SUPOU_TSVAR_THREADS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="identify a model from an hourly discharge CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="model file to write")
    p.add_argument("--station-name", default=None)
    p.add_argument("--max-lag", type=int, default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("stats", parents=[common], help="stationary statistics")
    _add_model_args(p)
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("tsvar", parents=[common], help="one TsVaR evaluation")
    _add_model_args(p)
    _add_problem_args(p)
    _add_resolution_args(p)
    p.add_argument("--scheme", choices=("plain", "tilted"), default=None)
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_tsvar)

    p = sub.add_parser("converge", parents=[common], help="TsVaR against resolution N = 2**m")
    _add_model_args(p)
    _add_problem_args(p)
    p.add_argument("--m-range", type=_parse_m_range, default=list(range(12, 18)),
                   help="lo:hi or comma list (default 12:17)")
    p.add_argument("--scheme", dest="schemes", action="append", choices=("plain", "tilted"),
                   help="repeatable; default both for upper, plain for lower")
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("sweep", parents=[common], help="accuracy or lambda0 sweep")
    _add_model_args(p)
    _add_problem_args(p, need_a=False)
    _add_resolution_args(p)
    p.add_argument("--over", choices=("a", "lambda0"), default="a")
    p.add_argument("--grid", type=parse_grid, required=True, help="start:stop:points[:log]")
    p.add_argument("--qs", type=_float_list, default=None, help="comma list of q values")
    p.add_argument("--scheme", choices=("plain", "tilted"), default=None)
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("rnderiv", parents=[common], help="worst-case Radon-Nikodym derivative")
    _add_model_args(p)
    _add_problem_args(p, need_a=False)
    _add_resolution_args(p)
    p.add_argument("--lambda0", type=float, required=True)
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_rnderiv)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SupOUError as exc:
        message = str(exc)
        interval = getattr(exc, "interval", None)
        if interval is not None and str(interval) not in message:
            message += f" (allowed q: {interval})"
        print(f"error: {exc.category}: {message}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: IOError: {exc}", file=sys.stderr)
        return IO_EXIT


if __name__ == "__main__":
    sys.exit(main())
