"""Command line front end.

Verbs: ``price``, ``law``, ``verify``, ``verify-all`` and ``embed``.  Exit
status is 0 on success, 1 when a check fails and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import csv
import inspect
import json
import math
import sys
from fractions import Fraction

import numpy as np

from . import analytic_laws as laws
from .checks import list_checks, reports_to_csv, reports_to_json, run_check
from .checks.registry import check_function, model_gk_law
from .embedding import TargetMeasure, azema_yor_stop, parse_measure
from .engine.models import SimConfig, parse_model
from .pricing import alt_price, bs_price, rescale_inputs

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _grid(text: str) -> np.ndarray:
    try:
        lo, hi, count = text.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError:
        raise argparse.ArgumentTypeError("grid must look like lo:hi:count") from None
    if count < 1 or not hi >= lo:
        raise argparse.ArgumentTypeError("grid needs count >= 1 and hi >= lo")
    return np.linspace(lo, hi, count) if count > 1 else np.array([lo])


def _model(text: str):
    try:
        return parse_model(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text: str) -> int:
    try:
        n = int(float(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text}") from None
    if n < 1 or n != float(text):
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return n


def _output_flags(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--json", action="store_true", help="JSON output")
    g.add_argument("--csv", action="store_true", help="CSV output")


def _sim_flags(p):
    p.add_argument("--paths", type=_positive_int, default=100_000, help="number of paths (default 1e5)")
    p.add_argument("--seed", type=int, default=42, help="64-bit seed (default 42)")
    p.add_argument("--dt", type=float, default=1e-3, help="fine time step (default 1e-3)")
    p.add_argument("--horizon", type=float, default=64.0, help="simulation horizon (default 64)")
    p.add_argument("--tail-mode", choices=("censor", "doob_exact"), default="censor",
                   help="handling of crossings after the horizon")
    p.add_argument("--timing", action="store_true", help="report wall time (output is then not reproducible)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lastpassage", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True, metavar="verb")

    p = sub.add_parser("price", help="call and put on exp(B_t - t/2), with the probabilistic cross-check")
    p.add_argument("--t", type=float, required=True, help="maturity")
    p.add_argument("--strike", type=float, required=True, help="strike")
    p.add_argument("--spot", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--nu", type=float, default=None, help="drift (default -sigma^2/2)")
    _output_flags(p)

    p = sub.add_parser("law", help="table of a closed-form law")
    p.add_argument("name", choices=("gk", "four-nsq"), help="gk: last passage time at the strike; four-nsq: 4 N^2")
    p.add_argument("--model", type=_model, default=parse_model("gbm"))
    p.add_argument("--strike", type=float, default=1.0)
    p.add_argument("--grid", type=_grid, default=_grid("0:10:101"), help="times lo:hi:count, inclusive")
    _output_flags(p)

    p = sub.add_parser("verify", help="run one identity check")
    p.add_argument("name", help="check name (see verify-all --list)")
    p.add_argument("--model", type=_model, default=None)
    p.add_argument("--strike", type=float, default=None, help="level K, for checks that take one")
    p.add_argument("--t", type=float, default=None, help="time t, for checks that take one")
    _sim_flags(p)
    _output_flags(p)

    p = sub.add_parser("verify-all", help="run every identity check")
    p.add_argument("--list", action="store_true", help="list the checks and exit")
    _sim_flags(p)
    _output_flags(p)

    p = sub.add_parser("embed", help="Azema-Yor embedding of a centred target law")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("measure", nargs="?", help="file with 'atom x m' / 'segment lo hi m' lines ('-' for stdin)")
    src.add_argument("--atoms", help="inline atoms, e.g. --atoms=-1:2/3,2:1/3")
    _sim_flags(p)
    _output_flags(p)
    return parser


def _config(args) -> SimConfig:
    try:
        return SimConfig(n_paths=args.paths, dt=args.dt, horizon=args.horizon, seed=args.seed,
                         tail_mode=args.tail_mode)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _exp_format(x: float) -> str:
    # shortest scientific form, e.g. 0.0e0 or 3.1e-9
    if x == 0:
        return "0.0e0"
    e = int(math.floor(math.log10(abs(x))))
    m = x / 10.0**e
    if round(abs(m), 1) >= 10.0:
        m /= 10.0
        e += 1
    return f"{m:.1f}e{e}"


def _table(rows, header, args, out) -> None:
    if args.json:
        out.write(json.dumps([dict(zip(header, r)) for r in rows], indent=2) + "\n")
    elif args.csv:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    else:
        out.write("  ".join(f"{h:>14s}" for h in header) + "\n")
        for r in rows:
            out.write("  ".join(f"{v:>14.8g}" if isinstance(v, float) else f"{v!s:>14s}" for v in r) + "\n")


def cmd_price(args, out) -> int:
    try:
        t, K, factor = rescale_inputs(args.t, args.strike, args.spot, args.sigma, args.nu)
        q = bs_price(t, K)
        alt = alt_price(t, K) if t > 0 else q.call
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    call, put = factor * q.call, factor * q.put
    # agreement at the printed precision of the quadrature (1e-12)
    gap = round(abs(alt - q.call), 12)
    if args.json:
        out.write(json.dumps({"t": args.t, "strike": args.strike, "call": call, "put": put,
                              "alt_call": factor * alt, "alt_bs_agreement": gap}, indent=2) + "\n")
    elif args.csv:
        _table([[args.t, args.strike, call, put, factor * alt, gap]],
               ["t", "strike", "call", "put", "alt_call", "alt_bs_agreement"], args, out)
    else:
        out.write(f"call {call:.6f}\nput {put:.6f}\nalt-BS agreement: {_exp_format(gap)}\n")
    return EXIT_OK


def cmd_law(args, out) -> int:
    ts = args.grid
    if np.any(ts < 0):
        raise UsageError("times must be non-negative")
    if args.name == "four-nsq":
        law = laws.four_nsq_law()
        rows = [[float(t), 0.0, float(law.density(t)) if t > 0 else 0.0, float(law.cdf(t))] for t in ts]
    else:
        K = args.strike
        try:
            law = model_gk_law(args.model, K)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        cdf = law.cdf_grid(ts)
        rows = [[float(t), law.atom_at_zero, float(law.density(t)) if t > 0 else 0.0, float(c)]
                for t, c in zip(ts, cdf)]
    _table(rows, ["t", "atom", "density", "cdf"], args, out)
    return EXIT_OK


def _check_params(name, args) -> dict:
    params = {}
    if args.strike is not None:
        params["K"] = args.strike
    if args.t is not None:
        params["t"] = args.t
    accepted = inspect.signature(check_function(name)).parameters
    bad = [k for k in params if k not in accepted]
    if bad:
        raise UsageError(f"check {name} takes no {'/'.join('--strike' if k == 'K' else '--t' for k in bad)}")
    return params


def _emit_reports(reports, args, out) -> int:
    if args.json:
        out.write(reports_to_json(reports, timing=args.timing) + "\n")
    elif args.csv:
        out.write(reports_to_csv(reports, timing=args.timing))
    else:
        for r in reports:
            out.write(r.summary() + "\n")
            for p in r.parts:
                mark = "ok  " if p.passed else "FAIL"
                out.write(f"    {mark} {p.label}: {p.estimate:.6g} vs {p.reference:.6g} "
                          f"(allowance {p.allowance:.3g})\n")
            if args.timing:
                out.write(f"    wall time {r.wall_time:.1f}s\n")
    return EXIT_OK if all(r.verdict == "pass" for r in reports) else EXIT_FAIL


def cmd_verify(args, out) -> int:
    names = [n for n, _ in list_checks()]
    if args.name not in names:
        raise UsageError(f"unknown check {args.name!r}; choose from {', '.join(names)}")
    config = _config(args)
    try:
        report = run_check(args.name, model=args.model, config=config, **_check_params(args.name, args))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return _emit_reports([report], args, out)


def cmd_verify_all(args, out) -> int:
    if args.list:
        for name, anchor in list_checks():
            out.write(f"{name:24s} {anchor}\n")
        return EXIT_OK
    config = _config(args)
    reports = []
    for name, _ in list_checks():
        reports.append(run_check(name, config=config))
        # progress goes to stderr so stdout stays reproducible
        print(f"{reports[-1].summary()}  ({reports[-1].wall_time:.1f}s)", file=sys.stderr, flush=True)
    return _emit_reports(reports, args, out)


def _inline_atoms(text: str) -> TargetMeasure:
    pairs = []
    try:
        for item in text.split(","):
            x, m = item.split(":")
            pairs.append((float(Fraction(x.strip())), float(Fraction(m.strip()))))
    except (ValueError, ZeroDivisionError):
        raise UsageError("atoms must look like '-1:2/3,2:1/3'") from None
    # exact rational masses may round to a sum a few ulps from 1
    total = math.fsum(m for _, m in pairs)
    return TargetMeasure.from_atoms([(x, m / total) for x, m in pairs])


def cmd_embed(args, out) -> int:
    try:
        if args.atoms is not None:
            nu = _inline_atoms(args.atoms)
        else:
            text = sys.stdin.read() if args.measure == "-" else open(args.measure, encoding="utf-8").read()
            nu = parse_measure(text)
    except OSError as exc:
        raise UsageError(f"cannot read measure: {exc}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    res = azema_yor_stop(nu, _config(args))
    n = res.n_paths
    rows = []
    for x, freq, mass in res.atom_frequencies():
        rows.append([x, freq, mass, math.sqrt(max(freq * (1.0 - freq), 0.0) / n)])
    done = res.values[~np.isnan(res.values)]
    mean = float(done.sum() / n)
    se = float(np.std(np.where(np.isnan(res.values), 0.0, res.values)) / math.sqrt(n))
    if args.json:
        out.write(json.dumps({"atoms": [dict(zip(("location", "frequency", "mass", "stderr"), r)) for r in rows],
                              "mean": mean, "mean_stderr": se, "censored": res.censored, "n_paths": n},
                             indent=2) + "\n")
    else:
        _table(rows, ["location", "frequency", "mass", "stderr"], args, out)
        if not args.csv:
            out.write(f"mean {mean:.6f} (stderr {se:.6f}), censored {res.censored} of {n}\n")
    return EXIT_OK


COMMANDS = {"price": cmd_price, "law": cmd_law, "verify": cmd_verify, "verify-all": cmd_verify_all,
            "embed": cmd_embed}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return COMMANDS[args.verb](args, out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"lastpassage: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
