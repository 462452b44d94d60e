"""Command line interface: ``heatlab {spectrum,trace,coeffs,predict,verify}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from contextlib import contextmanager
from dataclasses import replace

import mpmath

from . import charnum
from .asymptotics import FitRefused
from .config import Config, ConfigError, Ladder, load_config
from .geometry import GeometryError, load_geometry
from .heat import AggregateKind, aggregate_series
from .numeric import fmt, precision
from .spectra import CertificateError, SpectrumError, product_spectrum
from .verify import CheckError, emit_report, run_suite, _fit_series


@contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _config(args) -> Config:
    cfg = load_config(getattr(args, "config", None))
    ladder = getattr(args, "t_ladder", None)
    if ladder:
        cfg = cfg.with_ladder(Ladder.parse(ladder))
    if getattr(args, "precision", None):
        cfg = replace(cfg, precision_digits=args.precision)
    return cfg


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def cmd_spectrum(args) -> int:
    spec = load_geometry(args.geometry, dolbeault=args.complex == "dolbeault")
    with precision(args.precision or Config().precision_digits):
        gs = product_spectrum(spec, args.complex, args.cutoff)
        degrees = args.degree if args.degree is not None else gs.degrees
        if bad := [d for d in degrees if d not in gs.gradings]:
            raise SpectrumError(f"no grading {bad} for this geometry (have {gs.degrees})")
        if gs.empty:
            print("warning: cutoff is below every eigenvalue; all gradings are empty", file=sys.stderr)
        with _output(args.out) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["grading", "eigenvalue", "multiplicity"])
            for d in degrees:
                for ln in gs.lines(d):
                    w.writerow([d, fmt(ln.eigenvalue), ln.multiplicity])
    return 0


def cmd_trace(args) -> int:
    cfg = _config(args)
    spec = load_geometry(args.geometry, dolbeault=args.complex == "dolbeault")
    series = aggregate_series(spec, args.complex, AggregateKind.parse(args.aggregate), cfg)
    with precision(cfg.precision_digits), _output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "value", "error_bound"])
        for t, v, e in series:
            w.writerow([repr(t), fmt(v), fmt(e, 6)])
    return 0


def cmd_coeffs(args) -> int:
    cfg = _config(args)
    spec = load_geometry(args.geometry, dolbeault=args.complex == "dolbeault")
    orders = args.orders if args.orders is not None else list(range(0, spec.m + 3, 2))
    if cfg.include_odd is False and any(n % 2 for n in orders):
        cfg = replace(cfg, include_odd=True)
    series = aggregate_series(spec, args.complex, AggregateKind.parse(args.aggregate), cfg)
    fit = _fit_series(series, spec.m, max(orders), cfg)
    doc = fit.to_dict()
    doc["coefficients"] = {str(n): mpmath.nstr(fit[n], 30) for n in orders}
    doc["uncertainty"] = {str(n): mpmath.nstr(fit.uncertainty[n], 6) for n in orders}
    doc["aggregate"] = args.aggregate
    doc["complex"] = args.complex
    doc["geometry"] = spec.to_dict()
    with _output(args.out) as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    return 0


def cmd_predict(args) -> int:
    spec = load_geometry(args.geometry)
    ident = args.identity
    if ident == "derived-top":
        kind = args.complex or ("dolbeault" if spec.dolbeault_legal else "derham")
        pred = charnum.predicted_derived_top(spec, kind)
    else:
        pred = charnum.predict(spec, ident)
    with _output(args.out) as fh:
        json.dump(pred.to_dict(), fh, indent=2)
        fh.write("\n")
    return 0


def cmd_verify(args) -> int:
    cfg = _config(args)
    suite = "all" if args.suite == "all" else [s.strip() for s in args.suite.split(",") if s.strip()]
    geoms = [load_geometry(p) for p in args.geometry] if args.geometry else None
    results = run_suite(suite, geoms, cfg)
    with _output(args.out) as fh:
        fh.write(emit_report(results, "json"))
        fh.write("\n")
    if args.csv:
        with _output(args.csv) as fh:
            fh.write(emit_report(results, "csv"))
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed", file=sys.stderr)
    return 0 if not failed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, complex_required=True):
        sp.add_argument("--geometry", required=True, help="JSON geometry document")
        if complex_required:
            sp.add_argument("--complex", required=True, choices=["derham", "dolbeault"])
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--precision", type=int, help="working precision in decimal digits")

    sp = sub.add_parser("spectrum", help="graded eigenvalue lists below a cutoff")
    common(sp)
    sp.add_argument("--degree", type=_int_list, help="comma-separated gradings (default: all)")
    sp.add_argument("--cutoff", type=float, required=True)
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("trace", help="certified aggregate heat traces along a t-ladder")
    common(sp)
    sp.add_argument("--aggregate", default="super", help="super | derived | s:VALUE")
    sp.add_argument("--t-ladder", help="T0:RATIO:COUNT")
    sp.add_argument("--config", help="JSON config file")
    sp.set_defaults(func=cmd_trace)

    sp = sub.add_parser("coeffs", help="fitted small-t expansion coefficients")
    common(sp)
    sp.add_argument("--aggregate", default="super", help="super | derived | s:VALUE")
    sp.add_argument("--orders", type=_int_list, help="comma-separated orders n (default 0,2,..,m+2)")
    sp.add_argument("--t-ladder", help="T0:RATIO:COUNT")
    sp.add_argument("--config", help="JSON config file")
    sp.set_defaults(func=cmd_coeffs)

    sp = sub.add_parser("predict", help="exact characteristic-number predictions")
    sp.add_argument("--geometry", required=True)
    sp.add_argument("--identity", required=True, choices=["euler", "index", "derived-top", "subleading"])
    sp.add_argument("--complex", choices=["derham", "dolbeault"], help="for derived-top")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("verify", help="run the check catalogue")
    sp.add_argument("--suite", default="all", help="all or comma-separated check ids")
    sp.add_argument("--config", help="JSON config file")
    sp.add_argument("--geometry", action="append", help="geometry file (repeatable); default battery otherwise")
    sp.add_argument("--out", help="JSON report (default: stdout)")
    sp.add_argument("--csv", help="also write a CSV report")
    sp.add_argument("--t-ladder", help="T0:RATIO:COUNT")
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (GeometryError, SpectrumError, CertificateError, ConfigError, CheckError, FitRefused,
            charnum.CharnumError, ValueError, OSError) as exc:
        print(f"heatlab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
