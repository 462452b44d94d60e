"""Check catalogue: spectra -> certified traces -> fits -> comparison with exact predictions."""

from __future__ import annotations

import bisect
import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import gmpy2
import mpmath
from gmpy2 import mpfr

from . import charnum
from .asymptotics import ExpansionFit, FitRefused, bernoulli_oracle, circle_oracle, fit_expansion, _mpf
from .config import Config
from .geometry import S1, S2, T, Circle, ComplexTorus, GeometrySpec, Sphere
from .heat import DERIVED, SUPER, aggregate, aggregate_series, certified_spectrum, ladder_samples, product_derived_identity
from .numeric import PiMonomial, PiSum, precision
from .spectra import CertificateError, DE_RHAM, DOLBEAULT


class CheckError(ValueError):
    pass


@dataclass
class CheckResult:
    check_id: str
    geometry: str
    predicted: str
    predicted_decimal: float
    computed: str
    abs_error: float
    tolerance: float
    uncertainty: float
    truncation_budget: float
    wall_time: float
    status: str
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        return asdict(self)


FIELDS = [f for f in CheckResult.__dataclass_fields__]


def _num(x, digits: int = 25) -> str:
    if isinstance(x, (PiSum, PiMonomial)):
        x = x.to_mpfr()
    if isinstance(x, Fraction):
        return str(x)
    return mpmath.nstr(_mpf(x), digits)


def _decimal(x) -> float:
    return float(x)


def _verdict(err, unc, tol) -> str:
    return "pass" if err <= tol and unc <= tol / 10 else "fail"


@dataclass
class _Outcome:
    predicted: object
    computed: object
    error: float
    uncertainty: float
    budget: float
    tolerance: float
    detail: str = ""
    extra_ok: bool = True


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _dol_top(spec: GeometrySpec) -> int:
    return spec.complex_dim


def _top(spec: GeometrySpec, kind: str) -> int:
    return spec.m if kind == DE_RHAM else spec.complex_dim


def fit_aggregate(spec, kind, agg, config: Config, n_max: int | None = None) -> ExpansionFit:
    series = aggregate_series(spec, kind, agg, config)
    return _fit_series(series, spec.m, n_max, config)


def fit_grading(spec, kind, q: int, config: Config, n_max: int | None = None) -> ExpansionFit:
    samples = ladder_samples(spec, kind, config)
    series = [(s.t, s.values[q], s.bounds[q]) for s in samples]
    return _fit_series(series, spec.m, n_max, config)


def _fit_series(series, m, n_max, config: Config) -> ExpansionFit:
    with precision(config.precision_digits):
        return fit_expansion(
            series,
            m,
            n_max,
            guard_orders=config.guard_orders,
            include_odd=config.include_odd,
            max_condition=config.max_condition,
            digits=2 * config.precision_digits,
        )


def _witten_shift(spec: GeometrySpec) -> Fraction:
    total = Fraction(0)
    for b in spec.blocks:
        if isinstance(b, Circle):
            total += b.witten_a**2
        elif isinstance(b, ComplexTorus):
            total += Fraction(b.novikov_c.real) ** 2 + Fraction(b.novikov_c.imag) ** 2
    return total


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------


def _constancy(spec, kind, predicted, config) -> _Outcome:
    worst, budget = mpfr(0), mpfr(0)
    top = _top(spec, kind)
    with precision(config.precision_digits):
        for s in ladder_samples(spec, kind, config):
            v, e = aggregate(s, SUPER, degrees=range(top + 1))
            worst = max(worst, abs(v - predicted))
            budget = max(budget, e)
    n = config.ladder.count
    return _Outcome(Fraction(predicted), worst, float(worst), float(budget), float(budget), config.tol_exact,
                    f"worst over {n} ladder points")


def check_ms_const(spec, config) -> _Outcome:
    return _constancy(spec, DE_RHAM, charnum.euler_char(spec), config)


def check_rr_const(spec, config) -> _Outcome:
    return _constancy(spec, DOLBEAULT, charnum.rr_index(spec), config)


def check_index_vanish(spec, config) -> _Outcome:
    kinds = [DE_RHAM] + ([DOLBEAULT] if spec.dolbeault_legal else [])
    worst, unc, parts = mpmath.mpf(0), mpmath.mpf(0), []
    for kind in kinds:
        fit = fit_aggregate(spec, kind, SUPER, config)
        for n, a in fit.coefficients.items():
            if n != spec.m:
                worst = max(worst, abs(a))
                unc = max(unc, fit.uncertainty[n])
        parts.append(f"{kind}: " + ", ".join(f"A{n}={mpmath.nstr(a, 5)}" for n, a in fit.coefficients.items()))
    return _Outcome(Fraction(0), worst, float(worst), float(unc), 0.0, config.tol_fit, "; ".join(parts))


def check_derham_derived_vanish(spec, config) -> _Outcome:
    fit = fit_aggregate(spec, DE_RHAM, DERIVED, config)
    low = [n for n in fit.orders if n < spec.m - 1]
    worst = max((abs(fit[n]) for n in low), default=mpmath.mpf(0))
    unc = max((fit.uncertainty[n] for n in low), default=mpmath.mpf(0))
    detail = ", ".join(f"A{n}={mpmath.nstr(fit[n], 5)}" for n in low)
    return _Outcome(Fraction(0), worst, float(worst), float(unc), 0.0, config.tol_fit, detail)


def check_derham_derived_top(spec, config) -> _Outcome:
    pred = charnum.predicted_derived_top(spec, DE_RHAM)
    fit = fit_aggregate(spec, DE_RHAM, DERIVED, config)
    a = fit[spec.m]
    err = abs(a - _mpf(pred.value))
    return _Outcome(pred.value, a, float(err), float(fit.uncertainty[spec.m]), 0.0, config.tol_fit,
                    f"(m/2) chi with chi = {charnum.euler_char(spec)}")


def check_dol_derived_top(spec, config) -> _Outcome:
    pred = charnum.predicted_derived_top(spec, DOLBEAULT)
    fit = fit_aggregate(spec, DOLBEAULT, DERIVED, config)
    a = fit[spec.m]
    err = abs(a - _mpf(pred.value))
    paths = ", ".join(f"{k}={v}" for k, v in pred.paths.items())
    ok = pred.agree
    if len(spec.blocks) == 1 and isinstance(spec.blocks[0], ComplexTorus) and spec.blocks[0].bundle_degree:
        oracle = bernoulli_oracle(spec.blocks[0], 2)[2]
        ok = ok and oracle == PiMonomial(pred.value)
        paths += f", Bernoulli={oracle}"
    return _Outcome(pred.value, a, float(err), float(fit.uncertainty[spec.m]), 0.0, config.tol_fit,
                    f"paths agree={ok}: {paths}", ok)


def check_dol_subleading(spec, config) -> _Outcome:
    pred = charnum.predicted_subleading(spec)
    n = spec.m - 2
    fit = fit_aggregate(spec, DOLBEAULT, DERIVED, config)
    a = fit[n]
    err = abs(a - _mpf(pred.value.to_mpfr()))
    d = pred.diagnostics
    return _Outcome(pred.value, a, float(err), float(fit.uncertainty[n]), 0.0, config.tol_fit,
                    f"pairing={d['pairing']}, reconciliation factor={d['factor']}")


def _factors(spec: GeometrySpec) -> list[GeometrySpec]:
    return [GeometrySpec((b,)) for b in spec.blocks]


def check_product_exact(spec, config) -> _Outcome:
    kind = DOLBEAULT if spec.dolbeault_legal else DE_RHAM
    worst, budget = mpfr(0), mpfr(0)
    with precision(config.precision_digits):
        for t in config.ladder.times:
            r = product_derived_identity(_factors(spec), t, config, kind=kind)
            worst = max(worst, abs(r.direct - r.factored))
            budget = max(budget, r.bound)
    return _Outcome(Fraction(0), worst, float(worst), float(budget), float(budget), config.tol_exact,
                    f"{kind} derived, direct vs sum_i D_i prod_j S_j")


def check_restrict_circle(spec, config) -> _Outcome:
    i = next(k for k, b in enumerate(spec.blocks) if isinstance(b, Circle))
    circle = GeometrySpec((spec.blocks[i],))
    rest = GeometrySpec(spec.blocks[:i] + spec.blocks[i + 1 :])
    worst, budget = mpfr(0), mpfr(0)
    with precision(config.precision_digits):
        full = ladder_samples(spec, DE_RHAM, config)
        cs = ladder_samples(circle, DE_RHAM, config)
        ns = ladder_samples(rest, DE_RHAM, config)
        for f, c, n in zip(full, cs, ns):
            d, de = aggregate(f, DERIVED, degrees=range(spec.m + 1))
            s, se = aggregate(n, SUPER, degrees=range(rest.m + 1))
            tr, tre = c.values[0], c.bounds[0]
            worst = max(worst, abs(d + tr * s))
            budget = max(budget, de + (tr + tre) * se + tre * abs(s))
    return _Outcome(Fraction(0), worst, float(worst), float(budget), float(budget), config.tol_exact,
                    "derived(N x S1) + Tr_S1 * supertrace(N)")


def check_witten_shift(spec, config) -> _Outcome:
    shift = _witten_shift(spec)
    base = spec.undeformed()
    worst, budget = mpfr(0), mpfr(0)
    with precision(config.precision_digits):
        a2 = mpfr(shift.numerator) / shift.denominator
        for s, s0 in zip(ladder_samples(spec, DE_RHAM, config), ladder_samples(base, DE_RHAM, config)):
            f = gmpy2.exp(s.t * a2)
            for p in s0.values:
                worst = max(worst, abs(s.values[p] * f - s0.values[p]))
                budget = max(budget, s.bounds[p] * f + s0.bounds[p])
    detail, ok = f"|omega|^2 = {shift}", True
    if len(spec.blocks) == 1 and isinstance(spec.blocks[0], Circle):
        fit = fit_grading(spec, DE_RHAM, 0, config)
        oracle = circle_oracle(spec.blocks[0], max(fit.orders))
        ferr = max(abs(fit[n] - _mpf(oracle[n])) for n in fit.orders)
        funs = max(fit.uncertainty[n] for n in fit.orders)
        ok = ferr <= config.tol_strict and funs <= config.tol_strict / 10
        detail += f"; circle oracle fit error {mpmath.nstr(ferr, 3)} (uncertainty {mpmath.nstr(funs, 3)})"
    return _Outcome(Fraction(0), worst, float(worst), float(budget), float(budget), config.tol_exact, detail, ok)


def check_novikov_inv(spec, config) -> _Outcome:
    base = spec.undeformed()
    worst, unc = mpmath.mpf(0), mpmath.mpf(0)
    for q in range(spec.complex_dim + 1):
        f1 = fit_grading(spec, DOLBEAULT, q, config, spec.m)
        f0 = fit_grading(base, DOLBEAULT, q, config, spec.m)
        for n in f1.orders:
            worst = max(worst, abs(f1[n] - f0[n]))
            unc = max(unc, f1.uncertainty[n] + f0.uncertainty[n])
    g1 = certified_spectrum(spec, DOLBEAULT, config).lines(0)
    g0 = certified_spectrum(base, DOLBEAULT, config).lines(0)
    # distance of each low deformed eigenvalue to the nearest undeformed one
    ev0 = [ln.eigenvalue for ln in g0]
    shift = mpfr(0)
    for ln in g1[:20]:
        i = bisect.bisect_left(ev0, ln.eigenvalue)
        near = min(abs(ln.eigenvalue - ev0[j]) for j in (i - 1, i) if 0 <= j < len(ev0))
        shift = max(shift, near)
    ok = shift > 1e-2
    return _Outcome(Fraction(0), worst, float(worst), float(unc), 0.0, config.tol_strict,
                    f"largest low-eigenvalue displacement {mpmath.nstr(_mpf(shift), 5)}", ok)


def check_l26_sphere(spec, config) -> _Outcome:
    fit = fit_aggregate(spec, DOLBEAULT, SUPER, config)
    pred = Fraction(1)  # (1/8 pi) * integral of scalar curvature
    a = fit[2]
    return _Outcome(pred, a, float(abs(a - 1)), float(fit.uncertainty[2]), 0.0, config.tol_fit,
                    "A2 of the Dolbeault supertrace vs tau/(8 pi) integrated")


# ---------------------------------------------------------------------------
# catalogue
# ---------------------------------------------------------------------------


def _has_circle(s):
    return any(isinstance(b, Circle) for b in s.blocks)


def _novikov(s):
    return s.dolbeault_legal and any(
        isinstance(b, ComplexTorus) and b.bundle_degree == 0 and b.novikov_c for b in s.blocks
    )


@dataclass(frozen=True)
class CheckDef:
    id: str
    run: Callable[[GeometrySpec, Config], _Outcome]
    legal: Callable[[GeometrySpec], bool]
    defaults: tuple[GeometrySpec, ...]
    anchor: str = ""


_S2, _S1 = S2(), S1()
CATALOGUE: dict[str, CheckDef] = {
    c.id: c
    for c in [
        CheckDef("MS-CONST", check_ms_const, lambda s: True,
                 (_S1, _S1 * _S1, _S2, T(0), T(1), T(2), T(3), _S2 * _S2, _S2 * T(1), T(1) * T(1), S1(a="1/2")),
                 "de Rham supertrace equals the Euler characteristic"),
        CheckDef("RR-CONST", check_rr_const, lambda s: s.dolbeault_legal,
                 (_S2, T(0), T(1), T(2), T(3), T(-2), _S2 * _S2, _S2 * T(1), _S2 * T(2), T(1) * T(1),
                  T(2) * T(1, area=2), T(0, c=complex(0.3, 0.2))),
                 "Dolbeault supertrace equals the Riemann-Roch index"),
        CheckDef("INDEX-VANISH", check_index_vanish, lambda s: True,
                 (_S1, _S1 * _S1, _S2, T(0), T(1), T(3), _S2 * _S2, _S2 * T(1), T(1) * T(1)),
                 "supertrace coefficients vanish off the top order"),
        CheckDef("DERHAM-DERIVED-VANISH", check_derham_derived_vanish, lambda s: s.m >= 2,
                 (_S1 * _S1, _S2, T(0), _S2 * _S2, _S2 * T(1), T(1) * T(1)),
                 "de Rham derived coefficients vanish below order m-1"),
        CheckDef("DERHAM-DERIVED-TOP", check_derham_derived_top, lambda s: s.m % 2 == 0,
                 (_S1 * _S1, _S2, T(0), _S2 * _S2),
                 "top de Rham derived coefficient equals (m/2) chi"),
        CheckDef("DOL-DERIVED-TOP", check_dol_derived_top, lambda s: s.dolbeault_legal,
                 (_S2, T(0), T(1), T(2), T(3), T(-2), _S2 * _S2, _S2 * T(1), _S2 * T(2), T(1) * T(1),
                  T(2) * T(3)),
                 "top Dolbeault derived coefficient equals the characteristic number"),
        CheckDef("DOL-SUBLEADING", check_dol_subleading, lambda s: s.dolbeault_legal and s.m >= 2,
                 (T(1) * T(1), T(2) * T(1, area=2), _S2 * T(1)),
                 "order t^-1 derived coefficient equals the product recursion"),
        CheckDef("PRODUCT-EXACT", check_product_exact, lambda s: len(s.blocks) >= 2,
                 (T(1) * T(1), _S2 * T(1), T(0) * T(0), _S2 * _S2),
                 "derived trace of a product equals sum_i D_i prod_j S_j"),
        CheckDef("RESTRICT-CIRCLE", check_restrict_circle, lambda s: _has_circle(s) and len(s.blocks) >= 2,
                 (_S2 * _S1, T(0) * _S1),
                 "derived(N x S1) = -Tr_S1 * supertrace(N)"),
        CheckDef("WITTEN-SHIFT", check_witten_shift, lambda s: _witten_shift(s) != 0,
                 (S1(a="1/2"), T(0, c=0.5)),
                 "constant deformation multiplies every trace by exp(-t |omega|^2)"),
        CheckDef("NOVIKOV-INV", check_novikov_inv, _novikov,
                 (T(0, c=complex(0.3, 0.2)),),
                 "Dolbeault coefficients do not see a constant Novikov form"),
        CheckDef("L26-SPHERE", check_l26_sphere,
                 lambda s: len(s.blocks) == 1 and isinstance(s.blocks[0], Sphere),
                 (_S2,),
                 "A2 of the Dolbeault supertrace on S2 equals one"),
    ]
}

CHECK_IDS = tuple(CATALOGUE)


def default_battery() -> list[GeometrySpec]:
    """Distinct geometries used by the default plan, in first-use order."""
    seen: dict[GeometrySpec, None] = {}
    for c in CATALOGUE.values():
        for s in c.defaults:
            seen.setdefault(s, None)
    return list(seen)


def default_plan(ids: Iterable[str] = CHECK_IDS) -> list[tuple[str, GeometrySpec]]:
    return [(i, s) for i in ids for s in CATALOGUE[i].defaults]


def run_check(check_id: str, spec: GeometrySpec, config: Config | None = None) -> CheckResult:
    """Run one catalogue check on one geometry.

    Raises:
        CheckError: unknown id or a geometry the check does not apply to.
    """
    config = config or Config()
    try:
        cdef = CATALOGUE[check_id]
    except KeyError:
        raise CheckError(f"unknown check id {check_id!r}") from None
    if not cdef.legal(spec):
        raise CheckError(f"{check_id} does not apply to {spec.label()}")
    start = time.perf_counter()
    try:
        out = cdef.run(spec, config)
    except (FitRefused, CertificateError) as exc:
        return CheckResult(check_id, spec.label(), "", float("nan"), "", float("inf"), 0.0, float("inf"),
                           float("inf"), time.perf_counter() - start, "fail", f"{type(exc).__name__}: {exc}")
    status = _verdict(out.error, out.uncertainty, out.tolerance)
    if not out.extra_ok:
        status = "fail"
    pred = out.predicted
    return CheckResult(
        check_id,
        spec.label(),
        str(pred),
        _decimal(pred.to_mpfr() if isinstance(pred, PiSum) else pred),
        _num(out.computed),
        out.error,
        out.tolerance,
        out.uncertainty,
        out.budget,
        round(time.perf_counter() - start, 3),
        status,
        out.detail,
    )


def _job(args):
    cid, spec, config = args
    return run_check(cid, spec, config)


def run_suite(
    suite: str | Sequence[str] = "all",
    geometries: Sequence[GeometrySpec] | None = None,
    config: Config | None = None,
) -> list[CheckResult]:
    """Run catalogue checks in catalogue order.

    With explicit ``geometries`` every selected check runs on each geometry it
    applies to; otherwise each check runs on its default geometries.
    """
    config = config or Config()
    ids = list(CHECK_IDS) if suite == "all" else ([suite] if isinstance(suite, str) else list(suite))
    if unknown := [i for i in ids if i not in CATALOGUE]:
        raise CheckError(f"unknown check ids {unknown}")
    if geometries is None:
        plan = default_plan(ids)
    else:
        plan = [(i, s) for i in ids for s in geometries if CATALOGUE[i].legal(s)]
    jobs = [(i, s, config) for i, s in plan]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            return list(pool.map(_job, jobs))
    return [_job(j) for j in jobs]


def _json_safe(v):
    # strict JSON has no NaN or infinity; refused checks report null instead
    return None if isinstance(v, float) and not math.isfinite(v) else v


def emit_report(results: Sequence[CheckResult], format: str = "json") -> str:
    """Render results as JSON (with summary counts) or CSV (header plus one row each)."""
    if format == "json":
        passed = sum(r.passed for r in results)
        doc = {
            "summary": {"total": len(results), "passed": passed, "failed": len(results) - passed},
            "results": [{k: _json_safe(v) for k, v in r.to_dict().items()} for r in results],
        }
        return json.dumps(doc, indent=2, allow_nan=False)
    if format == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=FIELDS, lineterminator="\n")
        w.writeheader()
        for r in results:
            w.writerow(r.to_dict())
        return buf.getvalue()
    raise ValueError(f"unknown report format {format!r}")
