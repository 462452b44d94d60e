"""Certified graded heat traces and their supertrace / derived / s-generating aggregates."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Sequence

from gmpy2 import mpfr

from .config import Config
from .geometry import GeometryError, GeometrySpec
from .numeric import csum, precision, to_mpfr
from .spectra import CertificateError, GradedSpectrum, _kind, product_spectrum


class AggregateError(ValueError):
    pass


@dataclass(frozen=True)
class TraceSample:
    """Per-grading truncated traces at one time t with rigorous omitted-mass bounds."""

    t: float
    kind: str
    values: dict[int, mpfr]
    bounds: dict[int, mpfr]
    terms: int = 0

    @property
    def degrees(self) -> list[int]:
        return sorted(self.values)

    @property
    def max_bound(self) -> mpfr:
        return max(self.bounds.values())


def graded_trace(
    spectrum: GradedSpectrum, t: float, *, eps_tail: float | None = None, uniform: bool = False
) -> TraceSample:
    """Sum mult * exp(-t lambda) per grading and attach the tail certificate at t.

    With ``uniform`` the certificate evaluated once at t_min is reused; the
    omitted mass decreases in t, so it is a valid (slightly looser) bound.

    Raises:
        CertificateError: if t is below the certificate's t_min, or a tail bound
            exceeds ``eps_tail``.
    """
    if not t > 0:
        raise CertificateError("t must be positive")
    if t < spectrum.t_min:
        raise CertificateError(f"t = {t} is below the certified t_min = {spectrum.t_min}")
    tm = mpfr(t)
    values, bounds, count = {}, {}, 0
    cert = spectrum.certified_bounds() if uniform else None
    for n, grading in spectrum.gradings.items():
        v, k = grading.trace(tm)
        values[n] = v
        bounds[n] = cert[n] if uniform else grading.tail_bound(tm)
        count += k
        if eps_tail is not None and bounds[n] >= eps_tail:
            raise CertificateError(
                f"tail bound {float(bounds[n]):.3g} of grading {n} at t = {t} exceeds eps_tail = {eps_tail}"
            )
    return TraceSample(float(t), spectrum.kind, values, bounds, count)


# ---------------------------------------------------------------------------
# aggregates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AggregateKind:
    """``supertrace``, ``derived`` or ``s_eval`` at a real s."""

    name: str
    s: Fraction | None = None

    def __post_init__(self):
        if self.name not in ("supertrace", "derived", "s_eval"):
            raise AggregateError(f"unknown aggregate {self.name!r}")
        if (self.name == "s_eval") != (self.s is not None):
            raise AggregateError("s_eval needs s, and only s_eval takes s")

    @classmethod
    def parse(cls, text: "str | AggregateKind") -> "AggregateKind":
        if isinstance(text, AggregateKind):
            return text
        t = text.strip().lower()
        if t in ("super", "supertrace"):
            return cls("supertrace")
        if t == "derived":
            return cls("derived")
        if t.startswith("s:") or t.startswith("s="):
            try:
                return cls("s_eval", Fraction(t[2:]))
            except ValueError:
                raise AggregateError(f"bad s value in {text!r}") from None
        raise AggregateError(f"aggregate must be super, derived or s:VALUE, got {text!r}")

    def weight(self, p: int) -> mpfr:
        sign = -1 if p % 2 else 1
        if self.name == "supertrace":
            return mpfr(sign)
        if self.name == "derived":
            return mpfr(sign * p)
        return sign * to_mpfr(self.s) ** p

    def __str__(self):
        return self.name if self.s is None else f"s:{self.s}"


SUPER = AggregateKind("supertrace")
DERIVED = AggregateKind("derived")


class Bounded(NamedTuple):
    value: mpfr
    error: mpfr


def aggregate(sample: TraceSample, kind: AggregateKind | str, *, degrees: Sequence[int] | None = None) -> Bounded:
    """Weighted alternating sum of the graded traces with its propagated bound.

    Args:
        degrees: gradings the sample must contain; defaults to 0..max present.
    """
    kind = AggregateKind.parse(kind)
    need = range(max(sample.values) + 1) if degrees is None else degrees
    if missing := [p for p in need if p not in sample.values]:
        raise AggregateError(f"sample is missing gradings {missing}")
    terms, err = [], []
    for p in need:
        w = kind.weight(p)
        terms.append(w * sample.values[p])
        err.append(abs(w) * sample.bounds[p])
    return Bounded(csum(terms), csum(err))


def s_eval_derivative(sample: TraceSample, s) -> Bounded:
    """d/ds of sum (-1)^p Tr_p s^p."""
    s = to_mpfr(Fraction(s) if not isinstance(s, mpfr) else s)
    terms, err = [], []
    for p in sample.degrees:
        if p == 0:
            continue
        w = (-1) ** p * p * s ** (p - 1)
        terms.append(w * sample.values[p])
        err.append(abs(w) * sample.bounds[p])
    return Bounded(csum(terms), csum(err))


# ---------------------------------------------------------------------------
# cached spectra and ladder samples
# ---------------------------------------------------------------------------

_LOCK = threading.RLock()
_SPECTRA: dict = {}
_SAMPLES: dict = {}


def clear_caches() -> None:
    with _LOCK:
        _SPECTRA.clear()
        _SAMPLES.clear()


def initial_cutoff(t_min: float, eps_tail: float) -> float:
    return (math.log(1 / eps_tail) + 20) / t_min


def certified_spectrum(spec: GeometrySpec, kind: str, config: Config, *, t_min: float | None = None) -> GradedSpectrum:
    """Product spectrum whose every tail bound is below eps_tail for all t >= t_min.

    The cutoff starts at (ln(1/eps) + 20) / t_min and grows by 20% until the
    certificates at t_min (hence at every larger t) are small enough.
    """
    kind = _kind(kind)
    t_min = config.t_min if t_min is None else t_min
    key = (spec, kind, config.precision_digits, config.eps_tail, t_min)
    with _LOCK:
        got = _SPECTRA.get(key)
    if got is not None:
        return got
    with precision(config.precision_digits):
        cutoff = initial_cutoff(t_min, config.eps_tail)
        for _ in range(60):
            gs = product_spectrum(spec, kind, cutoff, t_min=t_min)
            if all(b <= config.eps_tail for b in gs.certified_bounds().values()):
                break
            cutoff *= 1.2
        else:
            raise CertificateError(f"could not certify {spec.label()} down to t = {t_min}")
    with _LOCK:
        _SPECTRA[key] = gs
    return gs


def ladder_samples(spec: GeometrySpec, kind: str, config: Config, times: Sequence[float] | None = None) -> list[TraceSample]:
    """Certified samples at every ladder time (cached per spec, kind and config)."""
    kind = _kind(kind)
    times = list(config.ladder.times if times is None else times)
    t_min = min(min(times), config.t_min)
    gs = certified_spectrum(spec, kind, config, t_min=t_min)
    out = []
    with precision(config.precision_digits):
        for t in times:
            key = (spec, kind, config.precision_digits, config.eps_tail, t_min, t)
            with _LOCK:
                got = _SAMPLES.get(key)
            if got is None:
                got = graded_trace(gs, t, eps_tail=config.eps_tail, uniform=True)
                with _LOCK:
                    _SAMPLES[key] = got
            out.append(got)
    return out


def sample_at(spec: GeometrySpec, kind: str, t: float, config: Config) -> TraceSample:
    return ladder_samples(spec, kind, config, [t])[0]


def aggregate_series(
    spec: GeometrySpec, kind: str, agg: AggregateKind | str, config: Config, times: Sequence[float] | None = None
) -> list[tuple[float, mpfr, mpfr]]:
    """(t, value, error bound) of an aggregate along the ladder."""
    agg = AggregateKind.parse(agg)
    kind = _kind(kind)
    top = spec.m if kind == "derham" else spec.complex_dim
    if top is None:
        raise GeometryError("Dolbeault aggregates need a Dolbeault-legal spec")
    with precision(config.precision_digits):
        return [(s.t, *aggregate(s, agg, degrees=range(top + 1))) for s in ladder_samples(spec, kind, config, times)]


# ---------------------------------------------------------------------------
# product identity
# ---------------------------------------------------------------------------


class ProductIdentity(NamedTuple):
    direct: mpfr
    factored: mpfr
    bound: mpfr


def product_derived_identity(
    specs: Sequence[GeometrySpec], t: float, config: Config | None = None, *, kind: str = "dolbeault"
) -> ProductIdentity:
    """Derived trace of the product directly and as sum_i D_i prod_{j != i} S_j.

    Both sides carry truncation errors only; ``bound`` is their combined
    first-order error budget.
    """
    config = config or Config()
    kind = _kind(kind)
    if not specs:
        raise ValueError("need at least one factor")
    if kind == "dolbeault":
        for s in specs:
            s.require_dolbeault()
    prod = specs[0]
    for s in specs[1:]:
        prod = prod * s
    with precision(config.precision_digits):
        direct = aggregate_series(prod, kind, DERIVED, config, [t])[0]
        facs = []
        for s in specs:
            S = aggregate_series(s, kind, SUPER, config, [t])[0]
            D = aggregate_series(s, kind, DERIVED, config, [t])[0]
            facs.append((S[1], S[2], D[1], D[2]))
        terms, errs = [], []
        for i, (_, _, D, dD) in enumerate(facs):
            others = [f for j, f in enumerate(facs) if j != i]
            p = D
            for S, _, _, _ in others:
                p = p * S
            terms.append(p)
            mag = [abs(S) + dS for S, dS, _, _ in others]
            e = dD
            for x in mag:
                e = e * x
            # error of the S-product times |D|
            for j in range(len(others)):
                e2 = (abs(D) + dD) * others[j][1]
                for k, x in enumerate(mag):
                    if k != j:
                        e2 = e2 * x
                e += e2
            errs.append(e)
        factored = csum(terms)
        bound = direct[2] + csum(errs)
    return ProductIdentity(direct[1], factored, bound)
