"""Extended-precision helpers: working precision, exact pi-monomials, compensated sums."""

from __future__ import annotations

import contextlib
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Union

import gmpy2
from gmpy2 import mpfr

_MPFR = type(mpfr(0))

DEFAULT_DIGITS = 40
_GUARD_BITS = 16


def digits_to_bits(digits: int) -> int:
    return int(math.ceil(digits * math.log2(10))) + _GUARD_BITS


def set_precision(digits: int = DEFAULT_DIGITS) -> None:
    """Set the gmpy2 working precision of the current thread."""
    gmpy2.get_context().precision = digits_to_bits(digits)


@contextlib.contextmanager
def precision(digits: int) -> Iterator[None]:
    ctx = gmpy2.get_context()
    old = ctx.precision
    ctx.precision = digits_to_bits(digits)
    try:
        yield
    finally:
        ctx.precision = old


def current_digits() -> int:
    return int((gmpy2.get_context().precision - _GUARD_BITS) / math.log2(10))


set_precision(DEFAULT_DIGITS)


def pi() -> mpfr:
    return gmpy2.const_pi()


def to_mpfr(x) -> mpfr:
    """Convert int/float/Fraction/str/PiMonomial to an mpfr at working precision."""
    if isinstance(x, PiMonomial):
        return x.to_mpfr()
    if isinstance(x, Fraction):
        return mpfr(x.numerator) / mpfr(x.denominator)
    return mpfr(x)


def mpfr_to_fraction(x: mpfr) -> Fraction:
    n, d = x.as_integer_ratio()
    return Fraction(int(n), int(d))


def fmt(x, digits: int | None = None) -> str:
    """Decimal string of an mpfr with (by default) the full working precision."""
    digits = digits or current_digits()
    return gmpy2.mpfr(x).__format__(f".{digits}g")


# ---------------------------------------------------------------------------
# Exact values of the form q * pi^k
# ---------------------------------------------------------------------------

RealLike = Union[int, float, Fraction, str, "PiMonomial"]

_PI_RE = re.compile(
    r"""^\s*(?P<coef>[-+]?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?(/\d+)?)?\s*\*?\s*
        (?P<pi>pi(\s*\^\s*(?P<pow>[-+]?\d+(/\d+)?))?)?\s*
        (/\s*(?P<den>\d+))?\s*$""",
    re.VERBOSE,
)


@dataclass(frozen=True)
class PiMonomial:
    """Exact real ``coef * pi**power`` with rational coefficient and rational power."""

    coef: Fraction
    power: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "coef", Fraction(self.coef))
        object.__setattr__(self, "power", Fraction(self.power) if self.coef else Fraction(0))

    @classmethod
    def of(cls, x: RealLike) -> "PiMonomial":
        if isinstance(x, PiMonomial):
            return x
        if isinstance(x, bool):
            raise TypeError("bool is not a real datum")
        if isinstance(x, (int, Fraction)):
            return cls(Fraction(x))
        if isinstance(x, float):
            if not math.isfinite(x):
                raise ValueError(f"non-finite real {x!r}")
            return cls(Fraction(x))
        if isinstance(x, str):
            return cls._parse(x)
        raise TypeError(f"cannot interpret {x!r} as an exact real")

    @classmethod
    def _parse(cls, text: str) -> "PiMonomial":
        text = text.strip().replace("π", "pi")
        if text.startswith("-pi"):
            return -cls._parse(text[1:])
        m = _PI_RE.match(text)
        if not m or (m.group("coef") is None and m.group("pi") is None):
            raise ValueError(f"cannot parse real {text!r}")
        coef = Fraction(m.group("coef")) if m.group("coef") else Fraction(1)
        power = Fraction(0)
        if m.group("pi"):
            power = Fraction(m.group("pow")) if m.group("pow") else Fraction(1)
        if m.group("den"):
            coef /= int(m.group("den"))
        return cls(coef, power)

    def is_zero(self) -> bool:
        return self.coef == 0

    def __mul__(self, other):
        o = PiMonomial.of(other)
        return PiMonomial(self.coef * o.coef, self.power + o.power)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = PiMonomial.of(other)
        return PiMonomial(self.coef / o.coef, self.power - o.power)

    def __rtruediv__(self, other):
        return PiMonomial.of(other) / self

    def __pow__(self, k: int):
        return PiMonomial(self.coef**k, self.power * k)

    def __neg__(self):
        return PiMonomial(-self.coef, self.power)

    def __add__(self, other):
        o = PiMonomial.of(other)
        if o.is_zero():
            return self
        if self.is_zero():
            return o
        if o.power != self.power:
            raise ValueError("sum of pi-monomials with different powers is not a monomial")
        return PiMonomial(self.coef + o.coef, self.power)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-PiMonomial.of(other))

    def __eq__(self, other):
        try:
            o = PiMonomial.of(other)
        except (TypeError, ValueError):
            return NotImplemented
        return self.coef == o.coef and self.power == o.power

    def __hash__(self):
        return hash((self.coef, self.power))

    def to_mpfr(self) -> mpfr:
        v = to_mpfr(self.coef)
        if self.power:
            v *= pi() ** to_mpfr(self.power)
        return v

    def __float__(self):
        return float(self.to_mpfr())

    def rational(self) -> Fraction:
        if self.power:
            raise ValueError(f"{self} is not rational")
        return self.coef

    def __str__(self):
        c = str(self.coef)
        if not self.power:
            return c
        p = "pi" if self.power == 1 else f"pi^{self.power}"
        if self.coef == 1:
            return p
        if self.coef == -1:
            return "-" + p
        return f"{c}*{p}"

    def to_json(self):
        """A float when that is exact, otherwise the canonical string form."""
        if not self.power and Fraction(float(self.coef)) == self.coef:
            return float(self.coef)
        return str(self)


class PiSum:
    """Exact finite sum of pi-monomials, keyed by power of pi."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        acc: dict[Fraction, Fraction] = {}
        for m in terms or ():
            m = PiMonomial.of(m)
            if m.coef:
                acc[m.power] = acc.get(m.power, Fraction(0)) + m.coef
        self.terms = {p: c for p, c in sorted(acc.items()) if c}

    @classmethod
    def of(cls, x) -> "PiSum":
        return x if isinstance(x, PiSum) else cls([PiMonomial.of(x)])

    def monomials(self) -> list[PiMonomial]:
        return [PiMonomial(c, p) for p, c in self.terms.items()]

    def __add__(self, other):
        return PiSum(self.monomials() + PiSum.of(other).monomials())

    __radd__ = __add__

    def __neg__(self):
        return PiSum([-m for m in self.monomials()])

    def __sub__(self, other):
        return self + (-PiSum.of(other))

    def __mul__(self, other):
        o = PiSum.of(other)
        return PiSum([a * b for a in self.monomials() for b in o.monomials()])

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = PiSum.of(other)
        if len(o.terms) != 1:
            raise ValueError("can only divide by a single pi-monomial")
        d = o.monomials()[0]
        return PiSum([a / d for a in self.monomials()])

    def __eq__(self, other):
        try:
            return self.terms == PiSum.of(other).terms
        except (TypeError, ValueError):
            return NotImplemented

    def __hash__(self):
        return hash(tuple(self.terms.items()))

    def as_monomial(self) -> PiMonomial:
        if not self.terms:
            return PiMonomial(0)
        if len(self.terms) > 1:
            raise ValueError(f"{self} is not a single pi-monomial")
        return self.monomials()[0]

    def to_mpfr(self) -> mpfr:
        return csum((m.to_mpfr() for m in self.monomials()), mpfr(0))

    def __float__(self):
        return float(self.to_mpfr())

    def __str__(self):
        if not self.terms:
            return "0"
        out = " + ".join(str(m) for m in self.monomials())
        return out.replace("+ -", "- ")

    __repr__ = __str__


# ---------------------------------------------------------------------------
# Compensated summation
# ---------------------------------------------------------------------------


class CompensatedSum:
    """Neumaier running sum; works for floats and mpfr alike."""

    __slots__ = ("_s", "_c")

    def __init__(self, zero=None):
        self._s = mpfr(0) if zero is None else zero
        self._c = self._s * 0

    def add(self, x) -> None:
        s = self._s
        t = s + x
        if abs(s) >= abs(x):
            self._c += (s - t) + x
        else:
            self._c += (x - t) + s
        self._s = t

    def extend(self, xs: Iterable) -> "CompensatedSum":
        for x in xs:
            self.add(x)
        return self

    @property
    def value(self):
        return self._s + self._c


def csum(xs: Iterable, zero=None):
    """Sum of an iterable; correctly rounded (MPFR sum) for mpfr input."""
    xs = list(xs)
    if xs and all(isinstance(x, _MPFR) for x in xs):
        return gmpy2.fsum(xs)
    return CompensatedSum(zero).extend(xs).value


def prefix_sums(xs: list) -> list:
    """Cumulative sums out[i] = xs[0] + ... + xs[i].

    The accumulator carries 64 extra bits, so n additions lose at most
    n * 2**-64 relative to the working precision; results keep the wider
    precision.
    """
    ctx = gmpy2.get_context()
    out = []
    with gmpy2.context(ctx, precision=ctx.precision + 64):
        acc = mpfr(0)
        for x in xs:
            acc = acc + x
            out.append(acc)
    return out
