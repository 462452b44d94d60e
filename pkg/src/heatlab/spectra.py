"""Exact graded Laplace spectra of the model blocks and of their products.

Every block spectrum is truncated at a cutoff and carries a rigorous bound on
the heat-trace mass it omits.  Products are kept lazily as Minkowski sums over
degree compositions; their traces are evaluated over exactly the tuples whose
eigenvalue sum does not exceed the cutoff.
"""

from __future__ import annotations

import bisect
import itertools
import math
import operator
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, Sequence

import gmpy2
from gmpy2 import mpfr

from .geometry import Block, Circle, ComplexTorus, GeometryError, GeometrySpec, Sphere
from .numeric import PiMonomial, csum, pi, prefix_sums, to_mpfr

DE_RHAM = "derham"
DOLBEAULT = "dolbeault"
KINDS = (DE_RHAM, DOLBEAULT)

# fast power-table evaluation is only used while q**index stays accurate
_MAX_FAST_INDEX = 1 << 24


class SpectrumError(ValueError):
    pass


class UnsupportedFeature(SpectrumError):
    pass


class CertificateError(ValueError):
    """A trace was requested outside the validity range of its tail certificate."""


@dataclass(frozen=True)
class SpectralLine:
    eigenvalue: mpfr
    multiplicity: int

    def __iter__(self):
        yield self.eigenvalue
        yield self.multiplicity


def _kind(kind: str) -> str:
    k = kind.lower().replace("_", "").replace(" ", "")
    if k in ("derham", "der"):
        return DE_RHAM
    if k in ("dolbeault", "dol"):
        return DOLBEAULT
    raise SpectrumError(f"unknown complex {kind!r}")


# ---------------------------------------------------------------------------
# tail bounds: upper bounds on sum_{lambda > cutoff} mult * exp(-t lambda)
# ---------------------------------------------------------------------------


class TailBound:
    """Closed-form bound for one block grading, valid for every t > 0 and any cutoff."""

    def __call__(self, t, cutoff) -> mpfr:
        raise NotImplementedError

    def full(self, t) -> mpfr:
        """Upper bound on the complete trace."""
        return self(t, mpfr(-1))


def _largest_index(
    unit: mpfr, shift: mpfr, cutoff: mpfr, index_of: Callable[[int], int], inverse: Callable[[float], float]
) -> int:
    """Largest k >= 0 with shift + unit*index_of(k) <= cutoff, or -1.

    ``inverse`` gives a floating-point guess; the answer is then corrected with
    the same mpfr comparisons the generators use.
    """
    if cutoff < shift:
        return -1
    x = float((cutoff - shift) / unit)
    k = max(0, int(math.floor(inverse(x))) if math.isfinite(x) else 0)
    while k > 0 and shift + unit * index_of(k) > cutoff:
        k -= 1
    while shift + unit * index_of(k + 1) <= cutoff:
        k += 1
    return k


def _inv_square(x: float) -> float:
    return math.sqrt(max(x, 0.0))


def _inv_pronic(x: float) -> float:
    return (math.sqrt(1 + 4 * max(x, 0.0)) - 1) / 2


def _inv_linear(x: float) -> float:
    return x


@dataclass(frozen=True)
class CircleTail(TailBound):
    """Lines shift + unit*k^2, k in Z: integral comparison with a Gaussian."""

    unit: mpfr
    shift: mpfr
    mult: int = 1

    def __call__(self, t, cutoff) -> mpfr:
        t = mpfr(t)
        K = _largest_index(self.unit, self.shift, mpfr(cutoff), lambda k: k * k, _inv_square)
        rt = gmpy2.sqrt(t * self.unit)
        if K < 0:
            total = 1 + gmpy2.sqrt(pi()) / rt
        else:
            # 2 * int_K^inf exp(-t unit x^2) dx
            total = gmpy2.sqrt(pi()) / rt * gmpy2.erfc(K * rt)
        return self.mult * gmpy2.exp(-t * self.shift) * total


@dataclass(frozen=True)
class SphereTail(TailBound):
    """Lines l(l+1)*unit, l >= lmin, multiplicity mult*(2l+1)."""

    unit: mpfr
    lmin: int = 0
    mult: int = 1

    def __call__(self, t, cutoff) -> mpfr:
        t = mpfr(t)
        s = t * self.unit
        K = _largest_index(self.unit, mpfr(0), mpfr(cutoff), lambda l: l * (l + 1), _inv_pronic)
        L0 = max(self.lmin, K + 1)
        # unimodal summand f(x) = (2x+1) exp(-s x(x+1)): sum <= integral + sup
        integral = gmpy2.exp(-s * L0 * (L0 + 1)) / s
        if (2 * L0 + 1) ** 2 * s >= 2:
            sup = (2 * L0 + 1) * gmpy2.exp(-s * L0 * (L0 + 1))
        else:
            sup = gmpy2.sqrt(2 / s) * gmpy2.exp(s / 4 - mpfr(1) / 2)
        return self.mult * (integral + sup)


@dataclass(frozen=True)
class LandauTail(TailBound):
    """Lines unit*k, k >= kmin, each of multiplicity mult: exact geometric tail."""

    unit: mpfr
    kmin: int
    mult: int

    def __call__(self, t, cutoff) -> mpfr:
        t = mpfr(t)
        K = _largest_index(self.unit, mpfr(0), mpfr(cutoff), lambda k: k, _inv_linear)
        k1 = max(self.kmin, K + 1)
        return self.mult * gmpy2.exp(-self.unit * k1 * t) / -gmpy2.expm1(-self.unit * t)


@dataclass(frozen=True)
class LatticeTail(TailBound):
    """Lines shift + scale*|z|^2 over a (possibly translated) planar lattice.

    Uses N(x) <= pi (sqrt(x) + rho)^2 / covolume for the number of points with
    |z|^2 <= x (rho = diameter of a fundamental cell) and summation by parts.
    """

    scale: mpfr
    shift: mpfr
    covolume: mpfr
    rho: mpfr
    mult: int = 1

    def __call__(self, t, cutoff) -> mpfr:
        t = mpfr(t)
        tp = t * self.scale
        X = (mpfr(cutoff) - self.shift) / self.scale
        rho = self.rho
        if X <= 0:
            body = 1 / tp + rho * gmpy2.sqrt(pi() / tp) + rho * rho
        else:
            rX = gmpy2.sqrt(X)
            body = gmpy2.exp(-tp * X) * (X + 1 / tp + 2 * rho * (rX + 1 / (2 * tp * rX)) + rho * rho)
        return self.mult * gmpy2.exp(-t * self.shift) * pi() / self.covolume * body


# ---------------------------------------------------------------------------
# block spectra
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BlockSpectrum:
    """One grading of one block, truncated at ``cutoff``.

    When ``unit`` is set, eigenvalue_i == shift + unit * indices[i] with integer
    indices; traces are then evaluated from powers of exp(-t*unit).
    """

    lines: tuple[SpectralLine, ...]
    cutoff: mpfr
    tail: TailBound
    unit: mpfr | None = None
    indices: tuple[int, ...] | None = None
    shift: mpfr = mpfr(0)
    _cache: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.lines)

    @property
    def eigenvalues(self) -> list[mpfr]:
        got = self._cache.get("ev")
        if got is None:
            got = self._cache["ev"] = [ln.eigenvalue for ln in self.lines]
        return got

    def scaled(self, factor: int) -> "BlockSpectrum":
        """Same lines with every multiplicity multiplied by ``factor``."""
        tail = _ScaledTail(self.tail, factor)
        lines = tuple(SpectralLine(ln.eigenvalue, ln.multiplicity * factor) for ln in self.lines)
        return BlockSpectrum(lines, self.cutoff, tail, self.unit, self.indices, self.shift)

    def terms(self, t) -> list[mpfr]:
        """mult * exp(-t lambda) per line, ascending eigenvalue."""
        t = mpfr(t)
        key = ("terms", t, gmpy2.get_context().precision)
        got = self._cache.get(key)
        if got is not None:
            return got
        if self.unit is not None and (not self.indices or self.indices[-1] < _MAX_FAST_INDEX):
            q = gmpy2.exp(-t * self.unit)
            steps = self._steps()
            powers = {k: q**k for k in set(steps)}
            cum = itertools.accumulate(map(powers.__getitem__, steps), operator.mul,
                                       initial=gmpy2.exp(-t * self.shift))
            next(cum)
            out = [m * c for m, c in zip(self._mults(), cum)]
        else:
            out = [ln.multiplicity * gmpy2.exp(-t * ln.eigenvalue) for ln in self.lines]
        self._cache[key] = out
        return out

    def _steps(self) -> list[int]:
        got = self._cache.get("steps")
        if got is None:
            idx = self.indices
            got = self._cache["steps"] = [idx[0]] + [b - a for a, b in zip(idx, idx[1:])] if idx else []
        return got

    def _mults(self) -> list[int]:
        got = self._cache.get("mults")
        if got is None:
            got = self._cache["mults"] = [ln.multiplicity for ln in self.lines]
        return got

    def prefix(self, t) -> list[mpfr]:
        key = ("prefix", mpfr(t), gmpy2.get_context().precision)
        got = self._cache.get(key)
        if got is None:
            got = self._cache[key] = prefix_sums(self.terms(t))
        return got

    def trace(self, t) -> mpfr:
        return csum(reversed(self.terms(t)))

    def partial_trace(self, t, cutoff) -> mpfr:
        """Sum over retained lines with eigenvalue <= cutoff."""
        n = bisect.bisect_right(self.eigenvalues, cutoff)
        return self.prefix(t)[n - 1] if n else mpfr(0)

    def tail_bound(self, t, cutoff=None) -> mpfr:
        return self.tail(t, self.cutoff if cutoff is None else cutoff)

    def full_trace_bound(self, t) -> mpfr:
        return self.trace(t) + self.tail(t, self.cutoff)


@dataclass(frozen=True)
class _ScaledTail(TailBound):
    inner: TailBound
    factor: int

    def __call__(self, t, cutoff):
        return self.factor * self.inner(t, cutoff)


def _merge(pairs: Sequence[tuple[mpfr, int]]) -> list[SpectralLine]:
    """Sort and merge numerically coincident eigenvalues."""
    if not pairs:
        return []
    eps = mpfr(2) ** (8 - gmpy2.get_context().precision)
    pairs = sorted(pairs, key=lambda p: p[0])
    out = [list(pairs[0])]
    for lam, mult in pairs[1:]:
        last = out[-1]
        if lam - last[0] <= eps * max(mpfr(1), abs(lam)):
            last[1] += mult
        else:
            out.append([lam, mult])
    return [SpectralLine(lam, mult) for lam, mult in out]


def _from_indices(groups: dict[int, int], unit: mpfr, shift: mpfr, cutoff: mpfr, tail: TailBound) -> BlockSpectrum:
    idx = sorted(groups)
    lines = []
    keep = []
    for i in idx:
        lam = shift + unit * i
        if lam <= cutoff:
            lines.append(SpectralLine(lam, groups[i]))
            keep.append(i)
    return BlockSpectrum(tuple(lines), cutoff, tail, unit, tuple(keep), shift)


# circle ---------------------------------------------------------------------


def _circle_block(block: Circle, cutoff: mpfr) -> BlockSpectrum:
    unit = (PiMonomial(2, 1) / block.circumference) ** 2
    unit = unit.to_mpfr()
    shift = to_mpfr(block.witten_a**2)
    tail = CircleTail(unit, shift)
    K = _largest_index(unit, shift, cutoff, lambda k: k * k, _inv_square)
    groups = {0: 1} if K >= 0 else {}
    for k in range(1, K + 1):
        groups[k * k] = 2
    return _from_indices(groups, unit, shift, cutoff, tail)


def circle_spectrum(block: Circle, p: int, cutoff) -> list[SpectralLine]:
    """Eigenvalues (2 pi k / L)^2 + a^2 of the Witten-deformed circle, p in {0, 1}.

    The deformed Laplacian -d^2/dx^2 + a^2 acts identically on functions and
    1-forms, so both degrees return the same list.
    """
    if p not in (0, 1):
        raise SpectrumError(f"circle has form degrees 0 and 1, not {p}")
    return list(_circle_block(block, mpfr(cutoff)).lines)


# sphere ---------------------------------------------------------------------


def _sphere_block(block: Sphere, lmin: int, mult: int, cutoff: mpfr) -> BlockSpectrum:
    unit = (1 / block.radius**2).to_mpfr()
    tail = SphereTail(unit, lmin, mult)
    K = _largest_index(unit, mpfr(0), cutoff, lambda l: l * (l + 1), _inv_pronic)
    groups = {l * (l + 1): mult * (2 * l + 1) for l in range(lmin, K + 1)}
    return _from_indices(groups, unit, mpfr(0), cutoff, tail)


def _sphere_de_rham(block: Sphere, p: int, cutoff: mpfr) -> BlockSpectrum:
    if p in (0, 2):
        return _sphere_block(block, 0, 1, cutoff)
    if p == 1:
        # exact and coexact 1-forms each carry the l >= 1 scalar eigenvalues
        return _sphere_block(block, 1, 2, cutoff)
    raise SpectrumError(f"sphere has form degrees 0..2, not {p}")


def sphere_de_rham_spectrum(block: Sphere, p: int, cutoff) -> list[SpectralLine]:
    return list(_sphere_de_rham(block, p, mpfr(cutoff)).lines)


def _sphere_dolbeault(block: Sphere, q: int, cutoff: mpfr) -> BlockSpectrum:
    if q == 0:
        return _sphere_block(block, 0, 1, cutoff)
    if q == 1:
        return _sphere_block(block, 1, 1, cutoff)
    raise SpectrumError(f"sphere has antiholomorphic degrees 0 and 1, not {q}")


def sphere_dolbeault_spectrum(block: Sphere, q: int, cutoff) -> list[SpectralLine]:
    """(0,q)-spectrum of CP^1 with trivial bundle.

    q = 0 is the scalar spectrum; q = 1 carries half the 1-form multiplicities.
    """
    if not isinstance(block, Sphere):
        raise UnsupportedFeature("sphere Dolbeault spectra need a Sphere block with trivial bundle")
    return list(_sphere_dolbeault(block, q, mpfr(cutoff)).lines)


# torus ----------------------------------------------------------------------


@dataclass(frozen=True)
class _DualLattice:
    """Dual lattice of span(s, s*tau), s^2 Im(tau) = area, with exact Gram form."""

    a: Fraction
    b: Fraction
    c: Fraction
    s: mpfr
    x: mpfr
    y: mpfr
    covolume: mpfr
    rho: mpfr

    @classmethod
    def of(cls, block: ComplexTorus) -> "_DualLattice":
        if block.area.power:
            raise UnsupportedFeature("torus area must be rational for lattice enumeration")
        A = block.area.coef
        x, y = Fraction(block.modulus.real), Fraction(block.modulus.imag)
        # |j u* + k v*|^2 = ((x^2+y^2) j^2 - 2 x j k + k^2) / (A y)
        a, b, c = (x * x + y * y) / (A * y), -x / (A * y), 1 / (A * y)
        s = gmpy2.sqrt(to_mpfr(A / y))
        xm, ym = to_mpfr(x), to_mpfr(y)
        u = (1 / s, -xm / (s * ym))
        v = (mpfr(0), 1 / (s * ym))
        rho = max(gmpy2.hypot(u[0] + v[0], u[1] + v[1]), gmpy2.hypot(u[0] - v[0], u[1] - v[1]))
        return cls(a, b, c, s, xm, ym, 1 / to_mpfr(A), rho)

    def points(self, radius_sq: float) -> Iterator[tuple[int, int]]:
        """All (j, k) whose dual vector has squared length <= radius_sq (plus a margin)."""
        a, b, c = float(self.a), float(self.b), float(self.c)
        det = a * c - b * b
        R2 = radius_sq * (1 + 1e-9) + 1e-12
        kmax = int(math.floor(math.sqrt(R2 * a / det))) + 1
        for k in range(-kmax, kmax + 1):
            disc = R2 * a - det * k * k
            if disc < 0:
                continue
            r = math.sqrt(disc)
            lo = int(math.floor((-b * k - r) / a)) - 1
            hi = int(math.ceil((-b * k + r) / a)) + 1
            for j in range(lo, hi + 1):
                yield j, k

    def quad(self, j: int, k: int) -> Fraction:
        return self.a * j * j + 2 * self.b * j * k + self.c * k * k

    def vector(self, j: int, k: int) -> tuple[mpfr, mpfr]:
        return j / self.s, (k - j * self.x) / (self.s * self.y)


def _lattice_block(block: ComplexTorus, shift: Fraction, cutoff: mpfr, mult: int) -> BlockSpectrum:
    """Scalar torus spectrum 4 pi^2 |xi|^2 + shift over the dual lattice."""
    lat = _DualLattice.of(block)
    four_pi2 = 4 * pi() ** 2
    shift_m = to_mpfr(shift)
    tail = LatticeTail(four_pi2, shift_m, lat.covolume, lat.rho, mult)
    if cutoff < shift_m:
        return BlockSpectrum((), cutoff, tail, None, None, shift_m)
    R2 = float((cutoff - shift_m) / four_pi2)
    counts: dict[Fraction, int] = {}
    for j, k in lat.points(R2):
        Q = lat.quad(j, k)
        counts[Q] = counts.get(Q, 0) + 1
    den = 1
    for Q in counts:
        den = den * Q.denominator // math.gcd(den, Q.denominator)
    if den < _MAX_FAST_INDEX:
        groups = {int(Q * den): mult * n for Q, n in counts.items()}
        return _from_indices(groups, four_pi2 / den, shift_m, cutoff, tail)
    pairs = [(shift_m + four_pi2 * to_mpfr(Q), mult * n) for Q, n in counts.items()]
    lines = [ln for ln in _merge(pairs) if ln.eigenvalue <= cutoff]
    return BlockSpectrum(tuple(lines), cutoff, tail, None, None, shift_m)


def _novikov_block(block: ComplexTorus, cutoff: mpfr) -> BlockSpectrum:
    """Eigenvalues 4 |nu + conj(c)|^2 with nu = pi i (xi_1 + i xi_2) the d/dzbar symbol."""
    lat = _DualLattice.of(block)
    cr, ci = to_mpfr(Fraction(block.novikov_c.real)), to_mpfr(Fraction(block.novikov_c.imag))
    # shifted lattice pi*(-xi_2, xi_1) + (Re c, -Im c): scale 4, covolume pi^2/area
    tail = LatticeTail(mpfr(4), mpfr(0), lat.covolume * pi() ** 2, lat.rho * pi())
    cabs = abs(block.novikov_c)
    R = (math.sqrt(max(float(cutoff), 0.0)) / 2 + cabs) / math.pi
    pairs = []
    P = pi()
    for j, k in lat.points(R * R):
        x1, x2 = lat.vector(j, k)
        re = -P * x2 + cr
        im = P * x1 - ci
        lam = 4 * (re * re + im * im)
        if lam <= cutoff:
            pairs.append((lam, 1))
    return BlockSpectrum(tuple(_merge(pairs)), cutoff, tail)


def _torus_de_rham(block: ComplexTorus, p: int, cutoff: mpfr) -> BlockSpectrum:
    if p not in (0, 1, 2):
        raise SpectrumError(f"torus has form degrees 0..2, not {p}")
    c = block.novikov_c
    shift = Fraction(c.real) ** 2 + Fraction(c.imag) ** 2
    return _lattice_block(block, shift, cutoff, math.comb(2, p))


def torus_de_rham_spectrum(block: ComplexTorus, p: int, cutoff) -> list[SpectralLine]:
    """Hodge spectrum 4 pi^2 |xi|^2 (+|omega|^2) with fibre multiplicity C(2, p).

    The bundle is ignored; a Novikov coefficient c acts through the real
    closed form Re(c dz), which shifts every eigenvalue by |c|^2.
    """
    return list(_torus_de_rham(block, p, mpfr(cutoff)).lines)


def _landau_block(block: ComplexTorus, q: int, cutoff: mpfr) -> BlockSpectrum:
    d = block.bundle_degree
    # d < 0 by Serre duality: swap the q = 0 and q = 1 ladders
    kmin = q if d > 0 else 1 - q
    n = abs(d)
    unit = (PiMonomial(4 * n, 1) / block.area).to_mpfr()  # 2B with B = 2 pi |d| / area
    tail = LandauTail(unit, kmin, n)
    K = _largest_index(unit, mpfr(0), cutoff, lambda k: k, _inv_linear)
    groups = {k: n for k in range(kmin, K + 1)}
    return _from_indices(groups, unit, mpfr(0), cutoff, tail)


def _torus_dolbeault(block: ComplexTorus, q: int, cutoff: mpfr) -> BlockSpectrum:
    if q not in (0, 1):
        raise SpectrumError(f"torus has antiholomorphic degrees 0 and 1, not {q}")
    if block.bundle_degree != 0:
        # a constant Novikov form is a flat twist, absorbed by magnetic translations
        return _landau_block(block, q, cutoff)
    if block.novikov_c:
        return _novikov_block(block, cutoff)
    return _lattice_block(block, Fraction(0), cutoff, 1)


def torus_dolbeault_spectrum(block: ComplexTorus, q: int, cutoff) -> list[SpectralLine]:
    """(0,q)-spectrum of a flat torus twisted by a degree-d line bundle.

    d != 0: Landau ladder 2Bk (B = 2 pi |d| / area), multiplicity |d| per level.
    d == 0: dual-lattice spectrum, shifted by the Novikov coefficient.
    """
    return list(_torus_dolbeault(block, q, mpfr(cutoff)).lines)


def block_degrees(block: Block, kind: str) -> range:
    kind = _kind(kind)
    if kind == DE_RHAM:
        return range(block.real_dim + 1)
    if isinstance(block, Circle):
        raise GeometryError("circle blocks do not carry a Dolbeault complex")
    return range(2)


def block_spectrum(block: Block, kind: str, degree: int, cutoff) -> BlockSpectrum:
    """Truncated spectrum of one grading of one block, with its tail bound."""
    kind = _kind(kind)
    cutoff = mpfr(cutoff)
    if isinstance(block, Circle):
        if kind == DOLBEAULT:
            raise GeometryError("circle blocks do not carry a Dolbeault complex")
        if degree not in (0, 1):
            raise SpectrumError(f"circle has form degrees 0 and 1, not {degree}")
        return _circle_block(block, cutoff)
    if isinstance(block, Sphere):
        return (_sphere_de_rham if kind == DE_RHAM else _sphere_dolbeault)(block, degree, cutoff)
    return (_torus_de_rham if kind == DE_RHAM else _torus_dolbeault)(block, degree, cutoff)


def tail_bound(descriptor: BlockSpectrum | TailBound, t, cutoff=None, *, t_min: float | None = None) -> mpfr:
    """Rigorous bound on the heat-trace mass beyond ``cutoff`` at time ``t``."""
    if t_min is not None and t < t_min:
        raise CertificateError(f"t = {t} is below the certified t_min = {t_min}")
    if isinstance(descriptor, BlockSpectrum):
        return descriptor.tail_bound(t, cutoff)
    if cutoff is None:
        raise ValueError("a bare tail bound needs an explicit cutoff")
    return descriptor(t, cutoff)


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Component:
    """One degree composition: a tuple of block spectra summed Minkowski-wise."""

    degrees: tuple[int, ...]
    blocks: tuple[BlockSpectrum, ...]
    cutoff: mpfr

    def _split(self):
        # the largest factor is handled through prefix sums
        i = max(range(len(self.blocks)), key=lambda j: len(self.blocks[j]))
        rest = self.blocks[:i] + self.blocks[i + 1 :]
        return rest, self.blocks[i]

    def _outer(self, blocks: Sequence[BlockSpectrum], t) -> list[tuple[mpfr, mpfr]]:
        """(eigenvalue sum, weight) for every retained tuple over ``blocks``."""
        first = blocks[0]
        out = list(zip(first.eigenvalues, first.terms(t)))
        for b in blocks[1:]:
            ev, w = b.eigenvalues, b.terms(t)
            nxt = []
            for lam0, w0 in out:
                room = self.cutoff - lam0
                n = bisect.bisect_right(ev, room)
                nxt.extend((lam0 + ev[i], w0 * w[i]) for i in range(n))
            out = nxt
        return out

    def trace(self, t) -> tuple[mpfr, int]:
        """Truncated trace and the number of spectral lines (with tuples) summed."""
        if len(self.blocks) == 1:
            b = self.blocks[0]
            return b.trace(t), len(b)
        rest, big = self._split()
        outer = self._outer(rest, t)
        if len(rest) == 1:
            outer.reverse()
        else:
            outer.sort(key=lambda p: p[0], reverse=True)
        ev, pre = big.eigenvalues, big.prefix(t)
        # room = cutoff - lam grows along the outer list, so one sweep suffices
        terms = []
        count, n = 0, 0
        for lam, w in outer:
            n = bisect.bisect_right(ev, self.cutoff - lam, n)
            if n:
                terms.append(w * pre[n - 1])
                count += n
        return csum(terms), count

    def tail_bound(self, t) -> mpfr:
        if len(self.blocks) == 1:
            return self.blocks[0].tail_bound(t, self.cutoff)
        rest, big = self._split()
        total = [w * big.tail(t, self.cutoff - lam) for lam, w in self._outer(rest, t)]
        if len(rest) == 1:
            rest_tail = rest[0].tail_bound(t, self.cutoff)
        else:
            rest_tail = Component(self.degrees, rest, self.cutoff).tail_bound(t)
        total.append(rest_tail * big.full_trace_bound(t))
        return csum(total)

    def lines(self) -> list[tuple[mpfr, int]]:
        out = [(mpfr(0), 1)]
        for b in self.blocks:
            nxt = []
            ev = b.eigenvalues
            for lam0, m0 in out:
                n = bisect.bisect_right(ev, self.cutoff - lam0)
                nxt.extend((lam0 + ln.eigenvalue, m0 * ln.multiplicity) for ln in b.lines[:n])
            out = nxt
        return out


@dataclass(frozen=True, eq=False)
class Grading:
    degree: int
    components: tuple[Component, ...]

    def trace(self, t) -> tuple[mpfr, int]:
        vals, count = [], 0
        for c in self.components:
            v, n = c.trace(t)
            vals.append(v)
            count += n
        return csum(vals), count

    def tail_bound(self, t) -> mpfr:
        return csum(c.tail_bound(t) for c in self.components)

    def lines(self) -> list[SpectralLine]:
        return _merge([p for c in self.components for p in c.lines()])


@dataclass(frozen=True, eq=False)
class GradedSpectrum:
    """Per-degree spectra of a product geometry below ``cutoff``.

    ``tail_certificate[n](t)`` bounds the omitted trace mass of grading n for
    every t >= t_min.
    """

    kind: str
    spec: GeometrySpec
    cutoff: mpfr
    t_min: float
    gradings: dict[int, Grading]
    _lines: dict = field(default_factory=dict, repr=False)

    @property
    def top(self) -> int:
        return max(self.gradings)

    @property
    def degrees(self) -> list[int]:
        return sorted(self.gradings)

    def lines(self, n: int) -> list[SpectralLine]:
        got = self._lines.get(n)
        if got is None:
            got = self._lines[n] = self.gradings[n].lines()
        return got

    def certified_bounds(self) -> dict[int, mpfr]:
        """Tail bounds at t_min; they also bound the omitted mass at every t >= t_min."""
        got = self._lines.get("cert")
        if got is None:
            tm = mpfr(self.t_min)
            got = self._lines["cert"] = {n: g.tail_bound(tm) for n, g in self.gradings.items()}
        return got

    @property
    def empty(self) -> bool:
        return all(len(c.lines()) == 0 for g in self.gradings.values() for c in g.components)

    @property
    def tail_certificate(self) -> dict[int, Callable]:
        def cert(n):
            def bound(t):
                if t < self.t_min:
                    raise CertificateError(f"t = {t} is below the certified t_min = {self.t_min}")
                return self.gradings[n].tail_bound(mpfr(t))

            return bound

        return {n: cert(n) for n in self.gradings}


def product_spectrum(spec: GeometrySpec, kind: str, cutoff, *, t_min: float = 0.0) -> GradedSpectrum:
    """Kuenneth assembly: grading n collects every composition n = sum p_i."""
    kind = _kind(kind)
    if kind == DOLBEAULT:
        spec.require_dolbeault()
    cutoff = mpfr(cutoff)
    if not cutoff > 0:
        raise SpectrumError("cutoff must be positive")
    per_block = []
    for b in spec.blocks:
        degs = block_degrees(b, kind)
        cache: dict = {}
        table = {}
        for p in degs:
            table[p] = _shared_block(b, kind, p, cutoff, cache)
        per_block.append(table)
    comps: dict[int, list[Component]] = {}
    for combo in itertools.product(*(sorted(t) for t in per_block)):
        n = sum(combo)
        comps.setdefault(n, []).append(
            Component(combo, tuple(per_block[i][p] for i, p in enumerate(combo)), cutoff)
        )
    gradings = {n: Grading(n, tuple(cs)) for n, cs in sorted(comps.items())}
    return GradedSpectrum(kind, spec, cutoff, t_min, gradings)


def _shared_block(b: Block, kind: str, p: int, cutoff: mpfr, cache: dict) -> BlockSpectrum:
    """Reuse one enumeration for gradings that differ only by a multiplicity factor."""
    if kind == DE_RHAM and isinstance(b, ComplexTorus):
        base = cache.get("scalar")
        if base is None:
            base = cache["scalar"] = _torus_de_rham(b, 0, cutoff)
        return base if p != 1 else base.scaled(2)
    if kind == DE_RHAM and isinstance(b, (Circle, Sphere)) and p == b.real_dim:
        return block_spectrum(b, kind, 0, cutoff) if isinstance(b, Sphere) else cache.setdefault(
            "c", block_spectrum(b, kind, 0, cutoff)
        )
    if isinstance(b, Circle):
        return cache.setdefault("c", block_spectrum(b, kind, 0, cutoff))
    return block_spectrum(b, kind, p, cutoff)
