from __future__ import annotations

import math

import gmpy2
import numpy as np
import pytest
from gmpy2 import mpfr

from heatlab.geometry import S1, S2, T, GeometryError
from heatlab.numeric import pi, precision
from heatlab.spectra import (
    CertificateError,
    SpectrumError,
    block_spectrum,
    circle_spectrum,
    product_spectrum,
    sphere_de_rham_spectrum,
    sphere_dolbeault_spectrum,
    tail_bound,
    torus_de_rham_spectrum,
    torus_dolbeault_spectrum,
)

PI = math.pi


def pairs(lines):
    return [(float(l.eigenvalue), l.multiplicity) for l in lines]


def close(lines, expected, tol=1e-25):
    got = [(l.eigenvalue, l.multiplicity) for l in lines]
    assert len(got) == len(expected), (pairs(lines), expected)
    for (ev, m), (ev2, m2) in zip(got, expected):
        assert m == m2
        assert abs(ev - ev2) <= tol * max(1, abs(ev2)), (ev, ev2)


# --- block generators: worked examples ------------------------------------------------


def test_circle_examples():
    close(circle_spectrum(S1().blocks[0], 0, 4.5), [(0, 1), (1, 2), (4, 2)])
    close(circle_spectrum(S1(a="0.5").blocks[0], 1, 1.3), [(mpfr("0.25"), 1), (mpfr("1.25"), 2)])
    close(circle_spectrum(S1("pi").blocks[0], 0, 4.1), [(0, 1), (4, 2)])


def test_circle_p0_equals_p1():
    b = S1("3/2", a="1/3").blocks[0]
    assert circle_spectrum(b, 0, 200) == circle_spectrum(b, 1, 200)


def test_circle_cutoff_below_shift_is_empty():
    assert circle_spectrum(S1(a=2).blocks[0], 0, 3) == []


def test_sphere_de_rham_examples():
    close(sphere_de_rham_spectrum(S2().blocks[0], 0, 6.5), [(0, 1), (2, 3), (6, 5)])
    close(sphere_de_rham_spectrum(S2().blocks[0], 1, 6.5), [(2, 6), (6, 10)])
    close(sphere_de_rham_spectrum(S2(2).blocks[0], 0, 0.6), [(0, 1), (mpfr("0.5"), 3)])
    assert sphere_de_rham_spectrum(S2().blocks[0], 2, 50) == sphere_de_rham_spectrum(S2().blocks[0], 0, 50)


def test_sphere_dolbeault_examples():
    close(sphere_dolbeault_spectrum(S2().blocks[0], 0, 2.5), [(0, 1), (2, 3)])
    close(sphere_dolbeault_spectrum(S2().blocks[0], 1, 6.5), [(2, 3), (6, 5)])
    close(sphere_dolbeault_spectrum(S2(2).blocks[0], 1, 1.6), [(mpfr("0.5"), 3), (mpfr("1.5"), 5)])


def test_sphere_dolbeault_halves_one_forms():
    b = S2("3/2").blocks[0]
    dr = sphere_de_rham_spectrum(b, 1, 100)
    dol = sphere_dolbeault_spectrum(b, 1, 100)
    assert [l.eigenvalue for l in dr] == [l.eigenvalue for l in dol]
    assert [l.multiplicity for l in dr] == [2 * l.multiplicity for l in dol]


def test_torus_de_rham_examples():
    with precision(40):
        fp2 = 4 * pi() ** 2
        close(torus_de_rham_spectrum(T().blocks[0], 0, 4 * PI**2 + 1), [(0, 1), (fp2, 4)])
        close(torus_de_rham_spectrum(T().blocks[0], 1, 1), [(0, 2)])
        plain = torus_de_rham_spectrum(T().blocks[0], 2, 200)
        shifted = torus_de_rham_spectrum(T(0, c=0.3).blocks[0], 2, 200.09)
        shift = mpfr(0.3) ** 2
        close(shifted, [(l.eigenvalue + shift, l.multiplicity) for l in plain])


def test_torus_dolbeault_examples():
    with precision(40):
        close(torus_dolbeault_spectrum(T(1).blocks[0], 0, 4 * PI + 1), [(0, 1), (4 * pi(), 1)])
        close(torus_dolbeault_spectrum(T(3).blocks[0], 1, 12 * PI + 1), [(12 * pi(), 3)])
        assert torus_dolbeault_spectrum(T(0).blocks[0], 0, 300) == torus_de_rham_spectrum(T(0).blocks[0], 0, 300)


def test_novikov_spectrum_moves_lines():
    plain = torus_dolbeault_spectrum(T(0).blocks[0], 0, 200)
    def_ = torus_dolbeault_spectrum(T(0, c=0.3 + 0.2j).blocks[0], 0, 200)
    assert float(def_[0].eigenvalue) == pytest.approx(4 * (0.3**2 + 0.2**2))
    assert abs(def_[0].eigenvalue - plain[0].eigenvalue) > 1e-2
    assert torus_dolbeault_spectrum(T(0, c=0.3 + 0.2j).blocks[0], 1, 200) == def_


# --- symmetries ------------------------------------------------------------------------


@pytest.mark.parametrize("spec", [S1() * S1("1/2"), S2(), T(0, modulus=0.3 + 1.1j), S2() * T(2), S2() * S1() * S1()])
def test_poincare_duality(spec):
    gs = product_spectrum(spec, "derham", 120)
    for p in range(spec.m + 1):
        assert gs.lines(p) == gs.lines(spec.m - p)


@pytest.mark.parametrize("d", [1, 2, 5])
def test_serre_duality(d):
    pos = T(d, area="3/2").blocks[0]
    neg = T(-d, area="3/2").blocks[0]
    for q in (0, 1):
        assert torus_dolbeault_spectrum(pos, q, 300) == torus_dolbeault_spectrum(neg, 1 - q, 300)


# --- completeness against independent enumeration ---------------------------------


def _brute_torus(area, tau, cutoff, box=60):
    # lattice with basis s, s*tau of covolume area; eigenvalues 4 pi^2 |dual vector|^2
    s = math.sqrt(area / tau.imag)
    basis = np.array([[s, 0.0], [s * tau.real, s * tau.imag]])
    dual = np.linalg.inv(basis).T
    out = []
    for j in range(-box, box + 1):
        for k in range(-box, box + 1):
            v = j * dual[0] + k * dual[1]
            ev = 4 * PI**2 * float(v @ v)
            if ev <= cutoff:
                out.append(ev)
    return sorted(out)


def _expand(lines):
    return sorted(float(l.eigenvalue) for l in lines for _ in range(l.multiplicity))


@pytest.mark.parametrize(
    "area,tau", [(1.0, 1j), (2.0, 0.5 + 0.9j), (0.7, -0.2 + 1.5j), (1.5, 0.1 + 0.6j)]
)
def test_torus_completeness(area, tau):
    cutoff = 900.0
    got = _expand(torus_de_rham_spectrum(T(0, area=area, modulus=tau).blocks[0], 0, cutoff))
    ref = _brute_torus(area, tau, cutoff)
    assert len(got) == len(ref)
    assert np.allclose(got, ref, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("L", ["2pi", "1", "7/3"])
def test_circle_completeness(L):
    b = S1(L).blocks[0]
    length = float(b.circumference.to_mpfr())
    cutoff = 500.0
    ref = sorted((2 * PI * k / length) ** 2 for k in range(-2000, 2001) if (2 * PI * k / length) ** 2 <= cutoff)
    assert np.allclose(_expand(circle_spectrum(b, 0, cutoff)), ref, rtol=1e-12)


def test_sphere_completeness():
    r = 1.3
    ref = sorted(l * (l + 1) / r**2 for l in range(200) for _ in range(2 * l + 1) if l * (l + 1) / r**2 <= 400)
    assert np.allclose(_expand(sphere_de_rham_spectrum(S2(r).blocks[0], 0, 400)), ref, rtol=1e-12)


def test_landau_completeness():
    d, area = 3, 2.0
    unit = 4 * PI * d / area
    ref0 = sorted(unit * k for k in range(100) if unit * k <= 500 for _ in range(d))
    ref1 = sorted(unit * k for k in range(1, 100) if unit * k <= 500 for _ in range(d))
    b = T(d, area=area).blocks[0]
    assert np.allclose(_expand(torus_dolbeault_spectrum(b, 0, 500)), ref0, rtol=1e-12)
    assert np.allclose(_expand(torus_dolbeault_spectrum(b, 1, 500)), ref1, rtol=1e-12)


def test_product_is_minkowski_sum():
    spec = S2() * T(0, area=2.0, modulus=0.3 + 1j)
    cutoff = 150.0
    gs = product_spectrum(spec, "derham", cutoff)
    sph = {p: _expand(sphere_de_rham_spectrum(spec.blocks[0], p, cutoff)) for p in range(3)}
    tor = {p: _expand(torus_de_rham_spectrum(spec.blocks[1], p, cutoff)) for p in range(3)}
    for n in range(5):
        ref = sorted(a + b for p in range(3) for q in range(3) if p + q == n for a in sph[p] for b in tor[q] if a + b <= cutoff)
        assert np.allclose(_expand(gs.lines(n)), ref, rtol=1e-12)


# --- products: worked examples -------------------------------------------------------


def test_product_examples():
    close(product_spectrum(S1() * S1(), "derham", 0.5).lines(1), [(0, 2)])
    with precision(40):
        close(product_spectrum(T(1) * T(1), "dolbeault", 4 * PI + 1).lines(0), [(0, 1), (4 * pi(), 2)])
    gs = product_spectrum(S2() * S2(), "derham", 600)
    t = mpfr("0.3")
    total = sum((-1) ** n * gs.gradings[n].trace(t)[0] for n in gs.degrees)
    assert abs(total - 4) < 1e-25


def test_product_rejects_illegal_dolbeault():
    with pytest.raises(GeometryError):
        product_spectrum(S1() * S2(), "dolbeault", 10)
    with pytest.raises(SpectrumError):
        product_spectrum(S2(), "neither", 10)


def test_product_empty_flag():
    assert product_spectrum(S1(a=2), "derham", 1).empty
    assert not product_spectrum(S1(), "derham", 1).empty


# --- tail bounds ---------------------------------------------------------------------


def test_circle_tail_example():
    bs = block_spectrum(S1().blocks[0], "derham", 0, 400)
    assert tail_bound(bs, 0.5) <= mpfr("1e-40")


def test_landau_tail_exact():
    d, K, t = 1, 7, 0.5
    with precision(40):
        two_b = 4 * pi() * d
        bs = block_spectrum(T(d).blocks[0], "dolbeault", 0, float(two_b) * (K + 0.5))
        expected = d * gmpy2.exp(-two_b * (K + 1) * t) / (1 - gmpy2.exp(-two_b * t))
        assert abs(tail_bound(bs, t) - expected) <= expected * mpfr("1e-30")


BLOCKS = [
    (S1("3/2", a="1/4").blocks[0], "derham", 0),
    (S2("0.8").blocks[0], "derham", 1),
    (S2().blocks[0], "dolbeault", 1),
    (T(2, area=3).blocks[0], "dolbeault", 0),
    (T(0, modulus=0.4 + 0.8j).blocks[0], "derham", 1),
    (T(0, c=0.3 + 0.2j).blocks[0], "dolbeault", 0),
]


@pytest.mark.parametrize("block,kind,deg", BLOCKS)
def test_tail_monotone_and_rigorous(block, kind, deg):
    small = block_spectrum(block, kind, deg, 60)
    big = block_spectrum(block, kind, deg, 4000)
    prev = None
    for t in (0.05, 0.1, 0.2, 0.4):
        b = tail_bound(small, t)
        assert prev is None or b <= prev
        prev = b
        assert tail_bound(big, t) <= b
        omitted = big.trace(mpfr(t)) - small.trace(mpfr(t))
        assert omitted <= b
    assert tail_bound(block_spectrum(block, kind, deg, 10**6), 0.05) < mpfr("1e-100")


def test_tail_below_t_min():
    bs = block_spectrum(S2().blocks[0], "derham", 0, 100)
    with pytest.raises(CertificateError):
        tail_bound(bs, 0.01, t_min=0.1)
    gs = product_spectrum(S2(), "derham", 100, t_min=0.1)
    assert gs.tail_certificate[0](0.2) <= gs.tail_certificate[0](0.1)
    with pytest.raises(CertificateError):
        gs.tail_certificate[0](0.05)


def test_product_tail_rigorous():
    spec = S2() * T(1)
    t = mpfr("0.05")
    small = product_spectrum(spec, "dolbeault", 80)
    big = product_spectrum(spec, "dolbeault", 3000)
    for q in (0, 1):
        omitted = big.gradings[q].trace(t)[0] - small.gradings[q].trace(t)[0]
        assert 0 <= omitted <= small.gradings[q].tail_bound(t)
