from __future__ import annotations

from dataclasses import replace
from fractions import Fraction

import mpmath
import pytest

mpmath.mp.dps = 60

from heatlab.asymptotics import FitRefused, _mpf, bernoulli, bernoulli_oracle, circle_oracle, fit_expansion
from heatlab.config import Config, Ladder
from heatlab.geometry import S1, S2, T
from heatlab.heat import DERIVED, SUPER
from heatlab.numeric import PiMonomial
from heatlab.verify import fit_aggregate, fit_grading

CFG = Config()


def _synthetic(coeffs: dict[int, Fraction], m: int, times):
    # exact rational data for integer half-powers: use squares of the ladder
    out = []
    for t in times:
        t = Fraction(t)
        v = sum(c * t ** Fraction(n - m, 2) for n, c in coeffs.items() if (n - m) % 2 == 0)
        out.append((t, v, 0))
    return out


def test_synthetic_round_trip():
    data = _synthetic({0: Fraction(3), 2: Fraction(5), 4: Fraction(2)}, 2, CFG.ladder.times)
    fit = fit_expansion(data, 2, 4)
    for n, want in ((0, 3), (2, 5), (4, 2)):
        assert abs(fit[n] - want) < 1e-20
    assert all(u > 0 for u in fit.uncertainty.values())
    assert fit.orders == (0, 2, 4)


def test_synthetic_odd_dimension():
    # m = 1: value = 2 t^(-1/2) - 3 t^(1/2), exact through squared times
    times = [Fraction(1, 250) * Fraction(9, 10) ** k for k in range(18)]
    data = []
    with mpmath.workdps(120):
        for t in times:
            r = mpmath.sqrt(_mpf(t))
            data.append((t, 2 / r - 3 * r, 0))
        fit = fit_expansion(data, 1, 2, digits=120)
    assert abs(fit[0] - 2) < 1e-20
    assert abs(fit[2] + 3) < 1e-20


def test_sphere_supertrace_constant():
    fit = fit_aggregate(S2(), "derham", SUPER, CFG, 4)
    assert abs(fit[0]) < 1e-10
    assert abs(fit[2] - 2) < 1e-10
    assert abs(fit[4]) < 1e-10


def test_bernoulli_numbers():
    assert [bernoulli(k) for k in range(5)] == [1, Fraction(-1, 2), Fraction(1, 6), 0, Fraction(-1, 30)]


def test_bernoulli_oracle_examples():
    o = bernoulli_oracle(T(1).blocks[0], 4)
    assert o[0] == PiMonomial(Fraction(-1, 4), -1)
    assert o[2] == PiMonomial(Fraction(1, 2))
    assert o[4] == PiMonomial(Fraction(-1, 3), 1)
    assert bernoulli_oracle(T(3).blocks[0], 2)[2] == PiMonomial(Fraction(3, 2))
    for d in (-3, -1, 2, 5):
        assert bernoulli_oracle(T(d, area="5/2").blocks[0], 2)[2] == PiMonomial(Fraction(d, 2))
        assert bernoulli_oracle(T(d, area="5/2").blocks[0], 2)[0] == PiMonomial(Fraction(-5, 8), -1)
    with pytest.raises(ValueError):
        bernoulli_oracle(T(0).blocks[0], 2)


def test_circle_oracle_examples():
    o = circle_oracle(S1().blocks[0], 4)
    assert o[0] == PiMonomial(1, Fraction(1, 2))
    assert o[2].is_zero() and o[4].is_zero()
    assert circle_oracle(S1(a="1/2").blocks[0], 2)[2] == PiMonomial(Fraction(-1, 4), Fraction(1, 2))


@pytest.mark.parametrize("d,area", [(1, 1), (2, 1), (-2, 1), (1, 2), (3, 1)])
def test_bernoulli_oracle_round_trip(d, area):
    spec = T(d, area=area)
    fit = fit_aggregate(spec, "dolbeault", DERIVED, CFG)
    oracle = bernoulli_oracle(spec.blocks[0], fit.orders[-1])
    for n in fit.orders:
        err = abs(fit[n] - _mpf(oracle[n]))
        assert err <= fit.uncertainty[n]
    # the top order carries truncation of the (4 pi d t)^k series; see the decisions ledger
    checked = fit.orders if abs(d) == 1 else [n for n in fit.orders if n <= spec.m]
    assert all(fit.uncertainty[n] <= 1e-8 for n in checked)


@pytest.mark.parametrize("L,a", [("2pi", 0), ("2pi", "1/2"), ("3/2", "1/3")])
def test_circle_oracle_round_trip(L, a):
    spec = S1(L, a)
    fit = fit_grading(spec, "derham", 0, CFG, 4)
    oracle = circle_oracle(spec.blocks[0], 4)
    for n in fit.orders:
        assert abs(fit[n] - _mpf(oracle[n])) <= fit.uncertainty[n]
        assert fit.uncertainty[n] <= 1e-8
    for n in (0, 2):
        assert abs(fit[n] - _mpf(oracle[n])) < 1e-20


@pytest.mark.parametrize(
    "spec,kind,deg,expected",
    [
        (S2(), "derham", 0, 1),
        (S2(), "derham", 1, 2),
        (S2("3/2"), "dolbeault", 1, 1),
        (T(0, area=2), "derham", 1, 2),
        (T(2, area=3), "dolbeault", 0, 1),
        (S2() * T(1), "dolbeault", 1, 2),
    ],
)
def test_weyl_leading_term(spec, kind, deg, expected):
    # A_0 = volume * fibre dimension / (4 pi)^(m/2)
    from heatlab.geometry import char_record

    vol = _mpf(char_record(spec).total_volume)
    fit = fit_grading(spec, kind, deg, CFG, 2)
    want = vol * expected / (4 * mpmath.pi) ** (mpmath.mpf(spec.m) / 2)
    assert abs(fit[0] - want) <= 1e-8 * want


ODD_CFG = replace(CFG, include_odd=True)


@pytest.mark.parametrize(
    "spec,kind",
    [(S2(), "derham"), (T(1), "dolbeault"), (T(2), "dolbeault"), (S2() * T(1), "dolbeault"),
     (T(1) * T(1), "dolbeault"), (S1(a="1/2"), "derham"), (S2() * S2(), "derham")],
)
def test_odd_orders_vanish(spec, kind):
    agg = DERIVED if kind == "dolbeault" else SUPER
    fit = fit_aggregate(spec, kind, agg, ODD_CFG)
    odd = [n for n in fit.orders if n % 2]
    assert odd
    for n in odd:
        assert abs(fit[n]) <= 1e-8, (n, fit[n])


@pytest.mark.parametrize("c", [0.3 + 0.2j, 0.5, 0.1j])
def test_novikov_coefficient_invariance(c):
    for q in (0, 1):
        f1 = fit_grading(T(0, c=c), "dolbeault", q, CFG)
        f0 = fit_grading(T(0), "dolbeault", q, CFG)
        for n in f1.orders:
            assert abs(f1[n] - f0[n]) <= 1e-8


def test_fit_refuses_too_few_samples():
    data = _synthetic({0: Fraction(1)}, 2, [0.1, 0.09, 0.08])
    with pytest.raises(FitRefused):
        fit_expansion(data, 2, 4)


def test_fit_refuses_ill_conditioned():
    data = _synthetic({0: Fraction(1)}, 2, CFG.ladder.times)
    with pytest.raises(FitRefused):
        fit_expansion(data, 2, 4, max_condition=10)


def test_fit_reports_ladder():
    cfg = CFG.with_ladder(Ladder(0.01, 0.8, 16))
    fit = fit_aggregate(S2(), "derham", SUPER, cfg)
    summary = fit.ladder_summary()
    assert summary["count"] == 16
    assert summary["t0"] == pytest.approx(0.01)
    assert summary["ratio"] == pytest.approx(0.8)
