from __future__ import annotations

import json
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatlab.geometry import (
    S1,
    S2,
    T,
    Circle,
    ComplexTorus,
    GeometryError,
    GeometrySpec,
    Sphere,
    char_record,
    parse_geometry,
)
from heatlab.numeric import PiMonomial

SCHEMA_EXAMPLE = {
    "blocks": [
        {"kind": "circle", "circumference": 6.283185307179586, "witten_a": 0.0},
        {"kind": "sphere", "radius": 1.0},
        {"kind": "complex_torus", "area": 1.0, "modulus": [0.0, 1.0], "bundle_degree": 1, "novikov_c": [0.0, 0.0]},
    ]
}


def test_parse_sphere():
    spec = parse_geometry('{"blocks":[{"kind":"sphere","radius":1}]}')
    assert spec.m == 2
    assert spec.dolbeault_legal
    assert spec.complex_dim == 1


def test_parse_torus_product():
    torus = {"kind": "complex_torus", "area": 1, "modulus": [0, 1], "bundle_degree": 1}
    spec = parse_geometry({"blocks": [torus, torus]}, dolbeault=True)
    assert spec.m == 4
    assert spec.complex_dim == 2
    assert spec == T(1) * T(1)


def test_parse_deformed_circle():
    spec = parse_geometry({"blocks": [{"kind": "circle", "circumference": "2pi", "witten_a": 0.5}]})
    assert spec.m == 1
    assert not spec.dolbeault_legal
    assert spec.blocks[0].witten_a == Fraction(1, 2)
    assert spec.blocks[0].circumference == PiMonomial(2, 1)
    with pytest.raises(GeometryError):
        spec.require_dolbeault()


def test_schema_example_parses():
    spec = parse_geometry(json.dumps(SCHEMA_EXAMPLE))
    assert spec.m == 5
    assert isinstance(spec.blocks[0], Circle)
    assert isinstance(spec.blocks[1], Sphere)
    assert isinstance(spec.blocks[2], ComplexTorus)


@pytest.mark.parametrize(
    "doc",
    [
        "not json",
        {},
        {"blocks": []},
        {"blocks": {}},
        {"blocks": [], "extra": 1},
        {"blocks": [{"kind": "cube"}]},
        {"blocks": [{"kind": "sphere"}]},
        {"blocks": [{"kind": "sphere", "radius": 0}]},
        {"blocks": [{"kind": "sphere", "radius": -1.0}]},
        {"blocks": [{"kind": "sphere", "radius": True}]},
        {"blocks": [{"kind": "sphere", "radius": 1, "bundle_degree": 1}]},
        {"blocks": [{"kind": "circle", "circumference": 1, "bundle_degree": 1}]},
        {"blocks": [{"kind": "circle", "circumference": 1, "novikov_c": [0, 0]}]},
        {"blocks": [{"kind": "circle", "circumference": 0}]},
        {"blocks": [{"kind": "complex_torus", "area": -1}]},
        {"blocks": [{"kind": "complex_torus", "area": 1, "modulus": [0, -1]}]},
        {"blocks": [{"kind": "complex_torus", "area": 1, "modulus": [0, 1, 2]}]},
        {"blocks": [{"kind": "complex_torus", "area": 1, "bundle_degree": 1.5}]},
    ],
)
def test_parse_errors(doc):
    with pytest.raises(GeometryError):
        parse_geometry(doc if isinstance(doc, str) else json.dumps(doc))


def test_dolbeault_with_circle_rejected():
    with pytest.raises(GeometryError):
        parse_geometry(SCHEMA_EXAMPLE, dolbeault=True)


def test_char_record_sphere():
    rec = char_record(S2())
    assert rec.euler_char == 2
    assert rec.blocks[0].c1_tangent == 2
    assert rec.blocks[0].scalar_curvature_integral == PiMonomial(8, 1)


@pytest.mark.parametrize("d", [-2, 0, 1, 3])
def test_char_record_torus(d):
    rec = char_record(T(d, area="3/2"))
    assert rec.euler_char == 0
    assert rec.blocks[0].c1_bundle == d
    assert rec.total_volume == PiMonomial(Fraction(3, 2))


def test_char_record_multiplicative():
    rec = char_record(S2() * S2(2))
    assert rec.euler_char == 4
    assert rec.total_volume == PiMonomial(4, 1) * PiMonomial(16, 1)


reals = st.one_of(
    st.fractions(min_value=Fraction(1, 100), max_value=100, max_denominator=1000),
    st.sampled_from(["2pi", "pi", "1/2", "3pi/2"]),
)
blocks = st.one_of(
    st.builds(Circle, reals, st.fractions(min_value=-3, max_value=3, max_denominator=8)),
    st.builds(Sphere, reals),
    st.builds(
        ComplexTorus,
        reals,
        st.builds(complex, st.sampled_from([0.0, 0.5, -0.25]), st.sampled_from([1.0, 0.75, 2.0])),
        st.integers(-4, 4),
        st.builds(complex, st.sampled_from([0.0, 0.3]), st.sampled_from([0.0, 0.2])),
    ),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(blocks, min_size=1, max_size=3))
def test_round_trip(bs):
    spec = GeometrySpec(tuple(bs))
    assert parse_geometry(spec.to_json()) == spec


@settings(max_examples=40, deadline=None)
@given(st.lists(blocks, min_size=1, max_size=3))
def test_char_record_product_rule(bs):
    spec = GeometrySpec(tuple(bs))
    rec = char_record(spec)
    chi, vol = 1, PiMonomial(1)
    for b in bs:
        r = char_record(GeometrySpec((b,)))
        chi *= r.euler_char
        vol = vol * r.total_volume
    assert rec.euler_char == chi
    assert rec.total_volume == vol


def test_constructors():
    assert S1().blocks[0].circumference == PiMonomial(2, 1)
    assert S1(a="1/2").deformed
    assert T(0, c=0.3 + 0.2j).deformed
    assert not (S2() * T(1)).deformed
