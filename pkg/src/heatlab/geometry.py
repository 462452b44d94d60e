"""Model geometries: circles, round spheres, flat complex tori with line bundles.

A :class:`GeometrySpec` is an ordered product of blocks.  Metric data are kept
as exact :class:`~heatlab.numeric.PiMonomial` values so that, e.g., a circle of
circumference ``"2pi"`` has an exactly integral spectrum.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, ClassVar, Mapping, Union

from .numeric import PiMonomial, RealLike


class GeometryError(ValueError):
    """Invalid geometry document or descriptor."""


def _positive(name: str, value: PiMonomial) -> PiMonomial:
    if value.coef <= 0:
        raise GeometryError(f"{name} must be strictly positive, got {value}")
    return value


def _complex(value, name: str) -> complex:
    if isinstance(value, complex):
        return value
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise GeometryError(f"{name} must be a [real, imag] pair, got {value!r}")


@dataclass(frozen=True)
class Circle:
    circumference: PiMonomial
    witten_a: Fraction = Fraction(0)

    kind: ClassVar[str] = "circle"
    real_dim: ClassVar[int] = 1

    def __post_init__(self):
        object.__setattr__(
            self, "circumference", _positive("circumference", PiMonomial.of(self.circumference))
        )
        a = PiMonomial.of(self.witten_a)
        if a.power:
            raise GeometryError("witten_a must be a plain real number")
        object.__setattr__(self, "witten_a", a.coef)

    @property
    def deformed(self) -> bool:
        return self.witten_a != 0

    def undeformed(self) -> "Circle":
        return Circle(self.circumference)

    def to_dict(self) -> dict:
        return {
            "kind": "circle",
            "circumference": self.circumference.to_json(),
            "witten_a": PiMonomial(self.witten_a).to_json(),
        }


@dataclass(frozen=True)
class Sphere:
    """Round 2-sphere, viewed as CP^1 with its standard Kaehler structure."""

    radius: PiMonomial

    kind: ClassVar[str] = "sphere"
    real_dim: ClassVar[int] = 2
    deformed: ClassVar[bool] = False

    def __post_init__(self):
        object.__setattr__(self, "radius", _positive("radius", PiMonomial.of(self.radius)))

    def undeformed(self) -> "Sphere":
        return self

    def to_dict(self) -> dict:
        return {"kind": "sphere", "radius": self.radius.to_json()}


@dataclass(frozen=True)
class ComplexTorus:
    """Flat torus C/L of given area and modulus, with a degree-d line bundle.

    The lattice is spanned by ``s`` and ``s * modulus`` with
    ``s**2 * modulus.imag == area``.  ``novikov_c`` is the coefficient of the
    constant (1,0)-form ``c dz``.
    """

    area: PiMonomial
    modulus: complex = 1j
    bundle_degree: int = 0
    novikov_c: complex = 0j

    kind: ClassVar[str] = "complex_torus"
    real_dim: ClassVar[int] = 2

    def __post_init__(self):
        object.__setattr__(self, "area", _positive("area", PiMonomial.of(self.area)))
        tau = _complex(self.modulus, "modulus")
        if not tau.imag > 0:
            raise GeometryError(f"modulus must have positive imaginary part, got {tau}")
        object.__setattr__(self, "modulus", tau)
        object.__setattr__(self, "novikov_c", _complex(self.novikov_c, "novikov_c"))
        if isinstance(self.bundle_degree, bool) or int(self.bundle_degree) != self.bundle_degree:
            raise GeometryError(f"bundle_degree must be an integer, got {self.bundle_degree!r}")
        object.__setattr__(self, "bundle_degree", int(self.bundle_degree))

    @property
    def deformed(self) -> bool:
        return self.novikov_c != 0

    def undeformed(self) -> "ComplexTorus":
        return ComplexTorus(self.area, self.modulus, self.bundle_degree)

    def to_dict(self) -> dict:
        return {
            "kind": "complex_torus",
            "area": self.area.to_json(),
            "modulus": [self.modulus.real, self.modulus.imag],
            "bundle_degree": self.bundle_degree,
            "novikov_c": [self.novikov_c.real, self.novikov_c.imag],
        }


Block = Union[Circle, Sphere, ComplexTorus]


@dataclass(frozen=True)
class GeometrySpec:
    blocks: tuple[Block, ...]

    def __post_init__(self):
        blocks = tuple(self.blocks)
        if not blocks:
            raise GeometryError("a geometry needs at least one block")
        for b in blocks:
            if not isinstance(b, (Circle, Sphere, ComplexTorus)):
                raise GeometryError(f"unknown block {b!r}")
        object.__setattr__(self, "blocks", blocks)

    @property
    def m(self) -> int:
        """Real dimension."""
        return sum(b.real_dim for b in self.blocks)

    @property
    def complex_kind(self) -> tuple[bool, ...]:
        return tuple(not isinstance(b, Circle) for b in self.blocks)

    @property
    def dolbeault_legal(self) -> bool:
        return all(self.complex_kind)

    @property
    def complex_dim(self) -> int | None:
        return self.m // 2 if self.dolbeault_legal else None

    @property
    def deformed(self) -> bool:
        return any(b.deformed for b in self.blocks)

    def undeformed(self) -> "GeometrySpec":
        return GeometrySpec(tuple(b.undeformed() for b in self.blocks))

    def __mul__(self, other: "GeometrySpec") -> "GeometrySpec":
        return GeometrySpec(self.blocks + other.blocks)

    def require_dolbeault(self) -> None:
        if not self.dolbeault_legal:
            raise GeometryError("Dolbeault computations need every block to be a sphere or complex torus")

    def to_dict(self) -> dict:
        return {"blocks": [b.to_dict() for b in self.blocks]}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def label(self) -> str:
        return " x ".join(_block_label(b) for b in self.blocks)


def _block_label(b: Block) -> str:
    if isinstance(b, Circle):
        s = f"S1(L={b.circumference})"
        return s if not b.witten_a else s[:-1] + f",a={b.witten_a})"
    if isinstance(b, Sphere):
        return f"S2(r={b.radius})"
    s = f"T(A={b.area},d={b.bundle_degree}"
    if b.modulus != 1j:
        s += f",tau={b.modulus}"
    if b.novikov_c:
        s += f",c={b.novikov_c}"
    return s + ")"


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_BLOCK_FIELDS = {
    "circle": ({"circumference"}, {"witten_a"}),
    "sphere": ({"radius"}, set()),
    "complex_torus": ({"area"}, {"modulus", "bundle_degree", "novikov_c"}),
}


def _real(doc: Mapping, key: str, default: Any = None) -> PiMonomial:
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise GeometryError(f"field {key!r} must be a number or decimal string, got {value!r}")
    try:
        return PiMonomial.of(value)
    except (TypeError, ValueError) as exc:
        raise GeometryError(f"field {key!r}: {exc}") from None


def _pair(doc: Mapping, key: str, default=(0.0, 0.0)) -> complex:
    value = doc.get(key, list(default))
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise GeometryError(f"field {key!r} must be a [real, imag] pair, got {value!r}")
    try:
        return complex(float(PiMonomial.of(value[0])), float(PiMonomial.of(value[1])))
    except (TypeError, ValueError) as exc:
        raise GeometryError(f"field {key!r}: {exc}") from None


def parse_block(doc: Mapping) -> Block:
    if not isinstance(doc, Mapping):
        raise GeometryError(f"block must be an object, got {doc!r}")
    kind = doc.get("kind")
    if kind not in _BLOCK_FIELDS:
        raise GeometryError(f"unknown block kind {kind!r}")
    required, optional = _BLOCK_FIELDS[kind]
    keys = set(doc) - {"kind"}
    if missing := required - keys:
        raise GeometryError(f"{kind} block missing {sorted(missing)}")
    if kind == "circle" and ({"bundle_degree", "novikov_c"} & keys):
        raise GeometryError("circle blocks carry no bundle or Novikov form")
    if extra := keys - required - optional:
        raise GeometryError(f"{kind} block has unknown fields {sorted(extra)}")
    if kind == "circle":
        a = _real(doc, "witten_a", 0.0)
        return Circle(_real(doc, "circumference"), a)
    if kind == "sphere":
        return Sphere(_real(doc, "radius"))
    degree = doc.get("bundle_degree", 0)
    if isinstance(degree, bool) or not isinstance(degree, int):
        raise GeometryError(f"bundle_degree must be an integer, got {degree!r}")
    return ComplexTorus(
        _real(doc, "area"),
        _pair(doc, "modulus", (0.0, 1.0)),
        degree,
        _pair(doc, "novikov_c"),
    )


def parse_geometry(document: str | bytes | Mapping, *, dolbeault: bool = False) -> GeometrySpec:
    """Parse and validate a JSON geometry document.

    Args:
        document: JSON text or an already-decoded mapping.
        dolbeault: if true, additionally require the spec to be Dolbeault-legal.

    Raises:
        GeometryError: on any schema or invariant violation.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise GeometryError(f"invalid JSON: {exc}") from None
    if not isinstance(document, Mapping) or set(document) != {"blocks"}:
        raise GeometryError('geometry document must be an object with exactly the key "blocks"')
    blocks = document["blocks"]
    if not isinstance(blocks, list):
        raise GeometryError('"blocks" must be a list')
    spec = GeometrySpec(tuple(parse_block(b) for b in blocks))
    if dolbeault:
        spec.require_dolbeault()
    return spec


def load_geometry(path, *, dolbeault: bool = False) -> GeometrySpec:
    with open(path, encoding="utf-8") as fh:
        return parse_geometry(fh.read(), dolbeault=dolbeault)


# ---------------------------------------------------------------------------
# characteristic summary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockRecord:
    kind: str
    volume: PiMonomial
    scalar_curvature_integral: PiMonomial
    euler_char: int
    c1_tangent: int | None
    c1_bundle: int | None


@dataclass(frozen=True)
class CharRecord:
    m: int
    euler_char: int
    blocks: tuple[BlockRecord, ...]
    total_volume: PiMonomial = field(default=PiMonomial(1))


def block_record(b: Block) -> BlockRecord:
    if isinstance(b, Circle):
        return BlockRecord("circle", b.circumference, PiMonomial(0), 0, None, None)
    if isinstance(b, Sphere):
        # tau = 2/r^2 on a sphere of area 4 pi r^2
        return BlockRecord("sphere", PiMonomial(4, 1) * b.radius**2, PiMonomial(8, 1), 2, 2, 0)
    return BlockRecord("complex_torus", b.area, PiMonomial(0), 0, 0, b.bundle_degree)


def char_record(spec: GeometrySpec) -> CharRecord:
    records = tuple(block_record(b) for b in spec.blocks)
    chi, vol = 1, PiMonomial(1)
    for r in records:
        chi *= r.euler_char
        vol = vol * r.volume
    return CharRecord(spec.m, chi, records, vol)


# convenience constructors used by tests and the default battery


def S1(circumference: RealLike = "2pi", a: RealLike = 0) -> GeometrySpec:
    return GeometrySpec((Circle(circumference, a),))


def S2(radius: RealLike = 1) -> GeometrySpec:
    return GeometrySpec((Sphere(radius),))


def T(degree: int = 0, area: RealLike = 1, modulus: complex = 1j, c: complex = 0j) -> GeometrySpec:
    return GeometrySpec((ComplexTorus(area, modulus, degree, c),))
