"""Exact characteristic numbers of products of spheres and complex tori.

Each surface block i contributes a degree-2 generator s_i with s_i**2 = 0 and
integral 1 over the block.  Then c1(T) of the block is x_i s_i (x_i = 2 on a
sphere, 0 on a torus) and c1(E) = d_i s_i.  Every class on the product is a
polynomial in the s_i, and a top-degree class pairs to its coefficient of
s_1 ... s_k.
"""

from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Union

from .geometry import ComplexTorus, GeometrySpec, Sphere
from .numeric import PiMonomial, PiSum

Element = dict  # frozenset[int] -> Fraction


class CharnumError(ValueError):
    pass


# ---------------------------------------------------------------------------
# the exterior-style ring Q[s_1..s_k]/(s_i^2)
# ---------------------------------------------------------------------------


def _one() -> Element:
    return {frozenset(): Fraction(1)}


def _add(a: Element, b: Element) -> Element:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, Fraction(0)) + v
    return {k: v for k, v in out.items() if v}


def _scale(a: Element, c) -> Element:
    c = Fraction(c)
    return {k: v * c for k, v in a.items() if v * c}


def _mul(a: Element, b: Element) -> Element:
    out: Element = {}
    for ka, va in a.items():
        for kb, vb in b.items():
            if ka & kb:
                continue
            k = ka | kb
            out[k] = out.get(k, Fraction(0)) + va * vb
    return {k: v for k, v in out.items() if v}


def _grade(a: Element, k: int) -> Element:
    return {s: v for s, v in a.items() if len(s) == k}


def _linear(coeffs: list[int]) -> Element:
    return {frozenset([i]): Fraction(c) for i, c in enumerate(coeffs) if c}


def _prod_linear(coeffs: list, half: bool = False) -> Element:
    """prod_i (1 + c_i s_i), or (1 + c_i s_i / 2)."""
    out = _one()
    for i, c in enumerate(coeffs):
        c = Fraction(c) / 2 if half else Fraction(c)
        out = _mul(out, {frozenset(): Fraction(1), frozenset([i]): c} if c else _one())
    return out


def _exp_nilpotent(a: Element, top: int) -> Element:
    out, term = _one(), _one()
    for k in range(1, top + 1):
        term = _scale(_mul(term, a), Fraction(1, k))
        out = _add(out, term)
    return out


@dataclass(frozen=True)
class ClassVector:
    """Per-block pairings x_i = c1(T)[block_i] and e_i = c1(E)[block_i]."""

    x: tuple[int, ...]
    e: tuple[int, ...]

    @classmethod
    def of(cls, spec: GeometrySpec) -> "ClassVector":
        spec.require_dolbeault()
        x, e = [], []
        for b in spec.blocks:
            if isinstance(b, Sphere):
                x.append(2)
                e.append(0)
            else:
                x.append(0)
                e.append(b.bundle_degree)
        return cls(tuple(x), tuple(e))

    @property
    def dim(self) -> int:
        return len(self.x)

    def top(self) -> frozenset:
        return frozenset(range(self.dim))

    def pair(self, a: Element) -> Fraction:
        return a.get(self.top(), Fraction(0))

    # total classes
    def c_T(self) -> Element:
        return _prod_linear(list(self.x))

    def c_E(self) -> Element:
        return _add(_one(), _linear(list(self.e)))

    def td_T(self) -> Element:
        return _prod_linear(list(self.x), half=True)

    def ch_E(self) -> Element:
        return _prod_linear(list(self.e))

    def ch_T(self) -> Element:
        # T splits into the block tangent lines
        out: Element = {}
        for i, xi in enumerate(self.x):
            out = _add(out, _exp_nilpotent(_linear([0] * i + [xi]), self.dim))
        return out

    def td_E(self) -> Element:
        c1 = _linear(list(self.e))
        # td(L) = 1 + c1/2 + c1^2/12 - c1^4/720 + ... for a line bundle
        series = [Fraction(1), Fraction(1, 2), Fraction(1, 12), Fraction(0), Fraction(-1, 720)]
        return _power_series(c1, series, self.dim)


def _power_series(a: Element, coeffs: list[Fraction], top: int) -> Element:
    out: Element = {}
    term = _one()
    for k in range(top + 1):
        if k >= len(coeffs):
            break
        out = _add(out, _scale(term, coeffs[k]))
        term = _mul(term, a)
    return out


# ---------------------------------------------------------------------------
# expression evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MonomialValue:
    value: Fraction
    degree_mismatch: bool
    degrees: frozenset


class _Evaluator:
    """Evaluates a whitelisted arithmetic expression in characteristic classes.

    Names: c{k}, ch{k}, Td{k}, optionally applied to T or E, e.g. ``c1(E)``.
    Defaults: c_k and Td_k refer to T, ch_k refers to E.  ``^`` is a power.
    """

    def __init__(self, cv: ClassVector):
        self.cv = cv

    def _class(self, name: str, bundle: str | None) -> tuple[Element, int]:
        m = re.fullmatch(r"(c|ch|Td|td)(\d+)", name)
        if not m:
            raise CharnumError(f"unknown class {name!r}")
        fam, k = m.group(1).lower(), int(m.group(2))
        bundle = bundle or ("E" if fam == "ch" else "T")
        if bundle not in ("T", "E"):
            raise CharnumError(f"unknown bundle {bundle!r}")
        total = {
            ("c", "T"): self.cv.c_T,
            ("c", "E"): self.cv.c_E,
            ("ch", "T"): self.cv.ch_T,
            ("ch", "E"): self.cv.ch_E,
            ("td", "T"): self.cv.td_T,
            ("td", "E"): self.cv.td_E,
        }[(fam, bundle)]()
        if fam == "ch" and k == 0:
            rank = self.cv.dim if bundle == "T" else 1
            return {frozenset(): Fraction(rank)}, 0
        return _grade(total, k), k

    def eval(self, node) -> tuple[Element, frozenset]:
        if isinstance(node, ast.Expression):
            return self.eval(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return {frozenset(): Fraction(str(node.value))}, frozenset({0})
        if isinstance(node, ast.Name):
            el, k = self._class(node.id, None)
            return el, frozenset({k})
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and len(node.args) == 1 and not node.keywords:
            arg = node.args[0]
            if not isinstance(arg, ast.Name):
                raise CharnumError("class arguments must be T or E")
            el, k = self._class(node.func.id, arg.id)
            return el, frozenset({k})
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            el, d = self.eval(node.operand)
            return (_scale(el, -1) if isinstance(node.op, ast.USub) else el), d
        if isinstance(node, ast.BinOp):
            a, da = self.eval(node.left)
            if isinstance(node.op, ast.Pow):
                n = _int_constant(node.right)
                out, deg = _one(), frozenset({0})
                for _ in range(n):
                    out = _mul(out, a)
                    deg = frozenset(x + y for x in deg for y in da)
                return out, deg
            b, db = self.eval(node.right)
            if isinstance(node.op, (ast.Add, ast.Sub)):
                return _add(a, b if isinstance(node.op, ast.Add) else _scale(b, -1)), da | db
            if isinstance(node.op, ast.Mult):
                return _mul(a, b), frozenset(x + y for x in da for y in db)
            if isinstance(node.op, ast.Div):
                if db != {0} or set(b) - {frozenset()}:
                    raise CharnumError("can only divide by numbers")
                return _scale(a, 1 / b.get(frozenset(), Fraction(0))), da
        raise CharnumError(f"unsupported expression element {ast.dump(node)}")


def _int_constant(node) -> int:
    if isinstance(node, ast.Constant) and isinstance(node.value, int) and node.value >= 0:
        return node.value
    raise CharnumError("exponents must be nonnegative integer literals")


def class_monomial(spec: GeometrySpec, description: str) -> MonomialValue:
    """Pair a characteristic-class expression with the fundamental class.

    Terms of total (complex) degree other than the complex dimension pair to 0
    and set ``degree_mismatch``.

    >>> from heatlab.geometry import S2
    >>> class_monomial(S2() * S2(), "Td2").value
    Fraction(1, 1)
    """
    cv = ClassVector.of(spec)
    try:
        tree = ast.parse(description.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise CharnumError(f"cannot parse {description!r}: {exc.msg}") from None
    el, degs = _Evaluator(cv).eval(tree)
    return MonomialValue(cv.pair(el), any(d != cv.dim for d in degs), degs)


# ---------------------------------------------------------------------------
# predictions
# ---------------------------------------------------------------------------

Value = Union[Fraction, PiSum]


@dataclass(frozen=True)
class Prediction:
    identity: str
    value: Value
    provenance: str
    paths: Mapping[str, Value] = field(default_factory=dict)
    diagnostics: Mapping[str, object] = field(default_factory=dict)

    @property
    def agree(self) -> bool:
        vals = list(self.paths.values())
        return all(v == vals[0] for v in vals)

    def to_dict(self) -> dict:
        return {
            "identity": self.identity,
            "value": str(self.value),
            "decimal": float(self.value),
            "provenance": self.provenance,
            "paths": {k: str(v) for k, v in self.paths.items()},
            "agree": self.agree,
            "diagnostics": {k: str(v) for k, v in self.diagnostics.items()},
        }


def euler_char(spec: GeometrySpec) -> int:
    return math.prod(2 if isinstance(b, Sphere) else 0 for b in spec.blocks)


def _block_index(b) -> int:
    return 1 if isinstance(b, Sphere) else b.bundle_degree


def rr_index_paths(spec: GeometrySpec) -> dict[str, int]:
    """Index of the twisted Dolbeault complex by every applicable route."""
    cv = ClassVector.of(spec)
    paths = {
        "multiplicative": math.prod(_block_index(b) for b in spec.blocks),
        "Td*ch": int(cv.pair(_mul(cv.td_T(), cv.ch_E()))),
    }
    if cv.dim == 1:
        paths["curve formula"] = int(class_monomial(spec, "c1(T)/2*ch0(E) + c1(E)").value)
    elif cv.dim == 2:
        paths["surface formula"] = int(class_monomial(spec, "Td2(T)*ch0(E) + c1(T)*c1(E)/2 + ch2(E)").value)
    return paths


def rr_index(spec: GeometrySpec) -> int:
    """Riemann-Roch index; raises if the evaluation routes disagree."""
    paths = rr_index_paths(spec)
    vals = set(paths.values())
    if len(vals) != 1:
        raise CharnumError(f"index routes disagree: {paths}")
    return vals.pop()


_R_POLY = {
    1: "c1(T)/3*ch0(E) + c1(E)/2",
    2: "(Td2(T) + c1(T)^2/24)*ch0(E) + 7/12*c1(T)*c1(E) + ch2(E)",
}


def predicted_derived_top(spec: GeometrySpec, kind: str) -> Prediction:
    """Top-order integrated derived coefficient.

    de Rham: (m/2) * chi.  Dolbeault: the R-polynomial (complex dimension 1 or
    2), the flat-torus and trivial-bundle specializations where they apply,
    and the product recursion a[X x Y] = a[X] index[Y] + index[X] a[Y].
    """
    k = kind.lower().replace("_", "")
    if k in ("derham", "der"):
        if spec.m % 2:
            raise CharnumError("the de Rham top-order prediction needs even dimension")
        v = Fraction(spec.m, 2) * euler_char(spec)
        return Prediction("derived-top", v, "de Rham: (m/2) * euler characteristic", {"euler": v})
    if k not in ("dolbeault", "dol"):
        raise CharnumError(f"unknown complex {kind!r}")
    cv = ClassVector.of(spec)
    dim = cv.dim
    seeds = [Fraction(2, 3) if isinstance(b, Sphere) else Fraction(b.bundle_degree, 2) for b in spec.blocks]
    idx = [_block_index(b) for b in spec.blocks]
    rec = sum(
        (seeds[i] * math.prod(idx[j] for j in range(dim) if j != i) for i in range(dim)), Fraction(0)
    )
    paths: dict[str, Value] = {"recursion": rec}
    diagnostics: dict[str, object] = {}
    if dim in _R_POLY:
        paths["R-polynomial"] = class_monomial(spec, _R_POLY[dim]).value
    else:
        diagnostics["R-polynomial"] = f"not available in complex dimension {dim}"
    if all(isinstance(b, ComplexTorus) for b in spec.blocks):
        paths["flat tori"] = Fraction(dim, 2) * class_monomial(spec, f"ch{dim}(E)").value
    if all(e == 0 for e in cv.e):
        paths["trivial bundle"] = Fraction(2 * dim, 3) * class_monomial(spec, f"Td{dim}(T)").value
    return Prediction("derived-top", rec, "Dolbeault derived top coefficient", paths, diagnostics)


def _area(b) -> PiSum:
    if isinstance(b, Sphere):
        return PiSum.of(PiMonomial(4, 1) * b.radius**2)
    return PiSum.of(b.area)


def predicted_subleading(spec: GeometrySpec) -> Prediction:
    """Coefficient of t^-1 in the derived Dolbeault trace.

    Every block supertrace is the constant index_i, and each block derived
    trace starts with -area_i / (4 pi t), so the product yields
    -sum_i area_i / (4 pi) * prod_{j != i} index_j.

    The diagnostic ``pairing`` is the integral of the degree n-1 part of
    Td(T) ch(E) wedged with the Kaehler class (n = complex dimension);
    ``factor`` is value / pairing.
    """
    cv = ClassVector.of(spec)
    dim = cv.dim
    idx = [_block_index(b) for b in spec.blocks]
    areas = [_area(b) for b in spec.blocks]
    four_pi = PiMonomial(4, 1)
    value = PiSum()
    for i in range(dim):
        value = value + (-areas[i] / four_pi) * math.prod(idx[j] for j in range(dim) if j != i)
    tdch = _grade(_mul(cv.td_T(), cv.ch_E()), dim - 1)
    pairing = PiSum()
    for i in range(dim):
        rest = cv.top() - {i}
        pairing = pairing + areas[i] * tdch.get(rest, Fraction(0))
    diagnostics: dict[str, object] = {"pairing": pairing}
    try:
        diagnostics["factor"] = (value / pairing) if len(pairing.terms) == 1 else _ratio(value, pairing)
    except (ValueError, ZeroDivisionError):
        diagnostics["factor"] = "undefined"
    return Prediction("subleading", value, "product recursion at order t^-1", {"recursion": value}, diagnostics)


def _ratio(a: PiSum, b: PiSum) -> PiSum:
    """a / b when a is a monomial multiple of b."""
    if not b.terms:
        raise ZeroDivisionError
    lead_a, lead_b = a.monomials()[0], b.monomials()[0]
    q = lead_a / lead_b
    if b * q != a:
        raise ValueError("not proportional")
    return PiSum.of(q)


def predict(spec: GeometrySpec, identity: str) -> Prediction:
    """Dispatch for euler | index | derived-top | subleading (Dolbeault unless noted)."""
    ident = identity.lower()
    if ident == "euler":
        v = Fraction(euler_char(spec))
        return Prediction("euler", v, "product of block Euler characteristics", {"product": v})
    if ident == "index":
        paths = {k: Fraction(v) for k, v in rr_index_paths(spec).items()}
        return Prediction("index", next(iter(paths.values())), "Riemann-Roch", paths)
    if ident in ("derived-top", "derived-top-derham"):
        kind = "derham" if ident.endswith("derham") or not spec.dolbeault_legal else "dolbeault"
        return predicted_derived_top(spec, kind)
    if ident == "subleading":
        return predicted_subleading(spec)
    raise CharnumError(f"unknown identity {identity!r}")
