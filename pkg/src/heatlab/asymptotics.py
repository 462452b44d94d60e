"""Extraction of small-t expansion coefficients and exact closed-form oracles.

A trace aggregate on an m-dimensional geometry is modelled as
``sum_n A_n t**((n - m)/2)``.  Coefficients are obtained by least squares on a
geometric t-ladder, with extra guard orders that absorb series truncation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import gmpy2
import mpmath

from .geometry import Circle, ComplexTorus
from .numeric import PiMonomial, current_digits


class FitRefused(ValueError):
    """The requested fit is ill-posed or ill-conditioned."""


@dataclass(frozen=True)
class ExpansionFit:
    m: int
    orders: tuple[int, ...]
    coefficients: dict[int, mpmath.mpf]
    uncertainty: dict[int, mpmath.mpf]
    ladder: tuple[float, ...]
    residual_norm: mpmath.mpf
    condition: mpmath.mpf
    guard: dict[int, mpmath.mpf] = field(default_factory=dict)

    def __getitem__(self, n: int) -> mpmath.mpf:
        return self.coefficients[n]

    def ladder_summary(self) -> dict:
        ts = self.ladder
        ratio = ts[1] / ts[0] if len(ts) > 1 else 1.0
        return {"t0": ts[0], "ratio": ratio, "count": len(ts)}

    def to_dict(self, digits: int = 30) -> dict:
        s = lambda x: mpmath.nstr(x, digits)
        return {
            "m": self.m,
            "coefficients": {str(n): s(v) for n, v in self.coefficients.items()},
            "uncertainty": {str(n): s(v) for n, v in self.uncertainty.items()},
            "ladder": self.ladder_summary(),
            "residual_norm": s(self.residual_norm),
            "condition": s(self.condition),
        }


def _basis(m: int, n_max: int, guard_orders: int, include_odd: bool) -> list[int]:
    step = 1 if include_odd else 2
    return list(range(0, n_max + 2 * guard_orders + 1, step))


def _solve(ts, vs, m, orders):
    """Column-scaled least squares; returns coefficients, residual norm, condition, pseudo-inverse."""
    N, K = len(ts), len(orders)
    M = mpmath.matrix(N, K)
    for i, t in enumerate(ts):
        for j, n in enumerate(orders):
            M[i, j] = t ** (mpmath.mpf(n - m) / 2)
    scale = [mpmath.norm(M.column(j)) for j in range(K)]
    for j in range(K):
        for i in range(N):
            M[i, j] /= scale[j]
    sv = mpmath.svd_r(M, compute_uv=False)
    cond = max(sv) / min(sv) if min(sv) > 0 else mpmath.inf
    Mt = M.T
    G_inv = mpmath.inverse(Mt * M)
    P = G_inv * Mt
    y = mpmath.matrix(vs)
    x = P * y
    r = y - M * x
    coef = [x[j] / scale[j] for j in range(K)]
    rows = [[P[j, i] / scale[j] for i in range(N)] for j in range(K)]
    cov = [G_inv[j, j] / scale[j] ** 2 for j in range(K)]
    return coef, mpmath.norm(r), cond, rows, cov


def fit_expansion(
    values: Sequence[tuple],
    m: int,
    n_max: int | None = None,
    *,
    guard_orders: int = 4,
    include_odd: bool = False,
    max_condition: float = 1e40,
    digits: int | None = None,
) -> ExpansionFit:
    """Least-squares fit of sum_n A_n t^((n-m)/2) to (t, value, error) samples.

    Orders 0, 2, ..., n_max are reported; ``guard_orders`` further even orders
    are fitted and discarded.  With ``include_odd`` every integer order is in
    the basis and odd orders are reported too.

    The uncertainty of each reported coefficient is the largest of the
    residual-based standard error, the change when the last guard order is
    dropped, and the propagated data error bounds.

    Raises:
        FitRefused: too few samples or condition number above ``max_condition``.
    """
    n_max = m + 2 if n_max is None else n_max
    if n_max < 0:
        raise FitRefused("n_max must be nonnegative")
    orders = _basis(m, n_max, guard_orders, include_odd)
    N = len(values)
    if N <= len(orders):
        raise FitRefused(f"{N} samples cannot determine {len(orders)} coefficients with a residual")
    digits = digits or max(2 * current_digits(), 60)
    with mpmath.workdps(digits):
        ts = [_mpf(v[0]) for v in values]
        vs = [_mpf(v[1]) for v in values]
        es = [_mpf(v[2]) if len(v) > 2 else mpmath.mpf(0) for v in values]
        coef, rnorm, cond, rows, cov = _solve(ts, vs, m, orders)
        if cond > max_condition:
            raise FitRefused(f"design condition number {mpmath.nstr(cond, 3)} exceeds {max_condition:g}")
        dof = N - len(orders)
        sigma = rnorm / mpmath.sqrt(dof)
        if guard_orders > 0:
            coef2 = _solve(ts, vs, m, orders[: -(2 if not include_odd else 1)] if len(orders) > 2 else orders)[0]
        else:
            coef2 = coef
        floor = mpmath.mpf(10) ** (-(digits // 2))
        reported = [n for n in orders if n <= n_max]
        out, unc, guard = {}, {}, {}
        for j, n in enumerate(orders):
            if n not in reported:
                guard[n] = coef[j]
                continue
            resid = sigma * mpmath.sqrt(abs(cov[j]))
            gdiff = abs(coef[j] - coef2[j]) if j < len(coef2) else mpmath.mpf(0)
            prop = mpmath.fsum(abs(rows[j][i]) * es[i] for i in range(N))
            out[n] = coef[j]
            unc[n] = max(resid, gdiff, prop) + floor
        return ExpansionFit(
            m, tuple(reported), out, unc, tuple(float(t) for t in ts), rnorm, cond, guard
        )


def _mpf(x) -> mpmath.mpf:
    """Exact conversion of float, int, Fraction, PiMonomial or gmpy2 mpfr."""
    if isinstance(x, PiMonomial):
        return _mpf(x.coef) * mpmath.pi ** _mpf(x.power)
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / x.denominator
    if isinstance(x, (int, float)):
        return mpmath.mpf(x)
    if isinstance(x, gmpy2.mpfr(0).__class__):
        n, d = x.as_integer_ratio()
        return mpmath.mpf(int(n)) / int(d)
    return mpmath.mpf(x)


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------


def bernoulli(k: int) -> Fraction:
    """Bernoulli number B_k with B_1 = -1/2."""
    p, q = mpmath.bernfrac(k)
    return Fraction(int(p), int(q))


def bernoulli_oracle(block: ComplexTorus, n_max: int) -> dict[int, PiMonomial]:
    """Exact expansion of the derived Dolbeault trace of a torus with d != 0.

    The derived trace is -d/(e^{2Bt} - 1) (plus -|d| for d < 0) with
    2B = 4 pi |d| / area; coefficient n multiplies t^((n-2)/2).
    """
    if not isinstance(block, ComplexTorus):
        raise ValueError("the Bernoulli oracle needs a complex torus block")
    d = block.bundle_degree
    if d == 0:
        raise ValueError("the Bernoulli oracle needs a nonzero bundle degree")
    n = abs(d)
    two_b = PiMonomial(4 * n, 1) / block.area
    out: dict[int, PiMonomial] = {}
    for k in range(0, n_max // 2 + 1):
        c = PiMonomial(-n * bernoulli(k) / math.factorial(k)) * two_b ** (k - 1)
        if k == 1 and d < 0:
            c = c + PiMonomial(-n)
        out[2 * k] = c
    return out


def circle_oracle(block: Circle, n_max: int) -> dict[int, PiMonomial]:
    """Expansion of L (4 pi t)^(-1/2) e^{-t a^2}: order n = 2k multiplies t^(k - 1/2)."""
    if not isinstance(block, Circle):
        raise ValueError("the circle oracle needs a circle block")
    a2 = block.witten_a**2
    base = block.circumference * PiMonomial(Fraction(1, 2), Fraction(-1, 2))
    return {2 * k: base * PiMonomial((-a2) ** k / math.factorial(k)) for k in range(n_max // 2 + 1)}
