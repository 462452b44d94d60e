"""Run configuration: working precision, t-ladder, cutoff policy and tolerances."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Mapping


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Ladder:
    """Geometric diffusion-time ladder t0, t0*ratio, ..., t0*ratio**(count-1)."""

    t0: float = 0.004
    ratio: float = 0.9
    count: int = 18

    def __post_init__(self):
        if not self.t0 > 0:
            raise ConfigError("ladder t0 must be positive")
        if not 0 < self.ratio < 1:
            raise ConfigError("ladder ratio must lie in (0, 1)")
        if self.count < 1:
            raise ConfigError("ladder count must be at least 1")

    @classmethod
    def parse(cls, text: str) -> "Ladder":
        """Parse ``T0:RATIO:COUNT``."""
        try:
            t0, ratio, count = text.split(":")
            return cls(float(t0), float(ratio), int(count))
        except ValueError as exc:
            raise ConfigError(f"ladder must look like T0:RATIO:COUNT, got {text!r} ({exc})") from None

    @property
    def times(self) -> list[float]:
        return [self.t0 * self.ratio**k for k in range(self.count)]

    @property
    def t_min(self) -> float:
        return min(self.times)

    def __str__(self):
        return f"{self.t0}:{self.ratio}:{self.count}"


@dataclass(frozen=True)
class Config:
    precision_digits: int = 40
    ladder: Ladder = field(default_factory=Ladder)
    eps_tail: float = 1e-28
    guard_orders: int = 4
    include_odd: bool = False
    max_condition: float = 1e40
    tol_exact: float = 1e-20
    tol_fit: float = 1e-6
    tol_strict: float = 1e-8
    workers: int = 1

    def __post_init__(self):
        if self.precision_digits < 20:
            raise ConfigError("precision_digits must be at least 20")
        if not self.eps_tail > 0:
            raise ConfigError("eps_tail must be positive")
        if self.guard_orders < 0:
            raise ConfigError("guard_orders must be nonnegative")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    @property
    def t_min(self) -> float:
        return self.ladder.t_min

    def with_ladder(self, ladder: Ladder) -> "Config":
        return replace(self, ladder=ladder)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "Config":
        known = {f.name for f in fields(cls)}
        if extra := set(doc) - known:
            raise ConfigError(f"unknown config fields {sorted(extra)}")
        kw = dict(doc)
        lad = kw.get("ladder")
        if isinstance(lad, str):
            kw["ladder"] = Ladder.parse(lad)
        elif isinstance(lad, Mapping):
            kw["ladder"] = Ladder(**lad)
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path=None) -> Config:
    if path is None:
        return Config()
    with open(path, encoding="utf-8") as fh:
        try:
            return Config.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from None
