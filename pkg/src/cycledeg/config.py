"""JSON analysis configuration and the standard analysis pipeline."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

from .adjointcycle import periodic_adjoint
from .cyclefind import Section, solve_cycle
from .degreecalc import Region
from .errors import ConfigError
from .exprcore import SystemSpec
from .malkinfn import sample_f

TOP_FIELDS = {"dimension", "period", "psi", "phi", "seed", "section", "region", "numerics"}
REQUIRED = {"dimension", "period", "psi", "phi", "seed", "section"}
NUMERIC_DEFAULTS = {
    "tol": 1e-10,
    "mult_tol": 1e-6,
    "samples": 256,
    "panels": 64,
    "eps0": 1e-2,
    "halvings": 8,
}
NUMERIC_RANGES = {
    "tol": (1e-13, 1e-3),
    "mult_tol": (1e-12, 1e-2),
    "samples": (16, 1 << 16),
    "panels": (1, 1 << 14),
    "eps0": (1e-12, 1e-2),
    "halvings": (4, 12),
}


@dataclass(frozen=True)
class Numerics:
    tol: float = 1e-10
    mult_tol: float = 1e-6
    samples: int = 256
    panels: int = 64
    eps0: float = 1e-2
    halvings: int = 8


@dataclass(frozen=True)
class AnalysisConfig:
    dimension: int
    period: float | None  # None means "solve"
    psi: tuple[str, ...]
    phi: tuple[str, ...]
    seed: tuple[float, ...]
    section: Section
    region: Region | None = None
    numerics: Numerics = field(default_factory=Numerics)

    @cached_property
    def spec(self) -> SystemSpec:
        return SystemSpec.from_text(list(self.psi), list(self.phi), self.period, self.dimension)


def _reject_unknown(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    extra = set(obj) - set(allowed)
    if extra:
        raise ConfigError(f"unknown field(s) in {where}: {', '.join(sorted(extra))}")


def _vector(v, n, what):
    if not isinstance(v, list) or len(v) != n or not all(
        isinstance(a, (int, float)) and not isinstance(a, bool) and math.isfinite(a) for a in v
    ):
        raise ConfigError(f"{what} must be a list of {n} finite numbers")
    return tuple(float(a) for a in v)


def parse_config(doc: dict) -> AnalysisConfig:
    _reject_unknown(doc, TOP_FIELDS, "config")
    missing = REQUIRED - set(doc)
    if missing:
        raise ConfigError(f"missing field(s): {', '.join(sorted(missing))}")
    n = doc["dimension"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ConfigError("dimension must be a positive integer")
    period = doc["period"]
    if period == "solve":
        period = None
    elif isinstance(period, (int, float)) and not isinstance(period, bool) and period > 0:
        period = float(period)
    else:
        raise ConfigError('period must be a positive number or "solve"')
    for key in ("psi", "phi"):
        v = doc[key]
        if not isinstance(v, list) or len(v) != n or not all(isinstance(s, str) for s in v):
            raise ConfigError(f"{key} must be a list of {n} expression strings")
    seed = _vector(doc["seed"], n, "seed")

    sec = doc["section"]
    _reject_unknown(sec, {"coord", "value", "direction"}, "section")
    coord = sec.get("coord")
    if not isinstance(coord, int) or not 1 <= coord <= n:
        raise ConfigError(f"section.coord must be an integer in 1..{n}")
    direction = sec.get("direction", 1)
    if direction not in (1, -1):
        raise ConfigError("section.direction must be 1 or -1")
    section = Section(coord, float(sec.get("value", 0.0)), int(direction))

    region = None
    if "region" in doc:
        r = doc["region"]
        if not isinstance(r, dict) or r.get("type") not in ("ball", "box"):
            raise ConfigError('region.type must be "ball" or "box"')
        if r["type"] == "ball":
            _reject_unknown(r, {"type", "center", "radius"}, "region")
            radius = r.get("radius")
            if not isinstance(radius, (int, float)) or not radius > 0:
                raise ConfigError("region.radius must be a positive number")
            region = Region.ball(_vector(r.get("center"), n, "region.center"), radius)
        else:
            _reject_unknown(r, {"type", "lo", "hi"}, "region")
            region = Region.box(_vector(r.get("lo"), n, "region.lo"), _vector(r.get("hi"), n, "region.hi"))

    nums = dict(NUMERIC_DEFAULTS)
    if "numerics" in doc:
        _reject_unknown(doc["numerics"], NUMERIC_DEFAULTS, "numerics")
        nums.update(doc["numerics"])
    for key, (lo, hi) in NUMERIC_RANGES.items():
        v = nums[key]
        is_int = key in ("samples", "panels", "halvings")
        if isinstance(v, bool) or not isinstance(v, int if is_int else (int, float)) or not lo <= v <= hi:
            raise ConfigError(f"numerics.{key} must be {'an integer' if is_int else 'a number'} in [{lo}, {hi}]")
    numerics = Numerics(**{k: (int(v) if k in ("samples", "panels", "halvings") else float(v)) for k, v in nums.items()})

    return AnalysisConfig(n, period, tuple(doc["psi"]), tuple(doc["phi"]), seed, section, region, numerics)


def load_config(path) -> AnalysisConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {str(path)!r}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return parse_config(doc)


def bundled_config(name) -> AnalysisConfig:
    """One of the configs shipped in ``cycledeg/configs`` (e.g. ``"circle_box"``)."""
    ref = resources.files("cycledeg") / "configs" / f"{name}.json"
    return parse_config(json.loads(ref.read_text(encoding="utf-8")))


@dataclass
class Analysis:
    """Cycle, adjoint and bifurcation function computed from a config."""

    config: AnalysisConfig

    @cached_property
    def _solved(self):
        c = self.config
        return solve_cycle(c.spec, c.seed, c.section, c.numerics.tol, c.numerics.mult_tol)

    @property
    def spec(self):
        return self._solved[0]

    @property
    def cycle(self):
        return self._solved[1]

    @cached_property
    def adjoint(self):
        return periodic_adjoint(self.spec, self.cycle)

    @cached_property
    def bf(self):
        n = self.config.numerics
        return sample_f(self.cycle, self.adjoint, self.spec, n.samples, n.panels)
