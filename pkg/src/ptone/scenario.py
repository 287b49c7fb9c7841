"""Scenario files: a flat sectioned key-value format with ``#`` comments.

Example::

    [model]
    dim = 2
    curvature = -1        # or: warp_table = warp.csv
    [params]
    p = 2
    grid = 2048
    [domain]
    ball = 15             # or: annulus = 1, 20   or: open = 2, 5, 10, 15
    [tasks]
    run = tone, bound:mckean, growth, cheeger, certify
    [output]
    format = json
    path = report.json
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

from .geometry import Annulus, Ball, WarpedModel
from .solver import DEFAULT_TOL, SpectralParams

TASKS = ("tone", "bound", "growth", "ess_tone", "cheeger", "certify")
BOUND_METHODS = ("mckean", "c_constant", "thm2", "ball_comparison", "eigenfield",
                 "optimize_thm1", "optimize_thm2")
FIELD_TAGS = ("gradient_distance", "canonical_pq")

DEFAULT_TOLERANCES = {
    "bound_rtol": 1e-6,
    "ordering_tol": 1e-2,
    "brooks_rtol": 1e-2,
    "sharpness_rtol": 1e-2,
    "spread_rtol": 5e-2,
}

_KNOWN = {
    "model": {"dim", "curvature", "warp_table", "r_max"},
    "params": {"p", "tol", "grid"},
    "domain": {"ball", "annulus", "open", "inner"},
    "tasks": {"run"},
    "field": {"kind", "radii", "values"},
    "growth": {"r_lo", "r_hi", "samples"},
    "tolerances": set(DEFAULT_TOLERANCES),
    "output": {"format", "path", "eigenfunction"},
}


class ScenarioError(ValueError):
    """Parse or validation failure; ``key`` names the offending entry when known."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        where = []
        if key:
            where.append(key)
        if line:
            where.append(f"line {line}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.key, self.line = key, line


@dataclass
class ModelSpec:
    dim: int
    curvature: Optional[float] = None
    warp_table: Optional[str] = None
    r_max: float = math.inf

    def build(self) -> WarpedModel:
        if self.warp_table is not None:
            return WarpedModel.from_warp_table(self.dim, self.warp_table, self.r_max)
        return WarpedModel.space_form(self.dim, self.curvature, self.r_max)


@dataclass
class DomainSpec:
    kind: str  # ball | annulus | open
    radii: Tuple[float, ...]
    inner: float = 0.0

    def build(self):
        if self.kind == "ball":
            return Ball(self.radii[0])
        if self.kind == "annulus":
            return Annulus(*self.radii)
        return None

    @property
    def outer(self) -> float:
        return max(self.radii)


@dataclass
class FieldSpec:
    kind: str = "gradient_distance"  # gradient_distance | canonical_pq | constant | control
    beta: float = 0.0
    radii: Tuple[float, ...] = ()
    values: Tuple[float, ...] = ()


@dataclass
class Scenario:
    name: str
    model: ModelSpec
    p: float
    domain: DomainSpec
    tasks: List[str] = field(default_factory=list)
    tol: float = DEFAULT_TOL
    grid: int = 2048
    field_spec: FieldSpec = field(default_factory=FieldSpec)
    growth_window: Tuple[Optional[float], Optional[float]] = (None, None)
    growth_samples: int = 64
    tolerances: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    output_format: str = "json"
    output_path: Optional[str] = None
    eigenfunction_path: Optional[str] = None

    @property
    def params(self) -> SpectralParams:
        return SpectralParams(self.p)

    def summary(self) -> Dict[str, object]:
        """Stable description used as the report header."""
        d = asdict(self)
        d.pop("output_path")
        d.pop("eigenfunction_path")
        return d


def _float(sec, key, raw) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ScenarioError(f"expected a number, got {raw!r}", f"[{sec}] {key}") from None


def _floats(sec, key, raw) -> Tuple[float, ...]:
    parts = [s for s in raw.replace(",", " ").split() if s]
    if not parts:
        raise ScenarioError("expected a list of numbers", f"[{sec}] {key}")
    return tuple(_float(sec, key, s) for s in parts)


def _int(sec, key, raw) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ScenarioError(f"expected an integer, got {raw!r}", f"[{sec}] {key}") from None


def _reader() -> configparser.ConfigParser:
    return configparser.ConfigParser(comment_prefixes=("#",), inline_comment_prefixes=("#",),
                                     interpolation=None, strict=True)


def parse_scenario_text(text: str, name: str = "scenario", base_dir: str = ".") -> Scenario:
    cp = _reader()
    try:
        cp.read_string(text, source=name)
    except configparser.MissingSectionHeaderError as exc:
        raise ScenarioError("key outside any [section]", line=exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ScenarioError("malformed line (expected key = value)", line=line) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ScenarioError(exc.message.split(":")[-1].strip() or "duplicate entry",
                            line=exc.lineno) from None
    for sec in cp.sections():
        if sec not in _KNOWN:
            raise ScenarioError("unknown section", f"[{sec}]")
        for key in cp[sec]:
            if key not in _KNOWN[sec]:
                raise ScenarioError("unknown key", f"[{sec}] {key}")

    def get(sec, key, default=None):
        return cp[sec][key] if cp.has_option(sec, key) else default

    # model
    if not cp.has_section("model") or get("model", "dim") is None:
        raise ScenarioError("missing", "[model] dim")
    dim = _int("model", "dim", get("model", "dim"))
    if dim < 2:
        raise ScenarioError("dimension must be at least 2", "[model] dim")
    curv, table = get("model", "curvature"), get("model", "warp_table")
    if (curv is None) == (table is None):
        raise ScenarioError("give exactly one of curvature or warp_table", "[model] curvature")
    r_max = _float("model", "r_max", get("model", "r_max", "inf"))
    if table is not None:
        table = os.path.normpath(os.path.join(base_dir, table))
        if not os.path.isfile(table):
            raise ScenarioError(f"file not found: {table}", "[model] warp_table")
        if not math.isfinite(r_max):
            raise ScenarioError("a warp table needs a finite r_max", "[model] r_max")
    model = ModelSpec(dim, None if curv is None else _float("model", "curvature", curv), table, r_max)

    # params
    p = _float("params", "p", get("params", "p", "2")) if cp.has_section("params") else 2.0
    if not p > 1:
        raise ScenarioError("p must exceed 1", "[params] p")
    tol = _float("params", "tol", get("params", "tol", repr(DEFAULT_TOL))) if cp.has_section("params") else DEFAULT_TOL
    if not tol > 0:
        raise ScenarioError("tol must be positive", "[params] tol")
    grid = _int("params", "grid", get("params", "grid", "2048")) if cp.has_section("params") else 2048
    if grid < 2:
        raise ScenarioError("grid must be at least 2", "[params] grid")

    # domain
    if not cp.has_section("domain"):
        raise ScenarioError("missing section", "[domain]")
    kinds = [k for k in ("ball", "annulus", "open") if cp.has_option("domain", k)]
    if len(kinds) != 1:
        raise ScenarioError("give exactly one of ball, annulus, open", "[domain]")
    kind = kinds[0]
    radii = _floats("domain", kind, get("domain", kind))
    inner = _float("domain", "inner", get("domain", "inner", "0"))
    key = f"[domain] {kind}"
    if kind == "ball" and (len(radii) != 1 or not radii[0] > 0):
        raise ScenarioError("ball needs one positive radius", key)
    if kind == "annulus":
        if len(radii) != 2:
            raise ScenarioError("annulus needs r0, r1", key)
        if not 0 < radii[0] < radii[1]:
            raise ScenarioError(f"annulus needs 0 < r0 < r1, got r0={radii[0]}, r1={radii[1]}", key)
    if kind == "open":
        if any(b <= a for a, b in zip(radii, radii[1:])) or radii[0] <= inner:
            raise ScenarioError("open radii must increase and exceed inner", key)
    if inner < 0:
        raise ScenarioError("inner radius must be nonnegative", "[domain] inner")
    built = model.build()
    if max(radii) > built.r_max:
        raise ScenarioError(f"radius {max(radii)} exceeds r_max={built.r_max}", key)
    domain = DomainSpec(kind, radii, inner)

    # tasks
    tasks: List[str] = []
    if cp.has_option("tasks", "run"):
        tasks = [t.strip() for t in get("tasks", "run").split(",") if t.strip()]
    for t in tasks:
        head, _, method = t.partition(":")
        if head not in TASKS:
            raise ScenarioError(f"unknown task {t!r}", "[tasks] run")
        if head == "bound" and method not in BOUND_METHODS:
            raise ScenarioError(f"unknown bound method {method!r}", "[tasks] run")

    # field
    fspec = FieldSpec()
    if cp.has_section("field"):
        fk = get("field", "kind", "gradient_distance")
        if fk.startswith("constant:"):
            fspec = FieldSpec("constant", _float("field", "kind", fk.split(":", 1)[1]))
        elif fk in FIELD_TAGS:
            fspec = FieldSpec(fk)
        elif fk == "control":
            fr = _floats("field", "radii", get("field", "radii", ""))
            fv = _floats("field", "values", get("field", "values", ""))
            if len(fr) != len(fv):
                raise ScenarioError("radii and values differ in length", "[field] values")
            if len(fr) > 64:
                raise ScenarioError("at most 64 control points", "[field] radii")
            fspec = FieldSpec("control", 0.0, fr, fv)
        else:
            raise ScenarioError(f"unknown field kind {fk!r}", "[field] kind")

    # growth
    r_lo = get("growth", "r_lo")
    r_hi = get("growth", "r_hi")
    window = (None if r_lo is None else _float("growth", "r_lo", r_lo),
              None if r_hi is None else _float("growth", "r_hi", r_hi))
    samples = _int("growth", "samples", get("growth", "samples", "64"))

    tols = dict(DEFAULT_TOLERANCES)
    if cp.has_section("tolerances"):
        for k in cp["tolerances"]:
            tols[k] = _float("tolerances", k, cp["tolerances"][k])

    fmt = get("output", "format", "json")
    if fmt not in ("json", "csv"):
        raise ScenarioError("format must be json or csv", "[output] format")
    path = get("output", "path")
    eig = get("output", "eigenfunction")
    if path is not None:
        path = os.path.normpath(os.path.join(base_dir, path))
    if eig is not None:
        eig = os.path.normpath(os.path.join(base_dir, eig))

    return Scenario(name, model, p, domain, tasks, tol, grid, fspec, window, samples, tols,
                    fmt, path, eig)


def parse_scenario(path: str) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    name = os.path.splitext(os.path.basename(path))[0]
    return parse_scenario_text(text, name, os.path.dirname(os.path.abspath(path)))
