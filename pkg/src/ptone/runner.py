"""Executes a scenario's tasks and collects a certification report."""

from __future__ import annotations

import logging
import math
from typing import Optional

from .fields import (FieldError, FieldFamily, SandwichViolation, ball_comparison_bound,
                     c_constant_bound, canonical_ball_field, constant_field, eigenfield_sharpness,
                     gradient_distance_field, mckean_bound, optimize_field_family,
                     piecewise_linear_field, thm2_bound)
from .geometry import Annulus, Ball
from .growth import brooks_bound, essential_tone, radial_cheeger, theta_estimate, verify_orderings
from .report import CertificationReport, fmt_float
from .scenario import Scenario
from .solver import solve_first_tone, tone_of_open_manifold

log = logging.getLogger(__name__)


class _Run:
    """Lazily computed, cached intermediate results of one scenario."""

    def __init__(self, sc: Scenario):
        self.sc = sc
        self.model = sc.model.build()
        self.params = sc.params
        self._solve = None
        self._open = None
        self._theta = None
        self._cheeger = None
        self._ess = None

    # domains ---------------------------------------------------------------

    def bound_domain(self):
        """The domain bounds refer to; open scenarios use their largest exhausting set."""
        d = self.sc.domain
        if d.kind != "open":
            return d.build()
        return Annulus(d.inner, d.outer) if d.inner > 0 else Ball(d.outer)

    # cached computations ---------------------------------------------------

    def solve(self):
        if self._solve is None:
            self._solve = solve_first_tone(self.model, self.bound_domain(), self.params,
                                           self.sc.grid, self.sc.tol)
            if self.sc.eigenfunction_path:
                self._solve[1].to_csv(self.sc.eigenfunction_path)
        return self._solve

    def open_tones(self):
        if self._open is None:
            d = self.sc.domain
            self._open = tone_of_open_manifold(self.model, self.params, d.radii, self.sc.grid,
                                               self.sc.tol, inner_radius=d.inner)
        return self._open

    def reference_tone(self) -> float:
        """Smallest computed tone of the bound domain; every lower bound must sit below it."""
        if self.sc.domain.kind == "open":
            return min(self.open_tones().values)
        return self.solve()[0].value

    def window(self):
        lo, hi = self.sc.growth_window
        if hi is None:
            hi = self.model.r_max if math.isfinite(self.model.r_max) else self.sc.domain.outer
        return lo, hi

    def theta(self):
        if self._theta is None:
            lo, hi = self.window()
            self._theta = theta_estimate(self.model, lo, hi, self.sc.growth_samples)
        return self._theta

    def cheeger(self):
        if self._cheeger is None:
            _, hi = self.window()
            self._cheeger = radial_cheeger(self.model, None, hi)
        return self._cheeger

    def ess(self):
        if self._ess is None:
            d = self.sc.domain
            if d.kind != "open":
                raise ValueError("ess_tone needs an open domain (a list of outer radii)")
            self._ess = essential_tone(self.model, self.params, d.inner, d.radii, self.sc.grid,
                                       self.sc.tol, theta=self.theta())
        return self._ess

    def field(self):
        f = self.sc.field_spec
        if f.kind == "gradient_distance":
            return gradient_distance_field()
        if f.kind == "canonical_pq":
            return canonical_ball_field(self.model, self.bound_domain(), self.params)
        if f.kind == "constant":
            return constant_field(f.beta)
        return piecewise_linear_field(f.radii, f.values, "control")


def _check_below(rep, run: _Run, name: str, value: float, citation: str, note: str = ""):
    tone = run.reference_tone()
    rtol = run.sc.tolerances["bound_rtol"]
    ok = value <= tone * (1 + rtol)
    rep.add(name, value, "lower-bound", ok, rtol, citation,
            f"tone={fmt_float(tone)}" + (f" {note}" if note else ""))


def _task_tone(rep, run: _Run):
    if run.sc.domain.kind == "open":
        res = run.open_tones()
        for R, est in zip(res.radii, res.estimates):
            rep.add(f"tone[R={R:g}]", est.value, est.kind.value, None, run.sc.tol, "fundamental-tone",
                    f"residual={fmt_float(est.residual)}")
        rep.add("tone_extrapolated", res.extrapolated, "extrapolated", None, None, "fundamental-tone",
                "fit L + a w^-2 + b w^-3 over the last three widths")
        rep.add("tone_monotone", res.last, "monotonicity", res.monotone, None, "domain-monotonicity",
                "tones non-increasing in R")
        return
    est, _ = run.solve()
    rep.add("tone", est.value, est.kind.value, None, run.sc.tol, "fundamental-tone",
            f"iterations={est.iterations} residual={fmt_float(est.residual)}")


def _task_bound(rep, run: _Run, method: str):
    sc, model, params = run.sc, run.model, run.params
    name = f"bound:{method}"
    if method == "mckean":
        k = model.curvature
        if k is None or not k < 0:
            rep.add(name, None, "not-applicable", None, None, "generalized-mckean",
                    "needs a space form of negative curvature")
            return
        _check_below(rep, run, name, mckean_bound(model.dim, math.sqrt(-k), params), "generalized-mckean")
        return
    if method == "ball_comparison":
        dom = run.bound_domain()
        if not isinstance(dom, Ball):
            rep.add(name, None, "not-applicable", None, None, "ball-comparison", "needs a ball")
            return
        b = ball_comparison_bound(model, dom, params)
        _check_below(rep, run, name, b.value, "ball-comparison",
                     f"inf_r_ratio={fmt_float(b.diagnostics['inf_r_ratio'])}")
        return
    if method in ("c_constant", "thm2"):
        fn = c_constant_bound if method == "c_constant" else thm2_bound
        b = fn(model, run.bound_domain(), params, run.field(), samples=10 * sc.grid)
        cite = "field-quotient-bound" if method == "c_constant" else "field-pointwise-bound"
        if not b.valid:
            kind = "invalid-field" if method == "c_constant" else "vacuous"
            rep.add(name, b.value, kind, None, None, cite, f"{b.field_tag}: {b.reason}")
            return
        _check_below(rep, run, name, b.value, cite, f"field={b.field_tag}")
        return
    if method == "eigenfield":
        est, u = run.solve()
        b = eigenfield_sharpness(model, run.bound_domain(), u, params)
        lam = est.value
        srt, spt = sc.tolerances["sharpness_rtol"], sc.tolerances["spread_rtol"]
        rep.add("eigenfield_bound", b.value, "sharpness", abs(b.value - lam) <= srt * lam, srt,
                "eigenfield-sharpness", f"tone={fmt_float(lam)}")
        spread = b.diagnostics.get("spread", math.inf)
        rep.add("eigenfield_spread", spread, "sharpness", spread <= spt * lam, spt,
                "eigenfield-sharpness", "max - min of the pointwise functional over the interior")
        return
    # optimize_thm1 | optimize_thm2
    tone = run.reference_tone()
    eig = run.solve()[1] if sc.domain.kind != "open" else None
    which = method.split("_")[1]
    try:
        b = optimize_field_family(model, run.bound_domain(), params,
                                  FieldFamily.uniform(run.bound_domain()), which, tone, eig,
                                  sandwich_rtol=sc.tolerances["bound_rtol"])
    except SandwichViolation as exc:
        rep.add(name, None, "lower-bound", False, sc.tolerances["bound_rtol"], "field-optimization",
                str(exc))
        return
    if not b.valid:
        rep.add(name, b.value, "invalid-field", None, None, "field-optimization", b.reason)
        return
    _check_below(rep, run, name, b.value, "field-optimization",
                 f"evaluations={int(b.diagnostics['evaluations'])}")


def _task_growth(rep, run: _Run):
    g = run.theta()
    rep.add("theta", g.theta, "growth-rate", None, None, "volume-growth",
            f"window=[{g.fit_window[0]:g},{g.fit_window[1]:g}] fit={g.method} "
            f"residual={fmt_float(g.fit_residual)} infinite_volume={g.infinite_volume}")
    rep.add("brooks_bound", brooks_bound(g.theta, run.params), "upper-bound", None, None,
            "growth-ceiling", "theta^p / p^p")


def _task_ess(rep, run: _Run):
    e = run.ess()
    rtol = run.sc.tolerances["brooks_rtol"]
    rep.add("ess_tone", e.value, "extrapolated", None, None, "essential-tone",
            f"r0={e.inner_radius:g} R=[{','.join(f'{R:g}' for R in e.radii)}] "
            f"raw={fmt_float(e.raw_extrapolation)}")
    rep.add("ess_tone_monotone", e.values[-1], "monotonicity", e.monotone, None, "domain-monotonicity")
    if e.within_brooks is not None:
        rep.add("ess_tone_le_brooks", e.value, "upper-bound", e.within_brooks, rtol, "growth-ceiling",
                f"brooks={fmt_float(e.brooks)}")
    else:
        rep.add("ess_tone_le_brooks", e.value, "not-applicable", None, None, "growth-ceiling",
                "volume not detected as infinite")


def _task_cheeger(rep, run: _Run):
    c = run.cheeger()
    rep.add("cheeger_h", c.h, "radial-cheeger", None, None, "cheeger-constant",
            f"argmin_r={c.argmin_r:g} tail={fmt_float(c.tail)}")


def _task_certify(rep, run: _Run):
    tone = run.ess().value if run.sc.domain.kind == "open" else None
    o = verify_orderings(run.model, run.params, run.theta(), run.cheeger(), tone,
                         run.sc.tolerances["ordering_tol"])
    for c in o.checks:
        rep.add(f"ordering:{c.name}", None, "ordering", c.passed, run.sc.tolerances["ordering_tol"],
                "cheeger-growth-ordering", c.detail)
    rep.add("ordering_pass", None, "ordering", o.passed, None, "cheeger-growth-ordering",
            f"{sum(c.passed for c in o.checks)}/{len(o.checks)} checks")


def run(scenario: Scenario) -> CertificationReport:
    """Run every task in declaration order; task failures become error records."""
    rep = CertificationReport(scenario.summary())
    r = _Run(scenario)
    for task in scenario.tasks:
        head, _, method = task.partition(":")
        try:
            if head == "tone":
                _task_tone(rep, r)
            elif head == "bound":
                _task_bound(rep, r, method)
            elif head == "growth":
                _task_growth(rep, r)
            elif head == "ess_tone":
                _task_ess(rep, r)
            elif head == "cheeger":
                _task_cheeger(rep, r)
            elif head == "certify":
                _task_certify(rep, r)
        except (FieldError, ValueError, ArithmeticError, RuntimeError) as exc:
            log.error("task %s failed: %s", task, exc)
            rep.add(task, None, "error", None, None, "", f"{type(exc).__name__}: {exc}")
    return rep


def write_report(rep: CertificationReport, scenario: Scenario, path: Optional[str] = None,
                 fmt: Optional[str] = None) -> str:
    text = rep.render(fmt or scenario.output_format)
    target = path or scenario.output_path
    if target:
        with open(target, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text
