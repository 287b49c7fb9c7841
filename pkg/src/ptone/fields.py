"""Radial vector fields ``X = a(r) d/dr`` and the lower bounds they certify.

Two functionals of a field are used:

* the quotient bound ``(inf div X / sup |X|)^p / p^p`` (needs ``inf div X > 0``),
* the pointwise bound ``inf ((1 - p)|X|^q + div X)`` (no sign condition).

Infima and suprema are taken over a dense set of sample radii; the report
records how many.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .geometry import Ball, GeometryError, RadialDomain, WarpedModel, distance_laplacian, warp_ratio
from .solver import RadialFunction, RadialGrid, SpectralParams, _gradients, _signed_power

SAMPLES_PER_CELL = 10
DEFAULT_SAMPLES = SAMPLES_PER_CELL * 2048
FIELD_CLAMP = 1e6


class FieldError(ValueError):
    pass


class SandwichViolation(AssertionError):
    """A lower bound came out above the computed tone."""


class BoundMethod(str, enum.Enum):
    C_CONSTANT = "c_constant"
    THM2_FIELD = "thm2_field"
    MCKEAN = "mckean"
    BALL_COMPARISON = "ball_comparison"
    EIGENFIELD_SHARPNESS = "eigenfield_sharpness"


@dataclass(frozen=True)
class RadialField:
    """``X = a(r) d/dr``; ``|X| = |a|`` because ``d/dr`` is a unit field.

    Fields built from a solve also carry the grid and their interface
    samples; bounds for those use the flux-form divergence of the grid.
    """

    a: Callable[[np.ndarray], np.ndarray]
    a_prime: Optional[Callable[[np.ndarray], np.ndarray]] = None
    breakpoints: Tuple[float, ...] = ()
    tag: str = "field"
    grid: Optional[RadialGrid] = None
    interface_values: Optional[np.ndarray] = None

    def norm(self, r):
        return np.abs(self.a(np.asarray(r, dtype=float)))

    def scaled(self, t: float) -> "RadialField":
        d = None if self.a_prime is None else (lambda r, f=self.a_prime: t * f(r))
        return RadialField(lambda r, f=self.a: t * f(r), d, self.breakpoints, f"{t:g}*{self.tag}")


def constant_field(beta: float) -> RadialField:
    return RadialField(lambda r: np.full_like(np.asarray(r, dtype=float), beta),
                       lambda r: np.zeros_like(np.asarray(r, dtype=float)), (), f"constant:{beta:g}")


def gradient_distance_field() -> RadialField:
    """The unit radial field, gradient of the distance to the pole."""
    f = constant_field(1.0)
    return RadialField(f.a, f.a_prime, (), "gradient_distance")


def canonical_ball_field(model: WarpedModel, domain: RadialDomain, params: SpectralParams) -> RadialField:
    """``|grad f|^(p-2) grad f`` for ``f = r^q``, which is ``q^(p-1) r d/dr``."""
    if not isinstance(domain, Ball):
        raise FieldError("the canonical field is defined on geodesic balls only")
    k = params.q ** (params.p - 1.0)
    return RadialField(lambda r: k * np.asarray(r, dtype=float),
                       lambda r: np.full_like(np.asarray(r, dtype=float), k), (), "canonical_pq")


def piecewise_linear_field(radii: Sequence[float], values: Sequence[float],
                           tag: str = "piecewise_linear") -> RadialField:
    """Linear interpolation through control points; constant beyond the ends."""
    x = np.asarray(radii, dtype=float)
    y = np.clip(np.asarray(values, dtype=float), -FIELD_CLAMP, FIELD_CLAMP)
    if x.ndim != 1 or x.size != y.size or x.size < 1:
        raise FieldError("radii and values must be matching 1-d sequences")
    if x.size == 1:
        return constant_field(float(y[0]))
    if np.any(np.diff(x) <= 0):
        raise FieldError("control radii must be strictly increasing")
    slopes = np.diff(y) / np.diff(x)

    def a(r):
        return np.interp(r, x, y)

    def a_prime(r):
        r = np.asarray(r, dtype=float)
        # end points take the slope of the adjacent segment
        idx = np.clip(np.searchsorted(x, r, side="right") - 1, 0, slopes.size - 1)
        out = slopes[idx]
        out = np.where((r < x[0]) | (r > x[-1]), 0.0, out)
        return out

    return RadialField(a, a_prime, tuple(float(v) for v in x[1:-1]), tag)


def _near_breakpoint(r: np.ndarray, breakpoints: Sequence[float], tol: float = 1e-12) -> np.ndarray:
    bp = np.sort(np.asarray(breakpoints, dtype=float))
    if bp.size == 0:
        return np.zeros(r.shape, dtype=bool)
    i = np.clip(np.searchsorted(bp, r), 1, bp.size) if bp.size > 1 else np.ones(r.shape, dtype=int)
    left = np.abs(r - bp[i - 1])
    right = np.abs(r - bp[np.minimum(i, bp.size - 1)])
    return np.minimum(left, right) < tol


def field_divergence(model: WarpedModel, fld: RadialField, r) -> np.ndarray:
    """``a'(r) + a(r) (n-1) f'/f``: divergence of a radial field on the model."""
    rr = np.asarray(r, dtype=float)
    if fld.breakpoints and np.any(_near_breakpoint(rr, fld.breakpoints)):
        raise FieldError("divergence requested at a breakpoint of the field")
    if fld.a_prime is not None:
        da = np.asarray(fld.a_prime(rr), dtype=float)
    else:
        h = 1e-6 * np.maximum(1.0, rr)
        da = (np.asarray(fld.a(rr + h)) - np.asarray(fld.a(rr - h))) / (2 * h)
    out = da + np.asarray(fld.a(rr), dtype=float) * distance_laplacian(model, rr)
    return out if np.ndim(r) else float(out)


@dataclass
class BoundReport:
    method: BoundMethod
    value: float
    field_tag: str = ""
    valid: bool = True
    reason: str = ""
    diagnostics: Dict[str, float] = field(default_factory=dict)


def sample_radii(domain: RadialDomain, count: int = DEFAULT_SAMPLES,
                 window: Optional[Tuple[float, float]] = None,
                 breakpoints: Sequence[float] = ()) -> np.ndarray:
    """Cell midpoints of a fine partition plus the closed outer end (and inner end of annuli)."""
    lo, hi = (domain.inner, domain.outer) if window is None else window
    edges = np.linspace(lo, hi, int(count) + 1)
    pts = 0.5 * (edges[:-1] + edges[1:])
    ends = [hi] + ([lo] if lo > 0 else [])
    pts = np.concatenate([pts, ends])
    if len(breakpoints):
        pts = pts[~_near_breakpoint(pts, breakpoints)]
    return np.sort(pts)


def grid_field_terms(fld: RadialField, window: Optional[Tuple[float, float]] = None):
    """Cell centres, ``|a|`` there and the flux-form divergence ``(S a)' / S``.

    The flux form is the weak divergence tested against cell indicators, so it
    stays exact at the pole cell where pointwise formulas degrade.
    """
    g, a = fld.grid, fld.interface_values
    sw, sc = g.interface_weights, g.center_weights
    div = (sw[1:] * a[1:] - sw[:-1] * a[:-1]) / (g.spacing * sc)
    nrm = 0.5 * np.abs(a[1:] + a[:-1])
    r = g.centers
    if window is not None:
        keep = (r >= window[0]) & (r <= window[1])
        r, div, nrm = r[keep], div[keep], nrm[keep]
    return r, div, nrm


def _div_and_norm(model, domain, fld, samples, window):
    if fld.grid is not None:
        return grid_field_terms(fld, window)
    r = sample_radii(domain, samples, window, fld.breakpoints)
    with np.errstate(all="ignore"):
        div = field_divergence(model, fld, r)
        nrm = fld.norm(r)
    return r, div, nrm


def c_constant_bound(model: WarpedModel, domain: RadialDomain, params: SpectralParams,
                     fld: RadialField, samples: int = DEFAULT_SAMPLES,
                     window: Optional[Tuple[float, float]] = None) -> BoundReport:
    """``(inf div X / sup |X|)^p / p^p``, flagged invalid unless ``inf div X > 0``."""
    r, div, nrm = _div_and_norm(model, domain, fld, samples, window)
    i, j = int(np.nanargmin(div)), int(np.nanargmax(nrm))
    A, S = float(div[i]), float(nrm[j])
    diag = {"inf_div": A, "inf_at": float(r[i]), "sup_norm": S, "sup_at": float(r[j]),
            "samples": float(r.size)}
    rep = BoundReport(BoundMethod.C_CONSTANT, 0.0, fld.tag, True, "", diag)
    if not np.all(np.isfinite(nrm)) or S >= FIELD_CLAMP:
        rep.valid, rep.reason = False, "unbounded field"
    elif not A > 0 or np.any(np.isnan(div)):
        rep.valid, rep.reason = False, "inf div <= 0: bound is trivial"
    elif S == 0:
        rep.valid, rep.reason = False, "zero field"
    else:
        rep.value = (A / S) ** params.p / params.p ** params.p
    return rep


def thm2_functional(model, fld, params, r) -> np.ndarray:
    """Pointwise ``(1 - p)|X|^q + div X``."""
    return (1.0 - params.p) * fld.norm(r) ** params.q + field_divergence(model, fld, r)


def thm2_bound(model: WarpedModel, domain: RadialDomain, params: SpectralParams,
               fld: RadialField, samples: int = DEFAULT_SAMPLES,
               window: Optional[Tuple[float, float]] = None) -> BoundReport:
    r, div, nrm = _div_and_norm(model, domain, fld, samples, window)
    with np.errstate(all="ignore"):
        vals = (1.0 - params.p) * nrm ** params.q + div
    diag = {"samples": float(r.size)}
    if np.any(np.isnan(vals)) or np.any(vals == -np.inf):
        return BoundReport(BoundMethod.THM2_FIELD, -math.inf, fld.tag, False,
                           "functional unbounded below: vacuous bound", diag)
    i = int(np.argmin(vals))
    diag.update(inf_at=float(r[i]), max_value=float(np.max(vals)))
    return BoundReport(BoundMethod.THM2_FIELD, float(vals[i]), fld.tag, True, "", diag)


# -- the epsilon-Young optimisation -------------------------------------------

@dataclass(frozen=True)
class YoungParams:
    A: float
    B: float
    p: float

    def __post_init__(self):
        if not self.A >= 0:
            raise ValueError("A must be nonnegative")
        if not self.B > 0:
            raise ValueError("B must be positive")
        if not self.p > 1:
            raise ValueError("p must exceed 1")

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)


def young_psi(eps, yp: YoungParams):
    """``eps^p (A - B eps^q)``."""
    eps = np.asarray(eps, dtype=float)
    return eps ** yp.p * (yp.A - yp.B * eps ** yp.q)


def young_psi_max(yp: YoungParams) -> Tuple[float, float]:
    """Closed-form maximiser and maximum of :func:`young_psi` over ``eps >= 0``."""
    p, q, A, B = yp.p, yp.q, yp.A, yp.B
    eps_star = (p * A / ((p + q) * B)) ** (1.0 / q)
    psi_max = q * p ** (p / q) * A ** p / ((p + q) ** p * B ** (p / q))
    return eps_star, psi_max


def thm1_via_young(inf_div: float, sup_norm: float, params: SpectralParams) -> float:
    """The quotient bound reached through ``max_eps psi / p^(p-1)``."""
    yp = YoungParams(inf_div, sup_norm ** params.q / params.q, params.p)
    return young_psi_max(yp)[1] / params.p ** (params.p - 1.0)


# -- closed-form bounds ------------------------------------------------------------

def mckean_bound(n: int, c: float, params: SpectralParams) -> float:
    """``((n-1) c / p)^p`` for curvature at most ``-c^2``."""
    if n < 2 or not c > 0:
        raise ValueError("need n >= 2 and c > 0")
    return ((n - 1) * c / params.p) ** params.p


def ball_comparison_bound(model: WarpedModel, domain: Ball, params: SpectralParams,
                          samples: int = DEFAULT_SAMPLES) -> BoundReport:
    """``((1 + (n-1) inf r f'/f) / (p R))^p`` on the ball ``B_R``.

    ``r f'(r)/f(r) -> 1`` at the pole, which enters the infimum as a limit.
    """
    if not isinstance(domain, Ball):
        raise FieldError("ball comparison needs a ball")
    R = domain.R
    if not R < model.ratio_limit or (model.ratio_limit == R):
        raise GeometryError(f"R={R} outside the range where f'/f is valid (< {model.ratio_limit:g})")
    r = sample_radii(domain, samples)
    prof = r * warp_ratio(model, r)
    i = int(np.argmin(prof))
    inf_rm = min(float(prof[i]), 1.0)
    at = float(r[i]) if prof[i] < 1.0 else 0.0
    value = ((1.0 + (model.dim - 1) * inf_rm) / (params.p * R)) ** params.p
    return BoundReport(BoundMethod.BALL_COMPARISON, value, "canonical_pq", True, "",
                       {"inf_r_ratio": inf_rm, "inf_at": at, "samples": float(r.size)})


# -- the eigenfunction field -----------------------------------------------------

def eigenfunction_field(u: RadialFunction, params: SpectralParams) -> RadialField:
    """``-|u'|^(p-2) u' / (|u|^(p-2) u)`` sampled at the grid interfaces.

    ``u'`` is the interface difference and ``u`` the adjacent-cell average
    (ghost zero at Dirichlet ends). Pointwise evaluation interpolates linearly;
    bounds use the grid carrier.
    """
    g, v = u.grid, u.values
    if np.any(v <= 0):
        if np.all(v < 0):
            v = -v
        else:
            raise FieldError("eigenfunction field needs a one-signed function")
    p = params.p
    D = _gradients(g, v)
    lo = 0.0 if g.dirichlet_lower else v[0]
    hi = 0.0 if g.dirichlet_upper else v[-1]
    avg = 0.5 * (np.concatenate(([lo], v)) + np.concatenate((v, [hi])))
    with np.errstate(divide="ignore", invalid="ignore"):
        a = -_signed_power(D, p - 1.0) / _signed_power(avg, p - 1.0)
    a = np.where(np.isfinite(a), a, np.sign(np.nan_to_num(a)) * FIELD_CLAMP)
    pl = piecewise_linear_field(g.interfaces, a, "eigenfunction")
    return RadialField(pl.a, pl.a_prime, pl.breakpoints, "eigenfunction", g, a)


def interior_window(grid, margin_fraction: float = 0.1) -> Tuple[float, float]:
    """Radii kept away from Dirichlet ends, where the eigenfunction field blows up."""
    width = grid.upper - grid.lower
    m = max(margin_fraction * width, 2 * grid.spacing)
    lo = grid.lower + (m if grid.dirichlet_lower else 0.0)
    hi = grid.upper - (m if grid.dirichlet_upper else 0.0)
    return lo, hi


def eigenfield_sharpness(model: WarpedModel, domain: RadialDomain, u: RadialFunction,
                         params: SpectralParams, margin_fraction: float = 0.1) -> BoundReport:
    """Pointwise bound of the eigenfunction field on the interior window.

    ``value`` is the infimum; ``spread`` (max - min) measures how far the
    functional is from the constant it equals in the continuum.
    """
    fld = eigenfunction_field(u, params)
    window = interior_window(u.grid, margin_fraction)
    rep = thm2_bound(model, domain, params, fld, window=window)
    rep.method = BoundMethod.EIGENFIELD_SHARPNESS
    if rep.valid:
        rep.diagnostics["spread"] = rep.diagnostics["max_value"] - rep.value
    rep.diagnostics.update(window_lo=window[0], window_hi=window[1])
    return rep


# -- field optimisation -------------------------------------------------------------

@dataclass
class FieldFamily:
    """Piecewise-linear ``a(r)`` on fixed control radii; ``fixed`` freezes the coefficients."""

    control_radii: np.ndarray
    coefficients: np.ndarray
    fixed: bool = False

    def __post_init__(self):
        self.control_radii = np.asarray(self.control_radii, dtype=float)
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.size > 64:
            raise FieldError("field family dimension is limited to 64")

    @classmethod
    def uniform(cls, domain: RadialDomain, count: int = 16, values=None) -> "FieldFamily":
        radii = np.linspace(domain.inner, domain.outer, count)
        vals = np.zeros(count) if values is None else np.broadcast_to(values, (count,)).copy()
        return cls(radii, vals)

    def field(self, coefficients=None) -> RadialField:
        c = self.coefficients if coefficients is None else coefficients
        return piecewise_linear_field(self.control_radii, c)


def _golden_max(fun, lo, hi, iters=80):
    g = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = fun(d)
    return (c, fc) if fc >= fd else (d, fd)


def optimize_field_family(model: WarpedModel, domain: RadialDomain, params: SpectralParams,
                          family: Optional[FieldFamily] = None, method: str = "thm2",
                          tone: Optional[float] = None, eigenfunction: Optional[RadialFunction] = None,
                          budget: int = 2000, samples: int = 2048,
                          sandwich_rtol: float = 1e-6) -> BoundReport:
    """Maximise a field bound over piecewise-linear radial fields.

    Seeds (canonical field on balls, the unit radial field, the eigenfunction
    field when given) are first rescaled by a golden-section search, then the
    best one is refined by coordinate pattern search until ``budget``
    evaluations are spent or the step underflows.
    """
    if method not in ("thm1", "thm2"):
        raise ValueError("method must be 'thm1' or 'thm2'")
    fam = family or FieldFamily.uniform(domain)
    x = fam.control_radii
    evals = 0

    def objective(c):
        nonlocal evals
        evals += 1
        fld = piecewise_linear_field(x, c)
        if method == "thm1":
            rep = c_constant_bound(model, domain, params, fld, samples)
            return rep.value if rep.valid else 0.0
        rep = thm2_bound(model, domain, params, fld, samples)
        return rep.value if rep.valid else -math.inf

    best_c, best_v = fam.coefficients.copy(), objective(fam.coefficients)
    if not fam.fixed:
        seeds = [fam.coefficients.copy(), np.ones_like(x)]
        if isinstance(domain, Ball):
            seeds.append(canonical_ball_field(model, domain, params).a(x))
        if eigenfunction is not None:
            seeds.append(np.clip(eigenfunction_field(eigenfunction, params).a(x), -FIELD_CLAMP, FIELD_CLAMP))
        for s in seeds:
            if not np.any(s):
                continue
            if method == "thm1":
                cand, val = s, objective(s)  # the quotient bound is scale invariant
            else:
                top = 4.0 * max(1.0, (tone or 1.0)) / max(np.max(np.abs(s)), 1e-12)
                t, val = _golden_max(lambda t: objective(t * s), 0.0, top, iters=40)
                cand = t * s
            if val > best_v:
                best_c, best_v = cand.copy(), val
        step = 0.25 * max(float(np.max(np.abs(best_c))), 1e-3)
        while evals < budget and step > 1e-9:
            improved = False
            for i in range(best_c.size):
                for sgn in (1.0, -1.0):
                    if evals >= budget:
                        break
                    trial = best_c.copy()
                    trial[i] += sgn * step
                    v = objective(trial)
                    if v > best_v:
                        best_c, best_v, improved = trial, v, True
                        break
            if not improved:
                step *= 0.5
    fld = piecewise_linear_field(x, best_c, "optimized")
    rep = (c_constant_bound if method == "thm1" else thm2_bound)(model, domain, params, fld, samples)
    rep.diagnostics.update(evaluations=float(evals), budget_exhausted=float(evals >= budget))
    rep.field_tag = "optimized:" + ",".join(f"{v:.6g}" for v in best_c)
    if tone is not None and rep.valid and rep.value > tone * (1 + sandwich_rtol):
        raise SandwichViolation(f"optimized bound {rep.value!r} exceeds tone {tone!r}")
    return rep
