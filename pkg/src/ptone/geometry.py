"""Rotationally symmetric model manifolds ``dr^2 + f(r)^2 dtheta^2``.

Everything here is a pure function of an immutable :class:`WarpedModel`.
Scalar and array radii are both accepted; outputs follow numpy broadcasting.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import gammaln

ArrayLike = Union[float, np.ndarray]

SIMPSON_RTOL = 1e-10
CLOSED_FORM_XCHECK_RTOL = 1e-8


class GeometryError(ValueError):
    """Radius outside the range where the model (or the formula) is valid."""


class PoleError(GeometryError):
    """The warp vanishes, so ``f'/f`` is undefined."""


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpaceForm:
    k: float

    @property
    def sqrt_abs_k(self) -> float:
        return math.sqrt(abs(self.k))


@dataclass(frozen=True)
class CustomWarp:
    f: Callable[[ArrayLike], ArrayLike]
    f_prime: Callable[[ArrayLike], ArrayLike]
    f_second: Optional[Callable[[ArrayLike], ArrayLike]] = None
    name: str = "custom"


Warp = Union[SpaceForm, CustomWarp]


def unit_sphere_area(n: int) -> float:
    """Area of the unit (n-1)-sphere, ``2 pi^(n/2) / Gamma(n/2)``."""
    return math.exp(math.log(2.0) + 0.5 * n * math.log(math.pi) - gammaln(0.5 * n))


@dataclass(frozen=True)
class WarpedModel:
    dim: int
    warp: Warp
    r_max: float = math.inf
    unit_sphere_area: float = field(init=False)

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise GeometryError(f"dimension must be an integer >= 2, got {self.dim}")
        if isinstance(self.warp, SpaceForm) and self.warp.k > 0:
            antipode = math.pi / self.warp.sqrt_abs_k
            if self.r_max > antipode:
                object.__setattr__(self, "r_max", antipode)
        if not self.r_max > 0:
            raise GeometryError("r_max must be positive")
        object.__setattr__(self, "unit_sphere_area", unit_sphere_area(self.dim))

    # constructors -------------------------------------------------------

    @classmethod
    def space_form(cls, dim: int, k: float, r_max: float = math.inf) -> "WarpedModel":
        return cls(dim, SpaceForm(float(k)), r_max)

    @classmethod
    def euclidean(cls, dim: int) -> "WarpedModel":
        return cls.space_form(dim, 0.0)

    @classmethod
    def hyperbolic(cls, dim: int, c: float = 1.0, r_max: float = math.inf) -> "WarpedModel":
        """H^n(-c^2)."""
        return cls.space_form(dim, -c * c, r_max)

    @classmethod
    def custom(cls, dim, f, f_prime, r_max=math.inf, f_second=None, name="custom"):
        return cls(dim, CustomWarp(f, f_prime, f_second, name), r_max)

    @classmethod
    def from_warp_table(cls, dim: int, path, r_max: Optional[float] = None) -> "WarpedModel":
        """Model whose warp is a monotone cubic through the (r, f) rows of a CSV."""
        rows = []
        with open(Path(path), newline="") as fh:
            for line_no, row in enumerate(csv.reader(fh), start=1):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except (ValueError, IndexError):
                    if not rows:  # header row
                        continue
                    raise GeometryError(f"{path}:{line_no}: expected two numeric columns")
        if len(rows) < 3:
            raise GeometryError(f"{path}: warp table needs at least 3 points")
        r, fv = np.array(rows).T
        if np.any(np.diff(r) <= 0):
            raise GeometryError(f"{path}: r column must be strictly increasing")
        interp = PchipInterpolator(r, fv, extrapolate=False)
        d1 = interp.derivative(1)
        d2 = interp.derivative(2)
        top = float(r[-1]) if r_max is None else min(float(r_max), float(r[-1]))
        return cls.custom(dim, interp, d1, top, f_second=d2, name=f"table:{Path(path).name}")

    # warp evaluation ----------------------------------------------------

    @property
    def is_space_form(self) -> bool:
        return isinstance(self.warp, SpaceForm)

    @property
    def curvature(self) -> Optional[float]:
        return self.warp.k if self.is_space_form else None

    @property
    def ratio_limit(self) -> float:
        """Largest radius (exclusive) where ``f'/f`` may be evaluated."""
        if self.is_space_form and self.warp.k > 0:
            return min(self.r_max, 0.5 * math.pi / self.warp.sqrt_abs_k)
        return self.r_max

    def f(self, r: ArrayLike) -> ArrayLike:
        if not self.is_space_form:
            return self.warp.f(r)
        k, s = self.warp.k, self.warp.sqrt_abs_k
        if k < 0:
            return np.sinh(s * np.asarray(r, dtype=float)) / s
        if k > 0:
            return np.sin(s * np.asarray(r, dtype=float)) / s
        return np.asarray(r, dtype=float) * 1.0

    def f_prime(self, r: ArrayLike) -> ArrayLike:
        if not self.is_space_form:
            return self.warp.f_prime(r)
        k, s = self.warp.k, self.warp.sqrt_abs_k
        if k < 0:
            return np.cosh(s * np.asarray(r, dtype=float))
        if k > 0:
            return np.cos(s * np.asarray(r, dtype=float))
        return np.ones_like(np.asarray(r, dtype=float))

    def log_f(self, r: ArrayLike) -> ArrayLike:
        """``log f(r)``, overflow-safe for hyperbolic warps; ``-inf`` at the pole."""
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            if self.is_space_form and self.warp.k < 0:
                s = self.warp.sqrt_abs_k
                x = s * r
                big = x > 20.0
                xs = np.where(big, 1.0, x)
                out = np.where(big, x + np.log1p(-np.exp(-2.0 * np.where(big, x, 20.0))) - math.log(2.0),
                               np.log(np.sinh(xs)))
                return out - math.log(s)
            return np.log(np.asarray(self.f(r), dtype=float))

    def describe(self) -> str:
        if self.is_space_form:
            return f"space_form(n={self.dim}, k={self.warp.k:g})"
        return f"{self.warp.name}(n={self.dim})"


@dataclass(frozen=True)
class Ball:
    R: float

    def __post_init__(self):
        if not self.R > 0:
            raise GeometryError("ball radius must be positive")

    @property
    def inner(self) -> float:
        return 0.0

    @property
    def outer(self) -> float:
        return self.R

    def describe(self) -> str:
        return f"ball(R={self.R:g})"


@dataclass(frozen=True)
class Annulus:
    r0: float
    r1: float

    def __post_init__(self):
        if not (self.r0 > 0 and self.r1 > self.r0):
            raise GeometryError("annulus needs 0 < r0 < r1")

    @property
    def inner(self) -> float:
        return self.r0

    @property
    def outer(self) -> float:
        return self.r1

    def describe(self) -> str:
        return f"annulus({self.r0:g},{self.r1:g})"


RadialDomain = Union[Ball, Annulus]


def check_domain(model: WarpedModel, domain: RadialDomain) -> None:
    if isinstance(domain, Ball):
        if not domain.R < model.r_max:
            raise GeometryError(f"ball radius {domain.R} must be < r_max={model.r_max}")
    elif domain.r1 > model.r_max:
        raise GeometryError(f"annulus outer radius {domain.r1} exceeds r_max={model.r_max}")


def _check_radius(model: WarpedModel, r: ArrayLike, *, upper: float, allow_zero: bool,
                  closed_upper: bool = True) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    low_bad = (r < 0) if allow_zero else (r <= 0)
    high_bad = (r > upper) if closed_upper else (r >= upper)
    if np.any(low_bad) or np.any(high_bad) or np.any(~np.isfinite(r)):
        raise GeometryError(
            f"radius outside validity range {'[' if allow_zero else '('}0, {upper:g}"
            f"{']' if closed_upper else ')'} for {model.describe()}")
    return r


def warp_ratio(model: WarpedModel, r: ArrayLike) -> ArrayLike:
    """``f'(r)/f(r)``; closed forms on space forms."""
    closed = model.r_max if not (model.is_space_form and model.warp.k > 0) else model.ratio_limit
    rr = _check_radius(model, r, upper=closed, allow_zero=False,
                       closed_upper=not (model.is_space_form and model.warp.k > 0))
    if model.is_space_form:
        k, s = model.warp.k, model.warp.sqrt_abs_k
        if k < 0:
            out = s / np.tanh(s * rr)
        elif k > 0:
            out = s / np.tan(s * rr)
        else:
            out = 1.0 / rr
    else:
        fv = np.asarray(model.f(rr), dtype=float)
        if np.any(fv <= 0):
            raise PoleError(f"warp vanishes inside the requested radii of {model.describe()}")
        out = np.asarray(model.f_prime(rr), dtype=float) / fv
    return out if np.ndim(r) else float(out)


def distance_laplacian(model: WarpedModel, r: ArrayLike) -> ArrayLike:
    """Laplacian of the distance to the pole, ``(n-1) f'/f``."""
    return (model.dim - 1) * warp_ratio(model, r)


def radial_curvature(model: WarpedModel, r: ArrayLike) -> ArrayLike:
    """``-f''/f``; exact ``k`` on space forms."""
    rr = _check_radius(model, r, upper=model.r_max, allow_zero=False,
                       closed_upper=not (model.is_space_form and model.warp.k > 0))
    if model.is_space_form:
        out = np.full_like(rr, model.warp.k)
        return out if np.ndim(r) else float(out)
    fv = np.asarray(model.f(rr), dtype=float)
    if np.any(fv <= 0):
        raise PoleError(f"warp vanishes inside the requested radii of {model.describe()}")
    if model.warp.f_second is not None:
        f2 = np.asarray(model.warp.f_second(rr), dtype=float)
    else:
        h = np.maximum(1e-5, 1e-5 * rr)
        f2 = (np.asarray(model.f_prime(rr + h)) - np.asarray(model.f_prime(rr - h))) / (2 * h)
    out = -f2 / fv
    return out if np.ndim(r) else float(out)


def sphere_area(model: WarpedModel, r: ArrayLike) -> ArrayLike:
    """Area of the distance sphere, ``omega_{n-1} f(r)^(n-1)``."""
    rr = _check_radius(model, r, upper=model.r_max, allow_zero=True)
    fv = np.asarray(model.f(rr), dtype=float)
    out = model.unit_sphere_area * np.abs(fv) ** (model.dim - 1)
    return out if np.ndim(r) else float(out)


def log_sphere_area(model: WarpedModel, r: ArrayLike) -> ArrayLike:
    rr = _check_radius(model, r, upper=model.r_max, allow_zero=True)
    out = math.log(model.unit_sphere_area) + (model.dim - 1) * model.log_f(rr)
    return out if np.ndim(r) else float(out)


def adaptive_simpson(fun: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                     rtol: float = SIMPSON_RTOL, max_depth: int = 48) -> float:
    """Composite Simpson with adaptive bisection, vectorised over each sweep.

    Intervals are refined level by level; an interval is accepted once the
    Richardson-corrected local error is below its share of ``rtol * |I|``.
    """
    if b == a:
        return 0.0
    # seed with a uniform composite rule so oscillation-free integrands settle fast
    edges = np.linspace(a, b, 17)
    lo, hi = edges[:-1], edges[1:]
    total_accepted = 0.0
    estimate = None
    for _ in range(max_depth):
        mid = 0.5 * (lo + hi)
        q1, q3 = 0.5 * (lo + mid), 0.5 * (mid + hi)
        pts = np.concatenate([lo, q1, mid, q3, hi])
        vals = np.asarray(fun(pts), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise QuadratureError("integrand is not finite on the interval")
        m = lo.size
        flo, fq1, fmid, fq3, fhi = (vals[i * m:(i + 1) * m] for i in range(5))
        width = hi - lo
        coarse = width / 6.0 * (flo + 4 * fmid + fhi)
        fine = width / 12.0 * (flo + 4 * fq1 + 2 * fmid + 4 * fq3 + fhi)
        err = np.abs(fine - coarse) / 15.0
        if estimate is None:
            estimate = abs(float(np.sum(fine)))
        scale = max(estimate, abs(total_accepted + float(np.sum(fine))))
        budget = rtol * scale * width / (b - a)
        ok = err <= budget
        total_accepted += float(np.sum(fine[ok] + (fine[ok] - coarse[ok]) / 15.0))
        if np.all(ok):
            return total_accepted
        lo = np.concatenate([lo[~ok], mid[~ok]])
        hi = np.concatenate([mid[~ok], hi[~ok]])
        estimate = scale
    raise QuadratureError(f"adaptive Simpson did not reach rtol={rtol} on [{a}, {b}]")


def _closed_form_volume(model: WarpedModel, r: float) -> Optional[float]:
    """Ball volume from the recursive antiderivative of sin^m / sinh^m."""
    if not model.is_space_form:
        return None
    k, s, m = model.warp.k, model.warp.sqrt_abs_k, model.dim - 1
    if k == 0:
        return model.unit_sphere_area * r ** model.dim / model.dim
    x = s * r
    if k < 0:
        if x > 700:
            return None
        sh, ch = math.sinh(x), math.cosh(x)
        acc = [x, ch - 1.0]
        for j in range(2, m + 1):
            acc.append(sh ** (j - 1) * ch / j - (j - 1) / j * acc[j - 2])
    else:
        sn, cs = math.sin(x), math.cos(x)
        acc = [x, 1.0 - cs]
        for j in range(2, m + 1):
            acc.append(-sn ** (j - 1) * cs / j + (j - 1) / j * acc[j - 2])
    return model.unit_sphere_area * acc[m] / s ** model.dim


def ball_volume(model: WarpedModel, r: float) -> float:
    """Volume of the geodesic ball: integral of the sphere area from 0 to r."""
    r = float(_check_radius(model, r, upper=model.r_max, allow_zero=True))
    if r == 0:
        return 0.0
    value = adaptive_simpson(lambda t: sphere_area(model, t), 0.0, r)
    # the recursion cancels catastrophically for small curvature radii; only cross-check above that
    if model.is_space_form and (model.warp.k == 0 or model.warp.sqrt_abs_k * r > 0.1):
        closed = _closed_form_volume(model, r)
        if closed is not None and abs(value - closed) > CLOSED_FORM_XCHECK_RTOL * abs(closed):
            raise QuadratureError(
                f"quadrature {value!r} disagrees with closed form {closed!r} at r={r}")
    return value


def log_ball_volume(model: WarpedModel, r: float) -> float:
    """``log V(r)`` without forming ``V(r)``: the integrand is rescaled by ``S(r)``."""
    r = float(_check_radius(model, r, upper=model.r_max, allow_zero=True))
    if r == 0:
        return -math.inf
    top = log_sphere_area(model, r)
    if not np.isfinite(top):
        # warp vanishes at r (closed model): fall back to direct quadrature
        return math.log(ball_volume(model, r))

    def scaled(t):
        with np.errstate(divide="ignore"):
            return np.exp(log_sphere_area(model, t) - top)

    return top + math.log(adaptive_simpson(scaled, 0.0, r))
