"""Volume growth, the growth bound on the essential tone, and the radial Cheeger ratio."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geometry import GeometryError, WarpedModel, log_ball_volume, log_sphere_area
from .solver import DEFAULT_TOL, OpenToneResult, SpectralParams, tone_of_open_manifold

log = logging.getLogger(__name__)

DEFAULT_SAMPLES = 64
ORDERING_TOL = 1e-2
EQUALITY_RTOL = 0.05
EQUALITY_ATOL = 1e-2
BROOKS_RTOL = 1e-2


@dataclass
class GrowthEstimate:
    theta: float
    fit_window: Tuple[float, float]
    fit_residual: float
    method: str = "loglinear"
    infinite_volume: bool = True
    log_volume_tail: float = math.nan


@dataclass
class CheegerEstimate:
    h: float
    argmin_r: float
    tail: float
    radii: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))
    ratios: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))


@dataclass
class EssentialToneEstimate:
    value: float
    inner_radius: float
    radii: List[float]
    values: List[float]
    raw_extrapolation: float
    monotone: bool
    theta: Optional[GrowthEstimate] = None
    brooks: Optional[float] = None

    @property
    def within_brooks(self) -> Optional[bool]:
        """``None`` when the volume is finite and the growth bound does not apply."""
        if self.brooks is None or self.theta is None or not self.theta.infinite_volume:
            return None
        return self.value <= self.brooks * (1 + BROOKS_RTOL)


def _default_window(model: WarpedModel, r_lo, r_hi):
    if r_hi is None:
        if not math.isfinite(model.r_max):
            raise GeometryError("an explicit window is needed on a model without r_max")
        r_hi = model.r_max
    if r_lo is None:
        r_lo = 0.5 * r_hi
    if not 0 < r_lo < r_hi:
        raise GeometryError(f"need 0 < r_lo < r_hi, got [{r_lo}, {r_hi}]")
    if r_hi > model.r_max:
        raise GeometryError(f"window end {r_hi} beyond r_max={model.r_max}")
    return float(r_lo), float(r_hi)


def _volume_is_infinite(radii: np.ndarray, logv: np.ndarray, steps: int = 10) -> bool:
    # a volume still growing by more than 1% per sample step over the last steps
    jumps = np.diff(logv[-(steps + 1):])
    return bool(np.all(jumps > math.log1p(0.01)))


def theta_estimate(model: WarpedModel, r_lo: Optional[float] = None, r_hi: Optional[float] = None,
                   samples: int = DEFAULT_SAMPLES, method: str = "loglinear") -> GrowthEstimate:
    """Exponential growth rate of geodesic-ball volume over a radius window.

    ``loglinear`` fits ``log V = theta r + a log r + b`` so polynomial
    prefactors do not leak into ``theta``; ``slope`` fits ``theta r + b``.
    The estimate is clipped at zero.
    """
    r_lo, r_hi = _default_window(model, r_lo, r_hi)
    r = np.linspace(r_lo, r_hi, int(samples))
    logv = np.array([log_ball_volume(model, x) for x in r])
    if method == "loglinear":
        A = np.column_stack([r, np.log(r), np.ones_like(r)])
    elif method == "slope":
        A = np.column_stack([r, np.ones_like(r)])
    else:
        raise ValueError(f"unknown theta method {method!r}")
    coef, *_ = np.linalg.lstsq(A, logv, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - logv) ** 2)))
    return GrowthEstimate(max(0.0, float(coef[0])), (r_lo, r_hi), resid, method,
                          _volume_is_infinite(r, logv), float(logv[-1]))


def brooks_bound(theta: float, params: SpectralParams) -> float:
    """``theta^p / p^p``, the ceiling on the essential tone of an infinite-volume model."""
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    return (theta / params.p) ** params.p


def radial_cheeger(model: WarpedModel, r_lo: Optional[float] = None, r_hi: Optional[float] = None,
                   samples: int = 512) -> CheegerEstimate:
    """Infimum of ``S(r)/V(r)`` over geodesic spheres with radius in the window."""
    if r_hi is None:
        r_hi = model.r_max
    if not math.isfinite(r_hi):
        raise GeometryError("an explicit r_hi is needed on a model without r_max")
    if r_lo is None:
        r_lo = 0.01 * r_hi
    if not 0 < r_lo < r_hi <= model.r_max:
        raise GeometryError(f"invalid Cheeger window [{r_lo}, {r_hi}]")
    r = np.linspace(r_lo, r_hi, int(samples))
    ratio = np.exp(np.array([log_sphere_area(model, x) - log_ball_volume(model, x) for x in r]))
    i = int(np.argmin(ratio))
    return CheegerEstimate(float(ratio[i]), float(r[i]), float(ratio[-1]), r, ratio)


def essential_tone(model: WarpedModel, params: SpectralParams, r0: float, R_list: Sequence[float],
                   N: int = 2048, tol: float = DEFAULT_TOL,
                   theta: Optional[GrowthEstimate] = None, **kwargs) -> EssentialToneEstimate:
    """Extrapolated tone of ``M`` minus the closed ball ``B_r0``.

    Solves on annuli ``(r0, R)`` (balls when ``r0 == 0``) and extrapolates in
    the width. The growth rate over ``[R_max/2, R_max]`` supplies the
    comparison bound unless given.
    """
    if r0 < 0:
        raise ValueError("r0 must be nonnegative")
    res: OpenToneResult = tone_of_open_manifold(model, params, R_list, N, tol, inner_radius=r0, **kwargs)
    raw = res.extrapolated
    if theta is None:
        theta = theta_estimate(model, 0.5 * res.radii[-1], res.radii[-1])
    return EssentialToneEstimate(max(0.0, raw), r0, list(res.radii), res.values, raw, res.monotone,
                                 theta, brooks_bound(theta.theta, params))


@dataclass
class OrderingCheck:
    name: str
    passed: bool
    detail: str


@dataclass
class OrderingReport:
    checks: List[OrderingCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> List[str]:
        return [f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}" for c in self.checks]


def verify_orderings(model: WarpedModel, params: SpectralParams, theta: GrowthEstimate,
                     cheeger: CheegerEstimate, tone: Optional[float] = None,
                     tol: float = ORDERING_TOL) -> OrderingReport:
    """``h <= theta``; the growth ceiling on ``tone``; the equality case when ``S/V`` settles."""
    checks = [OrderingCheck("cheeger_le_theta", cheeger.h <= theta.theta + tol,
                            f"h={cheeger.h!r} theta={theta.theta!r} tol={tol!r}")]
    if tone is not None:
        ceiling = brooks_bound(theta.theta, params)
        if theta.infinite_volume:
            checks.append(OrderingCheck("tone_le_brooks", tone <= ceiling * (1 + BROOKS_RTOL) + tol,
                                        f"tone={tone!r} bound={ceiling!r}"))
        if abs(cheeger.tail - cheeger.h) <= tol:
            gap = abs(tone - ceiling)
            checks.append(OrderingCheck("equality_case", gap <= EQUALITY_RTOL * ceiling + EQUALITY_ATOL,
                                        f"tone={tone!r} theta^p/p^p={ceiling!r}"))
    return OrderingReport(checks)
