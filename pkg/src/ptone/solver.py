"""Discrete radial p-Dirichlet problem and its first eigenpair.

Cells are uniform on ``[a, b]``; ``u`` lives at cell centres, gradients at
interfaces.  Energy and mass are

    E(u) = h * sum_j S(s_j) |Du_j|^p,      M(u) = h * sum_i S(r_i) |u_i|^p

with ``Du_j = (u_j - u_{j-1}) / h`` and a ghost value 0 beyond a Dirichlet
end.  At the pole of a ball the interface weight is ``S(0) = 0``, which is the
radial no-flux condition.
"""

from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from .geometry import Annulus, Ball, RadialDomain, WarpedModel, check_domain, sphere_area

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_RESIDUAL_TOL = 1e-6
STALL_LIMIT = 50
MAX_OUTER = 500


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectralParams:
    p: float

    def __post_init__(self):
        if not (self.p > 1 and math.isfinite(self.p)):
            raise ValueError(f"p must exceed 1 (got {self.p})")
        q = self.q
        if abs(1.0 / self.p + 1.0 / q - 1.0) > 1e-12:
            raise ValueError("conjugate exponent check failed")

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Uniform cell-centred grid carrying the sphere-area weights."""

    lower: float
    upper: float
    cell_count: int
    center_weights: np.ndarray
    interface_weights: np.ndarray
    dirichlet_lower: bool = True
    dirichlet_upper: bool = True
    label: str = ""
    centers: np.ndarray = field(init=False, repr=False)
    interfaces: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.cell_count < 2:
            raise ValueError(f"grid needs at least 2 cells (got {self.cell_count})")
        s = np.linspace(self.lower, self.upper, self.cell_count + 1)
        object.__setattr__(self, "interfaces", s)
        object.__setattr__(self, "centers", 0.5 * (s[:-1] + s[1:]))
        for name in ("center_weights", "interface_weights"):
            w = np.asarray(getattr(self, name), dtype=float)
            w.setflags(write=False)
            object.__setattr__(self, name, w)
        if self.center_weights.shape != (self.cell_count,):
            raise ValueError("center_weights has the wrong length")
        if self.interface_weights.shape != (self.cell_count + 1,):
            raise ValueError("interface_weights has the wrong length")
        if np.any(self.center_weights < 0) or np.any(self.interface_weights < 0):
            raise ValueError("weights must be nonnegative")
        if np.any(self.interface_weights[1:-1] <= 0):
            raise ValueError("interior interface weights must be positive")

    @property
    def spacing(self) -> float:
        return (self.upper - self.lower) / self.cell_count

    @classmethod
    def from_weight(cls, weight: Callable[[np.ndarray], np.ndarray], lower: float, upper: float,
                    N: int, dirichlet_lower=True, dirichlet_upper=True, label="") -> "RadialGrid":
        s = np.linspace(lower, upper, N + 1)
        c = 0.5 * (s[:-1] + s[1:])
        return cls(lower, upper, N, np.asarray(weight(c), dtype=float) * np.ones(N),
                   np.asarray(weight(s), dtype=float) * np.ones(N + 1),
                   dirichlet_lower, dirichlet_upper, label)

    @classmethod
    def flat(cls, lower: float, upper: float, N: int, dirichlet_lower=True,
             dirichlet_upper=True) -> "RadialGrid":
        """Unit weight: the plain interval problem."""
        return cls.from_weight(lambda r: np.ones_like(r), lower, upper, N,
                               dirichlet_lower, dirichlet_upper, f"interval({lower:g},{upper:g})")

    def boundary_distance(self) -> np.ndarray:
        """Distance of each centre to the nearest Dirichlet end (inf if none)."""
        d = np.full(self.cell_count, np.inf)
        if self.dirichlet_lower:
            d = np.minimum(d, self.centers - self.lower)
        if self.dirichlet_upper:
            d = np.minimum(d, self.upper - self.centers)
        return d


def build_grid(model: WarpedModel, domain: RadialDomain, N: int) -> RadialGrid:
    if int(N) != N or N < 2:
        raise ValueError(f"N must be an integer >= 2 (got {N})")
    check_domain(model, domain)
    grid = RadialGrid.from_weight(lambda r: sphere_area(model, r), domain.inner, domain.outer, int(N),
                                  dirichlet_lower=isinstance(domain, Annulus), dirichlet_upper=True,
                                  label=f"{model.describe()} {domain.describe()}")
    return grid


@dataclass(eq=False)
class RadialFunction:
    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.cell_count,):
            raise ValueError("values must have one entry per cell")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.grid.centers, self.values]), delimiter=",",
                   header="r,u", comments="", fmt="%.17g")


class ToneKind(str, enum.Enum):
    VARIATIONAL_UPPER = "variational-upper"
    CONVERGED = "converged-eigenvalue"
    RIGOROUS_LOWER = "rigorous-lower"


@dataclass
class ToneEstimate:
    value: float
    kind: ToneKind
    p: float
    domain: str
    iterations: int = 0
    residual: float = math.nan

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("tone estimates are nonnegative")


# -- discrete functionals ------------------------------------------------------

def _gradients(grid: RadialGrid, u: np.ndarray) -> np.ndarray:
    """Interface differences ``Du_j``, j = 0..N, with ghost/no-flux ends."""
    lo = 0.0 if grid.dirichlet_lower else u[0]
    hi = 0.0 if grid.dirichlet_upper else u[-1]
    return np.diff(np.concatenate(([lo], u, [hi]))) / grid.spacing


def _signed_power(x: np.ndarray, e: float) -> np.ndarray:
    return np.sign(x) * np.abs(x) ** e


def p_energy(u: RadialFunction, params: SpectralParams) -> float:
    g = u.grid
    D = _gradients(g, u.values)
    return float(g.spacing * np.sum(g.interface_weights * np.abs(D) ** params.p))


def p_mass(u: RadialFunction, params: SpectralParams) -> float:
    g = u.grid
    return float(g.spacing * np.sum(g.center_weights * np.abs(u.values) ** params.p))


def rayleigh_quotient(u: RadialFunction, params: SpectralParams) -> float:
    m = p_mass(u, params)
    if m == 0:
        raise ZeroDivisionError("zero p-mass: u vanishes on the grid")
    return p_energy(u, params) / m


def discrete_p_laplacian(grid: RadialGrid, values: np.ndarray, p: float) -> np.ndarray:
    """Cellwise ``-div(|u'|^(p-2) u')`` in weighted flux form."""
    D = _gradients(grid, values)
    flux = grid.interface_weights * _signed_power(D, p - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return (flux[:-1] - flux[1:]) / (grid.spacing * grid.center_weights)


def eigen_residual(u: RadialFunction, lam: float, params: SpectralParams) -> float:
    """Max-norm of ``Delta_p u - lam |u|^(p-2) u`` with ``u`` scaled to sup-norm one."""
    scale = np.max(np.abs(u.values))
    v = u.values / scale
    r = discrete_p_laplacian(u.grid, v, params.p) - lam * _signed_power(v, params.p - 1.0)
    r = r[u.grid.center_weights > 0]
    return float(np.max(np.abs(r)))


# -- inner convex solve ---------------------------------------------------------

def _inverse_flux(y: np.ndarray, p: float) -> np.ndarray:
    """Inverse of ``x -> |x|^(p-2) x``."""
    return np.sign(y) * np.abs(y) ** (1.0 / (p - 1.0))


def _solve_inner(grid: RadialGrid, p: float, u: np.ndarray) -> np.ndarray:
    """Exact minimiser of ``(1/p) E(v) - h * sum S_i |u_i|^(p-2) u_i v_i``.

    The stationarity equations say the weighted flux ``S_j |Dv_j|^(p-2) Dv_j``
    drops by the cell load across each cell, so the flux is a cumulative sum
    of the loads plus one constant.  A no-flux end fixes the constant; with
    two Dirichlet ends it is the root of a monotone scalar equation that makes
    the interface differences sum to zero.  ``v`` then follows by summing the
    differences from a Dirichlet end.
    """
    h = grid.spacing
    b = h * grid.center_weights * _signed_power(u, p - 1.0)
    B = np.concatenate(([0.0], np.cumsum(b)))  # flux_j = flux_0 - B_j
    w = grid.interface_weights

    def differences(f0):
        flux = f0 - B
        with np.errstate(divide="ignore", invalid="ignore"):
            D = _inverse_flux(flux / w, p)
        # no-flux ends carry no difference
        if not grid.dirichlet_lower:
            D[0] = 0.0
        if not grid.dirichlet_upper:
            D[-1] = 0.0
        return D

    if grid.dirichlet_lower and grid.dirichlet_upper:
        lo, hi = 0.0, float(B[-1])
        f0 = brentq(lambda f: float(np.sum(differences(f))), lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                    maxiter=200)
        D = differences(f0)
        # sum inward from both ends and meet at the steepest interface, where the
        # closure rounding perturbs the flux least
        left = h * np.cumsum(D[:-1])
        right = -h * np.cumsum(D[:0:-1])[::-1]
        cut = int(np.argmax(np.abs(D)))
        return np.concatenate((left[:cut], right[cut:]))
    if grid.dirichlet_upper:
        D = differences(0.0)
        return -h * np.cumsum(D[:0:-1])[::-1]
    if grid.dirichlet_lower:
        D = differences(float(B[-1]))
        return h * np.cumsum(D[:-1])
    raise SolverError("the inner problem needs at least one Dirichlet end")


def _newton_polish(grid: RadialGrid, params: SpectralParams, u: np.ndarray, lam: float,
                   steps: int = 8) -> Optional[Tuple[np.ndarray, float, float]]:
    """Newton on ``A(u) - lam B(u) = 0`` bordered by a linear normalisation.

    Only used once inverse iteration has the quotient converged but its
    linear rate leaves the residual above tolerance.  Returns ``None`` when
    a step fails or the result is not a better positive eigenpair.
    """
    p, h, N = params.p, grid.spacing, grid.cell_count
    mass_w = h * grid.center_weights
    c = mass_w * _signed_power(u, p - 1.0)
    target = float(np.dot(c, u))
    x, mu = u.copy(), lam
    res0 = eigen_residual(RadialFunction(grid, u), lam, params)
    for _ in range(steps):
        D = _gradients(grid, x)
        # regularised slope keeps the Jacobian finite where D vanishes and p < 2
        eps = 1e-12 * max(float(np.max(np.abs(D))), 1e-300)
        k = grid.interface_weights * (p - 1.0) * (D * D + eps * eps) ** (0.5 * (p - 2.0)) / h
        flux = grid.interface_weights * _signed_power(D, p - 1.0)
        Bx = mass_w * _signed_power(x, p - 1.0)
        F = flux[:-1] - flux[1:] - mu * Bx
        diag = k[:-1] + k[1:] - mu * (p - 1.0) * mass_w * np.abs(x) ** (p - 2.0)
        # the bordered matrix stays well conditioned while J alone turns singular at mu = lambda
        J = sparse.diags([-k[1:-1], diag, -k[1:-1]], [-1, 0, 1])
        K = sparse.bmat([[J, -Bx[:, None]], [c[None, :], None]], format="csc")
        rhs = np.append(-F, target - float(np.dot(c, x)))
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore", MatrixRankWarning)
            delta = spsolve(K, rhs)
        if not np.all(np.isfinite(delta)):
            return None
        x, mu = x + delta[:-1], mu + delta[-1]
        if np.any(x <= 0):
            return None
    x = _normalize(grid, x, p)
    q = rayleigh_quotient(RadialFunction(grid, x), params)
    res = eigen_residual(RadialFunction(grid, x), q, params)
    if res >= res0 or abs(q - lam) > 1e-6 * lam:
        return None
    return x, q, res


# -- first eigenpair ---------------------------------------------------------

def _normalize(grid, v, p):
    m = grid.spacing * np.sum(grid.center_weights * np.abs(v) ** p)
    return v / m ** (1.0 / p)


def initial_guess(grid: RadialGrid) -> np.ndarray:
    d = grid.boundary_distance()
    if np.all(np.isinf(d)):
        return np.ones(grid.cell_count)
    return d


def solve_grid(grid: RadialGrid, params: SpectralParams, tol: float = DEFAULT_TOL,
               residual_tol: float = DEFAULT_RESIDUAL_TOL, max_iter: int = MAX_OUTER,
               u0: Optional[np.ndarray] = None) -> Tuple[ToneEstimate, RadialFunction]:
    """Inverse iteration for the first eigenpair on a prepared grid.

    Each step minimises ``(1/p) E(v) - <|u|^(p-2) u, v>`` and rescales the
    minimiser to unit p-mass.  The Rayleigh quotient is non-increasing along
    the iteration; the loop stops on a relative quotient change below ``tol``
    together with a residual below ``residual_tol * lambda``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    p = params.p
    u = _normalize(grid, np.abs(initial_guess(grid) if u0 is None else np.asarray(u0, float)), p)
    lam = rayleigh_quotient(RadialFunction(grid, u), params)
    if lam == 0:
        # constants on an all-Neumann grid
        return ToneEstimate(0.0, ToneKind.CONVERGED, p, grid.label, 0, 0.0), RadialFunction(grid, u)
    best = (lam, u)
    residual = best_residual = math.inf
    next_polish = 0
    stuck = 0
    for it in range(1, max_iter + 1):
        v = np.abs(_solve_inner(grid, p, u))
        u_new = _normalize(grid, v, p)
        lam_new = rayleigh_quotient(RadialFunction(grid, u_new), params)
        # exact inner solves cannot raise the quotient; a rise is rounding and the
        # eigenvector may still be improving, so the step is kept
        change = abs(lam - lam_new) / lam_new
        u, lam = u_new, lam_new
        best = (lam, u)
        if change >= tol:
            continue
        residual = eigen_residual(RadialFunction(grid, u), lam, params)
        if residual > residual_tol * lam and it >= next_polish:
            polished = _newton_polish(grid, params, u, lam)
            next_polish = it + 25
            if polished is not None and polished[1] <= lam * (1 + 1e-12):
                u, lam, residual = polished
                best = (lam, u)
        if residual <= residual_tol * lam:
            return (ToneEstimate(lam, ToneKind.CONVERGED, p, grid.label, it, residual),
                    RadialFunction(grid, u))
        # give up once the residual has stopped shrinking
        if residual < 0.99 * best_residual:
            best_residual, stuck = residual, 0
        else:
            stuck += 1
            if stuck >= STALL_LIMIT:
                break
    lam, u = best
    residual = eigen_residual(RadialFunction(grid, u), lam, params)
    log.warning("no convergence on %s after %d outer iterations (residual %.3g)",
                grid.label, it, residual)
    return (ToneEstimate(lam, ToneKind.VARIATIONAL_UPPER, p, grid.label, it, residual),
            RadialFunction(grid, u))


def solve_first_tone(model: WarpedModel, domain: RadialDomain, params: SpectralParams,
                     N: int = 2048, tol: float = DEFAULT_TOL,
                     **kwargs) -> Tuple[ToneEstimate, RadialFunction]:
    return solve_grid(build_grid(model, domain, N), params, tol, **kwargs)


def brute_force_tone(model: WarpedModel, domain: RadialDomain, params: SpectralParams, N: int,
                     samples: int = 20000, seed: int = 0) -> float:
    """Brute-force minimum of the discrete quotient on ``build_grid(model, domain, N)``."""
    if not 2 <= N <= 6:
        raise ValueError(f"brute force is limited to 2 <= N <= 6 cells (got {N})")
    return brute_force_grid(build_grid(model, domain, N), params, samples, seed)


def brute_force_grid(grid: RadialGrid, params: SpectralParams, samples: int = 20000,
                     seed: int = 0) -> float:
    """Independent minimiser of the discrete quotient for tiny grids.

    Random nonnegative draws followed by a coordinate pattern search with a
    halving step.  Never used by the solver itself.
    """
    N = grid.cell_count
    if not 2 <= N <= 6:
        raise ValueError(f"brute force is limited to 2 <= N <= 6 cells (got {N})")
    p, h = params.p, grid.spacing
    rng = np.random.default_rng(seed)

    def quotient(U):
        U = np.atleast_2d(U)
        lo = np.zeros((U.shape[0], 1)) if grid.dirichlet_lower else U[:, :1]
        hi = np.zeros((U.shape[0], 1)) if grid.dirichlet_upper else U[:, -1:]
        D = np.diff(np.hstack([lo, U, hi]), axis=1) / h
        num = np.sum(grid.interface_weights * np.abs(D) ** p, axis=1)
        den = np.sum(grid.center_weights * np.abs(U) ** p, axis=1)
        return num / den

    draws = rng.random((samples, N))
    vals = quotient(draws)
    best_idx = np.argsort(vals)[:5]
    best = math.inf
    for idx in best_idx:
        x = draws[idx].copy()
        fx = float(quotient(x)[0])
        step = 0.25 * np.max(x)
        while step > 1e-13:
            improved = False
            for i in range(N):
                for sgn in (1.0, -1.0):
                    y = x.copy()
                    y[i] += sgn * step
                    fy = float(quotient(y)[0])
                    if fy < fx:
                        x, fx, improved = y, fy, True
                        break
            if not improved:
                step *= 0.5
        best = min(best, fx)
    return best


# -- open manifolds -----------------------------------------------------------

def richardson_limit(widths: Sequence[float], values: Sequence[float]) -> float:
    """Limit of ``values`` as the width grows, assuming ``L + a w^-2 + b w^-3``.

    Uses the last three entries (fewer gives a lower-order fit).
    """
    w = np.asarray(widths, dtype=float)[-3:]
    y = np.asarray(values, dtype=float)[-3:]
    if w.size == 1:
        return float(y[0])
    cols = [np.ones_like(w), w ** -2.0, w ** -3.0][: w.size]
    coef = np.linalg.solve(np.column_stack(cols), y)
    return float(coef[0])


@dataclass
class OpenToneResult:
    radii: List[float]
    estimates: List[ToneEstimate]
    inner_radius: float = 0.0

    @property
    def values(self) -> List[float]:
        return [e.value for e in self.estimates]

    @property
    def last(self) -> float:
        return self.estimates[-1].value

    @property
    def extrapolated(self) -> float:
        return richardson_limit([R - self.inner_radius for R in self.radii], self.values)

    @property
    def monotone(self) -> bool:
        v = self.values
        return all(b <= a * (1 + 1e-12) for a, b in zip(v, v[1:]))


def tone_of_open_manifold(model: WarpedModel, params: SpectralParams, R_list: Sequence[float],
                          N_per_R: int = 2048, tol: float = DEFAULT_TOL,
                          inner_radius: float = 0.0, **kwargs) -> OpenToneResult:
    """Tones of the exhausting balls (or annuli ``(inner_radius, R)``)."""
    R_list = [float(R) for R in R_list]
    if any(b <= a for a, b in zip(R_list, R_list[1:])):
        raise ValueError("R_list must be strictly increasing")
    if inner_radius and not all(R > inner_radius for R in R_list):
        raise ValueError("every outer radius must exceed the inner radius")
    out = []
    for R in R_list:
        domain = Annulus(inner_radius, R) if inner_radius > 0 else Ball(R)
        est, _ = solve_first_tone(model, domain, params, N_per_R, tol, **kwargs)
        out.append(est)
    return OpenToneResult(R_list, out, inner_radius)
