"""First eigenvalue of the p-Laplacian on rotationally symmetric models, with
vector-field lower bounds, volume growth and Cheeger estimates."""

from .geometry import (Annulus, Ball, GeometryError, WarpedModel, ball_volume, distance_laplacian,
                       log_ball_volume, radial_curvature, sphere_area, warp_ratio)
from .solver import (RadialFunction, RadialGrid, SpectralParams, ToneEstimate, ToneKind,
                     brute_force_grid, brute_force_tone, build_grid, rayleigh_quotient, solve_first_tone,
                     tone_of_open_manifold)
from .fields import (BoundMethod, BoundReport, RadialField, YoungParams, ball_comparison_bound,
                     c_constant_bound, canonical_ball_field, eigenfunction_field, field_divergence,
                     mckean_bound, optimize_field_family, thm2_bound, young_psi_max)
from .growth import (brooks_bound, essential_tone, radial_cheeger, theta_estimate,
                     verify_orderings)

__version__ = "0.1.0"
