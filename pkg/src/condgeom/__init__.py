"""Condition-metric geometry: conformal metrics, geodesics and self-convexity checks."""

from .errors import *  # noqa: F401,F403
from .linalg_core import (MatrixPoint, d2_sigma_n_sq, d_sigma_n, hess_sigma_n_sq_matrix,
                          rho_sphere_derivatives, singular_vector_derivative, smallest_singular)
from .conformal import (ConformalMetric, ConstraintSet, GeodesicPath, condition_length,
                        integrate_constrained_geodesic, integrate_geodesic, shoot_geodesic)
from .selfconvexity import (RhoBundle, convex_form, critical_point_diagnostic,
                            log_convexity_along_path, rho_form, selfconvex_form)
from .nearest_point import dK, distance_metric, projective_distance, rho_identities

__version__ = "0.1.0"
