"""Feasibility operators on spheres: projections, reflections, Douglas-Rachford
iteration, Lipschitz bounds, pointwise Kirszbraun extension and smoothing."""

from .errors import (BoundUndefined, BoundViolation, DimensionMismatch, EmptyIntersection,
                     EmptyRegion, FeasopsError, InfeasibleExtension, MultiValuedProjection,
                     PreconditionError, SampleConsistencyError)
from .ergodic import (ErgodicReport, SmoothingPlan, plan_violations, run_pipeline_dr,
                      run_pipeline_family, run_pipeline_vn, smooth, verify_decay)
from .kirszbraun import (ExtensionMap, LipschitzSample, MinimaxSettings, build_F, build_F1,
                         extend, solve_minimax)
from .lipschitz import (dr_bound, empirical_lipschitz, family_bound, family_bound_composed,
                        projection_pair_bound, sphere_projection_bound,
                        sphere_reflection_bound)
from .operators import (DR, VN, FamilyParams, StopReason, dr_step, family_step, is_fixed_point,
                        iterate, vn_step)
from .sets import (AffineSubspace, Box, ClosedBall, Halfspace, Line, ScaledSphere, UnitSphere,
                   contains, distance, project, reflect)
from .space import Ball, SamplerConfig, basis, diam_estimate, inner, norm, point

__version__ = "0.1.0"
