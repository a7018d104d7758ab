"""Numerical checks of posterior limit laws for log-concave models on convex sets.

The pipeline for one dataset is

    model + constraint set -> optimum and regime -> cone geometry
    -> rescaled posterior -> limit law -> total variation distance

and :func:`run_experiment` sweeps it over sample sizes and seeds.
"""
from .errors import (CatalogError, CertificateUnavailable, ConfigError, DegenerateGeometryError,
                     DomainError, EnvelopeError, GeometryError, GridError, LcbvmError,
                     NumericalError, RegimeError, SolverError)
from .geometry import (Ball, Box, ConeFrame, ConstraintSet, Ellipsoid, HalfSpace, OrthantShift,
                       SecondOrderSets, active_set, build_frame, c2_membership, c2n_membership,
                       cone_alpha, constraint_set_from_config, face_set, facet_set, split_spaces,
                       tangent_membership)
from .harness import (ExperimentConfig, emit_outputs, load_config, parse_config, read_rows,
                      regime_report, run_experiment, summarize)
from .limits import LawKind, LimitLaw, build_limit, law_grid, log_density, normalize, sample
from .models import (Dataset, builtin_models, derive_seed, empirical_risk, get_model, make_rng,
                     subgradient_summary)
from .posterior import (Regime, RegimeLabel, RescaledPosterior, build_posterior, classify_regime,
                        decompose, g_n_misspec, g_n_wellspec, map_estimate, mle_residuals,
                        properness_certificate, rescaled_log_density, solve_theta_star)
from .quadrature import CoordDensity, QuadratureGrid, log_integral
from .tv import TvResult, compare, misspec_gap, posterior_density, sup_gn_gap, tv_distance

__version__ = "0.1.0"
