"""Numerical toolkit for rough stochastic differential equations.

Solvers for equations driven jointly by a Brownian motion and a deterministic
rough path, their Jacobian flows and Malliavin matrices, bracket hierarchies
for hypoellipticity checks, and Monte-Carlo diagnostics.
"""

__version__ = "0.1.0"

from .errors import InvalidArgument, NumericFailure, SolverDiverged
from .grid import (NoiseSpec, SampledPath, TimeGrid, dyadic_approximation, empirical_lp_norm,
                   estimate_holder_norm, fbm_covariance, generate_brownian, generate_fbm,
                   generate_smooth, interpolate_path, read_path_csv, weighted_increment_norm,
                   weighted_process_norm, write_path_csv)
from .roughpath import (RoughPath, RoughnessReport, canonical_lift, chen_compose, chen_product,
                        geometricity_defect, ito_lift, rough_distance, scan_roughness)
from .fields import (Bracket, BracketField, Combination, Transport, ConstantField, Field, LinearField,
                     RidgeField, VectorFieldSet, build_field, hormander_demo, lie_bracket,
                     validate_derivatives)
from .rsde import (LinearCoefficientPaths, LinearSolutionPath, SolutionPath, davie_kernel,
                   davie_residual_scan, ito_integral_path, picard_solve_linear, solve_linear_rsde,
                   solve_rsde, solve_sde_reference)
from .malliavin import (FlowPair, MalliavinReport, cameron_martin_check, malliavin_derivative,
                        malliavin_derivative_direct, malliavin_matrix, malliavin_report,
                        reduced_malliavin_matrix, solve_flows)
from .hormander import HormanderReport, bracket_dynamics_residual, build_hierarchy
from .diagnostics import (DensityEstimate, EnsembleResult, eigen_tail, gubinelli_uniqueness_gap,
                          kde_density, norris_inequality_check, run_ensemble, splitmix64,
                          trial_seed, INDISTINGUISHABLE)
from .scenario import Scenario, ScenarioError, parse_scenario, parse_scenario_text
