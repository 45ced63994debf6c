"""Best constants and extremal functions for doubly weighted
Hardy-Littlewood-Sobolev (Stein-Weiss) inequalities on R^n, on product
spaces R^(m+n) with partial weights, and on the Heisenberg group."""

__version__ = "0.1.0"

from .geometry import (SpaceSpec, euclidean, product, heisenberg,
                       EUCLIDEAN, PRODUCT, HEISENBERG,
                       FULL_NORM, HORIZONTAL, PARTIAL_FIRST_FACTOR,
                       group_mul, group_inv, identity, homogeneous_norm,
                       left_distance, dilation, weight_base, weight_value)
from .grids import (QuadratureGrid, GridFunction, build_grid, grid_function,
                    weighted_lp_norm, normalize, dilate_resample,
                    half_mass_radius, shell_profile, shell_masses,
                    evaluate_at, DegenerateFunctionError, TruncationError)
from .core import (SteinWeissParams, diagonal_params, solve_q_prime,
                   admissibility_check, AdmissibilityReport, kernel,
                   KernelOperator, riesz_potential, riesz_potential_at,
                   dual_apply_left, dual_apply_right, functional_J,
                   closed_form_extremal, extremal_profile,
                   diagonal_sharp_constant, SharpConstantResult,
                   lieb_loss_upper_bound,
                   EUCLIDEAN_DIAGONAL, HEISENBERG_DIAGONAL)
from .solver import (MaximizerState, SystemState, maximize, ascent_step,
                     renormalize_dilation, solve_system, system_exponents,
                     seed_from_maximizer, default_init, random_init,
                     DegenerateIterateError, DivergenceError)
from .diagnostics import (MeasureSequence, ConcentrationReport,
                          concentration_classify, measure_sequence,
                          renormalize_frames, SymmetryReport, symmetry_check,
                          SawyerWheedenReport, sawyer_wheeden_check,
                          ball_weight_average, synthetic_compactness,
                          synthetic_vanishing, synthetic_dichotomy,
                          COMPACTNESS, VANISHING, DICHOTOMY, INCONCLUSIVE)
from .gridio import (save_grid_function, load_grid_function,
                     save_measure_sequence, load_measure_sequence)
from .presets import reference_grid, reference_parameter_sets, weighted_params
