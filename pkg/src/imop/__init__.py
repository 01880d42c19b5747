"""Inverse multiobjective optimization: infer objective or constraint
parameters of a convex multiobjective program from noisy observations of
efficient decisions, recover the preference distribution over objectives, and
test identifiability of the underlying problem."""

from . import estimators, fixtures, harness, identifiability, kernels, loss, model, reform, solver
from .estimators import (FitConfig, brute_force_oracle, estimate_admm,
                         estimate_clustering, inner_fit, kkt_init)
from .harness import (ExperimentConfig, NoiseModel, estimation_error,
                      generate_observations, intro_demo, run_experiment,
                      weight_histogram)
from .identifiability import hausdorff_semi, is_efficient_under, test_identifiability
from .loss import (Assignment, ObservationSet, assign, cluster_decomposition,
                   empirical_risk, generalization_bound, monte_carlo_risk)
from .model import DmpInstance, ParamSpace, ParamVector, TrafficNetwork, apply_params
from .model import build_mlp, build_mqp, build_traffic
from .reform import (build_single_level_mlp, build_single_level_mqp_rhs,
                     build_test_problem, check_feasible, export_model)
from .solver import (EfficientFront, ForwardSolution, grid_weights, kkt_residuals,
                     pareto_filter, random_weights, sample_efficient_front, solve_wp)

__version__ = "0.1.0"
