"""Self-repellent random walk driven stochastic approximation on graphs,
with independently computed closed-form asymptotic covariances."""

from .covariance import (CovarianceReport, JacobianBlocks, UBlocks,
                         covariance_report, jacobian_j, loewner_lt,
                         lyapunov_solve, matrix_u, u_theta, v_case2,
                         v_theta_case1, v_theta_case3, v_x)
from .engine import (BatchResult, StepSchedule, TrajectoryRecord, record_grid,
                     run_sa_srrw, run_sa_srrw_batch, schedule_eval,
                     weighted_measure)
from .errors import (NumericalError, ParseError, TokenwalkError,
                     ValidationError)
from .graphs import (Graph, complete_graph, cycle_graph, degrees, erdos_renyi,
                     graph_from_edges, graph_info, largest_connected_component,
                     load_edge_list, path_graph, random_connected_graph,
                     serialize_edge_list, star_graph)
from .harness import (FitResult, MseSeries, ReplicaResult,
                      empirical_scaled_covariance, fit_inverse_square,
                      fit_r_squared, read_points_csv, resolve_threads,
                      run_replicas, write_fit_csv, write_mse_csv,
                      write_theory_csv)
from .kernels import (ReversibleKernel, SrrwProcessState, build_mhrw,
                      kernel_to_csv, lazy_transform, pi_jacobian, srrw_kernel_matrix,
                      srrw_row, srrw_stationary, srrw_step, uniform_target)
from .objectives import (Dataset, DriftField, Equilibrium, Objective,
                         assign_to_nodes, logistic_objective, make_drift,
                         make_quadratic_toy, ncreg_objective, parse_libsvm,
                         quadratic_objective, solve_theta_star)
from .rng import make_rng
from .spectral import SpectralDecomposition, decompose
from .verify import (CHECK_NAMES, SLOW_CHECK_NAMES, CheckResult,
                     make_synthetic_dataset_text, run_checks)

__version__ = "0.1.0"
