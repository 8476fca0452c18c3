"""Data-driven LQR, Kalman filtering and LQG from trajectory data."""

from .closedloop import (RecursiveLqgController, StackedFilterController, StaticLqgController,
                         draw_noise, evaluate_lqg_cost, simulate_closed_loop)
from .config import bundled_config, load_config, validate_config
from .errors import (AssumptionViolation, DDLQGError, DegenerateError, DivergenceError,
                     IllPosedCostError, InstabilityError, InsufficientDataError, NumericalError,
                     ShapeError, ValidationError)
from .harness import (ConvergenceReport, ExperimentConfig, emit_report, fit_rate,
                      lemma_check_gaussian_product, lemma_check_singular_values,
                      run_convergence)
from .kalman import DataFilterBank, EstimationWindow, estimate_state, filter_bank_from_data
from .lqg import (ClosedLoopDataset, collect_closed_loop_dataset, lqg_gain_from_data,
                  run_dd_lqg_episode, run_static_lqg)
from .lqr import build_synthesis, lqr_gain_from_data, lqr_trajectories
from .oracle import (finite_horizon_lqr, kalman_oracle, lqg_static_gain, lqr_gain, solve_dare,
                     steady_state_kalman)
from .system import (CostWeights, ExperimentInputSpec, LinearSystem, TrajectoryDataset,
                     generate_open_loop_dataset, load_dataset, save_dataset, simulate_noise_free,
                     simulate_trajectory)

__version__ = "0.1.0"
