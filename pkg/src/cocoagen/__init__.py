"""Generalization error of CoCoA for column-partitioned linear regression."""

from .numerics import NumericalFailure, RngStream, pseudoinverse, sample_gaussian_matrix, solve_regularized
from .problem import PartitionSpec, ProblemInstance, generate_instance, make_partition, slice_block
from .solver import (
    SolverConfig,
    SolverState,
    SolveTrace,
    centralized_ls,
    closed_form_step,
    cocoa_run,
    cocoa_step,
    local_update,
    stacked_block_pinv,
)
from .harness import (
    SweepConfig,
    SweepRow,
    ValidationReport,
    run_centralized_baseline,
    run_convergence_sweep,
    run_first_iteration_experiment,
)
from .theory import (
    INF,
    ExtendedReal,
    advise_partition,
    alpha_coefficient,
    gamma_coefficient,
    predict_first_iteration_error,
    recurse_error,
    wishart_pinv_coefficient,
)

__version__ = "0.1.0"
