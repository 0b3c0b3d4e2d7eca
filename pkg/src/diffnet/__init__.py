"""diffnet: decentralized stochastic-optimization simulator and analysis kit.

Simulates diffusion, exact diffusion (both forms), gradient tracking and a
centralized-SGD baseline over configurable network topologies under streaming
data, and evaluates the matching steady-state theory: the first-order MSD
expression, order-form steady-state comparators, step-size ranges, and the
regime classification of which method wins where.
"""

from .algorithms import (
    METHODS,
    AlgorithmConfig,
    NetworkState,
    RunResult,
    init_state,
    make_streams,
    run,
    run_batch,
    step_centralized_sgd,
    step_diffusion,
    step_exact_diffusion,
    step_exact_diffusion_pd,
    step_gradient_tracking,
)
from .errors import (
    ConfigError,
    ConstructionError,
    ConvergenceError,
    DiffnetError,
    DivergenceError,
    InvalidInputError,
    NotPsdError,
    NumericError,
    SingularMatrixError,
)
from .metrics import MsdTrajectory, SteadyState, aggregate, steady_state, write_csv
from .problems import (
    LogisticAgentModel,
    LogisticProblem,
    LsAgentModel,
    LsProblem,
    ProblemInstance,
    compute_bias,
    estimate_noise_covariance,
    logistic_stochastic_gradient,
    ls_global_minimizer,
    ls_stochastic_gradient,
    make_logistic_problem,
    make_ls_problem,
)
from .runner import ExperimentConfig, ExperimentResult, execute, load_config, sweep
from .theory import (
    Regime,
    TheoryReport,
    build_report,
    classify_regime,
    decompose_error_operator,
    diffusion_decomposition_constants,
    steady_state_bounds,
    stepsize_ranges,
    theoretical_msd,
)
from .topology import (
    CombinationMatrix,
    Graph,
    build_graph,
    cycle_gap_analytic,
    metropolis_weights,
    spectral_gap_scan,
    uniform_weights,
)

__version__ = "0.1.0"
