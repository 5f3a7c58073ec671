"""Competitive mirror descent for constrained two-player games."""

from .errors import (
    CMDError,
    ConfigError,
    ContractViolation,
    DomainError,
    InputError,
    NumericalBreakdown,
    RangeError,
    RunError,
    StepError,
)
from .games import (
    Block,
    BlockVector,
    ConeSpec,
    ConstrainedProblem,
    Constraint,
    MultiplierLayout,
    PROBLEM_IDS,
    TwoPlayerGame,
    check_first_order_oracles,
    constrained_qp_solution,
    lagrangian_transform,
    make_bilinear_positive,
    make_constrained_qp,
    make_empty_threats,
    make_quadratic_game,
    make_robust_regression,
    polar_cone,
)
from .harness import RunConfig, build_problem, load_config, parse_config, run_experiment, run_sweep
from .linop import LinearOperator, SolveReport, congruence, schur_operator, solve_cg, solve_gmres
from .potentials import (
    BlockPotential,
    BregmanPotential,
    BurgEntropy,
    QuadraticPotential,
    ShannonEntropy,
    make_potential,
)
from .sampling import gaussian
from .solvers import (
    METHODS,
    IterateState,
    LocalGameSolution,
    SolverConfig,
    alternating_best_response,
    cmd_step,
    cmw_step,
    initial_state,
    md_step,
    mirror_descent_step,
    pcgd_step,
    px_step,
    pxm_step,
    retract,
    run_solver,
    solve_local_game,
)
from .trace import RunTrace, TraceRecord, read_trace, write_trace

__version__ = "0.1.0"
