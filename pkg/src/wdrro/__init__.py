"""Wasserstein distributionally robust regret optimization for max-affine losses."""

from .core import (
    eval_expected_loss,
    eval_loss,
    extract_worst_case_distribution,
    loss_composite,
    negated_loss_composite,
    regret_composite,
    sample_losses,
    solve_dro,
    solve_erm,
    wasserstein_distance_discrete,
    worst_case_expectation,
)
from .errors import (
    DRROError,
    Infeasible,
    InvalidArgument,
    InvalidCertificate,
    NumericalFailure,
    Unbounded,
    UnsupportedConfiguration,
)
from .kernels import BACKEND
from .newsvendor import (
    NewsvendorInstance,
    h_eval,
    newsvendor_loss,
    regret_newsvendor,
    solve_drro_newsvendor,
    worst_case_pair,
)
from .optimize import OptimizeResult, OracleResult, bisection_1d, cutting_plane, subgradient_descent
from .quadratic import QuadraticLoss, QuadraticSolution, quadratic_drro, quadratic_regret, sensitivity_rhs
from .regret import (
    BilinearProgramState,
    RegretOracle,
    ex_post_regret,
    hill_climb,
    regret_eval,
    regret_lower_bound_bruteforce,
    solve_drro_exact,
)
from .relaxation import RelaxationSolution, relax_regret_eval, relax_regret_primal, solve_drro_relaxed
from .types import (
    CompositeLoss,
    DiscreteDistribution,
    EmpiricalDataset,
    MaxAffineLoss,
    Polyhedron,
    RegretCertificate,
    WassersteinBall,
    WorstCaseSolution,
)

__version__ = "0.1.0"
