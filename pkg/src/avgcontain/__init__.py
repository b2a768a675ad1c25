"""Average-consensus containment control on directed graphs.

Followers run push-sum so that they agree on the mean of stationary leaders'
states; the follower-follower weights can be designed for fastest
convergence centrally, by distributed ADMM, or by weight balancing.
"""

from .admm import AdmmConfig, AdmmReport, AdmmResult, run_admm
from .containment import (
    ConvergenceReport,
    PushSumState,
    Trajectory,
    WeightMatrix,
    containment_fixed_point,
    convergence_rate,
    empirical_rate,
    laplacian_protocol_matrices,
    leaders_average,
    max_stepsize,
    push_sum_round,
    run_laplacian_containment,
    run_push_sum,
)
from .estimators import AdmmWeights, BalancedWeights, CentralizedWeights
from .exceptions import (
    ConvergenceError,
    InfeasiblePatternError,
    InvalidWeightsError,
    LocalityError,
    MissingMessageError,
    NodeWeightError,
    SingularMatrixError,
)
from .graph import (
    DiGraph,
    Partition,
    diameter,
    follower_subgraph,
    is_strongly_connected,
    laplacian_blocks,
    leader_follower_edges,
    partition_agents,
    validate_assumptions,
)
from .harness import RunReport, ScenarioConfig, run_pipeline, synchronous_step
from .io import ScenarioError, load_scenario
from .matrixops import solve_linear, spectral_norm, spectral_radius
from .weights import (
    SparsityPattern,
    check_doubly_stochastic,
    norm_subgradient,
    objective,
    project_affine,
    solve_centralized,
    wba_weights,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceReport",
    "PushSumState",
    "Trajectory",
    "WeightMatrix",
    "containment_fixed_point",
    "convergence_rate",
    "empirical_rate",
    "laplacian_protocol_matrices",
    "leaders_average",
    "max_stepsize",
    "push_sum_round",
    "run_laplacian_containment",
    "run_push_sum",
    "ConvergenceError",
    "InfeasiblePatternError",
    "InvalidWeightsError",
    "LocalityError",
    "MissingMessageError",
    "NodeWeightError",
    "SingularMatrixError",
    "DiGraph",
    "Partition",
    "diameter",
    "follower_subgraph",
    "is_strongly_connected",
    "laplacian_blocks",
    "leader_follower_edges",
    "partition_agents",
    "validate_assumptions",
    "SparsityPattern",
    "check_doubly_stochastic",
    "norm_subgradient",
    "objective",
    "project_affine",
    "solve_centralized",
    "wba_weights",
    "AdmmConfig",
    "AdmmReport",
    "AdmmResult",
    "run_admm",
    "AdmmWeights",
    "BalancedWeights",
    "CentralizedWeights",
    "RunReport",
    "ScenarioConfig",
    "run_pipeline",
    "ScenarioError",
    "load_scenario",
    "synchronous_step",
    "solve_linear",
    "spectral_norm",
    "spectral_radius",
]
