"""Query-metered hard-label black-box adversarial attacks.

The optimizer family minimizes the distance from a correctly classified
point to the decision boundary over search directions, using hard-label
queries only.  See README.md for the CLI and the acceptance suite.
"""

from .attacks import (
    AttackConfig,
    AttackResult,
    AttackTrace,
    PreconditionError,
    compare_single_query_oracle,
    run_attack,
)
from .estimators import (
    DirectionBatch,
    GradientEstimate,
    QpSolution,
    SignObservation,
    elementwise_sign_gradient,
    finite_difference_gradient,
    sample_directions,
    sign_vote_gradient,
    solve_hard_margin_qp,
)
from .geometry import (
    AttackGoal,
    DistanceEval,
    NoCrossingError,
    SearchConfig,
    boundary_distance,
    directional_sign,
    initial_direction,
    is_adversarial,
)
from .harness import (
    BenchmarkResult,
    BenchmarkSpec,
    export_results,
    median_distortion_at,
    run_benchmark,
    success_rate_at,
)
from .oracle import (
    ClippedOracle,
    DatasetFormatError,
    Example,
    HardLabelOracle,
    LinearModel,
    MlpModel,
    ModelFormatError,
    QueryBudgetExceeded,
    QueryCounter,
    linear_min_distortion,
    linear_ray_distance,
    load_dataset,
    load_model,
    save_dataset,
    save_model,
)
from .qp_backend import BACKEND as QP_BACKEND

__version__ = "0.1.0"
