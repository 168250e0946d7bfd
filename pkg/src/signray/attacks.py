"""Optimizer loops over the boundary-distance objective.

All variants share one skeleton: find a starting direction, then repeat
(sample a batch of probe directions, turn them into a gradient estimate,
line-search the step size, re-measure the distance).  They differ only in
how the batch becomes an estimate:

  signopt         sign-vote average of single-query signs
  svmopt          minimum-norm vector consistent with the signs (QP)
  rgf             finite differences, one full distance search per probe
  zo_signsgd_sqo  elementwise-sign summands from single-query signs
  zo_signsgd_bs   elementwise-sign summands from full finite differences

Every oracle call is metered; runs stop at the query budget and report the
best iterate seen, never crash.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .estimators import (
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
    SearchConfig,
    bisect_boundary,
    boundary_distance,
    directional_sign,
    initial_direction,
    point_along,
    unit_vector,
)
from .oracle import Example, HardLabelOracle, QueryBudgetExceeded

ESTIMATORS = ("signopt", "svmopt", "rgf", "zo_signsgd_sqo", "zo_signsgd_bs")

# Stop after this many consecutive iterations whose relative improvement
# falls below the threshold; saves budget once the run has plateaued.
EARLY_STOP_REL = 1e-4
EARLY_STOP_ITERS = 10


class PreconditionError(ValueError):
    """The example does not satisfy the attack's starting condition."""


@dataclass(frozen=True)
class AttackConfig:
    """All optimizer hyperparameters for one attack run."""

    estimator: str = "signopt"
    Q: int = 200
    epsilon: float = 1e-3
    epsilon_relative: bool = True
    eta0: float = 1.0
    max_iters: int = 1000
    query_budget: int = 20000
    seed: int = 0
    goal: AttackGoal = AttackGoal()
    search: SearchConfig = SearchConfig()
    final_rel_tol: float = 1e-5
    num_init_directions: int = 100
    direction_dist: str = "gaussian"
    line_search: bool = True
    ls_shrink: float = 0.5
    ls_max_trials: int = 15

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.Q < 1:
            raise ValueError("Q must be at least 1")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.eta0 <= 0.0:
            raise ValueError("eta0 must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.query_budget < 1:
            raise ValueError("query_budget must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if not 0.0 < self.final_rel_tol < 1.0:
            raise ValueError("final_rel_tol must be in (0, 1)")
        if self.num_init_directions < 1:
            raise ValueError("need at least one initialization direction")
        if self.direction_dist not in ("gaussian", "orthonormal"):
            raise ValueError(f"unknown direction distribution {self.direction_dist!r}")
        if not 0.0 < self.ls_shrink < 1.0:
            raise ValueError("ls_shrink must be in (0, 1)")
        if self.ls_max_trials < 1:
            raise ValueError("ls_max_trials must be at least 1")


class TracePoint(NamedTuple):
    queries: int
    best_g: float


@dataclass
class AttackTrace:
    """Best distortion so far, recorded after every distance evaluation."""

    records: list[TracePoint] = field(default_factory=list)

    def append(self, queries: int, best_g: float):
        if self.records:
            last = self.records[-1]
            if queries < last.queries:
                raise ValueError("cumulative query count went backwards")
            best_g = min(best_g, last.best_g)
            if queries == last.queries:
                self.records[-1] = TracePoint(queries, best_g)
                return
        self.records.append(TracePoint(queries, best_g))

    def best_at(self, query_limit: int) -> float:
        """Best distortion achieved within the first `query_limit` queries."""
        import bisect

        idx = bisect.bisect_right(self.records, query_limit, key=lambda r: r.queries)
        if idx == 0:
            return math.inf
        return self.records[idx - 1].best_g

    @property
    def final_best(self) -> float:
        return self.records[-1].best_g if self.records else math.inf

    @property
    def is_monotone(self) -> bool:
        return all(
            b.best_g <= a.best_g and b.queries > a.queries
            for a, b in zip(self.records, self.records[1:])
        )


@dataclass
class AttackResult:
    x_adv: np.ndarray | None
    distortion: float
    queries: int
    success: bool
    trace: AttackTrace
    direction: np.ndarray | None


class LineSearchStep(NamedTuple):
    eta: float
    direction: np.ndarray | None
    g_value: float
    queries: int


def line_search_step(
    evaluator,
    direction: np.ndarray,
    grad: np.ndarray,
    g_current: float,
    eta_start: float,
    shrink: float = 0.5,
    max_trials: int = 15,
) -> LineSearchStep:
    """Greedy step-size search along -grad.

    Doubles eta from eta_start while each trial keeps improving; if the
    very first trial fails, shrinks eta instead until a trial beats the
    current value or the trial budget runs out (then eta=0, nothing moved).
    Candidate directions are normalized before evaluation.
    """
    queries = 0
    eta = eta_start
    best = LineSearchStep(0.0, None, g_current, 0)
    improved_at_start = False
    for _ in range(max_trials):
        cand = unit_vector(direction - eta * grad)
        ev = evaluator(cand)
        queries += ev.queries_used
        if ev.found and ev.g_value < best.g_value:
            best = LineSearchStep(eta, cand, ev.g_value, 0)
            improved_at_start = True
            eta *= 2.0
        else:
            break
    if not improved_at_start:
        eta = eta_start
        for _ in range(max_trials):
            eta *= shrink
            cand = unit_vector(direction - eta * grad)
            ev = evaluator(cand)
            queries += ev.queries_used
            if ev.found and ev.g_value < g_current:
                best = LineSearchStep(eta, cand, ev.g_value, 0)
                break
    return LineSearchStep(best.eta, best.direction, best.g_value, queries)


def _collect_signs(oracle, example, goal, direction, dist, batch, smoothing):
    return [
        SignObservation(u, directional_sign(oracle, example, goal, direction, dist, u, smoothing))
        for u in batch
    ]


def _estimate(config, oracle, example, goal, evaluator, direction, dist, batch, smoothing):
    if config.estimator in ("signopt", "svmopt", "zo_signsgd_sqo"):
        obs = _collect_signs(oracle, example, goal, direction, dist, batch, smoothing)
        if config.estimator == "signopt":
            return sign_vote_gradient(obs).g_hat
        if config.estimator == "zo_signsgd_sqo":
            return elementwise_sign_gradient("with_sqo", obs=obs).g_hat
        solution = solve_hard_margin_qp(obs)
        if solution.feasible:
            return solution.z
        return sign_vote_gradient(obs).g_hat
    if config.estimator == "rgf":
        return finite_difference_gradient(evaluator, direction, batch, smoothing, base_value=dist).g_hat
    return elementwise_sign_gradient(
        "without_sqo",
        evaluator=evaluator,
        direction=direction,
        batch=batch,
        smoothing=smoothing,
        base_value=dist,
    ).g_hat


def run_attack(
    oracle: HardLabelOracle,
    example: Example,
    config: AttackConfig,
    init_candidates=None,
) -> AttackResult:
    """Run one attack to its budget and return the best adversarial example.

    `init_candidates` overrides the default of `num_init_directions` random
    starting directions (targeted runs typically pass directions toward
    known target-class examples).  The oracle's counter is capped at the
    configured budget; exhausting it ends the run gracefully with the best
    iterate found so far.
    """
    goal = config.goal
    if goal.mode == "targeted" and goal.target == example.y:
        raise PreconditionError("target label equals the example's own label")
    if example.dim != oracle.dim:
        raise PreconditionError(
            f"example dimension {example.dim} does not match model dimension {oracle.dim}"
        )

    base = oracle.counter.count
    cap = base + config.query_budget
    if oracle.counter.budget is None or oracle.counter.budget > cap:
        oracle.counter.budget = cap

    trace = AttackTrace()
    best_dir: np.ndarray | None = None
    best_g = math.inf

    def record(direction, ev: DistanceEval):
        nonlocal best_dir, best_g
        if ev.found and ev.g_value < best_g:
            best_g = ev.g_value
            best_dir = np.array(direction, dtype=float)
        trace.append(oracle.counter.count - base, best_g)

    def loop_eval(direction) -> DistanceEval:
        ev = boundary_distance(oracle, example, goal, direction, config.search)
        record(direction, ev)
        return ev

    try:
        first = oracle.predict(example.x)
        if goal.mode == "untargeted" and first != example.y:
            raise PreconditionError("oracle misclassifies the example already")
        if goal.mode == "targeted" and first == goal.target:
            raise PreconditionError("example is already predicted as the target label")

        candidates = init_candidates if init_candidates is not None else config.num_init_directions
        theta0, ev0 = initial_direction(
            oracle,
            example,
            goal,
            candidates,
            config.search,
            rng=np.random.default_rng([config.seed, 0]),
            on_eval=record,
        )
        theta = unit_vector(theta0)
        g = ev0.g_value
        eta = config.eta0
        stalled = 0

        for t in range(1, config.max_iters + 1):
            rng = np.random.default_rng([config.seed, t])
            batch = sample_directions(oracle.dim, config.Q, config.direction_dist, rng)
            smoothing = (
                config.epsilon * float(np.linalg.norm(theta))
                if config.epsilon_relative
                else config.epsilon
            )
            ghat = _estimate(config, oracle, example, goal, loop_eval, theta, g, batch, smoothing)
            prev_g = g
            if np.any(ghat):
                if config.line_search:
                    step = line_search_step(
                        loop_eval, theta, ghat, g, eta, config.ls_shrink, config.ls_max_trials
                    )
                    if step.eta > 0.0:
                        theta, g, eta = step.direction, step.g_value, step.eta
                else:
                    cand = unit_vector(theta - config.eta0 * ghat)
                    ev = loop_eval(cand)
                    if ev.found:
                        theta, g = cand, ev.g_value
            improvement = (prev_g - g) / prev_g
            stalled = stalled + 1 if improvement < EARLY_STOP_REL else 0
            if stalled >= EARLY_STOP_ITERS:
                break
    except QueryBudgetExceeded:
        pass

    # Tighten the reported distortion beyond the in-loop tolerance.
    if best_dir is not None and config.final_rel_tol < config.search.rel_tol:
        fine = replace(config.search, rel_tol=config.final_rel_tol)
        start = oracle.counter.count
        try:
            refined = bisect_boundary(oracle, example, goal, best_dir, 0.0, best_g, fine)
            record(best_dir, DistanceEval(refined.g_value, oracle.counter.count - start, True))
        except QueryBudgetExceeded:
            pass

    queries = oracle.counter.count - base
    if best_dir is None:
        return AttackResult(None, math.inf, queries, False, trace, None)
    x_adv = point_along(example.x, unit_vector(best_dir), best_g)
    # One verification query, outside the metered budget.
    success = goal.hits(oracle.peek(x_adv), example.y)
    distortion = float(np.linalg.norm(x_adv - example.x))
    return AttackResult(x_adv, distortion, queries, success, trace, best_dir)


def compare_single_query_oracle(
    oracle: HardLabelOracle, example: Example, base_config: AttackConfig
) -> tuple[AttackResult, AttackResult]:
    """Run the elementwise-sign attack with and without the single-query sign.

    Both runs share the seed and budget, so they draw identical direction
    batches per iteration; only the source of each summand's sign differs
    (one query vs a full finite difference).  Returns (with, without).
    """
    with_sqo = run_attack(
        oracle.fresh(), example, replace(base_config, estimator="zo_signsgd_sqo")
    )
    without_sqo = run_attack(
        oracle.fresh(), example, replace(base_config, estimator="zo_signsgd_bs")
    )
    return with_sqo, without_sqo
