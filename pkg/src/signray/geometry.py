"""Boundary-distance evaluation along rays and the single-query sign probe.

The attack objective for a direction is the distance from the original
point to the first label change along that ray.  It is measured with
hard-label queries only: geometric doubling brackets the boundary, then
bisection narrows the bracket to a relative tolerance.  The reported
value is always the adversarial end of the final bracket, so the point
reconstructed from it is adversarial by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .oracle import Example, HardLabelOracle, Label

# Bisection is capped as a safety net for degenerate zero-low brackets;
# ordinary searches stop on the relative-width test long before this.
_MAX_BISECTIONS = 500


class NoCrossingError(RuntimeError):
    """No candidate direction crossed the decision boundary."""


@dataclass(frozen=True)
class SearchConfig:
    """Controls for the bracket-then-bisect distance search.

    initial_lambda and lambda_max default to 0.1*sqrt(d) and
    initial_lambda * 2**max_doublings; they are resolved against the input
    dimension at call time.
    """

    rel_tol: float = 1e-3
    initial_lambda: float | None = None
    lambda_max: float | None = None
    max_doublings: int = 30

    def __post_init__(self):
        if not 0.0 < self.rel_tol < 1.0:
            raise ValueError(f"rel_tol must be in (0, 1), got {self.rel_tol}")
        if self.initial_lambda is not None and self.initial_lambda <= 0.0:
            raise ValueError("initial_lambda must be positive")
        if self.max_doublings < 1:
            raise ValueError("max_doublings must be at least 1")
        if self.lambda_max is not None:
            if self.lambda_max <= 0.0:
                raise ValueError("lambda_max must be positive")
            if self.initial_lambda is not None and self.lambda_max < self.initial_lambda:
                raise ValueError("lambda_max must be >= initial_lambda")

    def resolve(self, dim: int) -> tuple[float, float]:
        initial = self.initial_lambda if self.initial_lambda is not None else 0.1 * math.sqrt(dim)
        cap = self.lambda_max if self.lambda_max is not None else initial * 2.0**self.max_doublings
        return initial, cap


@dataclass(frozen=True)
class DistanceEval:
    """Outcome of one distance measurement along a direction."""

    g_value: float
    queries_used: int
    found: bool

    def __post_init__(self):
        if self.found != math.isfinite(self.g_value):
            raise ValueError("found flag must match finiteness of g_value")
        if self.queries_used < 0:
            raise ValueError("negative query count")

    @classmethod
    def missing(cls, queries_used: int) -> "DistanceEval":
        return cls(math.inf, queries_used, False)


@dataclass(frozen=True)
class AttackGoal:
    """Untargeted (leave class y0) or targeted (reach a specific class)."""

    mode: str = "untargeted"
    target: Label | None = None

    def __post_init__(self):
        if self.mode not in ("untargeted", "targeted"):
            raise ValueError(f"unknown goal mode {self.mode!r}")
        if self.mode == "targeted" and self.target is None:
            raise ValueError("targeted goal needs a target label")
        if self.mode == "untargeted" and self.target is not None:
            raise ValueError("untargeted goal takes no target label")

    @classmethod
    def untargeted(cls) -> "AttackGoal":
        return cls()

    @classmethod
    def targeted(cls, target: Label) -> "AttackGoal":
        return cls(mode="targeted", target=target)

    def hits(self, label: Label, y0: Label) -> bool:
        if self.mode == "targeted":
            return label == self.target
        return label != y0


class Bracket(NamedTuple):
    lo: float
    hi: float
    queries: int
    found: bool


def unit_vector(direction: np.ndarray) -> np.ndarray:
    direction = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(direction)
    if norm == 0.0 or not math.isfinite(norm):
        raise ValueError("direction must be nonzero and finite")
    return direction / norm


def point_along(x0: np.ndarray, unit_dir: np.ndarray, lam: float) -> np.ndarray:
    return x0 + lam * unit_dir


def is_adversarial(oracle: HardLabelOracle, example: Example, goal: AttackGoal, point: np.ndarray) -> bool:
    """One hard-label query deciding whether `point` satisfies the goal."""
    return goal.hits(oracle.predict(point), example.y)


def bracket_boundary(
    oracle: HardLabelOracle,
    example: Example,
    goal: AttackGoal,
    direction: np.ndarray,
    cfg: SearchConfig,
) -> Bracket:
    """Geometric doubling from initial_lambda until the ray turns adversarial.

    Returns (lo, hi) with the point at hi adversarial and the point at lo
    (or lo=0 before the first probe) not adversarial.  Directions that stay
    non-adversarial through max_doublings probes come back found=False.
    """
    v = unit_vector(direction)
    initial, cap = cfg.resolve(v.size)
    lo = 0.0
    lam = initial
    queries = 0
    for _ in range(cfg.max_doublings + 1):
        if lam > cap:
            break
        queries += 1
        if is_adversarial(oracle, example, goal, point_along(example.x, v, lam)):
            return Bracket(lo, lam, queries, True)
        lo = lam
        lam *= 2.0
    return Bracket(lo, math.inf, queries, False)


def bisect_boundary(
    oracle: HardLabelOracle,
    example: Example,
    goal: AttackGoal,
    direction: np.ndarray,
    lo: float,
    hi: float,
    cfg: SearchConfig,
) -> DistanceEval:
    """Bisect a valid bracket down to the relative tolerance.

    Stops once hi - lo <= rel_tol * lo, which keeps the reported value
    within rel_tol relative error of the true crossing (the weaker
    width/hi test would let the error creep marginally past rel_tol).
    The returned distance is the adversarial end of the bracket.
    """
    if not (0.0 <= lo < hi and math.isfinite(hi)):
        raise ValueError(f"invalid bracket ({lo}, {hi})")
    v = unit_vector(direction)
    start = oracle.counter.count
    for _ in range(_MAX_BISECTIONS):
        if hi - lo <= cfg.rel_tol * lo:
            break
        mid = 0.5 * (lo + hi)
        if is_adversarial(oracle, example, goal, point_along(example.x, v, mid)):
            hi = mid
        else:
            lo = mid
    return DistanceEval(hi, oracle.counter.count - start, True)


def boundary_distance(
    oracle: HardLabelOracle,
    example: Example,
    goal: AttackGoal,
    direction: np.ndarray,
    cfg: SearchConfig,
) -> DistanceEval:
    """Full distance measurement: bracket the boundary, then bisect.

    Invariant under positive rescaling of the direction (the ray is
    normalized before any probe).
    """
    start = oracle.counter.count
    br = bracket_boundary(oracle, example, goal, direction, cfg)
    if not br.found:
        return DistanceEval.missing(oracle.counter.count - start)
    refined = bisect_boundary(oracle, example, goal, direction, br.lo, br.hi, cfg)
    return DistanceEval(refined.g_value, oracle.counter.count - start, True)


def directional_sign(
    oracle: HardLabelOracle,
    example: Example,
    goal: AttackGoal,
    direction: np.ndarray,
    dist: float,
    probe_dir: np.ndarray,
    smoothing: float,
) -> int:
    """Single-query sign of the distance change for a perturbed direction.

    Probes the point at the current distance along the perturbed ray: if it
    is adversarial the perturbed direction reaches the boundary sooner, so
    the distance decreased (-1); otherwise it increased (+1).
    """
    if smoothing <= 0.0:
        raise ValueError("smoothing must be positive")
    if not math.isfinite(dist) or dist <= 0.0:
        raise ValueError("dist must be a positive finite distance")
    perturbed = direction + smoothing * probe_dir
    norm = np.linalg.norm(perturbed)
    if norm == 0.0:
        raise ValueError("perturbed direction is zero")
    point = example.x + (dist / norm) * perturbed
    return -1 if is_adversarial(oracle, example, goal, point) else +1


def initial_direction(
    oracle: HardLabelOracle,
    example: Example,
    goal: AttackGoal,
    candidates,
    cfg: SearchConfig,
    rng: np.random.Generator | None = None,
    on_eval: Callable[[np.ndarray, DistanceEval], None] | None = None,
):
    """Pick the starting direction: the candidate with the smallest distance.

    `candidates` is either a count of standard-normal directions to draw
    from `rng` or an explicit list of direction vectors.  Until a first
    crossing is found each candidate gets a full search; afterwards a
    candidate is screened with one probe at the current best radius and
    only refined (bisected inside the established bracket) when that probe
    is adversarial, i.e. when it can actually improve on the best.

    Raises NoCrossingError when no candidate crosses the boundary.
    """
    if isinstance(candidates, int):
        if candidates < 1:
            raise ValueError("need at least one candidate direction")
        if rng is None:
            raise ValueError("drawing random candidates requires an rng")
        dim = oracle.dim
        candidate_iter = (rng.standard_normal(dim) for _ in range(candidates))
    else:
        candidate_list = [np.asarray(c, dtype=float) for c in candidates]
        if not candidate_list:
            raise ValueError("empty candidate list")
        candidate_iter = iter(candidate_list)

    best_dir = None
    best_eval = None
    for cand in candidate_iter:
        if best_eval is None:
            ev = boundary_distance(oracle, example, goal, cand, cfg)
            if on_eval is not None:
                on_eval(cand, ev)
            if ev.found:
                best_dir, best_eval = cand, ev
            continue
        v = unit_vector(cand)
        start = oracle.counter.count
        if not is_adversarial(oracle, example, goal, point_along(example.x, v, best_eval.g_value)):
            continue
        refined = bisect_boundary(oracle, example, goal, cand, 0.0, best_eval.g_value, cfg)
        ev = DistanceEval(refined.g_value, oracle.counter.count - start, True)
        if on_eval is not None:
            on_eval(cand, ev)
        if ev.g_value < best_eval.g_value:
            best_dir, best_eval = cand, ev
    if best_eval is None:
        raise NoCrossingError("no candidate direction crossed the decision boundary")
    return best_dir, best_eval
