"""Gradient estimates from directional information.

Three families: the sign-vote average (keeps each sampled direction's
magnitude), the finite-difference average (each term costs a full distance
search), and the elementwise-sign variant (every summand entry is +-1).
The minimum-norm recovery solves a hard-margin SVM over the observed
direction/sign pairs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import DistanceEval
from .qp_backend import dual_coordinate_ascent

log = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray], DistanceEval]


class GradientEstimationError(RuntimeError):
    """Every sampled direction failed to produce a usable measurement."""


@dataclass(frozen=True)
class DirectionBatch:
    """Q sampled probe directions, one per row."""

    u: np.ndarray  # (Q, d)
    distribution: str

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if u.ndim != 2 or u.shape[0] < 1:
            raise ValueError(f"direction batch must be (Q, d), got {u.shape}")
        object.__setattr__(self, "u", u)

    def __len__(self) -> int:
        return self.u.shape[0]

    def __iter__(self):
        return iter(self.u)


@dataclass(frozen=True)
class SignObservation:
    """A probe direction paired with the single-query sign outcome."""

    u: np.ndarray
    sign: int

    def __post_init__(self):
        if self.sign not in (-1, 1):
            raise ValueError(f"sign must be +-1, got {self.sign}")
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))


@dataclass(frozen=True)
class GradientEstimate:
    g_hat: np.ndarray
    queries_used: int
    method: str


@dataclass(frozen=True)
class QpSolution:
    """Minimum-norm vector whose directional signs match the observations."""

    z: np.ndarray
    alpha: np.ndarray
    kkt_residual: float
    feasible: bool
    sweeps: int


def sample_directions(
    dim: int, count: int, distribution: str = "gaussian", rng: np.random.Generator | None = None
) -> DirectionBatch:
    """Draw a batch of probe directions, reproducible from the generator.

    gaussian: i.i.d. standard normal rows (not renormalized; the sign-vote
    estimator relies on their magnitudes).  orthonormal: mutually
    orthogonal unit rows, count <= dim.
    """
    if count < 1:
        raise ValueError("need at least one direction")
    if rng is None:
        raise ValueError("sampling requires a generator")
    if distribution == "gaussian":
        return DirectionBatch(rng.standard_normal((count, dim)), "gaussian")
    if distribution == "orthonormal":
        if count > dim:
            raise ValueError(f"cannot draw {count} orthonormal directions in dimension {dim}")
        raw = rng.standard_normal((dim, count))
        q, r = np.linalg.qr(raw)
        signs = np.sign(np.diag(r))
        signs[signs == 0.0] = 1.0
        return DirectionBatch((q * signs).T, "orthonormal")
    raise ValueError(f"unknown distribution {distribution!r}")


def _stack(obs: Sequence[SignObservation]) -> tuple[np.ndarray, np.ndarray]:
    if not obs:
        raise ValueError("need at least one observation")
    u = np.stack([o.u for o in obs])
    y = np.array([float(o.sign) for o in obs])
    return u, y


def sign_vote_gradient(obs: Sequence[SignObservation]) -> GradientEstimate:
    """Average of the signed probe directions, (1/Q) sum_q y_q u_q."""
    u, y = _stack(obs)
    return GradientEstimate((y[:, None] * u).mean(axis=0), len(obs), "signopt")


def _sign_pm1(values: np.ndarray) -> np.ndarray:
    # zero maps to +1 so every entry is strictly +-1
    return np.where(values >= 0.0, 1.0, -1.0)


def finite_difference_gradient(
    evaluator: Evaluator,
    direction: np.ndarray,
    batch: DirectionBatch,
    smoothing: float,
    base_value: float | None = None,
) -> GradientEstimate:
    """Directional finite differences averaged over the batch.

    Each term costs a full distance search through `evaluator`.  Perturbed
    directions that fail to cross are skipped (contributing zero); if all
    fail the estimate is undefined.
    """
    if smoothing <= 0.0:
        raise ValueError("smoothing must be positive")
    queries = 0
    if base_value is None:
        base = evaluator(direction)
        queries += base.queries_used
        if not base.found:
            raise GradientEstimationError("base direction does not cross the boundary")
        base_value = base.g_value
    acc = np.zeros_like(np.asarray(direction, dtype=float))
    usable = 0
    for u in batch:
        ev = evaluator(direction + smoothing * u)
        queries += ev.queries_used
        if not ev.found:
            log.warning("skipping perturbed direction with no crossing")
            continue
        acc += ((ev.g_value - base_value) / smoothing) * u
        usable += 1
    if usable == 0:
        raise GradientEstimationError("no perturbed direction crossed the boundary")
    return GradientEstimate(acc / len(batch), queries, "rgf")


def elementwise_sign_gradient(
    mode: str,
    obs: Sequence[SignObservation] | None = None,
    evaluator: Evaluator | None = None,
    direction: np.ndarray | None = None,
    batch: DirectionBatch | None = None,
    smoothing: float | None = None,
    base_value: float | None = None,
) -> GradientEstimate:
    """Average of elementwise-sign summands, every entry +-1 before averaging.

    with_sqo consumes sign observations: each summand is y_q * sign(u_q).
    without_sqo measures the full finite difference per direction first and
    uses its sign, at full search cost per term.
    """
    if mode == "with_sqo":
        if obs is None:
            raise ValueError("with_sqo mode needs sign observations")
        u, y = _stack(obs)
        summands = y[:, None] * _sign_pm1(u)
        return GradientEstimate(summands.mean(axis=0), len(obs), "zo_signsgd_sqo")
    if mode != "without_sqo":
        raise ValueError(f"unknown mode {mode!r}")
    if evaluator is None or direction is None or batch is None or smoothing is None:
        raise ValueError("without_sqo mode needs evaluator, direction, batch, smoothing")
    queries = 0
    if base_value is None:
        base = evaluator(direction)
        queries += base.queries_used
        if not base.found:
            raise GradientEstimationError("base direction does not cross the boundary")
        base_value = base.g_value
    acc = np.zeros_like(np.asarray(direction, dtype=float))
    usable = 0
    for u in batch:
        ev = evaluator(direction + smoothing * u)
        queries += ev.queries_used
        if not ev.found:
            log.warning("skipping perturbed direction with no crossing")
            continue
        acc += _sign_pm1((ev.g_value - base_value) * u)
        usable += 1
    if usable == 0:
        raise GradientEstimationError("no perturbed direction crossed the boundary")
    return GradientEstimate(acc / len(batch), queries, "zo_signsgd_bs")


def solve_hard_margin_qp(
    obs: Sequence[SignObservation],
    kkt_tol: float = 1e-8,
    max_sweeps: int | None = None,
) -> QpSolution:
    """Minimize ||z||^2 subject to y_q * <z, u_q> >= 1 for all observations.

    Solved by dual coordinate ascent with exact per-coordinate updates.
    Contradictory observations have no feasible z; that comes back as
    feasible=False with the residual at exit (callers fall back to the
    sign-vote estimate).
    """
    u, y = _stack(obs)
    norms = np.linalg.norm(u, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("observations must have nonzero directions")
    if max_sweeps is None:
        max_sweeps = 10 * len(obs)
    if max_sweeps < 1:
        raise ValueError("max_sweeps must be at least 1")
    signed = y[:, None] * u
    gram = np.ascontiguousarray(signed @ signed.T)
    alpha = np.zeros(len(obs))
    margins = np.zeros(len(obs))
    sweeps, resid = dual_coordinate_ascent(gram, alpha, margins, kkt_tol, max_sweeps)
    z = signed.T @ alpha
    return QpSolution(z, alpha, float(resid), resid <= kkt_tol, int(sweeps))
