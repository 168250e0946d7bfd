"""Batch experiment runner and query-budget metrics.

Runs a list of attack configurations over one shared, deterministically
chosen example subset, then reduces the traces to median-distortion and
success-rate curves over query checkpoints.  Reruns of the same spec
produce byte-identical output files.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from .attacks import AttackConfig, AttackResult, AttackTrace, run_attack
from .geometry import NoCrossingError
from .oracle import ClippedOracle, Example, HardLabelOracle, load_dataset, load_model

log = logging.getLogger(__name__)

DEFAULT_CHECKPOINTS = (4000, 8000, 12000, 14000, 30000)


@dataclass(frozen=True)
class BenchmarkSpec:
    model_path: str
    data_path: str
    n_examples: int
    attacks: tuple  # ((name, AttackConfig), ...)
    checkpoints: tuple = DEFAULT_CHECKPOINTS
    thresholds: tuple = (0.5, 1.5)
    jobs: int = 1
    master_seed: int = 0
    clip: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "attacks", tuple((str(n), c) for n, c in self.attacks))
        object.__setattr__(self, "checkpoints", tuple(int(c) for c in self.checkpoints))
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        if self.n_examples < 1:
            raise ValueError("need at least one example")
        if not self.attacks:
            raise ValueError("need at least one attack")
        names = [n for n, _ in self.attacks]
        if len(set(names)) != len(names):
            raise ValueError("attack names must be unique")
        goals = {cfg.goal for _, cfg in self.attacks}
        if len(goals) != 1:
            raise ValueError("all attacks in one spec must share the same goal")
        if any(b <= a for a, b in zip(self.checkpoints, self.checkpoints[1:])):
            raise ValueError("checkpoints must be strictly increasing")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")
        if self.master_seed < 0:
            raise ValueError("master_seed must be non-negative")

    @property
    def goal(self):
        return self.attacks[0][1].goal


@dataclass
class BenchmarkResult:
    spec: BenchmarkSpec
    example_indices: list[int]
    example_seeds: list[int]
    results: dict[str, list[AttackResult]]


def example_seed(master_seed: int, example_index: int) -> int:
    """Deterministic per-example attack seed derived from the master seed."""
    return int(np.random.SeedSequence([master_seed, example_index]).generate_state(1)[0])


def _eligible(model, example: Example, goal) -> bool:
    predicted = model.predict_label(example.x)
    if goal.mode == "untargeted":
        return predicted == example.y
    return predicted != goal.target and example.y != goal.target


def _target_candidates(examples, goal, x0: np.ndarray, limit: int = 100):
    """Directions toward known target-class examples, shared across attacks."""
    dirs = []
    for ex in examples:
        if ex.y != goal.target:
            continue
        delta = ex.x - x0
        if np.any(delta):
            dirs.append(delta)
        if len(dirs) >= limit:
            break
    return dirs or None


def _run_one(task):
    model, clip, example, config, init_candidates = task
    oracle = HardLabelOracle(model, budget=config.query_budget)
    if clip is not None:
        oracle = ClippedOracle(oracle, clip[0], clip[1])
    try:
        return run_attack(oracle, example, config, init_candidates=init_candidates)
    except NoCrossingError:
        # a failed attack is still a benchmark data point
        return AttackResult(None, math.inf, oracle.count, False, AttackTrace(), None)


def run_benchmark(spec: BenchmarkSpec) -> BenchmarkResult:
    """Attack the first n_examples eligible examples with every configured attack.

    Eligibility: untargeted runs use only correctly predicted examples;
    targeted runs only examples not already predicted (or labeled) as the
    target.  Every attack sees the identical subset and identical
    per-example seeds, so starting directions match across attacks.
    """
    model = load_model(spec.model_path)
    dataset = load_dataset(spec.data_path)
    goal = spec.goal

    chosen: list[int] = []
    for idx, ex in enumerate(dataset):
        if ex.dim != model.dim:
            raise ValueError("dataset dimension does not match the model")
        if _eligible(model, ex, goal):
            chosen.append(idx)
        if len(chosen) >= spec.n_examples:
            break
    if len(chosen) < spec.n_examples:
        log.warning(
            "only %d eligible examples (requested %d); running with all of them",
            len(chosen),
            spec.n_examples,
        )

    seeds = [example_seed(spec.master_seed, idx) for idx in chosen]
    candidates_per_example = [
        _target_candidates(dataset, goal, dataset[idx].x) if goal.mode == "targeted" else None
        for idx in chosen
    ]

    tasks = []
    order = []
    for name, config in spec.attacks:
        for slot, idx in enumerate(chosen):
            cfg = replace(config, seed=seeds[slot])
            tasks.append((model, spec.clip, dataset[idx], cfg, candidates_per_example[slot]))
            order.append(name)

    if spec.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            outcomes = list(pool.map(_run_one, tasks))
    else:
        outcomes = [_run_one(t) for t in tasks]

    results: dict[str, list[AttackResult]] = {name: [] for name, _ in spec.attacks}
    for name, outcome in zip(order, outcomes):
        results[name].append(outcome)
    return BenchmarkResult(spec, chosen, seeds, results)


def median_distortion_at(traces, query_limit: int) -> float:
    """Median best distortion over traces within a query limit.

    Examples with no adversarial point by then enter as the +inf sentinel;
    once half or more are sentinels the median itself is the sentinel.
    """
    values = [t.best_at(query_limit) for t in traces]
    if not values:
        raise ValueError("need at least one trace")
    return float(np.median(values))


def success_rate_at(traces, query_limit: int, threshold: float) -> float:
    """Fraction of traces that got below `threshold` within the query limit."""
    values = [t.best_at(query_limit) for t in traces]
    if not values:
        raise ValueError("need at least one trace")
    return sum(v < threshold for v in values) / len(values)


@dataclass(frozen=True)
class CurvePoint:
    queries: int
    median_distortion: float
    success_rates: tuple  # aligned with spec.thresholds


def compute_curves(result: BenchmarkResult) -> dict[str, list[CurvePoint]]:
    spec = result.spec
    curves: dict[str, list[CurvePoint]] = {}
    for name, config in spec.attacks:
        traces = [r.trace for r in result.results[name]]
        points = []
        for q in spec.checkpoints:
            if q > config.query_budget or not traces:
                continue
            points.append(
                CurvePoint(
                    q,
                    median_distortion_at(traces, q),
                    tuple(success_rate_at(traces, q, t) for t in spec.thresholds),
                )
            )
        curves[name] = points
    return curves


def flatten_config(config: AttackConfig) -> dict[str, str]:
    flat: dict[str, str] = {}
    for f in fields(config):
        value = getattr(config, f.name)
        if f.name == "goal":
            flat["goal.mode"] = value.mode
            flat["goal.target"] = repr(value.target)
        elif f.name == "search":
            for sf in fields(value):
                flat[f"search.{sf.name}"] = repr(getattr(value, sf.name))
        else:
            flat[f.name] = repr(value)
    return flat


def export_results(result: BenchmarkResult, out_dir) -> dict[str, str]:
    """Write curves.csv, per_example.csv and run.meta into out_dir.

    All values are formatted with repr so identical results export to
    byte-identical files; the sentinel prints as `inf`.
    """
    os.makedirs(out_dir, exist_ok=True)
    spec = result.spec
    curves = compute_curves(result)

    curves_path = os.path.join(out_dir, "curves.csv")
    threshold_cols = [f"sr_eps_{t:g}" for t in spec.thresholds]
    with open(curves_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["attack", "queries", "median_L2"] + threshold_cols) + "\n")
        for name, _ in spec.attacks:
            for point in curves[name]:
                row = [name, str(point.queries), repr(point.median_distortion)]
                row += [repr(sr) for sr in point.success_rates]
                fh.write(",".join(row) + "\n")

    per_example_path = os.path.join(out_dir, "per_example.csv")
    with open(per_example_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("attack,example,final_L2,queries,success\n")
        for name, _ in spec.attacks:
            for slot, res in enumerate(result.results[name]):
                fh.write(
                    ",".join(
                        [
                            name,
                            str(result.example_indices[slot]),
                            repr(res.distortion),
                            str(res.queries),
                            str(int(res.success)),
                        ]
                    )
                    + "\n"
                )

    meta_path = os.path.join(out_dir, "run.meta")
    with open(meta_path, "w", encoding="utf-8") as fh:
        fh.write(f"model={spec.model_path}\n")
        fh.write(f"data={spec.data_path}\n")
        fh.write(f"n_examples={spec.n_examples}\n")
        fh.write(f"master_seed={spec.master_seed}\n")
        fh.write(f"checkpoints={','.join(str(c) for c in spec.checkpoints)}\n")
        fh.write(f"thresholds={','.join(repr(t) for t in spec.thresholds)}\n")
        fh.write(f"jobs={spec.jobs}\n")
        fh.write(f"clip={spec.clip!r}\n")
        fh.write(f"example_indices={','.join(str(i) for i in result.example_indices)}\n")
        fh.write(f"example_seeds={','.join(str(s) for s in result.example_seeds)}\n")
        for name, config in spec.attacks:
            for key, value in sorted(flatten_config(config).items()):
                fh.write(f"attack.{name}.{key}={value}\n")

    return {"curves": curves_path, "per_example": per_example_path, "meta": meta_path}
