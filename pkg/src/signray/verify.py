"""Built-in self-verification suites behind the `verify` CLI subcommand.

Each suite runs quick, seeded checks against ground truth that needs no
external files: closed-form boundary geometry on linear victims, KKT
conditions for the minimum-norm recovery, and the fidelity of the
single-query sign probe.
"""

from __future__ import annotations

import math

import numpy as np

from .estimators import SignObservation, solve_hard_margin_qp
from .geometry import AttackGoal, SearchConfig, boundary_distance, directional_sign
from .oracle import Example, HardLabelOracle, linear_min_distortion, linear_ray_distance
from .synth import make_dataset, make_linear_model, make_mlp_model

SUITES = ("geometry", "qp", "sign")


def _sample_case(rng, dim, classes):
    model = make_linear_model(dim, classes, rng)
    for _ in range(200):
        x = rng.uniform(0.0, 1.0, dim)
        y = model.predict_label(x)
        theta = rng.standard_normal(dim)
        exact = linear_ray_distance(model, x, y, theta)
        if math.isfinite(exact):
            return model, Example(x, y), theta, exact
    raise RuntimeError("could not sample a crossing direction")


def suite_geometry(rel_tol: float, seed: int = 7):
    rng = np.random.default_rng(seed)
    cfg = SearchConfig(rel_tol=rel_tol)
    goal = AttackGoal.untargeted()
    checks = []

    worst = 0.0
    for _ in range(60):
        model, ex, theta, exact = _sample_case(rng, int(rng.integers(3, 21)), int(rng.integers(2, 6)))
        ev = boundary_distance(HardLabelOracle(model), ex, goal, theta, cfg)
        worst = max(worst, abs(ev.g_value - exact) / exact)
    checks.append(("search matches closed form", worst <= rel_tol, f"worst rel err {worst:.2e}"))

    worst = 0.0
    for _ in range(20):
        model, ex, theta, _ = _sample_case(rng, 10, 3)
        base = boundary_distance(HardLabelOracle(model), ex, goal, theta, cfg).g_value
        for c in (0.5, 3.0, 10.0):
            scaled = boundary_distance(HardLabelOracle(model), ex, goal, c * theta, cfg).g_value
            worst = max(worst, abs(scaled - base) / base)
    checks.append(("scale invariance", worst <= 2 * rel_tol, f"worst rel diff {worst:.2e}"))

    ok = True
    for _ in range(20):
        model, ex, _, _ = _sample_case(rng, 8, 4)
        opt, _ = linear_min_distortion(model, ex.x, ex.y)
        sampled = min(
            linear_ray_distance(model, ex.x, ex.y, rng.standard_normal(8)) for _ in range(1000)
        )
        ok = ok and opt <= sampled * 1.01
    checks.append(("closed-form optimum lower-bounds sampled rays", ok, ""))
    return checks


def suite_qp(seed: int = 11):
    rng = np.random.default_rng(seed)
    checks = []

    sol = solve_hard_margin_qp([SignObservation(np.array([2.0, 0.0]), +1)])
    checks.append(
        ("single active constraint", sol.feasible and np.allclose(sol.z, [0.5, 0.0]), repr(sol.z))
    )
    sol = solve_hard_margin_qp(
        [
            SignObservation(np.array([1.0, 0.0]), +1),
            SignObservation(np.array([0.0, 1.0]), -1),
        ]
    )
    checks.append(
        ("two active constraints", sol.feasible and np.allclose(sol.z, [1.0, -1.0]), repr(sol.z))
    )
    sol = solve_hard_margin_qp(
        [
            SignObservation(np.array([1.0, 0.0]), +1),
            SignObservation(np.array([1.0, 0.0]), -1),
        ]
    )
    checks.append(("contradictory signs flagged infeasible", not sol.feasible, ""))

    ok_kkt = True
    ok_comp = True
    for _ in range(40):
        q, d = int(rng.integers(1, 21)), int(rng.integers(2, 11))
        target = rng.standard_normal(d)
        tnorm = np.linalg.norm(target)
        obs = []
        while len(obs) < q:
            u = rng.standard_normal(d)
            # near-orthogonal constraints make the instance ill-conditioned
            if abs(target @ u) < 0.1 * tnorm * np.linalg.norm(u):
                continue
            obs.append(SignObservation(u, 1 if target @ u >= 0 else -1))
        sol = solve_hard_margin_qp(obs, kkt_tol=1e-8, max_sweeps=200_000)
        ok_kkt = ok_kkt and sol.feasible and sol.kkt_residual <= 1e-6
        for o, a in zip(obs, sol.alpha):
            margin = o.sign * (sol.z @ o.u)
            ok_comp = ok_comp and a * (margin - 1.0) <= 1e-6
    checks.append(("random instances satisfy KKT", ok_kkt, ""))
    checks.append(("complementary slackness", ok_comp, ""))
    return checks


def suite_sign(rel_tol: float, seed: int = 13, trials: int = 200):
    rng = np.random.default_rng(seed)
    model = make_mlp_model(20, 4, (16,), rng)
    oracle = HardLabelOracle(model)
    goal = AttackGoal.untargeted()
    cfg = SearchConfig(rel_tol=rel_tol)
    dataset = make_dataset(model, 20, rng)

    agree = 0
    decided = 0
    one_query = True
    attempts = 0
    while decided < trials and attempts < 20 * trials:
        attempts += 1
        ex = dataset[int(rng.integers(len(dataset)))]
        theta = rng.standard_normal(20)
        base = boundary_distance(oracle, ex, goal, theta, cfg)
        if not base.found:
            continue
        u = rng.standard_normal(20)
        eps = 1e-3 * float(np.linalg.norm(theta))
        before = oracle.count
        sign = directional_sign(oracle, ex, goal, theta, base.g_value, u, eps)
        one_query = one_query and oracle.count - before == 1
        perturbed = boundary_distance(oracle, ex, goal, theta + eps * u, cfg)
        if not perturbed.found:
            continue
        diff = perturbed.g_value - base.g_value
        if abs(diff) <= 2 * rel_tol * base.g_value:
            continue
        decided += 1
        if sign == (1 if diff > 0 else -1):
            agree += 1

    rate = agree / decided if decided else 0.0
    return [
        ("sign probe consumes one query", one_query, ""),
        (
            "sign agrees with double evaluation",
            decided >= trials // 2 and rate >= 0.99,
            f"{agree}/{decided} = {rate:.3f}",
        ),
    ]


def run_suites(names, rel_tol: float = 1e-3):
    """Run the requested suites; returns (all_passed, [(suite, check, ok, detail)])."""
    rows = []
    for name in names:
        if name == "geometry":
            checks = suite_geometry(rel_tol)
        elif name == "qp":
            checks = suite_qp()
        elif name == "sign":
            checks = suite_sign(rel_tol)
        else:
            raise ValueError(f"unknown suite {name!r}")
        rows.extend((name, check, ok, detail) for check, ok, detail in checks)
    return all(ok for _, _, ok, _ in rows), rows
