"""Acceptance suite: one test per criterion, each printing a pass/fail line.

The d=100 linear suite (one seeded victim, 50 eligible examples, one run
seed per example) is shared by the optimum-recovery, query-efficiency and
parity criteria.  Run with `pytest tests/test_acceptance.py -v -s` to see
the per-criterion lines.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from signray import (
    AttackConfig,
    Example,
    HardLabelOracle,
    SearchConfig,
    SignObservation,
    boundary_distance,
    compare_single_query_oracle,
    directional_sign,
    linear_min_distortion,
    linear_ray_distance,
    run_attack,
    solve_hard_margin_qp,
)
from signray.geometry import AttackGoal
from signray.harness import BenchmarkSpec, export_results, run_benchmark
from signray.oracle import save_dataset, save_model
from signray.synth import make_dataset, make_linear_model, make_mlp_model

from reference_qp import reference_qp
from test_estimators import make_feasible_instance

GOAL = AttackGoal.untargeted()


def report(criterion, passed, detail):
    print(f"[acceptance] {criterion}: {'PASS' if passed else 'FAIL'} ({detail})")


@pytest.fixture(scope="module")
def linear_suite():
    rng = np.random.default_rng(2024)
    model = make_linear_model(100, 3, rng)
    data = make_dataset(model, 70, rng)
    examples = [ex for ex in data if model.predict_label(ex.x) == ex.y][:50]
    assert len(examples) == 50
    optima = [linear_min_distortion(model, ex.x, ex.y)[0] for ex in examples]
    return model, examples, optima


def run_suite(linear_suite, config):
    model, examples, _ = linear_suite
    results = []
    started = time.monotonic()
    for i, ex in enumerate(examples):
        cfg = replace(config, seed=1000 + i)
        results.append(run_attack(HardLabelOracle(model), ex, cfg))
    return results, time.monotonic() - started


@pytest.fixture(scope="module")
def signopt_runs(linear_suite):
    return run_suite(linear_suite, AttackConfig(estimator="signopt", Q=50, query_budget=20000))


@pytest.fixture(scope="module")
def rgf_runs(linear_suite):
    # the baseline runs at the module defaults (Q=200) on the same suite
    return run_suite(linear_suite, AttackConfig(estimator="rgf", query_budget=20000))


def queries_to_level(result, level):
    for point in result.trace.records:
        if point.best_g <= level:
            return point.queries
    return math.inf


class TestCriterion1:
    def test_closed_form_equivalence(self):
        started = time.monotonic()
        rng = np.random.default_rng(11)
        cfg = SearchConfig(rel_tol=1e-3)
        worst = 0.0
        checked = 0
        model_small = model_big = None
        while checked < 1000:
            if checked % 50 == 0:
                model_small = make_linear_model(10, 3, rng)
                model_big = make_linear_model(100, 4, rng)
            model = model_small if checked % 2 == 0 else model_big
            x = rng.uniform(0, 1, model.dim)
            y = model.predict_label(x)
            theta = rng.standard_normal(model.dim)
            exact = linear_ray_distance(model, x, y, theta)
            if not math.isfinite(exact):
                continue
            ev = boundary_distance(HardLabelOracle(model), Example(x, y), GOAL, theta, cfg)
            worst = max(worst, abs(ev.g_value - exact) / exact)
            checked += 1
        elapsed = time.monotonic() - started
        ok = worst <= 1e-3 and elapsed < 10.0
        report("C1 closed-form g equivalence", ok, f"worst rel err {worst:.2e}, {elapsed:.1f}s")
        assert worst <= 1e-3
        assert elapsed < 10.0


class TestCriterion2:
    def test_single_query_sign_fidelity(self):
        rng = np.random.default_rng(5)
        model = make_mlp_model(20, 4, (16,), rng)
        data = make_dataset(model, 30, rng)
        oracle = HardLabelOracle(model)
        cfg = SearchConfig(rel_tol=1e-3)
        agree = decided = attempts = 0
        while decided < 1000 and attempts < 30000:
            attempts += 1
            ex = data[int(rng.integers(len(data)))]
            if model.predict_label(ex.x) != ex.y:
                continue
            theta = rng.standard_normal(20)
            base = boundary_distance(oracle, ex, GOAL, theta, cfg)
            if not base.found:
                continue
            u = rng.standard_normal(20)
            eps = 1e-3 * float(np.linalg.norm(theta))
            before = oracle.count
            sign = directional_sign(oracle, ex, GOAL, theta, base.g_value, u, eps)
            assert oracle.count - before == 1
            perturbed = boundary_distance(oracle, ex, GOAL, theta + eps * u, cfg)
            if not perturbed.found:
                continue
            diff = perturbed.g_value - base.g_value
            if abs(diff) <= 2 * cfg.rel_tol * base.g_value:
                continue
            decided += 1
            agree += sign == (1 if diff > 0 else -1)
        rate = agree / decided
        ok = decided == 1000 and rate >= 0.99
        report("C2 single-query sign fidelity", ok, f"{agree}/{decided} = {rate:.4f}")
        assert decided == 1000
        assert rate >= 0.99


class TestCriterion3:
    def test_global_optimum_recovery(self, linear_suite, signopt_runs):
        _, _, optima = linear_suite
        results, elapsed = signopt_runs
        ratios = np.array([r.distortion / opt for r, opt in zip(results, optima)])
        rate = float((ratios <= 1.02).mean())
        ok = rate >= 0.9 and elapsed < 60.0
        report(
            "C3 global-optimum recovery",
            ok,
            f"{rate * 100:.0f}% within 2%, median ratio {np.median(ratios):.4f}, {elapsed:.1f}s",
        )
        assert rate >= 0.9
        assert elapsed < 60.0


class TestCriterion4:
    def test_query_efficiency_ratio(self, linear_suite, signopt_runs, rgf_runs):
        _, _, optima = linear_suite
        sign_q = [
            queries_to_level(r, 1.1 * opt) for r, opt in zip(signopt_runs[0], optima)
        ]
        rgf_q = [queries_to_level(r, 1.1 * opt) for r, opt in zip(rgf_runs[0], optima)]
        ratio = float(np.median(sign_q) / np.median(rgf_q))
        ok = ratio <= 0.2
        report(
            "C4 query-efficiency ratio",
            ok,
            f"median sign {np.median(sign_q):.0f} vs rgf {np.median(rgf_q):.0f}, ratio {ratio:.3f}",
        )
        assert ratio <= 0.2


class TestCriterion5:
    def test_svm_recovery_parity(self, linear_suite, signopt_runs):
        results, _ = run_suite(
            linear_suite, AttackConfig(estimator="svmopt", Q=50, query_budget=20000)
        )
        median_sign = float(np.median([r.distortion for r in signopt_runs[0]]))
        median_svm = float(np.median([r.distortion for r in results]))
        rel = abs(median_svm - median_sign) / median_sign
        ok = rel <= 0.05
        report(
            "C5 svm-recovery parity",
            ok,
            f"medians {median_sign:.5f} vs {median_svm:.5f}, rel diff {rel:.4f}",
        )
        assert rel <= 0.05


class TestCriterion6:
    def test_qp_correctness(self):
        sol = solve_hard_margin_qp([SignObservation(np.array([2.0, 0.0]), +1)])
        hand_one = sol.feasible and np.allclose(sol.z, [0.5, 0.0], atol=1e-12)
        sol = solve_hard_margin_qp(
            [SignObservation(np.array([1.0, 0.0]), +1), SignObservation(np.array([0.0, 1.0]), -1)]
        )
        hand_two = sol.feasible and np.allclose(sol.z, [1.0, -1.0], atol=1e-12)
        sol = solve_hard_margin_qp(
            [SignObservation(np.array([1.0, 0.0]), +1), SignObservation(np.array([1.0, 0.0]), -1)]
        )
        hand_infeasible = not sol.feasible

        rng = np.random.default_rng(3)
        worst_kkt = 0.0
        worst_obj = 0.0
        for _ in range(200):
            q, d = int(rng.integers(1, 21)), int(rng.integers(2, 11))
            obs = make_feasible_instance(rng, q, d)
            sol = solve_hard_margin_qp(obs, kkt_tol=1e-10, max_sweeps=500_000)
            assert sol.feasible
            worst_kkt = max(worst_kkt, sol.kkt_residual)
            z_ref = reference_qp(obs)
            worst_obj = max(worst_obj, abs(sol.z @ sol.z - z_ref @ z_ref))
        ok = (
            hand_one
            and hand_two
            and hand_infeasible
            and worst_kkt <= 1e-6
            and worst_obj <= 1e-6
        )
        report(
            "C6 qp correctness",
            ok,
            f"worst KKT {worst_kkt:.1e}, worst obj gap {worst_obj:.1e}, hand examples "
            f"{hand_one and hand_two and hand_infeasible}",
        )
        assert hand_one and hand_two and hand_infeasible
        assert worst_kkt <= 1e-6
        assert worst_obj <= 1e-6


class TestCriterion7:
    def test_single_query_oracle_ablation(self):
        rng = np.random.default_rng(77)
        model = make_linear_model(50, 3, rng)
        data = make_dataset(model, 30, rng)
        examples = [ex for ex in data if model.predict_label(ex.x) == ex.y][:20]
        assert len(examples) == 20
        levels = (1.5, 1.25)
        wins = {level: 0 for level in levels}
        for i, ex in enumerate(examples):
            optimum, _ = linear_min_distortion(model, ex.x, ex.y)
            base = AttackConfig(Q=50, query_budget=20000, seed=500 + i)
            with_sqo, without_sqo = compare_single_query_oracle(
                HardLabelOracle(model), ex, base
            )
            for level in levels:
                if queries_to_level(with_sqo, level * optimum) < queries_to_level(
                    without_sqo, level * optimum
                ):
                    wins[level] += 1
        ok = all(w >= 16 for w in wins.values())
        report(
            "C7 single-query-oracle ablation",
            ok,
            ", ".join(f"{w}/20 at {l}x" for l, w in wins.items()),
        )
        for level in levels:
            assert wins[level] >= 16


class TestCriterion8:
    def test_determinism_and_accounting(self, tmp_path):
        rng = np.random.default_rng(88)
        model = make_linear_model(10, 3, rng)
        examples = make_dataset(model, 6, rng)
        model_path = tmp_path / "model.smlp"
        data_path = tmp_path / "data.csv"
        save_model(model, model_path)
        save_dataset(examples, data_path)
        config = AttackConfig(estimator="signopt", Q=15, query_budget=2500, seed=0)
        spec = BenchmarkSpec(
            model_path=str(model_path),
            data_path=str(data_path),
            n_examples=4,
            attacks=(("signopt", config), ("svmopt", replace(config, estimator="svmopt"))),
            checkpoints=(1000, 2000),
            thresholds=(0.5, 1.5),
            master_seed=42,
        )
        first = run_benchmark(spec)
        paths_a = export_results(first, tmp_path / "a")
        paths_b = export_results(run_benchmark(spec), tmp_path / "b")
        identical = all(
            open(paths_a[k], "rb").read() == open(paths_b[k], "rb").read() for k in paths_a
        )

        budget_ok = all(
            r.queries <= config.query_budget for rs in first.results.values() for r in rs
        )
        oracle = HardLabelOracle(model, budget=config.query_budget)
        direct = run_attack(oracle, examples[0], config)
        delta_ok = direct.queries == oracle.count

        ok = identical and budget_ok and delta_ok
        report(
            "C8 determinism and accounting",
            ok,
            f"byte-identical {identical}, budgets respected {budget_ok}, "
            f"counter delta exact {delta_ok}",
        )
        assert identical
        assert budget_ok
        assert delta_ok
