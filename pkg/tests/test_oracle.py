import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from signray import (
    DatasetFormatError,
    Example,
    HardLabelOracle,
    LinearModel,
    MlpModel,
    ModelFormatError,
    QueryBudgetExceeded,
    linear_min_distortion,
    linear_ray_distance,
    load_dataset,
    load_model,
    save_dataset,
    save_model,
)
from signray.oracle import ClippedOracle, DenseLayer


class TestPredict:
    def test_linear_argmax(self, axis_model):
        # logits at (-2, 0) are (-2, 2)
        assert axis_model.predict_label(np.array([-2.0, 0.0])) == 1

    def test_tie_breaks_to_smallest_index(self, axis_model):
        assert axis_model.predict_label(np.zeros(2)) == 0

    def test_mlp_identity_passthrough(self):
        model = MlpModel((DenseLayer(np.eye(3), np.zeros(3)),), 3)
        assert model.predict_label(np.array([0.1, 0.7, 0.2])) == 1

    def test_deterministic(self, axis_oracle):
        x = np.array([0.3, -1.2])
        labels = {axis_oracle.predict(x) for _ in range(5)}
        assert len(labels) == 1

    def test_dimension_mismatch(self, axis_oracle):
        with pytest.raises(ValueError, match="dimension"):
            axis_oracle.predict(np.zeros(3))


class TestCounting:
    def test_exactly_once_per_predict(self, axis_oracle):
        for n in range(1, 8):
            axis_oracle.predict(np.array([1.0, float(n)]))
            assert axis_oracle.count == n

    def test_budget_refuses_beyond_limit(self, axis_model):
        oracle = HardLabelOracle(axis_model, budget=2)
        oracle.predict(np.zeros(2))
        oracle.predict(np.zeros(2))
        with pytest.raises(QueryBudgetExceeded):
            oracle.predict(np.zeros(2))
        assert oracle.count == 2  # the refused call is not counted

    def test_peek_is_uncounted(self, axis_oracle):
        axis_oracle.peek(np.zeros(2))
        assert axis_oracle.count == 0

    def test_fresh_resets_counter(self, axis_model):
        oracle = HardLabelOracle(axis_model, budget=5)
        oracle.predict(np.zeros(2))
        clone = oracle.fresh()
        assert clone.count == 0 and clone.counter.budget == 5


class TestClipping:
    def test_clip_changes_the_queried_point(self, axis_model):
        oracle = ClippedOracle(HardLabelOracle(axis_model), 0.0, 1.0)
        # (-2, 0) clips to (0, 0): the tie goes to class 0
        assert oracle.predict(np.array([-2.0, 0.0])) == 0
        assert oracle.count == 1


class TestClosedFormMinDistortion:
    def test_hand_geometry(self, axis_model, axis_example):
        dist, direction = linear_min_distortion(axis_model, axis_example.x, 1)
        assert dist == pytest.approx(2.0)
        assert np.allclose(direction, [1.0, 0.0])

    def test_invariant_under_row_scaling(self, axis_model, axis_example):
        scaled = LinearModel(10.0 * axis_model.W, 10.0 * axis_model.b)
        dist, _ = linear_min_distortion(scaled, axis_example.x, 1)
        assert dist == pytest.approx(2.0)

    def test_three_class_takes_minimum_over_boundaries(self):
        rng = np.random.default_rng(0)
        model = LinearModel(rng.standard_normal((3, 4)), rng.standard_normal(3))
        x0 = rng.standard_normal(4)
        y0 = model.predict_label(x0)
        dist, _ = linear_min_distortion(model, x0, y0)
        per_class = []
        for j in range(3):
            if j == y0:
                continue
            w = model.W[y0] - model.W[j]
            gap = w @ x0 + model.b[y0] - model.b[j]
            per_class.append(gap / np.linalg.norm(w))
        assert dist == pytest.approx(min(per_class))

    def test_rejects_misclassified_point(self, axis_model):
        with pytest.raises(ValueError, match="misclassified"):
            linear_min_distortion(axis_model, np.array([3.0, 0.0]), 1)

    def test_lower_bounds_sampled_rays(self):
        rng = np.random.default_rng(1)
        model = LinearModel(rng.standard_normal((4, 6)), 0.1 * rng.standard_normal(4))
        x0 = rng.uniform(0, 1, 6)
        y0 = model.predict_label(x0)
        dist, _ = linear_min_distortion(model, x0, y0)
        sampled = min(
            linear_ray_distance(model, x0, y0, rng.standard_normal(6)) for _ in range(10_000)
        )
        assert dist <= sampled * 1.01


class TestClosedFormRayDistance:
    def test_axis_ray(self, axis_model, axis_example):
        assert linear_ray_distance(axis_model, axis_example.x, 1, [1.0, 0.0]) == pytest.approx(2.0)

    def test_diagonal_ray(self, axis_model, axis_example):
        expected = 2.0 * math.sqrt(2.0)
        assert linear_ray_distance(axis_model, axis_example.x, 1, [1.0, 1.0]) == pytest.approx(expected)

    def test_ray_away_from_boundary_is_sentinel(self, axis_model, axis_example):
        assert linear_ray_distance(axis_model, axis_example.x, 1, [-1.0, 0.0]) == math.inf

    def test_zero_direction_rejected(self, axis_model, axis_example):
        with pytest.raises(ValueError, match="zero direction"):
            linear_ray_distance(axis_model, axis_example.x, 1, [0.0, 0.0])

    @given(scale=st.floats(min_value=1e-3, max_value=1e3))
    @settings(max_examples=40, deadline=None)
    def test_positive_scale_invariance(self, scale):
        model = LinearModel(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.zeros(2))
        x0 = np.array([-2.0, 0.0])
        base = linear_ray_distance(model, x0, 1, [1.0, 0.4])
        scaled = linear_ray_distance(model, x0, 1, [scale, 0.4 * scale])
        assert scaled == pytest.approx(base, rel=1e-12)


class TestModelFiles:
    def test_identity_round_trip(self, tmp_path):
        path = tmp_path / "m.smlp"
        path.write_text(
            json.dumps(
                {
                    "format": "smlp-v1",
                    "num_classes": 2,
                    "layers": [
                        {"type": "dense", "rows": 2, "cols": 2, "weights": [1, 0, 0, 1], "bias": [0, 0]}
                    ],
                }
            )
        )
        model = load_model(path)
        assert isinstance(model, LinearModel)
        assert model.predict_label(np.array([3.0, 1.0])) == 0

    def test_non_composing_dims(self, tmp_path):
        path = tmp_path / "m.smlp"
        path.write_text(
            json.dumps(
                {
                    "format": "smlp-v1",
                    "num_classes": 4,
                    "layers": [
                        {"type": "dense", "rows": 3, "cols": 2, "weights": [0.0] * 6, "bias": [0.0] * 3},
                        {"type": "dense", "rows": 4, "cols": 2, "weights": [0.0] * 8, "bias": [0.0] * 4},
                    ],
                }
            )
        )
        with pytest.raises(ModelFormatError, match="expects 2 inputs"):
            load_model(path)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "m.smlp"
        path.write_text('{"format": "smlp-v1", "num_classes": 2, "lay')
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_unknown_activation(self, tmp_path):
        path = tmp_path / "m.smlp"
        path.write_text(
            json.dumps(
                {
                    "format": "smlp-v1",
                    "num_classes": 2,
                    "layers": [
                        {"type": "dense", "rows": 2, "cols": 2, "weights": [1, 0, 0, 1], "bias": [0, 0]},
                        {"type": "tanh"},
                    ],
                }
            )
        )
        with pytest.raises(ModelFormatError, match="unknown activation"):
            load_model(path)

    def test_scientific_notation_accepted(self, tmp_path):
        path = tmp_path / "m.smlp"
        path.write_text(
            '{"format": "smlp-v1", "num_classes": 2, "layers": '
            '[{"type": "dense", "rows": 2, "cols": 1, "weights": [1e-3, -2.5E2], "bias": [0, 1e0]}]}'
        )
        model = load_model(path)
        assert model.W[1, 0] == -250.0

    def test_save_load_is_value_identical(self, tmp_path):
        rng = np.random.default_rng(9)
        model = MlpModel(
            (
                DenseLayer(rng.standard_normal((5, 3)), rng.standard_normal(5)),
                "relu",
                DenseLayer(rng.standard_normal((2, 5)), rng.standard_normal(2)),
            ),
            2,
        )
        p1, p2 = tmp_path / "a.smlp", tmp_path / "b.smlp"
        save_model(model, p1)
        loaded = load_model(p1)
        save_model(loaded, p2)
        again = load_model(p2)
        for la, lb in zip(loaded.layers, again.layers):
            if isinstance(la, DenseLayer):
                assert np.array_equal(la.W, lb.W) and np.array_equal(la.b, lb.b)
        assert p1.read_bytes() == p2.read_bytes()


class TestDatasetFiles:
    def test_two_rows(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("1,0.0,0.5\n0,1.0,1.0\n")
        examples = load_dataset(path)
        assert len(examples) == 2 and examples[0].dim == 2
        assert examples[0].y == 1 and np.allclose(examples[1].x, [1.0, 1.0])

    def test_ragged_rows_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("1,0.0,0.5\n0,1.0,1.0,2.0\n")
        with pytest.raises(DatasetFormatError, match="width"):
            load_dataset(path)

    def test_empty_file_is_valid(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("")
        assert load_dataset(path) == []

    def test_non_numeric_field(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("1,0.0,oops\n")
        with pytest.raises(DatasetFormatError):
            load_dataset(path)

    def test_round_trip(self, tmp_path):
        examples = [Example(np.array([0.25, -1.5]), 2), Example(np.array([1e-17, 3.0]), 0)]
        path = tmp_path / "d.csv"
        save_dataset(examples, path)
        loaded = load_dataset(path)
        for a, b in zip(examples, loaded):
            assert a.y == b.y and np.array_equal(a.x, b.x)
