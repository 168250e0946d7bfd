"""Seeded synthetic victims and datasets for tests and benchmarks.

Dataset labels are assigned by the generated model itself, so accuracy is
100% by construction and every example is eligible for untargeted runs.
"""

from __future__ import annotations

import numpy as np

from .oracle import DenseLayer, Example, LinearModel, MlpModel


def make_linear_model(dim: int, classes: int, rng: np.random.Generator) -> LinearModel:
    if dim < 1 or classes < 2:
        raise ValueError("need dim >= 1 and classes >= 2")
    W = rng.standard_normal((classes, dim)) / np.sqrt(dim)
    b = 0.1 * rng.standard_normal(classes)
    return LinearModel(W, b)


def make_mlp_model(
    dim: int, classes: int, hidden: tuple[int, ...], rng: np.random.Generator
) -> MlpModel:
    if dim < 1 or classes < 2:
        raise ValueError("need dim >= 1 and classes >= 2")
    if any(h < 1 for h in hidden):
        raise ValueError("hidden widths must be positive")
    layers: list = []
    width = dim
    for h in hidden:
        layers.append(
            DenseLayer(
                rng.standard_normal((h, width)) * np.sqrt(2.0 / width),
                0.1 * rng.standard_normal(h),
            )
        )
        layers.append("relu")
        width = h
    layers.append(
        DenseLayer(
            rng.standard_normal((classes, width)) * np.sqrt(2.0 / width),
            0.1 * rng.standard_normal(classes),
        )
    )
    return MlpModel(tuple(layers), classes)


def make_dataset(model, count: int, rng: np.random.Generator) -> list[Example]:
    """Uniform [0, 1]^d points labeled by the model."""
    if count < 0:
        raise ValueError("count must be non-negative")
    examples = []
    for _ in range(count):
        x = rng.uniform(0.0, 1.0, model.dim)
        examples.append(Example(x, model.predict_label(x)))
    return examples
