"""Hard-label victim models, query accounting, and model/dataset files.

Victim models expose exactly one thing to an attack: a predicted class
index for a queried input.  The built-in linear and MLP victims also have
analytically known decision boundaries, which the test suites use as
ground truth.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

Label = int

SMLP_FORMAT = "smlp-v1"


class ModelFormatError(ValueError):
    """Model file failed to parse or violates the shape rules."""


class DatasetFormatError(ValueError):
    """Dataset CSV is malformed (ragged rows, non-numeric fields)."""


class QueryBudgetExceeded(RuntimeError):
    """A prediction was requested after the query budget ran out.

    Attacks treat this as a stop signal, not a failure: they catch it and
    report the best adversarial example found so far.
    """

    def __init__(self, budget: int):
        super().__init__(f"query budget of {budget} exhausted")
        self.budget = budget


def _as_float_vector(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Example:
    """A labeled input point; attacks perturb x away from (or toward) a label."""

    x: np.ndarray
    y: Label

    def __post_init__(self):
        x = _as_float_vector(self.x, "x")
        if not np.all(np.isfinite(x)):
            raise ValueError("example features must be finite")
        object.__setattr__(self, "x", x)
        if self.y < 0:
            raise ValueError(f"label must be non-negative, got {self.y}")

    @property
    def dim(self) -> int:
        return self.x.size


@dataclass(frozen=True)
class LinearModel:
    """argmax(W x + b) classifier.  Ties go to the smallest class index."""

    W: np.ndarray  # (num_classes, dim)
    b: np.ndarray  # (num_classes,)

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if W.ndim != 2:
            raise ValueError(f"W must be 2-d, got shape {W.shape}")
        if b.shape != (W.shape[0],):
            raise ValueError(f"bias shape {b.shape} does not match {W.shape[0]} classes")
        if W.shape[0] < 2:
            raise ValueError("need at least 2 classes")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("model weights must be finite")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    @property
    def num_classes(self) -> int:
        return self.W.shape[0]

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.W @ x + self.b

    def predict_label(self, x: np.ndarray) -> Label:
        # np.argmax returns the first maximal entry: smallest index on ties.
        return int(np.argmax(self.W @ x + self.b))


@dataclass(frozen=True)
class DenseLayer:
    W: np.ndarray  # (rows, cols)
    b: np.ndarray  # (rows,)

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise ValueError(f"inconsistent dense layer shapes W{W.shape} b{b.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("layer weights must be finite")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class MlpModel:
    """Feed-forward dense/relu stack; prediction is the argmax of the final
    dense layer's pre-activation output (ties to the smallest index)."""

    layers: tuple
    num_classes: int

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("model needs at least one layer")
        if not isinstance(layers[0], DenseLayer):
            raise ValueError("first layer must be dense")
        if not isinstance(layers[-1], DenseLayer):
            raise ValueError("last layer must be dense")
        width = None
        for layer in layers:
            if isinstance(layer, DenseLayer):
                rows, cols = layer.W.shape
                if width is not None and cols != width:
                    raise ValueError(
                        f"dense layer expects {cols} inputs but receives {width}"
                    )
                width = rows
            elif layer != "relu":
                raise ValueError(f"unknown layer kind: {layer!r}")
        if width != self.num_classes:
            raise ValueError(
                f"final dense layer has {width} rows, expected {self.num_classes} classes"
            )
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        object.__setattr__(self, "layers", layers)

    @property
    def dim(self) -> int:
        return self.layers[0].W.shape[1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        z = x
        for layer in self.layers:
            if isinstance(layer, DenseLayer):
                z = layer.W @ z + layer.b
            else:
                z = np.maximum(z, 0.0)
        return z

    def predict_label(self, x: np.ndarray) -> Label:
        return int(np.argmax(self.forward(x)))


@dataclass
class QueryCounter:
    """Monotone prediction counter with an optional hard budget."""

    budget: int | None = None
    count: int = 0

    def charge(self):
        if self.budget is not None and self.count >= self.budget:
            raise QueryBudgetExceeded(self.budget)
        self.count += 1

    @property
    def remaining(self) -> int | None:
        if self.budget is None:
            return None
        return self.budget - self.count


class HardLabelOracle:
    """Counted hard-label access to a victim model.

    Every `predict` call costs exactly one unit of the budget.  `peek` is
    an uncounted prediction reserved for harness bookkeeping (eligibility
    filtering, verifying a finished adversarial example) and must never be
    used inside an attack loop.
    """

    def __init__(self, model, budget: int | None = None):
        self.model = model
        self.counter = QueryCounter(budget=budget)

    @property
    def dim(self) -> int:
        return self.model.dim

    @property
    def count(self) -> int:
        return self.counter.count

    def predict(self, x: np.ndarray) -> Label:
        if x.shape != (self.model.dim,):
            raise ValueError(
                f"input shape {x.shape} does not match model dimension {self.model.dim}"
            )
        self.counter.charge()
        return self.model.predict_label(x)

    def peek(self, x: np.ndarray) -> Label:
        return self.model.predict_label(x)

    def fresh(self, budget: int | None = None) -> "HardLabelOracle":
        """New oracle over the same model with a zeroed counter."""
        return HardLabelOracle(self.model, budget=self.counter.budget if budget is None else budget)


class ClippedOracle:
    """Oracle wrapper that clips queried points into a box before prediction.

    Off by default everywhere; the underlying models place no constraint on
    the feature domain.
    """

    def __init__(self, inner: HardLabelOracle, lo: float, hi: float):
        if not lo < hi:
            raise ValueError(f"empty clip box [{lo}, {hi}]")
        self.inner = inner
        self.lo = float(lo)
        self.hi = float(hi)

    @property
    def model(self):
        return self.inner.model

    @property
    def counter(self) -> QueryCounter:
        return self.inner.counter

    @property
    def dim(self) -> int:
        return self.inner.dim

    @property
    def count(self) -> int:
        return self.inner.count

    def predict(self, x: np.ndarray) -> Label:
        return self.inner.predict(np.clip(x, self.lo, self.hi))

    def peek(self, x: np.ndarray) -> Label:
        return self.inner.peek(np.clip(x, self.lo, self.hi))

    def fresh(self, budget: int | None = None) -> "ClippedOracle":
        return ClippedOracle(self.inner.fresh(budget), self.lo, self.hi)


# ---------------------------------------------------------------------------
# Closed-form boundary geometry for linear models.
# ---------------------------------------------------------------------------


def _check_predicts(model: LinearModel, x0: np.ndarray, y0: Label):
    if not isinstance(model, LinearModel):
        raise TypeError("closed-form geometry is only defined for LinearModel")
    if model.predict_label(x0) != y0:
        raise ValueError("x0 is already misclassified; nothing to attack")


def linear_min_distortion(model: LinearModel, x0: np.ndarray, y0: Label):
    """Exact minimum distortion for a linear model and the direction achieving it.

    The closest point of the decision boundary to x0 lies on one of the
    pairwise hyperplanes (W_y0 - W_j) . x + (b_y0 - b_j) = 0; the distance
    to each is gap_j / ||W_y0 - W_j||.

    Returns (distance, unit_direction).
    """
    x0 = _as_float_vector(x0, "x0")
    _check_predicts(model, x0, y0)
    w = model.W[y0] - model.W  # (K, d)
    gaps = w @ x0 + (model.b[y0] - model.b)  # (K,)
    norms = np.linalg.norm(w, axis=1)
    best_dist = math.inf
    best_j = None
    for j in range(model.num_classes):
        if j == y0 or norms[j] == 0.0:
            continue
        dist = gaps[j] / norms[j]
        if dist < best_dist:
            best_dist = dist
            best_j = j
    if best_j is None:
        raise ValueError("no reachable competing class")
    return float(best_dist), -w[best_j] / norms[best_j]


def linear_ray_distance(model: LinearModel, x0: np.ndarray, y0: Label, direction) -> float:
    """Distance from x0 to the first label change along direction/.norm.

    Returns math.inf when the ray never leaves class y0 (the caller must
    treat that direction as unusable, not as an error).
    """
    x0 = _as_float_vector(x0, "x0")
    direction = _as_float_vector(direction, "direction")
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        raise ValueError("zero direction")
    _check_predicts(model, x0, y0)
    v = direction / norm
    w = model.W[y0] - model.W
    gaps = w @ x0 + (model.b[y0] - model.b)
    slopes = w @ v
    best = math.inf
    for j in range(model.num_classes):
        if j == y0 or slopes[j] >= 0.0:
            continue
        lam = gaps[j] / -slopes[j]
        if 0.0 <= lam < best:
            best = lam
    return float(best)


# ---------------------------------------------------------------------------
# File formats.
# ---------------------------------------------------------------------------


def _parse_dense(entry: dict, index: int) -> DenseLayer:
    try:
        rows = int(entry["rows"])
        cols = int(entry["cols"])
        weights = entry["weights"]
        bias = entry["bias"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"layer {index}: bad dense fields: {exc}") from exc
    if rows <= 0 or cols <= 0:
        raise ModelFormatError(f"layer {index}: non-positive dense shape {rows}x{cols}")
    if len(weights) != rows * cols:
        raise ModelFormatError(
            f"layer {index}: expected {rows * cols} weights, got {len(weights)}"
        )
    if len(bias) != rows:
        raise ModelFormatError(f"layer {index}: expected {rows} bias entries, got {len(bias)}")
    W = np.asarray(weights, dtype=float).reshape(rows, cols)
    b = np.asarray(bias, dtype=float)
    return DenseLayer(W, b)


def load_model(path):
    """Load an SMLP-v1 model file.

    A file containing a single dense layer loads as a LinearModel (its
    boundary is analytically known); anything else loads as an MlpModel.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"{path}: not a valid model file: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != SMLP_FORMAT:
        raise ModelFormatError(f"{path}: missing or unsupported format tag")
    try:
        num_classes = int(doc["num_classes"])
        raw_layers = doc["layers"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: bad header: {exc}") from exc
    if not isinstance(raw_layers, list) or not raw_layers:
        raise ModelFormatError(f"{path}: layers must be a non-empty list")

    layers = []
    for i, entry in enumerate(raw_layers):
        if not isinstance(entry, dict) or "type" not in entry:
            raise ModelFormatError(f"{path}: layer {i} has no type")
        kind = entry["type"]
        if kind == "dense":
            layers.append(_parse_dense(entry, i))
        elif kind == "relu":
            layers.append("relu")
        else:
            raise ModelFormatError(f"{path}: layer {i}: unknown activation tag {kind!r}")

    try:
        if len(layers) == 1:
            layer = layers[0]
            if layer.W.shape[0] != num_classes:
                raise ValueError(
                    f"final dense layer has {layer.W.shape[0]} rows, "
                    f"expected {num_classes} classes"
                )
            return LinearModel(layer.W, layer.b)
        return MlpModel(tuple(layers), num_classes)
    except ValueError as exc:
        raise ModelFormatError(f"{path}: {exc}") from exc


def save_model(model, path):
    """Write a model as SMLP-v1.  Floats round-trip exactly (shortest repr)."""
    if isinstance(model, LinearModel):
        layers = [DenseLayer(model.W, model.b)]
        num_classes = model.num_classes
    else:
        layers = list(model.layers)
        num_classes = model.num_classes
    entries = []
    for layer in layers:
        if isinstance(layer, DenseLayer):
            rows, cols = layer.W.shape
            entries.append(
                {
                    "type": "dense",
                    "rows": rows,
                    "cols": cols,
                    "weights": [float(v) for v in layer.W.ravel()],
                    "bias": [float(v) for v in layer.b],
                }
            )
        else:
            entries.append({"type": "relu"})
    doc = {"format": SMLP_FORMAT, "num_classes": num_classes, "layers": entries}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_dataset(path) -> list[Example]:
    """Read a header-less `label,f1,...,fd` CSV.  An empty file is valid."""
    examples: list[Example] = []
    width = None
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise DatasetFormatError(f"{path}:{lineno}: need a label and features")
            elif len(row) != width:
                raise DatasetFormatError(
                    f"{path}:{lineno}: row width {len(row)} != {width}"
                )
            try:
                label = int(row[0])
                feats = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: {exc}") from exc
            if label < 0:
                raise DatasetFormatError(f"{path}:{lineno}: negative label {label}")
            examples.append(Example(np.array(feats), label))
    return examples


def save_dataset(examples, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for ex in examples:
            writer.writerow([ex.y] + [repr(float(v)) for v in ex.x])
