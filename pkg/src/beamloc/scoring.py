"""Class scoring: softmax heads over feature maps and co-occurrence rescoring.

The search engine only needs a deterministic map from a feature map to a
vector of class scores; ``ScoringHead`` is that contract. A plain linear
softmax head is provided for desk-scale use, and real network heads attach
through the bridge. Label co-occurrence statistics turn the softmax scores
into combined ranking scores (``rescore``); the sklearn-style
``CooccurrenceRescorer`` wraps the fit/transform view of the same math.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Protocol, runtime_checkable

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import DimensionError
from .tensors import FeatureMap
from .validation import as_float_array, check_index, check_nonnegative, check_vector


def softmax(logits) -> np.ndarray:
    """Numerically stable softmax; rejects empty input, sums to 1."""
    arr = check_vector(logits, name="logits")
    if arr.size == 0:
        raise ValueError("softmax of an empty vector is undefined")
    shifted = arr - arr.max()
    exps = np.exp(shifted)
    return exps / exps.sum()


@runtime_checkable
class ScoringHead(Protocol):
    """Anything that deterministically scores a feature map into K classes."""

    class_count: int

    def score(self, fmap: FeatureMap) -> np.ndarray: ...


class LinearSoftmaxHead:
    """softmax(W @ flatten(map) + b) over the FMAP1 flattening order."""

    def __init__(self, weights, bias, grid_size: int, channels: int):
        weights = as_float_array(weights, "weights")
        bias = check_vector(bias, name="bias")
        if weights.ndim != 2 or weights.shape[0] != bias.shape[0]:
            raise DimensionError(
                f"weights {weights.shape} and bias {bias.shape} disagree on class count"
            )
        if weights.shape[1] != grid_size * grid_size * channels:
            raise DimensionError(
                f"weights expect {weights.shape[1]} features, grid says "
                f"{grid_size}x{grid_size}x{channels}"
            )
        self.weights = weights
        self.bias = bias
        self.grid_size = grid_size
        self.channels = channels
        self.class_count = weights.shape[0]

    def score(self, fmap: FeatureMap) -> np.ndarray:
        if fmap.grid_size != self.grid_size or fmap.channels != self.channels:
            raise DimensionError(
                f"feature map {fmap.grid_size}x{fmap.grid_size}x{fmap.channels} does not "
                f"match head layout {self.grid_size}x{self.grid_size}x{self.channels}"
            )
        return softmax(self.weights @ fmap.flatten() + self.bias)

    def save(self, directory) -> None:
        """Write a JSON manifest plus raw float32 LE blobs for the parameters."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        manifest = {
            "kind": "linear_softmax",
            "classes": self.class_count,
            "grid_size": self.grid_size,
            "channels": self.channels,
            "weights": "weights.f32",
            "bias": "bias.f32",
        }
        (directory / "head.json").write_text(json.dumps(manifest, sort_keys=True) + "\n")
        (directory / "weights.f32").write_bytes(self.weights.astype("<f4").tobytes(order="C"))
        (directory / "bias.f32").write_bytes(self.bias.astype("<f4").tobytes())

    @classmethod
    def load(cls, directory) -> "LinearSoftmaxHead":
        directory = Path(directory)
        manifest = json.loads((directory / "head.json").read_text())
        if manifest.get("kind") != "linear_softmax":
            raise ValueError(f"unsupported head kind {manifest.get('kind')!r}")
        classes = int(manifest["classes"])
        grid_size = int(manifest["grid_size"])
        channels = int(manifest["channels"])
        features = grid_size * grid_size * channels
        weights = np.frombuffer(
            (directory / manifest["weights"]).read_bytes(), dtype="<f4"
        ).astype(np.float64)
        bias = np.frombuffer((directory / manifest["bias"]).read_bytes(), dtype="<f4").astype(
            np.float64
        )
        return cls(weights.reshape(classes, features), bias, grid_size, channels)


def build_cooccurrence(label_sets: Iterable[Iterable[int]], class_count: int) -> np.ndarray:
    """Pairwise label prior from per-image label sets.

    Entry (i, j) is count(images with both i and j) / count(images with j),
    or 0 when class j never occurs. The diagonal is 1 for every class with
    at least one sample.
    """
    if class_count < 1:
        raise ValueError(f"class_count must be >= 1, got {class_count}")
    joint = np.zeros((class_count, class_count), dtype=np.float64)
    for labels in label_sets:
        present = sorted({check_index(lbl, class_count, "label") for lbl in labels})
        for i in present:
            for j in present:
                joint[i, j] += 1.0
    counts = np.diag(joint).copy()
    matrix = np.zeros_like(joint)
    nonzero = counts > 0
    matrix[:, nonzero] = joint[:, nonzero] / counts[nonzero]
    return matrix


def rescore(unary, cooccurrence, alpha: float) -> np.ndarray:
    """Combine unary class scores with alpha-weighted pairwise support.

    combined[i] = unary[i] + alpha * sum_{j != i} p(i|j) * unary[j]. The
    output ranks classes and is deliberately not renormalized.
    """
    alpha = check_nonnegative(alpha, "alpha")
    unary = check_vector(unary, name="unary scores")
    matrix = as_float_array(cooccurrence, "cooccurrence")
    if matrix.shape != (unary.size, unary.size):
        raise DimensionError(
            f"cooccurrence {matrix.shape} does not match {unary.size} classes"
        )
    pairwise = matrix @ unary - np.diag(matrix) * unary
    return unary + alpha * pairwise


def save_cooccurrence_csv(matrix, path) -> None:
    matrix = as_float_array(matrix, "cooccurrence")
    lines = [",".join(repr(float(v)) for v in row) for row in matrix]
    Path(path).write_text("\n".join(lines) + "\n")


def load_cooccurrence_csv(path) -> np.ndarray:
    rows = [
        [float(cell) for cell in line.split(",")]
        for line in Path(path).read_text().strip().splitlines()
    ]
    matrix = as_float_array(rows, "cooccurrence")
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionError(f"cooccurrence CSV must be square, got {matrix.shape}")
    return matrix


class CooccurrenceRescorer(BaseEstimator, TransformerMixin):
    """Fit a label co-occurrence prior, then transform unary score vectors.

    Parameters
    ----------
    alpha : float
        Weight of the pairwise term; 0 leaves scores untouched.
    class_count : int or None
        Number of classes; inferred from the training labels when None.
    """

    def __init__(self, alpha: float = 0.5, class_count: int | None = None):
        self.alpha = alpha
        self.class_count = class_count

    def fit(self, label_sets, y=None):
        check_nonnegative(self.alpha, "alpha")
        label_sets = [list(labels) for labels in label_sets]
        if self.class_count is not None:
            k = int(self.class_count)
        else:
            k = 1 + max((max(labels) for labels in label_sets if labels), default=-1)
            if k < 1:
                raise ValueError("cannot infer class count from empty label sets")
        self.matrix_ = build_cooccurrence(label_sets, k)
        self.n_classes_ = k
        return self

    def transform(self, scores) -> np.ndarray:
        if not hasattr(self, "matrix_"):
            raise NotFittedError("CooccurrenceRescorer must be fitted before transform")
        arr = as_float_array(scores, "scores")
        single = arr.ndim == 1
        rows = arr[np.newaxis, :] if single else arr
        if rows.ndim != 2 or rows.shape[1] != self.n_classes_:
            raise DimensionError(f"scores {arr.shape} do not match {self.n_classes_} classes")
        combined = np.stack([rescore(row, self.matrix_, self.alpha) for row in rows])
        return combined[0] if single else combined
