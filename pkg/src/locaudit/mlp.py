"""One-hidden-layer sigmoid MLP used as a membership meta-classifier.

Includes a from-scratch forward/backward pass, constructive weight
encodings of the one- and two-threshold decision rules, and weight
diagnostics for inspecting what a trained model learned.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit as sigmoid

from .data import as_rng


@dataclass(frozen=True)
class MlpModel:
    """Weights of an n_in -> n_hidden -> 1 sigmoid network.

    ``hidden_weights`` is (n_in + 1) x n_hidden with the bias in the last
    row; ``output_weights`` has n_hidden + 1 entries with the bias last.
    """

    hidden_weights: np.ndarray
    output_weights: np.ndarray

    def __post_init__(self):
        w1 = np.asarray(self.hidden_weights, dtype=float)
        w2 = np.asarray(self.output_weights, dtype=float)
        if w1.ndim != 2 or w2.ndim != 1:
            raise ValueError("hidden weights must be 2-D and output weights 1-D")
        if w2.shape[0] != w1.shape[1] + 1:
            raise ValueError("output weights must have n_hidden + 1 entries")
        if not (np.isfinite(w1).all() and np.isfinite(w2).all()):
            raise ValueError("weights must be finite")
        for arr in (w1, w2):
            arr.setflags(write=False)
        object.__setattr__(self, "hidden_weights", w1)
        object.__setattr__(self, "output_weights", w2)

    @property
    def n_in(self) -> int:
        return self.hidden_weights.shape[0] - 1

    @property
    def n_hidden(self) -> int:
        return self.hidden_weights.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 100
    batch_size: int = 0  # 0 means full batch
    seed: int = 0
    optimizer: str = "gd"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 0:
            raise ValueError("batch size must be non-negative")
        if self.optimizer not in ("gd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def init_model(n_in: int, n_hidden: int | None = None, seed=None) -> MlpModel:
    """Uniform [-1/sqrt(n_in), 1/sqrt(n_in)] initialization; width defaults to n_in."""
    if n_in < 1:
        raise ValueError("model needs at least one input")
    if n_hidden is None:
        n_hidden = n_in
    rng = as_rng(seed)
    bound = 1.0 / math.sqrt(n_in)
    w1 = rng.uniform(-bound, bound, size=(n_in + 1, n_hidden))
    w2 = rng.uniform(-bound, bound, size=n_hidden + 1)
    return MlpModel(w1, w2)


def _forward(model: MlpModel, x: np.ndarray):
    hidden = sigmoid(x @ model.hidden_weights[:-1] + model.hidden_weights[-1])
    out = sigmoid(hidden @ model.output_weights[:-1] + model.output_weights[-1])
    return hidden, out


def mlp_forward(model: MlpModel, x):
    """Network output in (0, 1) for one input vector or a batch of rows."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.n_in:
        raise ValueError(f"expected {model.n_in} inputs, got {x.shape[1]}")
    _, out = _forward(model, x)
    return float(out[0]) if single else out


def _gradients(model: MlpModel, x: np.ndarray, y: np.ndarray):
    """Mean binary cross-entropy loss and its weight gradients."""
    hidden, out = _forward(model, x)
    n = len(x)
    eps = 1e-12
    loss = -np.mean(y * np.log(out + eps) + (1.0 - y) * np.log(1.0 - out + eps))
    d_out = (out - y) / n
    g_w2 = np.concatenate([hidden.T @ d_out, [d_out.sum()]])
    d_hidden = np.outer(d_out, model.output_weights[:-1]) * hidden * (1.0 - hidden)
    g_w1 = np.vstack([x.T @ d_hidden, d_hidden.sum(axis=0)])
    return loss, g_w1, g_w2


def mlp_train(
    model: MlpModel, features: np.ndarray, labels: np.ndarray, cfg: TrainConfig
) -> MlpModel:
    """Gradient-descent training on binary cross-entropy; returns a new model."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.n_in:
        raise ValueError(f"features must be (n, {model.n_in})")
    if y.shape != (len(x),):
        raise ValueError("labels must parallel the feature rows")
    w1 = np.array(model.hidden_weights)
    w2 = np.array(model.output_weights)
    rng = as_rng(cfg.seed)
    batch = cfg.batch_size or len(x)
    if cfg.optimizer == "adam":
        m1 = np.zeros_like(w1)
        v1 = np.zeros_like(w1)
        m2 = np.zeros_like(w2)
        v2 = np.zeros_like(w2)
        b1, b2_, adam_eps, step = 0.9, 0.999, 1e-8, 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(x)) if batch < len(x) else np.arange(len(x))
        for start in range(0, len(x), batch):
            idx = order[start : start + batch]
            current = MlpModel(w1, w2)
            loss, g_w1, g_w2 = _gradients(current, x[idx], y[idx])
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"training diverged: loss became {loss!r}"
                )
            if cfg.optimizer == "gd":
                w1 = w1 - cfg.learning_rate * g_w1
                w2 = w2 - cfg.learning_rate * g_w2
            else:
                step += 1
                m1 = b1 * m1 + (1 - b1) * g_w1
                v1 = b2_ * v1 + (1 - b2_) * g_w1**2
                m2 = b1 * m2 + (1 - b1) * g_w2
                v2 = b2_ * v2 + (1 - b2_) * g_w2**2
                c1 = 1 - b1**step
                c2 = 1 - b2_**step
                w1 = w1 - cfg.learning_rate * (m1 / c1) / (np.sqrt(v1 / c2) + adam_eps)
                w2 = w2 - cfg.learning_rate * (m2 / c1) / (np.sqrt(v2 / c2) + adam_eps)
    return MlpModel(w1, w2)


def training_loss(model: MlpModel, features, labels) -> float:
    loss, _, _ = _gradients(model, np.asarray(features, float), np.asarray(labels, float))
    return float(loss)


# ---------------------------------------------------------------------------
# constructive encodings of the threshold rules


def encode_one_threshold(n_in: int, T: float, a: float, b: float) -> MlpModel:
    """Single hidden node computing sigmoid(a (sum(x) - T)), thresholded at 1/2.

    Output >= 1/2 exactly when sum(x) >= T, for any a, b > 0.
    """
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    w1 = np.full((n_in + 1, 1), a, dtype=float)
    w1[-1, 0] = -a * T
    w2 = np.array([b, -0.5 * b], dtype=float)
    return MlpModel(w1, w2)


def encode_two_threshold(
    n_in: int, per_cell_T, T: float, a: float, b: float
) -> MlpModel:
    """Diagonal hidden layer of per-cell indicators, summed and thresholded at T.

    Hidden node i computes sigmoid(a (x_i - T_i)); the output layer fires
    when the indicator sum reaches T (output bias -b (T - 1/2)).
    """
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    per_cell_T = np.asarray(per_cell_T, dtype=float)
    if per_cell_T.shape != (n_in,):
        raise ValueError(f"per_cell_T must have length {n_in}")
    w1 = np.zeros((n_in + 1, n_in))
    np.fill_diagonal(w1[:-1], a)
    w1[-1] = -a * per_cell_T
    w2 = np.concatenate([np.full(n_in, b), [-b * (T - 0.5)]])
    return MlpModel(w1, w2)


def step_one_threshold(x, T: float) -> np.ndarray:
    """Hard one-threshold rule: 1 iff sum(x) >= T."""
    return (np.atleast_2d(np.asarray(x, float)).sum(axis=1) >= T).astype(float)


def step_two_threshold(x, per_cell_T, T: float) -> np.ndarray:
    """Hard two-threshold rule: 1 iff #{x_i >= T_i} >= T."""
    x = np.atleast_2d(np.asarray(x, float))
    counts = (x >= np.asarray(per_cell_T, float)).sum(axis=1)
    return (counts >= T).astype(float)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class WeightReport:
    first_layer_cv: float
    diagonal_dominance_ratio: float | None
    bias_summary: dict

    def to_json(self) -> dict:
        ratio = self.diagonal_dominance_ratio
        return {
            "first_layer_cv": self.first_layer_cv,
            "diagonal_dominance_ratio": (
                None if ratio is None else ("inf" if math.isinf(ratio) else ratio)
            ),
            "bias_summary": self.bias_summary,
        }


def weight_report(model: MlpModel) -> WeightReport:
    """Dispersion and diagonal-dominance diagnostics of the first layer."""
    weights = model.hidden_weights[:-1]
    mean = np.abs(weights.mean())
    std = weights.std(ddof=0)
    cv = float("inf") if mean == 0 and std > 0 else float(std / mean) if mean else 0.0
    ratio = None
    if weights.shape[0] == weights.shape[1]:
        diag = np.abs(np.diag(weights)).mean()
        off_mask = ~np.eye(weights.shape[0], dtype=bool)
        off = np.abs(weights[off_mask]).mean() if off_mask.any() else 0.0
        ratio = float("inf") if off == 0 else float(diag / off)
    biases = model.hidden_weights[-1]
    summary = {
        "hidden_bias_mean": float(biases.mean()),
        "hidden_bias_std": float(biases.std(ddof=0)),
        "hidden_bias_min": float(biases.min()),
        "hidden_bias_max": float(biases.max()),
        "output_bias": float(model.output_weights[-1]),
    }
    return WeightReport(cv, ratio, summary)


def _sample_off_boundary(
    rng, n: int, n_in: int, margin: float, predicate
) -> np.ndarray:
    """Uniform [0, 1] samples rejected while within ``margin`` of a decision boundary."""
    out = np.empty((0, n_in))
    while len(out) < n:
        x = rng.random((2 * (n - len(out)) + 8, n_in))
        out = np.vstack([out, x[predicate(x)]])
    return out[:n]


def approximation_error_sweep(
    n_in: int,
    a_grid,
    b_grid,
    sample_count: int,
    seed=None,
    T: float | None = None,
    per_cell_T=None,
    margin: float = 0.05,
) -> list[dict]:
    """Encoding-vs-step-rule error over an (a, b) grid of weight magnitudes.

    Exactly one of ``T`` (one-threshold rule) or ``per_cell_T`` plus ``T``
    (two-threshold rule) selects the rule; inputs are uniform in [0, 1]^n
    kept ``margin`` away from every decision boundary.
    """
    a_grid, b_grid = list(a_grid), list(b_grid)
    if not a_grid or not b_grid:
        raise ValueError("grids must be non-empty")
    if T is None:
        raise ValueError("a rule threshold T is required")
    rng = as_rng(seed)
    if per_cell_T is None:
        predicate = lambda x: np.abs(x.sum(axis=1) - T) >= margin
        oracle = lambda x: step_one_threshold(x, T)
        build = lambda a, b: encode_one_threshold(n_in, T, a, b)
    else:
        per = np.asarray(per_cell_T, dtype=float)

        def predicate(x):
            return (np.abs(x - per) >= margin).all(axis=1)

        oracle = lambda x: step_two_threshold(x, per, T)
        build = lambda a, b: encode_two_threshold(n_in, per, T, a, b)
    x = _sample_off_boundary(rng, sample_count, n_in, margin, predicate)
    truth = oracle(x)
    rows = []
    for a in a_grid:
        for b in b_grid:
            out = mlp_forward(build(a, b), x)
            rows.append(
                {
                    "a": float(a),
                    "b": float(b),
                    "mean_abs_error": float(np.abs(out - truth).mean()),
                    "disagreement": float(((out >= 0.5) != (truth >= 0.5)).mean()),
                }
            )
    return rows


# ---------------------------------------------------------------------------
# serialization


def save_model(model: MlpModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(
            {
                "hidden_weights": model.hidden_weights.tolist(),
                "output_weights": model.output_weights.tolist(),
            },
            fh,
        )


def load_model(path) -> MlpModel:
    with open(path) as fh:
        obj = json.load(fh)
    return MlpModel(np.array(obj["hidden_weights"]), np.array(obj["output_weights"]))
