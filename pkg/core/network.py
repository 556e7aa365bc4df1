"""
Single-hidden-layer multi-label network: training, prediction, persistence.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from .config import Config
from .dataset import Dataset, apply_assignment
from .errors import DimensionMismatch, NonFiniteLoss
from .models import Assignment, EncodingSlice, TrainConfig, TrainMeta

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
PARAMETERS = ("w1", "b1", "w2", "b2")


def relu(z: np.ndarray) -> np.ndarray:
    """Elementwise max(z, 0)."""
    return np.maximum(z, 0.0)


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Logistic function."""
    # tanh form does not overflow for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True, eq=False)
class MlpModel:
    """
    relu hidden layer, sigmoid (or identity) output.

    ``encoding_map`` ties encoded columns back to original features; when it
    is empty every encoded column is its own feature ``x<j>``.
    """
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    output_activation: Literal["sigmoid", "identity"] = "sigmoid"
    encoding_map: Tuple[EncodingSlice, ...] = ()
    label_names: Tuple[str, ...] = ()
    train_meta: Optional[TrainMeta] = None
    hidden_activation: str = field(default="relu", init=False)

    def __post_init__(self):
        for name in PARAMETERS:
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        p, h = self.w1.shape
        if self.b1.shape != (h,):
            raise DimensionMismatch(h, self.b1.shape[0], "b1 length")
        if self.w2.shape[0] != h:
            raise DimensionMismatch(h, self.w2.shape[0], "w2 rows")
        if self.b2.shape != (self.w2.shape[1],):
            raise DimensionMismatch(self.w2.shape[1], self.b2.shape[0], "b2 length")
        if not all(np.all(np.isfinite(getattr(self, name))) for name in PARAMETERS):
            raise ValueError("Model weights must be finite")

        if not self.encoding_map:
            object.__setattr__(self, "encoding_map", tuple(
                EncodingSlice(feature=f"x{j}", kind="numeric", start=j, stop=j + 1) for j in range(p)
            ))
        elif self.encoding_map[-1].stop != p:
            raise DimensionMismatch(p, self.encoding_map[-1].stop, "encoding width")
        if not self.label_names:
            object.__setattr__(self, "label_names", tuple(f"y{l}" for l in range(self.n_labels)))

    @property
    def p(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.w1.shape[1]

    @property
    def n_labels(self) -> int:
        return self.w2.shape[1]

    @property
    def n_features(self) -> int:
        return len(self.encoding_map)

    @property
    def feature_names(self) -> List[str]:
        return [s.feature for s in self.encoding_map]

    @property
    def group_matrix(self) -> np.ndarray:
        """n x p indicator of which encoded columns belong to each feature."""
        groups = np.zeros((self.n_features, self.p))
        for i, s in enumerate(self.encoding_map):
            groups[i, s.start:s.stop] = 1.0
        return groups

    def params(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAMETERS}

    def with_params(self, params: Dict[str, np.ndarray], train_meta: Optional[TrainMeta] = None) -> "MlpModel":
        """Same encoding and labels with new weights."""
        return MlpModel(
            **params,
            output_activation=self.output_activation,
            encoding_map=self.encoding_map,
            label_names=self.label_names,
            train_meta=train_meta if train_meta is not None else self.train_meta,
        )


def _as_rows(model: MlpModel, rows: np.ndarray) -> np.ndarray:
    """Validate width and promote a single row to a matrix."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows.reshape(1, -1)
    if rows.shape[-1] != model.p:
        raise DimensionMismatch(model.p, rows.shape[-1])
    return rows


def forward(model: MlpModel, rows: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hidden pre-activations, hidden activations and output logits."""
    z1 = rows @ model.w1 + model.b1
    a1 = relu(z1)
    logits = a1 @ model.w2 + model.b2
    return z1, a1, logits


def output(model: MlpModel, logits: np.ndarray) -> np.ndarray:
    """Apply the output activation to logits."""
    return sigmoid(logits) if model.output_activation == "sigmoid" else logits


def predict(model: MlpModel, encoded_rows: np.ndarray) -> np.ndarray:
    """Per-label scores, one row per input row (rows may be batched along leading axes)."""
    rows = _as_rows(model, encoded_rows)
    _, _, logits = forward(model, rows)
    return output(model, logits)


def predict_logits(model: MlpModel, encoded_rows: np.ndarray) -> np.ndarray:
    """Pre-activation outputs, before the sigmoid."""
    rows = _as_rows(model, encoded_rows)
    return forward(model, rows)[2]


def mean_prediction(model: MlpModel, dataset: Dataset, assignment: Assignment) -> np.ndarray:
    """Per-label mean prediction with the assignment fixed on every row."""
    fixed = apply_assignment(dataset, assignment)
    return predict(model, fixed.encoded).mean(axis=0)


def init_params(p: int, hidden_size: int, n_labels: int, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases."""
    r1 = np.sqrt(6.0 / (p + hidden_size))
    r2 = np.sqrt(6.0 / (hidden_size + n_labels))
    return {
        "w1": rng.uniform(-r1, r1, size=(p, hidden_size)),
        "b1": np.zeros(hidden_size),
        "w2": rng.uniform(-r2, r2, size=(hidden_size, n_labels)),
        "b2": np.zeros(n_labels),
    }


def loss_and_gradients(
    model: MlpModel, encoded: np.ndarray, targets: np.ndarray
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Mean binary cross-entropy over samples and labels, with analytic gradients."""
    encoded = _as_rows(model, encoded)
    targets = np.asarray(targets, dtype=float)
    m, n_labels = targets.shape

    z1, a1, logits = forward(model, encoded)
    # log(1 + e^z) - y z is the cross-entropy of sigmoid(z)
    loss = float(np.mean(np.logaddexp(0.0, logits) - targets * logits))

    d_logits = (sigmoid(logits) - targets) / (m * n_labels)
    d_a1 = d_logits @ model.w2.T
    d_z1 = d_a1 * (z1 > 0)
    grads = {
        "w1": encoded.T @ d_z1,
        "b1": d_z1.sum(axis=0),
        "w2": a1.T @ d_logits,
        "b2": d_logits.sum(axis=0),
    }
    return loss, grads


def evaluate(model: MlpModel, dataset: Dataset) -> Dict[str, object]:
    """Mean loss and per-label accuracy at threshold 0.5."""
    loss, _ = loss_and_gradients(model, dataset.encoded, dataset.targets)
    scores = predict(model, dataset.encoded)
    accuracy = ((scores >= 0.5) == (dataset.targets == 1)).mean(axis=0)
    return {"loss": loss, "accuracy": accuracy.tolist()}


def _holdout_split(m: int, fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Seeded (train, holdout) row indices."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(m)
    n_holdout = int(round(fraction * m))
    return np.sort(order[n_holdout:]), np.sort(order[:n_holdout])


def train(dataset: Dataset, config: Optional[TrainConfig] = None) -> MlpModel:
    """
    Full-batch gradient descent on the mean per-label cross-entropy.

    Deterministic for a fixed seed. With ``holdout_fraction > 0`` a seeded
    split is kept aside and only reported in ``train_meta``.
    """
    config = config or TrainConfig()
    rng = np.random.default_rng(config.seed)

    train_set, holdout_set = dataset, None
    if config.holdout_fraction > 0:
        train_rows, holdout_rows = _holdout_split(dataset.m, config.holdout_fraction, config.seed)
        if len(holdout_rows) == 0 or len(train_rows) == 0:
            logger.warning(f"Holdout fraction {config.holdout_fraction} leaves an empty split on {dataset.m} rows; ignoring")
        else:
            train_set, holdout_set = dataset.subset(train_rows), dataset.subset(holdout_rows)

    params = init_params(dataset.p, config.hidden_size, len(dataset.label_names), rng)
    model = MlpModel(
        **params,
        encoding_map=dataset.encoding_map,
        label_names=tuple(dataset.label_names),
    )

    initial_loss = None
    for epoch in range(config.epochs):
        loss, grads = loss_and_gradients(model, train_set.encoded, train_set.targets)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise NonFiniteLoss(epoch)
        if initial_loss is None:
            initial_loss = loss
        if epoch % 500 == 0:
            logger.debug(f"epoch {epoch}: loss {loss:.6f}")
        params = {name: params[name] - config.learning_rate * grads[name] for name in PARAMETERS}
        if not all(np.all(np.isfinite(v)) for v in params.values()):
            raise NonFiniteLoss(epoch)
        model = model.with_params(params)

    final_loss, _ = loss_and_gradients(model, train_set.encoded, train_set.targets)
    if not np.isfinite(final_loss):
        raise NonFiniteLoss(config.epochs)

    meta = TrainMeta(
        seed=config.seed,
        epochs=config.epochs,
        learning_rate=config.learning_rate,
        hidden_size=config.hidden_size,
        initial_loss=initial_loss,
        final_loss=final_loss,
    )
    if holdout_set is not None:
        metrics = evaluate(model, holdout_set)
        meta.holdout_loss = metrics["loss"]
        meta.holdout_accuracy = metrics["accuracy"]

    logger.info(f"Trained {dataset.p}x{config.hidden_size}x{model.n_labels} network: "
                f"loss {initial_loss:.4f} -> {final_loss:.4f} over {config.epochs} epochs")
    return model.with_params(params, train_meta=meta)


def model_to_dict(model: MlpModel) -> dict:
    """Versioned JSON document with row-major weights."""
    return {
        "spec_version": Config.SPEC_VERSION,
        "format_version": MODEL_FORMAT_VERSION,
        "dimensions": {"p": model.p, "hidden": model.hidden_size, "labels": model.n_labels},
        "hidden_activation": model.hidden_activation,
        "output_activation": model.output_activation,
        "labels": list(model.label_names),
        "encoding_map": [s.model_dump() for s in model.encoding_map],
        "weights": {name: getattr(model, name).tolist() for name in PARAMETERS},
        "train_meta": model.train_meta.model_dump() if model.train_meta else None,
    }


def model_from_dict(document: dict) -> MlpModel:
    """Rebuild a model from model_to_dict output."""
    if document.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"Unsupported model format version: {document.get('format_version')}")
    weights = document["weights"]
    model = MlpModel(
        **{name: np.asarray(weights[name], dtype=float) for name in PARAMETERS},
        output_activation=document["output_activation"],
        encoding_map=tuple(EncodingSlice(**s) for s in document["encoding_map"]),
        label_names=tuple(document["labels"]),
        train_meta=TrainMeta(**document["train_meta"]) if document.get("train_meta") else None,
    )
    dims = document["dimensions"]
    if (model.p, model.hidden_size, model.n_labels) != (dims["p"], dims["hidden"], dims["labels"]):
        raise DimensionMismatch(dims["p"], model.p, "stored dimensions")
    return model
