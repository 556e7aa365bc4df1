"""
Per-feature, per-label attributions: exact Shapley, Monte Carlo Shapley and
DeepLIFT rescale / DeepSHAP.

All methods attribute to ORIGINAL features: the encoded columns of a feature
move together in coalitions, and rescale contributions are summed over them.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .config import Config
from .dataset import Dataset
from .errors import DimensionMismatch, TooManyFeatures
from .network import MlpModel, forward, predict, predict_logits, sigmoid

logger = logging.getLogger(__name__)

Method = Literal["exact", "montecarlo", "deepshap"]
Scale = Literal["probability", "logit"]

# rows scored per model call when building hybrid batches
_BATCH_ROWS = 200_000


@dataclass(frozen=True, eq=False)
class ReferenceSet:
    """Background rows standing in for "feature absent"."""
    rows: np.ndarray
    seed: int
    indices: Optional[np.ndarray] = None

    def __post_init__(self):
        rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if rows.shape[0] < 1:
            raise ValueError("A reference set needs at least one row")
        object.__setattr__(self, "rows", rows)

    @property
    def size(self) -> int:
        return self.rows.shape[0]


def sample_references(dataset: Dataset, size: int = Config.REFERENCE_SIZE, seed: int = 0) -> ReferenceSet:
    """Random reference rows; without replacement whenever size <= m."""
    rng = np.random.default_rng(seed)
    replace = size > dataset.m
    indices = rng.choice(dataset.m, size=size, replace=replace)
    return ReferenceSet(rows=dataset.encoded[indices], seed=seed, indices=indices)


@dataclass(frozen=True, eq=False)
class AttributionTensor:
    """samples x features x labels attribution scores."""
    values: np.ndarray
    method: Method
    baseline: np.ndarray
    feature_names: Tuple[str, ...]
    label_names: Tuple[str, ...]
    scale: Scale = "probability"

    def __post_init__(self):
        assert np.all(np.isfinite(self.values)), "attributions must be finite"
        s, n, n_labels = self.values.shape
        if n != len(self.feature_names) or n_labels != len(self.label_names):
            raise DimensionMismatch(n, len(self.feature_names), "feature count")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    def feature_index(self, feature: str) -> int:
        return self.feature_names.index(feature)

    def to_frame(self) -> pd.DataFrame:
        """Long table: sample, feature, label, value."""
        s, n, n_labels = self.values.shape
        sample, feature, label = np.meshgrid(np.arange(s), np.arange(n), np.arange(n_labels), indexing="ij")
        return pd.DataFrame({
            "sample": sample.ravel(),
            "feature": np.asarray(self.feature_names, dtype=object)[feature.ravel()],
            "label": np.asarray(self.label_names, dtype=object)[label.ravel()],
            "value": self.values.ravel(),
        })

    def to_dict(self) -> dict:
        return {
            "spec_version": Config.SPEC_VERSION,
            "method": self.method,
            "scale": self.scale,
            "features": list(self.feature_names),
            "labels": list(self.label_names),
            "baseline": self.baseline.tolist(),
            "values": self.values.tolist(),
        }


def _scorer(model: MlpModel, scale: Scale) -> Callable[[np.ndarray], np.ndarray]:
    """Row scoring function on the probability or logit scale."""
    if scale == "logit":
        return lambda rows: predict_logits(model, rows)
    return lambda rows: predict(model, rows)


def _as_row(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Validate a single encoded row."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != model.p:
        raise DimensionMismatch(model.p, x.shape[0])
    return x


def _coalition_values(
    model: MlpModel, x: np.ndarray, refs: ReferenceSet, column_masks: np.ndarray, scale: Scale
) -> np.ndarray:
    """
    v(S) for each row of ``column_masks``: mean over references of the score
    of the hybrid row taking x where the mask is set and the reference elsewhere.
    """
    score = _scorer(model, scale)
    k, r = column_masks.shape[0], refs.size
    chunk = max(1, _BATCH_ROWS // r)
    values = np.empty((k, model.n_labels))
    for start in range(0, k, chunk):
        masks = column_masks[start:start + chunk, None, :] > 0
        hybrids = np.where(masks, x[None, None, :], refs.rows[None, :, :])
        values[start:start + chunk] = score(hybrids).mean(axis=1)
    return values


def shapley_exact(
    model: MlpModel,
    x: np.ndarray,
    refs: ReferenceSet,
    scale: Scale = "probability",
    exact_limit: int = Config.EXACT_LIMIT,
) -> np.ndarray:
    """
    Shapley values by full subset enumeration, n x L.

    phi_i = sum over S not containing i of |S|!(n-|S|-1)!/n! (v(S+i) - v(S)).
    """
    n = model.n_features
    if n > exact_limit:
        raise TooManyFeatures(n, exact_limit)
    x = _as_row(model, x)

    # row k of `subsets` has feature 0 as its most significant bit
    subsets = np.array(list(itertools.product([0, 1], repeat=n)), dtype=float)
    values = _coalition_values(model, x, refs, subsets @ model.group_matrix, scale)

    index = np.arange(2 ** n)
    sizes = subsets.sum(axis=1).astype(int)
    weights = np.array([math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n) for s in range(n)])

    phi = np.zeros((n, model.n_labels))
    for i in range(n):
        bit = 1 << (n - 1 - i)
        without = index[(index & bit) == 0]
        phi[i] = weights[sizes[without]] @ (values[without | bit] - values[without])
    return phi


def shapley_montecarlo(
    model: MlpModel,
    x: np.ndarray,
    refs: ReferenceSet,
    permutations: int = Config.PERMUTATIONS,
    seed: int = 0,
    scale: Scale = "probability",
) -> np.ndarray:
    """
    Permutation-sampling Shapley estimate, n x L.

    Each sampled feature ordering adds features one at a time; every marginal
    contribution is averaged over all reference rows.
    """
    if permutations < 1:
        raise ValueError("permutations must be at least 1")
    n = model.n_features
    x = _as_row(model, x)
    rng = np.random.default_rng(seed)
    groups = model.group_matrix

    orders = np.array([rng.permutation(n) for _ in range(permutations)])
    ranks = np.argsort(orders, axis=1)
    phi = np.zeros((n, model.n_labels))

    chunk = max(1, _BATCH_ROWS // (refs.size * (n + 1)))
    for start in range(0, permutations, chunk):
        order, rank = orders[start:start + chunk], ranks[start:start + chunk]
        k = order.shape[0]
        # masks[q, j] marks the first j features of ordering q
        masks = (rank[:, None, :] < np.arange(n + 1)[None, :, None]).astype(float)
        values = _coalition_values(model, x, refs, (masks @ groups).reshape(k * (n + 1), -1), scale)
        values = values.reshape(k, n + 1, -1)
        marginal = values[:, 1:] - values[:, :-1]
        for j in range(n):
            np.add.at(phi, order[:, j], marginal[:, j])
    return phi / permutations


def _rescale_contributions(
    model: MlpModel,
    rows: np.ndarray,
    refs: np.ndarray,
    scale: Scale,
    epsilon: float,
) -> np.ndarray:
    """
    Rescale-rule contributions for every (row, reference) pair,
    shape rows x refs x features x labels.
    """
    z, a, o = forward(model, rows)
    z_ref, a_ref, o_ref = forward(model, refs)

    dz = z[:, None, :] - z_ref[None, :, :]
    da = a[:, None, :] - a_ref[None, :, :]
    safe = np.abs(dz) > epsilon
    # derivative at the input's pre-activation when the delta vanishes
    m_hidden = np.where(safe, da / np.where(safe, dz, 1.0), (z > 0)[:, None, :].astype(float))

    if model.output_activation == "sigmoid" and scale == "probability":
        do = o[:, None, :] - o_ref[None, :, :]
        dy = sigmoid(o)[:, None, :] - sigmoid(o_ref)[None, :, :]
        s = sigmoid(o)
        safe_out = np.abs(do) > epsilon
        m_out = np.where(safe_out, dy / np.where(safe_out, do, 1.0), (s * (1.0 - s))[:, None, :])
    else:
        m_out = np.ones((rows.shape[0], refs.shape[0], model.n_labels))

    multipliers = np.einsum("jk,srk,kl->srjl", model.w1, m_hidden, model.w2) * m_out[:, :, None, :]
    dx = rows[:, None, :] - refs[None, :, :]
    contributions = multipliers * dx[..., None]
    return np.einsum("srjl,nj->srnl", contributions, model.group_matrix)


def deeplift_multipliers(
    model: MlpModel,
    x: np.ndarray,
    ref: np.ndarray,
    scale: Scale = "probability",
    epsilon: float = Config.RESCALE_EPSILON,
) -> np.ndarray:
    """
    DeepLIFT rescale-rule contributions of x against one reference, n x L.

    Linear layers pass multipliers through their weights; each relu (and the
    sigmoid output) uses delta_out / delta_in, or its derivative when
    |delta_in| <= epsilon.
    """
    x = _as_row(model, x)
    ref = _as_row(model, ref)
    return _rescale_contributions(model, x[None, :], ref[None, :], scale, epsilon)[0, 0]


def _deepshap_chunk(model, rows, refs, scale, epsilon) -> np.ndarray:
    """DeepSHAP rows for one parallel chunk."""
    return _rescale_contributions(model, rows, refs, scale, epsilon).mean(axis=1)


def _reference_baseline(model: MlpModel, refs: ReferenceSet, scale: Scale) -> np.ndarray:
    """Mean model output over the reference set."""
    return _scorer(model, scale)(refs.rows).mean(axis=0)


def deepshap_attribute(
    model: MlpModel,
    rows: np.ndarray,
    refs: ReferenceSet,
    scale: Scale = "probability",
    epsilon: float = Config.RESCALE_EPSILON,
    n_jobs: int = Config.N_JOBS,
) -> AttributionTensor:
    """DeepLIFT contributions averaged over every reference row."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[1] != model.p:
        raise DimensionMismatch(model.p, rows.shape[1])
    if refs.rows.shape[1] != model.p:
        raise DimensionMismatch(model.p, refs.rows.shape[1], "reference width")

    per_chunk = max(1, _BATCH_ROWS // (refs.size * model.p))
    starts = range(0, rows.shape[0], per_chunk)
    chunks = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_deepshap_chunk)(model, rows[s:s + per_chunk], refs.rows, scale, epsilon) for s in starts
    )
    return AttributionTensor(
        values=np.concatenate(chunks, axis=0),
        method="deepshap",
        baseline=_reference_baseline(model, refs, scale),
        feature_names=tuple(model.feature_names),
        label_names=tuple(model.label_names),
        scale=scale,
    )


def attribute(
    model: MlpModel,
    dataset: Dataset,
    refs: ReferenceSet,
    method: Method = "deepshap",
    permutations: int = Config.PERMUTATIONS,
    seed: int = 0,
    scale: Scale = "probability",
    n_jobs: int = Config.N_JOBS,
    exact_limit: int = Config.EXACT_LIMIT,
) -> AttributionTensor:
    """Attribution tensor over every dataset row with the chosen method."""
    if method == "deepshap":
        tensor = deepshap_attribute(model, dataset.encoded, refs, scale=scale, n_jobs=n_jobs)
    else:
        if method == "exact" and model.n_features > exact_limit:
            raise TooManyFeatures(model.n_features, exact_limit)
        if method == "exact":
            jobs = (delayed(shapley_exact)(model, x, refs, scale, exact_limit) for x in dataset.encoded)
        else:
            seeds = np.random.default_rng(seed).integers(0, 2 ** 32, size=dataset.m)
            jobs = (
                delayed(shapley_montecarlo)(model, x, refs, permutations, int(s), scale)
                for x, s in zip(dataset.encoded, seeds)
            )
        values = Parallel(n_jobs=n_jobs, prefer="threads")(jobs)
        tensor = AttributionTensor(
            values=np.stack(values),
            method=method,
            baseline=_reference_baseline(model, refs, scale),
            feature_names=tuple(model.feature_names),
            label_names=tuple(model.label_names),
            scale=scale,
        )
    logger.info(f"Computed {method} attributions ({scale} scale), tensor shape {tensor.values.shape}")
    return tensor


def feature_relevance(tensor: AttributionTensor) -> Dict[str, float]:
    """Mean |attribution| per feature over samples and labels."""
    scores = np.abs(tensor.values).mean(axis=(0, 2))
    return {name: float(score) for name, score in zip(tensor.feature_names, scores)}
