"""
Threshold pruning of the feature-value tree.
"""

import logging
from typing import List, Optional, Sequence

import numpy as np

from .attribution import AttributionTensor
from .config import Config
from .dataset import Dataset, candidate_values
from .errors import DimensionMismatch, UnknownFeature, UnknownValue
from .models import PrunedDomain, ScoredValue, Value, ValueDomain

logger = logging.getLogger(__name__)


def _default_candidates(dataset: Dataset, feature: str) -> List[Value]:
    """Candidate values of one feature at the default grid size."""
    for domain in candidate_values(dataset, Config.GRID_SIZE):
        if domain.feature == feature:
            return domain.candidates
    raise UnknownFeature(feature)


def _value_index(dataset: Dataset, feature: str, candidates: Sequence[Value]) -> np.ndarray:
    """Index into ``candidates`` of every sample's raw cell (-1 when absent)."""
    column = dataset.raw[feature]
    if dataset.schema.feature(feature).kind == "categorical":
        lookup = {v: i for i, v in enumerate(candidates)}
        return np.array([lookup.get(cell, -1) for cell in column], dtype=int)
    # nearest grid point, first one on ties
    grid = np.asarray(candidates, dtype=float)
    distance = np.abs(column.to_numpy(dtype=float)[:, None] - grid[None, :])
    return np.argmin(distance, axis=1)


def _relevance_table(
    tensor: AttributionTensor, dataset: Dataset, feature: str, candidates: Sequence[Value]
) -> np.ndarray:
    """candidates x labels mean |attribution| over matching samples."""
    if tensor.n_samples != dataset.m:
        raise DimensionMismatch(dataset.m, tensor.n_samples, "attributed sample count")
    magnitude = np.abs(tensor.values[:, tensor.feature_index(feature), :])
    index = _value_index(dataset, feature, candidates)
    table = np.zeros((len(candidates), magnitude.shape[1]))
    for i in range(len(candidates)):
        rows = index == i
        if rows.any():
            table[i] = magnitude[rows].mean(axis=0)
    return table


def value_relevance(
    tensor: AttributionTensor,
    dataset: Dataset,
    feature: str,
    value: Value,
    candidates: Optional[Sequence[Value]] = None,
) -> np.ndarray:
    """
    Per-label mean |attribution| of ``feature`` over the samples holding ``value``.

    Numeric cells match the value when it is their nearest candidate on the
    grid. No matching sample gives relevance 0.
    """
    if dataset.schema.feature(feature) is None or feature not in tensor.feature_names:
        raise UnknownFeature(feature)
    if candidates is None:
        candidates = _default_candidates(dataset, feature)
    candidates = list(candidates)
    if value not in candidates:
        raise UnknownValue(feature, value)
    return _relevance_table(tensor, dataset, feature, candidates)[candidates.index(value)]


def prune_values(
    domains: Sequence[ValueDomain],
    tensor: AttributionTensor,
    dataset: Dataset,
    delta: float = Config.DELTA,
) -> List[PrunedDomain]:
    """
    Keep a value iff its relevance, maximised over labels, exceeds delta.

    A feature left with nothing keeps its single most relevant value.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")

    pruned = []
    for domain in domains:
        if dataset.schema.feature(domain.feature) is None:
            raise UnknownFeature(domain.feature)
        table = _relevance_table(tensor, dataset, domain.feature, domain.candidates)
        score = table.max(axis=1)
        keep = score > delta

        guard = not keep.any()
        if guard:
            keep[int(np.argmax(score))] = True
            logger.warning(f"Pruning at delta={delta} would empty '{domain.feature}'; "
                           f"keeping {domain.candidates[int(np.argmax(score))]!r}")

        scored = [
            ScoredValue(value=value, score=float(score[i]), per_label=table[i].tolist())
            for i, value in enumerate(domain.candidates)
        ]
        pruned.append(PrunedDomain(
            feature=domain.feature,
            kept=[s for s, k in zip(scored, keep) if k],
            dropped=[s for s, k in zip(scored, keep) if not k],
            guard_applied=guard,
        ))

    kept = sum(len(d.kept) for d in pruned)
    total = sum(len(d.candidates) for d in domains)
    logger.info(f"Pruned at delta={delta}: kept {kept} of {total} feature values")
    return pruned
