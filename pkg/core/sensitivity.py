"""
Variance-based global sensitivity of a feature-value assignment.
"""

import logging
from typing import List, Optional

import numpy as np

from .config import Config
from .dataset import Dataset, apply_assignment
from .errors import DegenerateVariance
from .models import Assignment, SensitivityScore
from .network import MlpModel, predict

logger = logging.getLogger(__name__)

INTERPRETATION = (
    "Upsilon_l = Cov(p_c, p) / Var(p) across samples, where p are the model's predictions "
    "on the original rows and p_c the predictions with the assignment fixed "
    "(population normalisation, no conditioning partition)."
)


def covariance_ratio(
    fixed: np.ndarray, original: np.ndarray, labels: List[str], strict: bool = True
) -> np.ndarray:
    """
    Per-label Cov(fixed, original) / Var(original), both population form.

    A label whose original predictions are (near) constant raises
    DegenerateVariance, or scores 0 when ``strict`` is off.
    """
    fixed_c = fixed - fixed.mean(axis=0)
    original_c = original - original.mean(axis=0)
    covariance = (fixed_c * original_c).mean(axis=0)
    variance = (original_c ** 2).mean(axis=0)

    upsilon = np.zeros(original.shape[1])
    for l, label in enumerate(labels):
        if variance[l] <= Config.VARIANCE_FLOOR:
            if strict:
                raise DegenerateVariance(label)
            logger.warning(f"Degenerate prediction variance for label '{label}'; using upsilon 0")
            continue
        upsilon[l] = covariance[l] / variance[l]
        # Cauchy-Schwarz
        bound = np.sqrt((fixed_c[:, l] ** 2).mean() / variance[l])
        assert abs(upsilon[l]) <= bound + 1e-9, f"covariance ratio {upsilon[l]} exceeds bound {bound}"
    return upsilon


def sensitivity_score(
    model: MlpModel,
    dataset: Dataset,
    assignment: Assignment,
    original: Optional[np.ndarray] = None,
    strict: bool = True,
) -> SensitivityScore:
    """
    Upsilon and mean prediction (Lambda) of an assignment.

    ``original`` may carry the precomputed predictions on the unmodified
    dataset so a search pays one forward pass per candidate.
    """
    if dataset.m < 2:
        raise ValueError("Sensitivity needs at least two samples")
    if original is None:
        original = predict(model, dataset.encoded)
    fixed = predict(model, apply_assignment(dataset, assignment).encoded)
    upsilon = covariance_ratio(fixed, original, list(model.label_names), strict=strict)
    lam = fixed.mean(axis=0)
    assert np.all(np.isfinite(upsilon)) and np.all(np.isfinite(lam))
    return SensitivityScore(upsilon=upsilon.tolist(), lam=lam.tolist(), assignment=assignment)
