"""
Explanation-based multi-label combinatorial search (EBCO), with the
dynamic-programming baseline and an exhaustive oracle for comparison.
"""

import itertools
import logging
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .attribution import AttributionTensor, feature_relevance
from .dataset import Dataset
from .errors import CapacityExceeded, EmptyDomain, SpaceTooLarge, UnknownFeature
from .models import (
    Assignment,
    Candidate,
    Direction,
    PrunedDomain,
    SearchConfig,
    SearchTrace,
    TraceIteration,
    Value,
    ValueDomain,
)
from .network import MlpModel, mean_prediction, predict
from .sensitivity import sensitivity_score

logger = logging.getLogger(__name__)

Domain = Union[PrunedDomain, ValueDomain]


def direction_adjusted(lam: np.ndarray, direction: Sequence[Direction]) -> np.ndarray:
    """Lambda for minimised labels, 1 - Lambda for maximised ones (lower is better)."""
    lam = np.asarray(lam, dtype=float)
    maximize = np.array([d == "maximize" for d in direction])
    return np.where(maximize, 1.0 - lam, lam)


def selection_gamma(
    lam: np.ndarray, upsilon: np.ndarray, omega: float, direction: Sequence[Direction]
) -> np.ndarray:
    """gamma_l = omega * attainment_l + (1 - omega) * upsilon_l."""
    if not 0.0 <= omega <= 1.0:
        raise ValueError("omega must lie in [0, 1]")
    attainment = 1.0 - direction_adjusted(lam, direction)
    return omega * attainment + (1.0 - omega) * np.asarray(upsilon, dtype=float)


def penalized_score(gamma: np.ndarray, rho: float, mode: Literal["as_written", "passthrough"] = "as_written") -> float:
    """
    Sum over objectives: 0 below rho, otherwise rho (as_written) or the
    objective's own gamma (passthrough).
    """
    if rho < 0:
        raise ValueError("rho must be non-negative")
    gamma = np.asarray(gamma, dtype=float)
    passing = gamma >= rho
    if mode == "as_written":
        return float(rho * passing.sum())
    return float(gamma[passing].sum())


def _domain_values(domain: Domain) -> List[Value]:
    """Kept values of a pruned domain, or every candidate of a plain one."""
    return domain.kept_values if isinstance(domain, PrunedDomain) else list(domain.candidates)


class _CandidateScorer:
    """Turns assignments into scored candidates; one forward pass each."""

    def __init__(self, model: MlpModel, dataset: Dataset, config: SearchConfig, domains: Sequence[Domain]):
        self.model = model
        self.dataset = dataset
        self.config = config
        self.direction = config.directions(model.n_labels)
        self.minimized = [l for l, d in enumerate(self.direction) if d == "minimize"]
        self.original = predict(model, dataset.encoded)
        self.positions: Dict[str, Dict[Value, int]] = {
            d.feature: {v: i for i, v in enumerate(_domain_values(d))} for d in domains
        }

    def order_key(self, assignment: Assignment) -> Tuple:
        """Lexicographic on (feature name, value index)."""
        return tuple(sorted((f, self.positions[f][v]) for f, v in assignment.bindings.items()))

    def score(self, assignment: Assignment) -> Candidate:
        """Lambda, Upsilon, gamma and Gamma of one assignment."""
        result = sensitivity_score(self.model, self.dataset, assignment, original=self.original, strict=False)
        lam = np.asarray(result.lam)
        gamma = selection_gamma(lam, np.asarray(result.upsilon), self.config.omega, self.direction)
        return Candidate(
            assignment=assignment,
            gamma=gamma.tolist(),
            big_gamma=penalized_score(gamma, self.config.rho, self.config.gamma_mode),
            lam=result.lam,
            upsilon=result.upsilon,
            objective=float(direction_adjusted(lam, self.direction).mean()),
        )

    def score_many(self, assignments: Sequence[Assignment]) -> List[Candidate]:
        """Score assignments in parallel."""
        # results come back in submission order
        return Parallel(n_jobs=self.config.n_jobs, prefer="threads")(
            delayed(self.score)(a) for a in assignments
        )

    def gamma_rank(self, candidate: Candidate) -> Tuple:
        """Sort key of the beam cut."""
        return (-candidate.big_gamma, self.order_key(candidate.assignment))

    def minimized_lambda(self, candidate: Candidate) -> float:
        """Mean Lambda over minimized labels; the full objective when none are."""
        if not self.minimized:
            return candidate.objective
        return float(np.mean([candidate.lam[l] for l in self.minimized]))

    def best_rank(self, candidate: Candidate) -> Tuple:
        """Sort key of the final pick."""
        return (-candidate.big_gamma, self.minimized_lambda(candidate), self.order_key(candidate.assignment))

    def objective_rank(self, candidate: Candidate) -> Tuple:
        """Sort key on the direction-adjusted objective."""
        return (candidate.objective, self.order_key(candidate.assignment))


def feature_order(
    domains: Sequence[Domain], dataset: Dataset, tensor: Optional[AttributionTensor], mode: str
) -> List[Domain]:
    """Schema order, or descending attribution relevance (schema order on ties)."""
    schema_index = {name: i for i, name in enumerate(dataset.feature_names)}
    for d in domains:
        if d.feature not in schema_index:
            raise UnknownFeature(d.feature)
    if mode == "schema" or tensor is None:
        return sorted(domains, key=lambda d: schema_index[d.feature])
    relevance = feature_relevance(tensor)
    return sorted(domains, key=lambda d: (-relevance[d.feature], schema_index[d.feature]))


def _iteration(index: int, feature: str, beam: List[Candidate], best: Candidate, evaluations: int) -> TraceIteration:
    """Trace record of one beam iteration."""
    return TraceIteration(
        index=index,
        feature=feature,
        features_assigned=index + 1,
        beam=beam,
        best_lambda=best.lam,
        best_big_gamma=best.big_gamma,
        best_objective=min(c.objective for c in beam),
        evaluations=evaluations,
    )


def ebco_search(
    model: MlpModel,
    dataset: Dataset,
    tensor: AttributionTensor,
    domains: Sequence[PrunedDomain],
    config: SearchConfig,
) -> Tuple[Candidate, SearchTrace]:
    """
    Beam search over feature-value assignments.

    Features are visited one at a time; every beam member is extended with
    every kept value, extensions are scored (sensitivity -> gamma -> Gamma)
    and the zeta best by Gamma survive, ties broken lexicographically.
    """
    if not domains:
        raise EmptyDomain("<no features>")
    for d in domains:
        if not d.kept:
            raise EmptyDomain(d.feature)

    scorer = _CandidateScorer(model, dataset, config, domains)
    ordered = feature_order(domains, dataset, tensor, config.feature_order)
    trace = SearchTrace(method="ebco")

    beam: List[Assignment] = [Assignment()]
    evaluations = 0
    for index, domain in enumerate(ordered):
        extensions = [a.extend(domain.feature, v) for a in beam for v in domain.kept_values]
        candidates = scorer.score_many(extensions)
        evaluations += len(extensions)

        candidates.sort(key=scorer.gamma_rank)
        kept = candidates[:config.zeta]
        best = min(kept, key=scorer.best_rank)
        trace.iterations.append(_iteration(index, domain.feature, kept, best, evaluations))
        beam = [c.assignment for c in kept]

        logger.info(f"EBCO iteration {index}: feature '{domain.feature}', {len(extensions)} extensions, "
                    f"beam {len(kept)}, best Gamma {best.big_gamma:.4f}, evaluations {evaluations}")

    _check_trace(trace, ordered, scorer, config)
    best = min(trace.iterations[-1].beam, key=scorer.best_rank)
    return best, trace


def _check_trace(trace: SearchTrace, ordered: Sequence[PrunedDomain], scorer: _CandidateScorer, config: SearchConfig):
    """Internal consistency of a beam trace."""
    beam_size, evaluations = 1, 0
    for iteration, domain in zip(trace.iterations, ordered):
        evaluations += beam_size * len(domain.kept)
        assert iteration.evaluations == evaluations, "evaluation count drifted from beam x domain sizes"
        best = min(iteration.beam, key=scorer.best_rank)
        recomputed = penalized_score(np.asarray(best.gamma), config.rho, config.gamma_mode)
        assert recomputed == iteration.best_big_gamma, "stored Gamma does not match its gamma vector"
        beam_size = len(iteration.beam)


def dp_baseline(
    model: MlpModel,
    dataset: Dataset,
    domains: Sequence[ValueDomain],
    config: SearchConfig,
) -> Tuple[Candidate, SearchTrace]:
    """
    Stage-wise dynamic-programming baseline over unpruned domains.

    Stages follow schema order; each stage extends every stored partial
    assignment with every value of the next feature and records the stage
    optimum of the mean direction-adjusted Lambda. The best full assignment
    is returned.
    """
    if not domains:
        raise EmptyDomain("<no features>")
    scorer = _CandidateScorer(model, dataset, config, domains)
    ordered = feature_order(domains, dataset, None, "schema")
    trace = SearchTrace(method="dp")

    table: List[Assignment] = [Assignment()]
    evaluations = 0
    stage_best: Optional[Candidate] = None
    for stage, domain in enumerate(ordered):
        values = _domain_values(domain)
        if not values:
            raise EmptyDomain(domain.feature)
        size = len(table) * len(values)
        if config.dp_capacity is not None and size > config.dp_capacity:
            raise CapacityExceeded(stage, size, config.dp_capacity)

        extensions = [a.extend(domain.feature, v) for a in table for v in values]
        candidates = scorer.score_many(extensions)
        evaluations += len(extensions)

        stage_best = min(candidates, key=scorer.objective_rank)
        trace.iterations.append(_iteration(stage, domain.feature, [stage_best], stage_best, evaluations))
        table = [c.assignment for c in candidates]

        logger.info(f"DP stage {stage}: feature '{domain.feature}', table {len(table)}, "
                    f"stage optimum {stage_best.objective:.4f}, evaluations {evaluations}")

    return stage_best, trace


def exhaustive_oracle(
    model: MlpModel,
    dataset: Dataset,
    domains: Sequence[Domain],
    config: SearchConfig,
    objective: Literal["gamma", "lambda"] = "gamma",
) -> Candidate:
    """
    Score every full assignment and return the best one.

    ``gamma`` ranks exactly as the beam search picks its final answer;
    ``lambda`` ranks by mean direction-adjusted Lambda as the DP baseline does.
    """
    values = [_domain_values(d) for d in domains]
    size = int(np.prod([len(v) for v in values], dtype=object)) if values else 0
    if size > config.oracle_limit:
        raise SpaceTooLarge(size, config.oracle_limit)
    if size == 0:
        raise EmptyDomain("<no features>" if not domains else next(d.feature for d, v in zip(domains, values) if not v))

    scorer = _CandidateScorer(model, dataset, config, domains)
    features = [d.feature for d in domains]
    assignments = [Assignment(bindings=dict(zip(features, combo))) for combo in itertools.product(*values)]
    candidates = scorer.score_many(assignments)
    rank = scorer.best_rank if objective == "gamma" else scorer.objective_rank
    best = min(candidates, key=rank)
    logger.info(f"Oracle scored {size} assignments; best objective {best.objective:.4f}")
    return best


def reach_count(trace: SearchTrace, target: float, tolerance: float) -> Optional[int]:
    """Cumulative evaluations when the best objective first comes within tolerance of target."""
    for iteration in trace.iterations:
        if iteration.best_objective <= target + tolerance:
            return iteration.evaluations
    return None


def interaction_profile(
    model: MlpModel, dataset: Dataset, best: Assignment, domains: Sequence[Domain]
) -> pd.DataFrame:
    """
    Mean prediction of each value of each bound feature, with the rest of
    the best assignment held fixed.
    """
    values = {d.feature: _domain_values(d) for d in domains}
    rows = []
    for feature, chosen in best.bindings.items():
        for value in values.get(feature, [chosen]):
            bindings = dict(best.bindings)
            bindings[feature] = value
            lam = mean_prediction(model, dataset, Assignment(bindings=bindings))
            row = {"feature": feature, "value": value, "selected": value == chosen}
            row.update({f"lambda:{label}": float(v) for label, v in zip(model.label_names, lam)})
            row["lambda_mean"] = float(lam.mean())
            rows.append(row)
    return pd.DataFrame(rows)
