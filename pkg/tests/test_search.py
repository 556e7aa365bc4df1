"""Tests for candidate scoring, beam search, the DP baseline and the oracle."""

import numpy as np
import pytest

from core.attribution import attribute, sample_references
from core.config import Config
from core.dataset import candidate_values, generate_synthetic
from core.errors import CapacityExceeded, EmptyDomain, SpaceTooLarge
from core.models import (
    PrunedDomain,
    ScoredValue,
    SearchConfig,
    SyntheticSpec,
    TrainConfig,
    ValueDomain,
)
from core.network import train
from core.pruning import prune_values
from core.search import (
    dp_baseline,
    ebco_search,
    exhaustive_oracle,
    feature_order,
    interaction_profile,
    penalized_score,
    reach_count,
    selection_gamma,
)


def _keep_all(domains):
    """PrunedDomains that keep every candidate."""
    return [
        PrunedDomain(feature=d.feature, kept=[ScoredValue(value=v, score=1.0, per_label=[1.0]) for v in d.candidates])
        for d in domains
    ]


def _instance(factory, model_factory, sizes, seed):
    dataset = factory(sizes, m=25, n_labels=2, seed=seed)
    model = model_factory(dataset=dataset, seed=seed, scale=1.5)
    refs = sample_references(dataset, size=10, seed=seed)
    tensor = attribute(model, dataset, refs, method="deepshap")
    return dataset, model, tensor


class TestSelectionGamma:
    def test_prediction_only(self):
        lam, ups = np.array([0.2, 0.7]), np.array([0.9, 0.1])
        np.testing.assert_allclose(selection_gamma(lam, ups, 1.0, ["minimize"] * 2), 1.0 - lam, atol=1e-12)

    def test_sensitivity_only(self):
        lam, ups = np.array([0.2, 0.7]), np.array([0.9, 0.1])
        np.testing.assert_allclose(selection_gamma(lam, ups, 0.0, ["minimize"] * 2), ups, atol=1e-12)

    def test_hand_vector(self):
        gamma = selection_gamma(np.array([0.2, 0.8, 0.5]), np.array([1.0, 0.0, 0.4]), 0.5, ["minimize"] * 3)
        np.testing.assert_allclose(gamma, [0.9, 0.1, 0.45], atol=1e-12)

    def test_maximize_uses_lambda(self):
        gamma = selection_gamma(np.array([0.2]), np.array([0.0]), 1.0, ["maximize"])
        np.testing.assert_allclose(gamma, [0.2], atol=1e-12)

    def test_dominance_preserved(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            lam_b = rng.uniform(0.1, 1.0, size=3)
            lam_a = lam_b - rng.uniform(0.0, 0.1, size=3)
            ups_b = rng.uniform(-1.0, 1.0, size=3)
            ups_a = ups_b + rng.uniform(0.0, 0.5, size=3)
            omega = rng.uniform()
            direction = ["minimize"] * 3
            assert np.all(
                selection_gamma(lam_a, ups_a, omega, direction) >= selection_gamma(lam_b, ups_b, omega, direction) - 1e-15
            )

    def test_omega_range(self):
        with pytest.raises(ValueError):
            selection_gamma(np.zeros(1), np.zeros(1), 1.5, ["minimize"])


class TestPenalizedScore:
    def test_as_written(self):
        assert penalized_score(np.array([0.3, 0.6, 0.7]), 0.5, "as_written") == pytest.approx(1.0, abs=1e-12)

    def test_zero_threshold(self):
        assert penalized_score(np.array([0.3, 0.6, 0.7]), 0.0, "as_written") == 0.0

    def test_passthrough(self):
        assert penalized_score(np.array([0.3, 0.6, 0.7]), 0.5, "passthrough") == pytest.approx(1.3, abs=1e-12)

    def test_threshold_is_inclusive(self):
        assert penalized_score(np.array([0.5]), 0.5, "as_written") == 0.5


class TestEbcoSearch:
    def test_single_feature_argmax(self, categorical_dataset_factory, model_factory):
        dataset, model, tensor = _instance(categorical_dataset_factory, model_factory, [2], seed=1)
        config = SearchConfig(rho=0.0, gamma_mode="passthrough", omega=1.0)
        domains = _keep_all(candidate_values(dataset))
        best, trace = ebco_search(model, dataset, tensor, domains, config)
        scores = {c.assignment.bindings["f0"]: c.big_gamma for c in trace.iterations[0].beam}
        assert best.big_gamma == max(scores.values())
        assert len(trace.iterations) == 1

    def test_gamma_ties_go_to_lowest_minimized_lambda(self, categorical_dataset_factory, model_factory):
        """With every Gamma at zero, mixed directions pick the lowest Lambda on the minimized label."""
        dataset, model, tensor = _instance(categorical_dataset_factory, model_factory, [4], seed=2)
        config = SearchConfig(rho=5.0, zeta=4, direction=["minimize", "maximize"])
        best, trace = ebco_search(model, dataset, tensor, _keep_all(candidate_values(dataset)), config)
        beam = trace.iterations[0].beam
        assert all(c.big_gamma == 0.0 for c in beam)
        assert best.lam[0] == min(c.lam[0] for c in beam)

    def test_full_beam_matches_oracle(self, categorical_dataset_factory, model_factory):
        """With a beam wide enough for every assignment, the search returns the oracle optimum."""
        rng = np.random.default_rng(42)
        for trial in range(30):
            sizes = [int(k) for k in rng.integers(2, 5, size=int(rng.integers(1, 4)))]
            dataset, model, tensor = _instance(categorical_dataset_factory, model_factory, sizes, seed=trial)
            total = int(np.prod(sizes))
            assert total <= 200
            config = SearchConfig(
                zeta=total,
                omega=float(rng.uniform()),
                rho=float(rng.uniform(0.0, 0.6)),
                gamma_mode=["as_written", "passthrough"][trial % 2],
            )
            domains = _keep_all(candidate_values(dataset))
            best, _ = ebco_search(model, dataset, tensor, domains, config)
            oracle = exhaustive_oracle(model, dataset, domains, config)
            assert best.assignment.bindings == oracle.assignment.bindings
            assert best.big_gamma == oracle.big_gamma

    def test_trace_consistency(self, categorical_dataset_factory, model_factory):
        dataset, model, tensor = _instance(categorical_dataset_factory, model_factory, [3, 3, 2, 3], seed=5)
        config = SearchConfig(zeta=2)
        domains = _keep_all(candidate_values(dataset))
        _, trace = ebco_search(model, dataset, tensor, domains, config)

        evaluations = [it.evaluations for it in trace.iterations]
        assert all(a < b for a, b in zip(evaluations, evaluations[1:]))
        assert all(len(it.beam) <= 2 for it in trace.iterations)
        ordered = feature_order(domains, dataset, tensor, "relevance")
        assert [it.feature for it in trace.iterations] == [d.feature for d in ordered]
        assert evaluations[0] == len(ordered[0].kept)
        assert trace.total_evaluations == evaluations[-1]

    def test_deterministic(self, categorical_dataset_factory, model_factory):
        dataset, model, tensor = _instance(categorical_dataset_factory, model_factory, [3, 3, 3], seed=2)
        domains = _keep_all(candidate_values(dataset))
        a = ebco_search(model, dataset, tensor, domains, SearchConfig(zeta=3))[1]
        b = ebco_search(model, dataset, tensor, domains, SearchConfig(zeta=3, n_jobs=2))[1]
        assert a.model_dump_json() == b.model_dump_json()

    def test_empty_domain(self, categorical_dataset_factory, model_factory):
        dataset, model, tensor = _instance(categorical_dataset_factory, model_factory, [2], seed=0)
        with pytest.raises(EmptyDomain):
            ebco_search(model, dataset, tensor, [PrunedDomain(feature="f0", kept=[])], SearchConfig())

    def test_schema_order(self, categorical_dataset_factory, model_factory):
        dataset, model, tensor = _instance(categorical_dataset_factory, model_factory, [2, 2, 2], seed=3)
        domains = _keep_all(candidate_values(dataset))
        _, trace = ebco_search(model, dataset, tensor, domains, SearchConfig(feature_order="schema"))
        assert [it.feature for it in trace.iterations] == ["f0", "f1", "f2"]

    def test_direction_list_length_checked(self, categorical_dataset_factory, model_factory):
        dataset, model, tensor = _instance(categorical_dataset_factory, model_factory, [2], seed=0)
        with pytest.raises(ValueError):
            ebco_search(model, dataset, tensor, _keep_all(candidate_values(dataset)),
                        SearchConfig(direction=["minimize"]))


class TestDpBaseline:
    def test_matches_enumeration(self, categorical_dataset_factory, model_factory):
        rng = np.random.default_rng(7)
        for trial in range(30):
            sizes = [int(k) for k in rng.integers(2, 5, size=int(rng.integers(1, 4)))]
            dataset, model, _ = _instance(categorical_dataset_factory, model_factory, sizes, seed=100 + trial)
            domains = candidate_values(dataset)
            config = SearchConfig()
            best, trace = dp_baseline(model, dataset, domains, config)
            oracle = exhaustive_oracle(model, dataset, domains, config, objective="lambda")
            assert best.assignment.bindings == oracle.assignment.bindings
            assert trace.total_evaluations == sum(np.cumprod(sizes))

    def test_two_by_two(self, categorical_dataset_factory, model_factory):
        dataset, model, _ = _instance(categorical_dataset_factory, model_factory, [2, 2], seed=9)
        best, trace = dp_baseline(model, dataset, candidate_values(dataset), SearchConfig())
        assert [it.evaluations for it in trace.iterations] == [2, 6]
        objectives = []
        for a in ("v0", "v1"):
            for b in ("v0", "v1"):
                oracle = exhaustive_oracle(
                    model, dataset,
                    [ValueDomain(feature="f0", candidates=[a]), ValueDomain(feature="f1", candidates=[b])],
                    SearchConfig(), objective="lambda",
                )
                objectives.append(oracle.objective)
        assert best.objective == pytest.approx(min(objectives), abs=1e-12)

    def test_single_feature_coincides_with_beam(self, categorical_dataset_factory, model_factory):
        dataset, model, tensor = _instance(categorical_dataset_factory, model_factory, [4], seed=4)
        domains = candidate_values(dataset)
        config = SearchConfig(omega=1.0, zeta=4, rho=0.0, gamma_mode="passthrough")
        dp_best, _ = dp_baseline(model, dataset, domains, config)
        ebco_best, _ = ebco_search(model, dataset, tensor, _keep_all(domains), config)
        assert dp_best.assignment.bindings == ebco_best.assignment.bindings

    def test_capacity(self, categorical_dataset_factory, model_factory):
        dataset, model, _ = _instance(categorical_dataset_factory, model_factory, [3, 3, 3], seed=0)
        with pytest.raises(CapacityExceeded) as info:
            dp_baseline(model, dataset, candidate_values(dataset), SearchConfig(dp_capacity=10))
        assert info.value.stage == 2


class TestOracle:
    def test_one_feature(self, categorical_dataset_factory, model_factory):
        dataset, model, _ = _instance(categorical_dataset_factory, model_factory, [3], seed=6)
        config = SearchConfig(rho=0.0, gamma_mode="passthrough")
        oracle = exhaustive_oracle(model, dataset, candidate_values(dataset), config)
        assert oracle.assignment.bindings["f0"] in ("v0", "v1", "v2")

    def test_space_too_large(self, categorical_dataset_factory, model_factory):
        dataset, model, _ = _instance(categorical_dataset_factory, model_factory, [2], seed=0)
        domains = [
            ValueDomain(feature=name, candidates=[f"v{j}" for j in range(k)])
            for name, k in (("a", 100), ("b", 100), ("c", 11))
        ]
        with pytest.raises(SpaceTooLarge):
            exhaustive_oracle(model, dataset, domains, SearchConfig())


class TestHelpers:
    def test_reach_count(self, categorical_dataset_factory, model_factory):
        dataset, model, _ = _instance(categorical_dataset_factory, model_factory, [2, 3], seed=1)
        _, trace = dp_baseline(model, dataset, candidate_values(dataset), SearchConfig())
        final = trace.iterations[-1].best_objective
        assert reach_count(trace, final, 0.0) is not None
        assert reach_count(trace, final, 0.0) <= trace.total_evaluations
        assert reach_count(trace, -10.0, 0.0) is None

    def test_interaction_profile(self, categorical_dataset_factory, model_factory):
        dataset, model, tensor = _instance(categorical_dataset_factory, model_factory, [2, 3], seed=3)
        domains = _keep_all(candidate_values(dataset))
        best, _ = ebco_search(model, dataset, tensor, domains, SearchConfig())
        profile = interaction_profile(model, dataset, best.assignment, domains)
        assert len(profile) == 5
        assert profile["selected"].sum() == 2
        selected = profile[profile["selected"]]
        np.testing.assert_allclose(selected["lambda_mean"], np.mean(best.lam), atol=1e-12)


def _planted_run(seed):
    spec = SyntheticSpec(n_features=5, n_values=3, planted_size=2, n_labels=3, n_samples=500)
    dataset, truth = generate_synthetic(spec, seed)
    model = train(dataset, TrainConfig(seed=seed, learning_rate=0.5))
    refs = sample_references(dataset, size=Config.REFERENCE_SIZE, seed=seed)
    tensor = attribute(model, dataset, refs, method="deepshap")
    config = SearchConfig(zeta=5, omega=0.9, rho=0.3, gamma_mode="passthrough", direction="minimize")
    domains = candidate_values(dataset)
    pruned = prune_values(domains, tensor, dataset, config.delta)
    return dataset, model, tensor, domains, pruned, truth, config


@pytest.mark.slow
class TestPlantedBenchmark:
    def test_recovers_planted_assignment(self):
        """Best assignment contains both planted bindings on at least 18 of 20 seeds."""
        recovered = 0
        for seed in range(20):
            dataset, model, tensor, _, pruned, truth, config = _planted_run(seed)
            best, _ = ebco_search(model, dataset, tensor, pruned, config)
            recovered += best.assignment.contains(truth.assignment)
        assert recovered >= 18

    def test_fewer_evaluations_than_dp(self):
        """EBCO reaches the optimum's neighbourhood no later than DP on at least 15 of 20 seeds."""
        wins = 0
        for seed in range(20):
            dataset, model, tensor, domains, pruned, _, config = _planted_run(seed)
            _, ebco_trace = ebco_search(model, dataset, tensor, pruned, config)
            dp_best, dp_trace = dp_baseline(model, dataset, domains, config)
            ebco = reach_count(ebco_trace, dp_best.objective, Config.REACH_TOLERANCE)
            dp = reach_count(dp_trace, dp_best.objective, Config.REACH_TOLERANCE)
            wins += ebco is not None and ebco <= dp
        assert wins >= 15
