import math

import numpy as np
import pytest

from qrlsim.amplify import (
    SearchParams,
    analytic_grover_sample,
    exponential_search,
    grover_iterate,
    grover_success_prob,
    index_to_seq,
    measure_batch,
    q_kmax,
    q_max_threshold,
    seq_to_index,
    statevector_measure,
    statevector_prepare,
)
from qrlsim.env import BinaryTreeEnv, ContractViolation, TableEnv
from qrlsim.policy import HValueTreePolicy, MapPolicy, winning_probability
from qrlsim.seeding import as_stream, derive_rng
from .test_policy import random_tree_policy


class TestSuccessLaw:
    def test_k0_is_identity(self):
        for q in (0.0, 0.1, 0.25, 0.9, 1.0):
            assert grover_success_prob(q, 0) == pytest.approx(q, abs=1e-15)

    def test_quarter_one_iteration_is_certain(self):
        assert grover_success_prob(0.25, 1) == pytest.approx(1.0, abs=1e-12)

    def test_domain_checks(self):
        with pytest.raises(ContractViolation):
            grover_success_prob(1.5, 1)
        with pytest.raises(ContractViolation):
            grover_success_prob(0.5, -1)


class TestThresholds:
    def test_qmax_value(self):
        assert q_max_threshold(1, 1) == pytest.approx(0.3964, abs=5e-4)

    def test_qmax_decreases_with_alpha(self):
        assert q_max_threshold(2, 1) < q_max_threshold(1, 1)

    def test_qmax_root_residual(self):
        q = q_max_threshold(1, 1)
        assert abs(grover_success_prob(q, 1) / 2 - q) < 1e-8

    def test_qmax_monotone_in_k(self):
        values = [q_max_threshold(1, k) for k in range(1, 8)]
        assert values == sorted(values, reverse=True)

    def test_qkmax_values(self):
        assert q_kmax(0) == pytest.approx(1.0, abs=1e-15)
        assert q_kmax(1) == pytest.approx(0.25, abs=1e-12)

    def test_qkmax_identity(self):
        for k in range(51):
            assert abs(grover_success_prob(q_kmax(k), k) - 1.0) < 1e-12

    def test_qkmax_strictly_decreasing(self):
        values = [q_kmax(k) for k in range(30)]
        assert all(a > b for a, b in zip(values, values[1:]))


class TestStatevector:
    def test_fresh_amplitudes_uniform(self):
        env = BinaryTreeEnv(3, 1, path_seed=0)
        state = statevector_prepare(HValueTreePolicy(3, beta=0.1), env)
        assert np.allclose(state.amplitudes, 1 / math.sqrt(8), atol=1e-15)

    def test_squared_amplitudes_reproduce_probabilities(self):
        rng = np.random.default_rng(2)
        env = BinaryTreeEnv(6, 2, path_seed=1)
        policy = random_tree_policy(rng, 6)
        state = statevector_prepare(policy, env)
        for i, seq in enumerate(env.all_sequences()):
            assert state.amplitudes[i] ** 2 == pytest.approx(
                policy.sequence_probability(seq), rel=1e-12)

    def test_norm_one_random_policies(self):
        rng = np.random.default_rng(3)
        for trial in range(10):
            layers = int(rng.integers(2, 9))
            env = BinaryTreeEnv(layers, int(rng.integers(0, layers + 1)), path_seed=trial)
            policy = random_tree_policy(rng, layers, updates=int(rng.integers(0, 10)))
            state = statevector_prepare(policy, env)
            assert abs(state.norm_squared() - 1.0) < 1e-12

    def test_dimension_limit(self):
        env = BinaryTreeEnv(12, 5, path_seed=0)
        with pytest.raises(ContractViolation):
            statevector_prepare(HValueTreePolicy(12, beta=0.1), env, limit=2**10)

    def test_mass_follows_success_law(self):
        rng = np.random.default_rng(4)
        for trial in range(10):
            layers = int(rng.integers(2, 11))
            env = BinaryTreeEnv(layers, int(rng.integers(0, layers + 1)), path_seed=trial)
            policy = random_tree_policy(rng, layers, updates=int(rng.integers(0, 10)))
            q = winning_probability(policy, env)
            state = statevector_prepare(policy, env)
            for k in range(1, 26):
                state = grover_iterate(state)
                assert abs(state.norm_squared() - 1.0) < 1e-12
                assert abs(state.rewarded_mass() - grover_success_prob(q, k)) < 1e-10

    def test_empty_mask_stays_empty(self):
        env = BinaryTreeEnv(4, 2, path_seed=0)
        state = statevector_prepare(HValueTreePolicy(4, beta=0.1), env)
        state.rewarded_mask[:] = False
        for _ in range(5):
            state = grover_iterate(state)
        assert state.rewarded_mass() == 0.0
        assert abs(state.norm_squared() - 1.0) < 1e-12

    def test_ratio_preserved_in_rewarded_subspace(self):
        rng = np.random.default_rng(5)
        env = BinaryTreeEnv(6, 3, path_seed=2)
        policy = random_tree_policy(rng, 6)
        q = winning_probability(policy, env)
        state = statevector_prepare(policy, env)
        base = state.reference**2
        mask = state.rewarded_mask
        for _ in range(7):
            state = grover_iterate(state)
        mass = state.rewarded_mass()
        conditional = state.amplitudes[mask] ** 2 / mass
        assert np.max(np.abs(conditional - base[mask] / q)) < 1e-10

    def test_measure_deterministic_state(self):
        env = BinaryTreeEnv(3, 0, path_seed=0)
        state = statevector_prepare(HValueTreePolicy(3, beta=0.1), env)
        state.amplitudes[:] = 0.0
        idx = 5
        state.amplitudes[idx] = 1.0
        for trial in range(20):
            seq = statevector_measure(state, derive_rng(trial, 0))
            assert seq_to_index(seq, state.arities) == idx

    def test_measure_seeded_determinism(self):
        env = BinaryTreeEnv(5, 2, path_seed=1)
        state = statevector_prepare(HValueTreePolicy(5, beta=0.1), env)
        a = [statevector_measure(state, derive_rng(9, 1)) for _ in range(10)]
        b = [statevector_measure(state, derive_rng(9, 1)) for _ in range(10)]
        assert a == b

    def test_measure_batch_uniform(self):
        env = BinaryTreeEnv(4, 1, path_seed=1)
        state = statevector_prepare(HValueTreePolicy(4, beta=0.1), env)
        idx = measure_batch(state, 10**6, derive_rng(10, 0))
        counts = np.bincount(idx, minlength=16)
        p = 1 / 16
        bound = 4 * math.sqrt(p * (1 - p) / 10**6)
        assert np.max(np.abs(counts / 10**6 - p)) < bound


class TestIndexCodec:
    def test_round_trip(self):
        arities = (2, 3, 2)
        for idx in range(12):
            assert seq_to_index(index_to_seq(idx, arities), arities) == idx


class TestAnalyticSample:
    def test_k0_matches_policy_distribution(self):
        rng = np.random.default_rng(6)
        env = BinaryTreeEnv(4, 2, path_seed=3)
        policy = random_tree_policy(rng, 4, updates=5)
        stream = as_stream(derive_rng(11, 0))
        n = 200000
        counts = {}
        for _ in range(n):
            out = analytic_grover_sample(policy, env, 0, stream, alpha_o=1)
            assert out.epochs_consumed == 1
            counts[out.measured] = counts.get(out.measured, 0) + 1
        for seq in env.all_sequences():
            p = policy.sequence_probability(seq)
            se = math.sqrt(p * (1 - p) / n)
            assert abs(counts.get(seq, 0) / n - p) <= 4 * se + 1e-4

    def test_certain_reward_at_quarter(self):
        env = TableEnv((4,), {(0,): 1.0})  # uniform policy -> Q = 0.25
        policy = MapPolicy((4,), beta=0.1)
        stream = as_stream(derive_rng(12, 0))
        for _ in range(200):
            out = analytic_grover_sample(policy, env, 1, stream, alpha_o=2)
            assert out.rewarded and out.measured == (0,)
            assert out.epochs_consumed == 3

    def test_epoch_cost_accounting(self):
        env = BinaryTreeEnv(5, 2, path_seed=0)
        policy = HValueTreePolicy(5, beta=0.1)
        stream = as_stream(derive_rng(13, 0))
        for k in range(6):
            out = analytic_grover_sample(policy, env, k, stream, alpha_o=2)
            assert out.epochs_consumed == 2 * k + 1


class TestExponentialSearch:
    def test_all_rewarded_terminates_immediately(self):
        env = BinaryTreeEnv(4, 4, path_seed=0)  # every leaf rewarded
        policy = HValueTreePolicy(4, beta=0.1)
        params = SearchParams(lam=6 / 5, alpha_o=1)
        for trial in range(50):
            result = exponential_search(policy, env, params, 1.0, derive_rng(trial, 4))
            assert result.total_epochs == 1
            assert result.attempts == 1
            assert result.attempt_ks == (0,)
            assert result.outcome.rewarded

    def test_attempt_budget(self):
        env = BinaryTreeEnv(10, 0, path_seed=0)  # single rewarded leaf
        policy = HValueTreePolicy(10, beta=0.1)
        params = SearchParams(lam=6 / 5, alpha_o=1, attempt_budget=2)
        result = exponential_search(policy, env, params, 2.0**-10, derive_rng(0, 5))
        if result.outcome is None:
            assert result.attempts == 2
            assert result.total_epochs >= 2
        assert result.budget_exceeded == (result.outcome is None)

    def test_epoch_budget(self):
        env = BinaryTreeEnv(10, 0, path_seed=0)
        policy = HValueTreePolicy(10, beta=0.1)
        params = SearchParams(lam=6 / 5, alpha_o=1)
        result = exponential_search(policy, env, params, 2.0**-10,
                                    derive_rng(1, 5), epoch_budget=1)
        assert result.attempts <= 2

    def test_mean_epochs_bound(self):
        # fresh policy on the 12/5 tree: mean epochs to reward <= 9/4 / sqrt(Q)
        env = BinaryTreeEnv(12, 5, path_seed=0)
        q = 0.0078125
        params = SearchParams(lam=6 / 5, alpha_o=1)
        n = 10**4
        totals = np.empty(n)
        for i in range(n):
            policy = HValueTreePolicy(12, beta=0.1)
            result = exponential_search(policy, env, params, policy.q_min_bound(),
                                        derive_rng(14, i))
            assert result.outcome is not None
            totals[i] = result.total_epochs
        bound = (9 / 4) / math.sqrt(q)
        se = totals.std(ddof=1) / math.sqrt(n)
        assert totals.mean() <= bound + 3 * se

    def test_statevector_backend_agrees_with_analytic(self):
        env = BinaryTreeEnv(5, 2, path_seed=2)
        params = SearchParams(lam=6 / 5, alpha_o=1)
        n = 4000
        outcomes = {}
        for backend in ("analytic", "statevector"):
            first = []
            epochs = []
            for i in range(n):
                policy = HValueTreePolicy(5, beta=0.1)
                result = exponential_search(policy, env, params, policy.q_min_bound(),
                                            derive_rng(15, i), backend=backend)
                first.append(result.outcome.measured)
                epochs.append(result.total_epochs)
            outcomes[backend] = (first, np.array(epochs, dtype=float))
        mean_a = outcomes["analytic"][1].mean()
        mean_s = outcomes["statevector"][1].mean()
        pooled_se = math.sqrt(outcomes["analytic"][1].var(ddof=1) / n
                              + outcomes["statevector"][1].var(ddof=1) / n)
        assert abs(mean_a - mean_s) <= 4 * pooled_se

    def test_invalid_params(self):
        with pytest.raises(ContractViolation):
            SearchParams(lam=1.5)
        with pytest.raises(ContractViolation):
            SearchParams(alpha_o=0)
        with pytest.raises(ContractViolation):
            SearchParams(k_max=0)
        with pytest.raises(ContractViolation):
            SearchParams(k_strategy="fixed")  # needs k_max
        with pytest.raises(ContractViolation):
            SearchParams(k_strategy="other", k_max=2)
        env = BinaryTreeEnv(3, 1, path_seed=0)
        policy = HValueTreePolicy(3, beta=0.1)
        with pytest.raises(ContractViolation):
            exponential_search(policy, env, SearchParams(), 0.0, derive_rng(0, 0))

    def test_kmax1_capped_boyer_meets_interval_bound(self):
        # capped draws still beat (alpha_o pi^2/16) / (k_max Q) at k_max = 1
        env = BinaryTreeEnv(12, 5, path_seed=0)
        q = 0.0078125
        params = SearchParams(lam=6 / 5, alpha_o=1, k_max=1)
        n = 3000
        totals = np.empty(n)
        for i in range(n):
            policy = HValueTreePolicy(12, beta=0.1)
            result = exponential_search(policy, env, params, policy.q_min_bound(),
                                        derive_rng(18, i))
            totals[i] = result.total_epochs
        bound = (math.pi**2 / 16.0) / q
        se = totals.std(ddof=1) / math.sqrt(n)
        assert totals.mean() <= bound + 3 * se

    def test_fixed_strategy_always_plays_k_max(self):
        env = BinaryTreeEnv(10, 1, path_seed=0)
        params = SearchParams(lam=6 / 5, alpha_o=1, k_max=3, k_strategy="fixed")
        for i in range(30):
            policy = HValueTreePolicy(10, beta=0.1)
            result = exponential_search(policy, env, params, policy.q_min_bound(),
                                        derive_rng(17, i))
            assert all(k == 3 for k in result.attempt_ks)

    def test_k_max_cap_respected(self):
        env = BinaryTreeEnv(10, 1, path_seed=0)
        params = SearchParams(lam=6 / 5, alpha_o=1, k_max=2)
        for i in range(50):
            policy = HValueTreePolicy(10, beta=0.1)
            result = exponential_search(policy, env, params, policy.q_min_bound(),
                                        derive_rng(16, i))
            assert all(k <= 2 for k in result.attempt_ks)
