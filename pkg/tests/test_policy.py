import math

import numpy as np
import pytest

from qrlsim.env import BinaryTreeEnv, ContractViolation, TableEnv
from qrlsim.policy import (
    HValueTreePolicy,
    MapPolicy,
    RewardedHistory,
    decision_probability,
    replay_history,
    winning_probability,
)
from qrlsim.seeding import as_stream, derive_rng

# frozen oracle: 0.5 + 0.5 * math.tanh(0.1 * 32)
P_AFTER_32 = 0.9983411989198256


class TestDecisionProbability:
    def test_equal_h_gives_half(self):
        for c in (-3.0, 0.0, 17.5):
            for beta in (0.01, 0.1, 2.0):
                assert decision_probability((c, c), 0, beta) == 0.5

    def test_trained_pair(self):
        assert decision_probability((32.0, 0.0), 0, 0.1) == pytest.approx(P_AFTER_32, abs=1e-6)
        assert decision_probability((0.0, 32.0), 0, 0.1) == pytest.approx(1.0 - P_AFTER_32, abs=1e-6)

    def test_pair_sums_to_one_exactly(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            h = tuple(rng.normal(scale=20.0, size=2))
            beta = float(rng.uniform(0.01, 1.0))
            assert decision_probability(h, 0, beta) + decision_probability(h, 1, beta) == 1.0

    def test_nonfinite_rejected(self):
        with pytest.raises(ContractViolation):
            decision_probability((math.inf, 0.0), 0, 0.1)
        with pytest.raises(ContractViolation):
            decision_probability((0.0, 0.0), 0, 0.0)


def random_tree_policy(rng, layers, beta=0.1, updates=10):
    policy = HValueTreePolicy(layers, beta=beta)
    for _ in range(updates):
        seq = tuple(int(b) for b in rng.integers(0, 2, size=layers))
        policy.update_on_reward(seq, float(rng.uniform(0.5, 4.0)))
    return policy


class TestSequenceProbability:
    def test_fresh_uniform(self):
        policy = HValueTreePolicy(3, beta=0.1)
        for bits in np.ndindex(2, 2, 2):
            assert policy.sequence_probability(tuple(bits)) == 0.125

    def test_map_policy_uniform(self):
        policy = MapPolicy((2,) * 12, beta=0.1)
        assert policy.sequence_probability((0,) * 12) == pytest.approx(2.0**-12, rel=1e-12)

    @pytest.mark.parametrize("layers", [3, 8, 12, 14])
    def test_normalization(self, layers):
        rng = np.random.default_rng(layers)
        policy = random_tree_policy(rng, layers)
        total = math.fsum(policy.sequence_probability(tuple(bits))
                          for bits in np.ndindex(*(2,) * layers))
        assert abs(total - 1.0) < 1e-10

    def test_map_policy_normalization_after_updates(self):
        env = BinaryTreeEnv(6, 2, path_seed=2)
        policy = MapPolicy((2,) * 6, beta=0.1)
        rng = np.random.default_rng(3)
        for _ in range(5):
            seq = tuple(int(b) for b in rng.integers(0, 2, size=6))
            out = env.evaluate(seq)
            policy.update_on_reward(seq, 2.0, out.percepts)
        total = math.fsum(policy.sequence_probability(tuple(bits))
                          for bits in np.ndindex(*(2,) * 6))
        assert abs(total - 1.0) < 1e-10

    def test_factorization_matches_decision_probability(self):
        rng = np.random.default_rng(11)
        policy = random_tree_policy(rng, 6)
        seq = (1, 0, 1, 1, 0, 1)
        node = 1
        prod = 1.0
        for b in seq:
            prod *= decision_probability(policy.h_pair(node), b, policy.beta)
            node = 2 * node + b
        assert policy.sequence_probability(seq) == pytest.approx(prod, rel=1e-12)


class TestSampling:
    def test_fresh_uniform_frequencies(self):
        policy = HValueTreePolicy(3, beta=0.1)
        stream = as_stream(derive_rng(5, 0))
        n = 10**6
        counts = np.zeros(8, dtype=np.int64)
        for _ in range(n):
            seq = policy.sample_sequence(stream)
            counts[seq[0] * 4 + seq[1] * 2 + seq[2]] += 1
        freqs = counts / n
        assert np.all(np.abs(freqs - 0.125) < 0.002)

    def test_trained_concentration(self):
        policy = HValueTreePolicy(4, beta=2.0)
        path = (1, 0, 0, 1)
        policy.update_on_reward(path, 10.0)
        stream = as_stream(derive_rng(6, 0))
        hits = sum(policy.sample_sequence(stream) == path for _ in range(2000))
        assert hits / 2000 > policy.sequence_probability(path) - 0.05
        assert policy.sequence_probability(path) > 0.99

    def test_seeded_determinism(self):
        policy = HValueTreePolicy(5, beta=0.1)
        a = [policy.sample_sequence(as_stream(derive_rng(7, 3))) for _ in range(50)]
        b = [policy.sample_sequence(as_stream(derive_rng(7, 3))) for _ in range(50)]
        # streams restart identically, so blocks of draws match
        assert a == b

    def test_map_policy_sampling_matches_probability(self):
        policy = MapPolicy((3, 2), beta=0.5)
        env = TableEnv((3, 2), {(1, 0): 2.0})
        out = env.evaluate((1, 0))
        policy.update_on_reward((1, 0), 2.0, out.percepts)
        stream = as_stream(derive_rng(8, 0))
        n = 200000
        counts = {}
        for _ in range(n):
            s = policy.sample_sequence(stream)
            counts[s] = counts.get(s, 0) + 1
        for seq, c in counts.items():
            p = policy.sequence_probability(seq)
            assert abs(c / n - p) < 4 * math.sqrt(p * (1 - p) / n) + 1e-4


class TestWinningProbability:
    def test_fresh_fig3(self):
        env = BinaryTreeEnv(12, 5, path_seed=0)
        policy = HValueTreePolicy(12, beta=0.1)
        assert winning_probability(policy, env) == pytest.approx(0.0078125, abs=1e-15)

    def test_tree_recursion_matches_brute_force(self):
        rng = np.random.default_rng(13)
        for trial in range(20):
            layers = int(rng.integers(2, 11))
            exponent = int(rng.integers(0, layers + 1))
            env = BinaryTreeEnv(layers, exponent, path_seed=trial)
            policy = random_tree_policy(rng, layers, updates=int(rng.integers(0, 12)))
            brute = math.fsum(policy.sequence_probability(s)
                              for s in env.all_sequences() if env.reward_of(s) > 0)
            assert abs(winning_probability(policy, env) - brute) < 1e-12

    def test_all_rewarded_is_one(self):
        env = BinaryTreeEnv(6, 6, path_seed=1)
        policy = HValueTreePolicy(6, beta=0.1)
        assert winning_probability(policy, env) == pytest.approx(1.0, abs=1e-12)

    def test_map_policy_on_tree(self):
        env = BinaryTreeEnv(5, 2, path_seed=3)
        policy = MapPolicy((2,) * 5, beta=0.1)
        assert winning_probability(policy, env) == pytest.approx(4 / 32, abs=1e-12)


class TestQMinBound:
    def test_fresh_uniform(self):
        assert HValueTreePolicy(12, beta=0.1).q_min_bound() == 2.0**-12
        assert MapPolicy((2,) * 12, beta=0.1).q_min_bound() == pytest.approx(2.0**-12)

    def test_below_winning_probability(self):
        rng = np.random.default_rng(17)
        for trial in range(30):
            layers = int(rng.integers(2, 10))
            exponent = int(rng.integers(0, layers + 1))
            env = BinaryTreeEnv(layers, exponent, path_seed=trial)
            policy = random_tree_policy(rng, layers, updates=int(rng.integers(0, 15)))
            assert policy.q_min_bound() <= winning_probability(policy, env) + 1e-15

    def test_product_of_per_layer_minima(self):
        policy = HValueTreePolicy(2, beta=0.1)
        policy.update_on_reward((0, 1), 5.0)
        p_root = decision_probability(policy.h_pair(1), 1, 0.1)  # the rarer root choice
        p_leaf = decision_probability(policy.h_pair(2), 0, 0.1)
        assert policy.q_min_bound() == pytest.approx(p_root * p_leaf, rel=1e-12)


class TestUpdates:
    def test_first_decision_probability_after_max_reward(self):
        env = BinaryTreeEnv(12, 5, path_seed=0)
        policy = HValueTreePolicy(12, beta=0.1)
        policy.update_on_reward(env.correct_path, 32.0)
        probs = policy.prefix_conditional((), 0)
        assert probs[env.correct_path[0]] == pytest.approx(P_AFTER_32, abs=1e-6)

    def test_zero_reward_rejected(self):
        policy = HValueTreePolicy(4, beta=0.1)
        with pytest.raises(ContractViolation):
            policy.update_on_reward((0, 0, 0, 0), 0.0)

    def test_replay_reproduces_policy(self):
        rng = np.random.default_rng(19)
        env = BinaryTreeEnv(6, 3, path_seed=6)
        policy = HValueTreePolicy(6, beta=0.1)
        history = RewardedHistory()
        for _ in range(8):
            seq = tuple(int(b) for b in rng.integers(0, 2, size=6))
            r = env.reward_of(seq)
            if r > 0:
                policy.update_on_reward(seq, r)
                history.append(seq, r)
        again = replay_history(HValueTreePolicy(6, beta=0.1), history, env)
        assert again._h == policy._h
        assert again._p1 == policy._p1
        assert again.dump_state() == policy.dump_state()

    def test_map_policy_replay(self):
        env = BinaryTreeEnv(4, 2, path_seed=8)
        history = RewardedHistory()
        for seq in env.rewarded_sequences():
            history.append(seq, env.reward_of(seq))
        a = replay_history(MapPolicy((2,) * 4, beta=0.2), history, env)
        b = replay_history(MapPolicy((2,) * 4, beta=0.2), history, env)
        assert a.dump_state() == b.dump_state()
        assert a._transitions == b._transitions

    def test_initial_h_shift_irrelevant(self):
        env = BinaryTreeEnv(5, 2, path_seed=4)
        shifted = HValueTreePolicy(5, beta=0.1, initial_h=7.5)
        plain = HValueTreePolicy(5, beta=0.1, initial_h=0.0)
        for seq in env.rewarded_sequences():
            r = env.reward_of(seq)
            shifted.update_on_reward(seq, r)
            plain.update_on_reward(seq, r)
        for bits in np.ndindex(*(2,) * 5):
            assert shifted.sequence_probability(tuple(bits)) == pytest.approx(
                plain.sequence_probability(tuple(bits)), rel=1e-12)

    def test_map_policy_needs_percepts(self):
        policy = MapPolicy((2, 2), beta=0.1)
        with pytest.raises(ContractViolation):
            policy.update_on_reward((0, 1), 1.0)

    def test_history_rejects_zero_reward(self):
        with pytest.raises(ContractViolation):
            RewardedHistory().append((0, 1), 0.0)
