"""Top-level agent loops: classical baseline and the quantum-classical hybrid.

Both agents share the policy, the update rule, and the rewarded-history
determinism: everything an agent becomes is a function of the rewarded epochs
it saw.  The hybrid replaces the classical between-rewards sampling with
exponential amplitude-amplification searches, paying ``alpha_o * k + 1``
epochs per attempt, and can hand over to purely classical play via a mode
switch rule once amplification stops being worth it.

Every epoch is accounted: quantum epochs enter the trace with reward zero,
verification epochs carry the measured sequence's reward.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .amplify import SearchParams, exponential_search
from .env import BinaryTreeEnv, ContractViolation, DseEnvironment
from .policy import HValueTreePolicy, RewardedHistory, winning_probability
from .seeding import RngStream, as_stream

KIND_CLASSICAL = 0
KIND_QUANTUM = 1
KIND_VERIFICATION = 2

# amplification keeps paying off below this q_min; guard only against a
# saturated policy driving the Boyer cap to infinity
_Q_MIN_FLOOR = 1e-18


@dataclass(frozen=True)
class StopRule:
    """Stop when the winning probability, reward count, or epoch budget hits."""

    q_threshold: float | None = None
    max_rewards: int | None = None
    max_epochs: int | None = None

    def __post_init__(self):
        if self.q_threshold is None and self.max_rewards is None and self.max_epochs is None:
            raise ContractViolation("stop rule needs at least one criterion")
        if self.max_rewards is not None and self.max_rewards < 1:
            raise ContractViolation("max_rewards must be >= 1")
        if self.max_epochs is not None and self.max_epochs < 1:
            raise ContractViolation("max_epochs must be >= 1")


@dataclass(frozen=True)
class ModeSwitchRule:
    """When the hybrid agent fixes k = 0 and stays classical.

    Exactly one variant is active.  ``q_threshold`` consumes the instrumented
    true winning probability; ``reward_frequency`` and ``reward_count`` only
    consume what the agent itself observed.
    """

    variant: str = "always_quantum"
    q_stop: float | None = None
    window: int | None = None
    frequency: float | None = None
    j_stop: int | None = None

    @classmethod
    def always_quantum(cls) -> "ModeSwitchRule":
        return cls(variant="always_quantum")

    @classmethod
    def on_q_threshold(cls, q_stop: float) -> "ModeSwitchRule":
        return cls(variant="q_threshold", q_stop=float(q_stop))

    @classmethod
    def on_reward_frequency(cls, window: int, frequency: float) -> "ModeSwitchRule":
        if window < 1 or not (0.0 < frequency <= 1.0):
            raise ContractViolation("need window >= 1 and frequency in (0, 1]")
        return cls(variant="reward_frequency", window=window, frequency=frequency)

    @classmethod
    def on_reward_count(cls, j_stop: int) -> "ModeSwitchRule":
        if j_stop < 0:
            raise ContractViolation("j_stop must be >= 0")
        return cls(variant="reward_count", j_stop=j_stop)

    @property
    def needs_true_q(self) -> bool:
        return self.variant == "q_threshold"

    def fires(self, q: float, n_rewards: int, recent_outcomes) -> bool:
        if self.variant == "always_quantum":
            return False
        if self.variant == "q_threshold":
            return q >= self.q_stop
        if self.variant == "reward_count":
            return n_rewards >= self.j_stop
        if self.variant == "reward_frequency":
            if len(recent_outcomes) < self.window:
                return False
            return sum(recent_outcomes) / self.window >= self.frequency
        raise ContractViolation(f"unknown switch variant {self.variant!r}")


@dataclass
class AgentTrace:
    """Complete record of one agent run.

    ``kinds``/``rewards`` are per-epoch arrays when epoch recording is on;
    interval and learning-time statistics only need the reward epochs, the
    winning-probability snapshots, and the totals, which are always kept.
    """

    q_initial: float
    q_after: list[float] = field(default_factory=list)
    reward_epochs: list[int] = field(default_factory=list)
    rewarded_history: RewardedHistory = field(default_factory=RewardedHistory)
    total_epochs: int = 0
    censored: bool = False
    stop_reason: str = ""
    n_classical_epochs: int = 0
    n_attempts: int = 0
    sum_attempt_k: int = 0
    kinds: np.ndarray | None = None
    rewards: np.ndarray | None = None
    attempt_ks: list[int] | None = None

    def intervals(self) -> list[int]:
        """Epochs between consecutive rewards (first interval from epoch 0)."""
        out = []
        prev = 0
        for e in self.reward_epochs:
            out.append(e - prev)
            prev = e
        return out

    def q_in_interval(self, j: int) -> float:
        return self.q_initial if j == 0 else self.q_after[j - 1]


class _EpochRecorder:
    def __init__(self, horizon: int | None, record: bool,
                 include_quantum: bool = True):
        self.record = record
        self.horizon = horizon
        self.include_quantum = include_quantum
        self.kinds: list[int] = []
        self.rewards: list[float] = []

    def add(self, kind: int, reward: float) -> None:
        if not self.record:
            return
        if self.horizon is not None and len(self.kinds) >= self.horizon:
            return
        self.kinds.append(kind)
        self.rewards.append(reward)

    def add_quantum_block(self, n: int) -> None:
        if not self.include_quantum:
            return
        for _ in range(n):
            self.add(KIND_QUANTUM, 0.0)

    def finalize(self, trace: AgentTrace) -> None:
        if self.record:
            trace.kinds = np.array(self.kinds, dtype=np.int8)
            trace.rewards = np.array(self.rewards, dtype=np.float64)


class _RunState:
    def __init__(self, policy, env, stop: StopRule, stream: RngStream,
                 recorder: _EpochRecorder, keep_attempt_ks: bool):
        self.policy = policy
        self.env = env
        self.stop = stop
        self.stream = stream
        self.recorder = recorder
        self.trace = AgentTrace(q_initial=winning_probability(policy, env))
        if keep_attempt_ks:
            self.trace.attempt_ks = []
        self.q = self.trace.q_initial
        self.epoch = 0
        self.stopped = False

    def budget_left(self) -> int | None:
        if self.stop.max_epochs is None:
            return None
        return self.stop.max_epochs - self.epoch

    def budget_censors(self) -> bool:
        return self.stop.q_threshold is not None or self.stop.max_rewards is not None

    def hit_budget(self) -> None:
        self.stopped = True
        self.trace.stop_reason = "max_epochs"
        self.trace.censored = self.budget_censors()
        self.epoch = self.stop.max_epochs

    def on_reward(self, actions, reward: float) -> None:
        """Policy update plus bookkeeping at a rewarded epoch."""
        percepts = None
        if not isinstance(self.policy, HValueTreePolicy):
            percepts = self.env.evaluate(actions).percepts
        self.policy.update_on_reward(actions, reward, percepts)
        self.q = winning_probability(self.policy, self.env)
        t = self.trace
        t.rewarded_history.append(actions, reward)
        t.reward_epochs.append(self.epoch)
        t.q_after.append(self.q)
        if self.stop.q_threshold is not None and self.q >= self.stop.q_threshold:
            self.stopped = True
            t.stop_reason = "q_threshold"
        elif self.stop.max_rewards is not None and len(t.rewarded_history) >= self.stop.max_rewards:
            self.stopped = True
            t.stop_reason = "max_rewards"

    def finish(self) -> AgentTrace:
        t = self.trace
        t.total_epochs = self.epoch
        if not t.stop_reason:
            t.stop_reason = "max_epochs"
        self.recorder.finalize(t)
        return t


def _classical_epochs(state: _RunState, use_fast_path: bool = True) -> None:
    """Run classical epochs until the stop rule fires.

    The tree fast path inlines sampling and the leaf-reward lookup with
    locals-only bookkeeping between rewards; it consumes the random stream
    identically to the generic path and produces identical traces.
    """
    policy, env, stream = state.policy, state.env, state.stream
    fast = (use_fast_path and isinstance(policy, HValueTreePolicy)
            and isinstance(env, BinaryTreeEnv) and policy.layers == env.layers)
    rec = state.recorder
    recording = rec.record
    horizon = rec.horizon
    if fast:
        leaf_rewards = _leaf_reward_cache(env)
        layers = env.layers
        size = 1 << layers
        uniform = stream.uniform
        get = policy._p1.get  # the dict is mutated in place, never rebound
        steps = range(layers)
        kinds, rewards = rec.kinds, rec.rewards
        left = state.budget_left()
        epoch = state.epoch
        classical_count = 0
        while not state.stopped:
            if left is not None and left <= 0:
                state.epoch = epoch
                state.trace.n_classical_epochs += classical_count
                state.hit_budget()
                break
            node = 1
            for _ in steps:
                node = 2 * node + (1 if uniform() < get(node, 0.5) else 0)
            reward = leaf_rewards[node - size]
            epoch += 1
            classical_count += 1
            if left is not None:
                left -= 1
            if recording and (horizon is None or len(kinds) < horizon):
                kinds.append(KIND_CLASSICAL)
                rewards.append(reward)
            if reward > 0.0:
                leaf = node - size
                actions = tuple((leaf >> (layers - 1 - i)) & 1 for i in range(layers))
                state.epoch = epoch
                state.trace.n_classical_epochs += classical_count
                classical_count = 0
                state.on_reward(actions, reward)
        else:
            state.epoch = epoch
            state.trace.n_classical_epochs += classical_count
        return
    while not state.stopped:
        left = state.budget_left()
        if left is not None and left <= 0:
            state.hit_budget()
            break
        actions = policy.sample_sequence(stream)
        reward = env.reward_of(actions)
        state.epoch += 1
        state.trace.n_classical_epochs += 1
        rec.add(KIND_CLASSICAL, reward)
        if reward > 0.0:
            state.on_reward(actions, reward)


def _leaf_reward_cache(env: BinaryTreeEnv) -> list[float]:
    cached = getattr(env, "_leaf_reward_cache", None)
    if cached is None:
        cached = env.leaf_rewards().tolist()
        env._leaf_reward_cache = cached
    return cached


def run_classical(policy, env: DseEnvironment, stop: StopRule, rng,
                  record_epochs: bool = True,
                  use_fast_path: bool = True) -> AgentTrace:
    """Sample sequences directly from the policy, one epoch each, updating on
    every reward, until the stop rule fires."""
    stream = as_stream(rng)
    recorder = _EpochRecorder(stop.max_epochs, record_epochs)
    state = _RunState(policy, env, stop, stream, recorder, keep_attempt_ks=False)
    if stop.q_threshold is not None and state.q >= stop.q_threshold:
        state.trace.stop_reason = "q_threshold"
        return state.finish()
    _classical_epochs(state, use_fast_path)
    return state.finish()


def _empirical_q_min(policy_bound: float, rewards_seen: int, epochs_seen: int) -> float:
    if epochs_seen <= 0 or rewards_seen <= 0:
        return policy_bound
    return max(policy_bound, rewards_seen / epochs_seen)


def run_hybrid(policy, env: DseEnvironment, params: SearchParams,
               switch: ModeSwitchRule, stop: StopRule, rng,
               backend: str = "analytic", record_epochs: bool = True,
               use_fast_path: bool = True, firewall: bool = False,
               q_min_rule: str = "policy",
               curve_counts_quantum: bool = True) -> AgentTrace:
    """Alternate exponential quantum searches with classical policy updates.

    Each search attempt contributes ``alpha_o * k`` quantum epochs plus one
    verification epoch to the trace; the verification epoch carries the
    measured reward.  After every reward the policy and its q_min bound are
    recomputed and the switch rule may hand over to classical-only play.
    With ``firewall`` set, rules that consume the instrumented true winning
    probability are rejected, keeping the agent limited to its own
    observations.  ``curve_counts_quantum=False`` drops quantum epochs from
    the recorded per-epoch arrays (reward-bearing epochs only); totals and
    epoch budgets always count every epoch.
    """
    if firewall and switch.needs_true_q:
        raise ContractViolation("firewall forbids switch rules that read true Q")
    if q_min_rule not in ("policy", "empirical"):
        raise ContractViolation(f"unknown q_min rule {q_min_rule!r}")
    stream = as_stream(rng)
    recorder = _EpochRecorder(stop.max_epochs, record_epochs,
                              include_quantum=curve_counts_quantum)
    state = _RunState(policy, env, stop, stream, recorder,
                      keep_attempt_ks=record_epochs)
    trace = state.trace
    if stop.q_threshold is not None and state.q >= stop.q_threshold:
        trace.stop_reason = "q_threshold"
        return state.finish()

    recent = None
    if switch.variant == "reward_frequency":
        from collections import deque
        recent = deque(maxlen=switch.window)

    quantum = not switch.fires(state.q, 0, recent or ())
    while not state.stopped and quantum:
        left = state.budget_left()
        if left is not None and left <= 0:
            state.hit_budget()
            break
        q_min = policy.q_min_bound()
        if q_min_rule == "empirical":
            q_min = _empirical_q_min(q_min, len(trace.rewarded_history), state.epoch)
        q_min = min(max(q_min, _Q_MIN_FLOOR), 1.0)
        result = exponential_search(policy, env, params, q_min, stream,
                                    backend=backend, epoch_budget=left)
        trace.n_attempts += result.attempts
        trace.sum_attempt_k += sum(result.attempt_ks)
        if trace.attempt_ks is not None:
            trace.attempt_ks.extend(result.attempt_ks)
        for i, k in enumerate(result.attempt_ks):
            recorder.add_quantum_block(params.alpha_o * k)
            last = i == len(result.attempt_ks) - 1
            verification_reward = result.outcome.reward if (last and result.outcome) else 0.0
            recorder.add(KIND_VERIFICATION, verification_reward)
            if recent is not None:
                recent.append(1 if verification_reward > 0.0 else 0)
        if result.outcome is None:
            # a budget ran out inside the search
            state.epoch += result.total_epochs
            if left is not None and state.epoch >= state.stop.max_epochs:
                state.hit_budget()
            else:
                state.stopped = True
                trace.stop_reason = "attempt_budget"
                trace.censored = True
            break
        if left is not None and result.total_epochs > left:
            # the reward landed beyond the epoch budget; censor at the budget
            state.hit_budget()
            break
        state.epoch += result.total_epochs
        state.on_reward(result.outcome.measured, result.outcome.reward)
        if not state.stopped and switch.fires(state.q, len(trace.rewarded_history), recent or ()):
            quantum = False
    if not state.stopped and not quantum:
        _classical_epochs(state, use_fast_path)
    return state.finish()


@dataclass(frozen=True)
class IntervalStats:
    j: int
    n: int
    mean_t: float
    std_t: float
    mean_q: float


def epochs_to_reward_stats(traces) -> list[IntervalStats]:
    """Per-interval summary across traces: epochs to the (j+1)-th reward and
    the winning probability in force during that interval."""
    by_j: dict[int, list[tuple[int, float]]] = {}
    for trace in traces:
        for j, t_j in enumerate(trace.intervals()):
            by_j.setdefault(j, []).append((t_j, trace.q_in_interval(j)))
    out = []
    for j in sorted(by_j):
        ts = np.array([t for t, _ in by_j[j]], dtype=np.float64)
        qs = np.array([q for _, q in by_j[j]], dtype=np.float64)
        out.append(IntervalStats(j=j, n=ts.size, mean_t=float(ts.mean()),
                                 std_t=float(ts.std(ddof=1)) if ts.size > 1 else 0.0,
                                 mean_q=float(qs.mean())))
    return out
