"""Per-epoch action-sequence policies and their exact probability machinery.

A policy assigns every full action sequence a probability that factorizes
over per-step decisions conditioned on the action prefix so far.  Two
implementations are provided: the h-value tree agent (per-edge weights,
two-choice tanh rule, additive reward updates) and a map-building agent that
keeps per-percept action weights and treats unseen percepts as uniform.

Policies update only on rewarded epochs; their state is a pure function of
the rewarded history.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .env import (
    ActionSequence,
    BinaryTreeEnv,
    ContractViolation,
    DseEnvironment,
    SpaceNotEnumerable,
)
from .seeding import RngStream


def decision_probability(h_pair, chosen: int, beta: float) -> float:
    """Two-choice probability 0.5 + 0.5*tanh(beta * (h_chosen - h_other)).

    The two choices' probabilities sum to one exactly because tanh is odd.
    """
    h0, h1 = h_pair
    if not (math.isfinite(h0) and math.isfinite(h1)):
        raise ContractViolation(f"h values must be finite, got {h_pair}")
    if beta <= 0 or not math.isfinite(beta):
        raise ContractViolation(f"beta must be positive and finite, got {beta}")
    if chosen not in (0, 1):
        raise ContractViolation(f"chosen must be 0 or 1, got {chosen}")
    diff = h0 - h1 if chosen == 0 else h1 - h0
    return 0.5 + 0.5 * math.tanh(beta * diff)


class HValueTreePolicy:
    """Binary-decision policy with one h value per tree edge.

    Nodes are heap-indexed: the root is 1 and the children of node ``n`` are
    ``2n`` (action 0) and ``2n + 1`` (action 1).  Only edges touched by an
    update are stored; untouched decisions stay at probability 1/2.  A common
    initial h value shifts every stored pair equally and therefore never
    changes any probability.
    """

    def __init__(self, layers: int, beta: float, initial_h: float = 0.0):
        if layers < 1:
            raise ContractViolation("layers must be >= 1")
        if beta <= 0 or not math.isfinite(beta):
            raise ContractViolation(f"beta must be positive and finite, got {beta}")
        if not math.isfinite(initial_h):
            raise ContractViolation("initial_h must be finite")
        self.layers = layers
        self.beta = beta
        self.initial_h = initial_h
        self._h: dict[int, float] = {}        # edge (child node) -> h value
        self._p1: dict[int, float] = {}       # decision node -> P(action 1)
        self.version = 0

    @property
    def step_arities(self) -> tuple[int, ...]:
        return (2,) * self.layers

    def h_pair(self, node: int) -> tuple[float, float]:
        init = self.initial_h
        return (self._h.get(2 * node, init), self._h.get(2 * node + 1, init))

    def p1_at(self, node: int) -> float:
        return self._p1.get(node, 0.5)

    def prefix_conditional(self, prefix: ActionSequence, step: int) -> list[float]:
        node = 1
        for b in prefix:
            node = 2 * node + b
        p1 = self._p1.get(node, 0.5)
        return [1.0 - p1, p1]

    def sequence_probability(self, actions: ActionSequence) -> float:
        if len(actions) != self.layers:
            raise ContractViolation(
                f"sequence length {len(actions)} != layers {self.layers}"
            )
        p = 1.0
        node = 1
        get = self._p1.get
        for b in actions:
            p1 = get(node, 0.5)
            p *= p1 if b == 1 else 1.0 - p1
            node = 2 * node + b
        return p

    def sample_sequence(self, stream: RngStream) -> ActionSequence:
        node = 1
        bits = []
        get = self._p1.get
        for _ in range(self.layers):
            b = 1 if stream.uniform() < get(node, 0.5) else 0
            bits.append(b)
            node = 2 * node + b
        return tuple(bits)

    def update_on_reward(self, actions: ActionSequence, reward: float,
                         percepts=None) -> None:
        """Add the reward to every h value along the played path."""
        if not (reward > 0.0):
            raise ContractViolation(f"updates require reward > 0, got {reward}")
        if not math.isfinite(reward):
            raise ContractViolation("reward must be finite")
        if len(actions) != self.layers:
            raise ContractViolation("sequence length mismatch")
        h = self._h
        init = self.initial_h
        beta = self.beta
        node = 1
        for b in actions:
            child = 2 * node + b
            h[child] = h.get(child, init) + reward
            diff = h.get(2 * node + 1, init) - h.get(2 * node, init)
            self._p1[node] = 0.5 + 0.5 * math.tanh(beta * diff)
            node = child
        self.version += 1

    def q_min_bound(self) -> float:
        """Product over layers of the smallest per-decision probability.

        Untouched nodes contribute 1/2; a layer's minimum drops below that
        only where updates created an h imbalance.
        """
        # min(p, 1-p) never exceeds 1/2, so untouched nodes can only set the
        # ceiling and the per-layer minimum over touched nodes is exact.
        layer_min = [0.5] * self.layers
        for node, p1 in self._p1.items():
            y = node.bit_length() - 1
            m = p1 if p1 < 0.5 else 1.0 - p1
            if m < layer_min[y]:
                layer_min[y] = m
        out = 1.0
        for m in layer_min:
            out *= m
        return out

    def copy(self) -> "HValueTreePolicy":
        dup = HValueTreePolicy(self.layers, self.beta, self.initial_h)
        dup._h = dict(self._h)
        dup._p1 = dict(self._p1)
        dup.version = self.version
        return dup

    def dump_state(self) -> str:
        """Stored h pairs as one ``prefix h0 h1`` line per touched node."""
        lines = []
        for node in sorted(self._p1):
            depth = node.bit_length() - 1
            bits = "".join(str((node >> (depth - 1 - i)) & 1) for i in range(depth))
            h0, h1 = self.h_pair(node)
            lines.append(f"{bits or '.'} {h0!r} {h1!r}")
        return "\n".join(lines)


def _softmax(weights, scale: float) -> list[float]:
    shifted = [scale * w for w in weights]
    top = max(shifted)
    exps = [math.exp(v - top) for v in shifted]
    total = sum(exps)
    return [e / total for e in exps]


def additive_update(weights: list[float], action: int, reward: float) -> None:
    weights[action] += reward


UPDATE_RULES = {"additive": additive_update}


class MapPolicy:
    """Policy that builds a percept map and keeps per-percept action weights.

    Steps whose percept has never been seen draw uniformly over the step's
    actions.  Rewarded epochs record the observed transitions and feed the
    taken actions to the (pluggable) weight update; probabilities for a known
    percept are softmax(2 * beta * weights), which for binary choices equals
    the h-value tree rule exactly.
    """

    def __init__(self, step_arities, beta: float, update_rule="additive"):
        arities = tuple(int(a) for a in step_arities)
        if not arities or any(a < 1 for a in arities):
            raise ContractViolation("step arities must be positive")
        if beta <= 0 or not math.isfinite(beta):
            raise ContractViolation("beta must be positive and finite")
        self.step_arities = arities
        self.layers = len(arities)
        self.beta = beta
        if isinstance(update_rule, str):
            try:
                update_rule = UPDATE_RULES[update_rule]
            except KeyError:
                raise ContractViolation(f"unknown update rule {update_rule!r}") from None
        self._update = update_rule
        self._weights: dict[str, list[float]] = {}
        self._probs: dict[str, list[float]] = {}
        self._step_of: dict[str, int] = {}
        self._transitions: dict[tuple[str, int], str] = {}
        self.version = 0

    _ROOT = ""

    def _step_probs(self, percept, step: int) -> list[float]:
        if percept is not None and percept in self._probs:
            return self._probs[percept]
        n = self.step_arities[step]
        return [1.0 / n] * n

    def prefix_conditional(self, prefix: ActionSequence, step: int) -> list[float]:
        percept = self._ROOT
        for j, a in enumerate(prefix):
            percept = self._transitions.get((percept, a)) if percept is not None else None
        return list(self._step_probs(percept, step))

    def sequence_probability(self, actions: ActionSequence) -> float:
        if len(actions) != self.layers:
            raise ContractViolation("sequence length mismatch")
        p = 1.0
        percept = self._ROOT
        for step, a in enumerate(actions):
            probs = self._step_probs(percept, step)
            if not (0 <= a < self.step_arities[step]):
                raise ContractViolation(f"action {a} outside arity at step {step}")
            p *= probs[a]
            percept = self._transitions.get((percept, a)) if percept is not None else None
        return p

    def sample_sequence(self, stream: RngStream) -> ActionSequence:
        actions = []
        percept = self._ROOT
        for step in range(self.layers):
            probs = self._step_probs(percept, step)
            u = stream.uniform()
            acc = 0.0
            a = len(probs) - 1
            for i, q in enumerate(probs):
                acc += q
                if u < acc:
                    a = i
                    break
            actions.append(a)
            percept = self._transitions.get((percept, a)) if percept is not None else None
        return tuple(actions)

    def update_on_reward(self, actions: ActionSequence, reward: float,
                         percepts=None) -> None:
        if not (reward > 0.0):
            raise ContractViolation(f"updates require reward > 0, got {reward}")
        if percepts is None:
            raise ContractViolation("map policy updates need the epoch's percepts")
        if len(actions) != self.layers or len(percepts) != self.layers:
            raise ContractViolation("sequence/percept length mismatch")
        percept = self._ROOT
        for step, (a, nxt) in enumerate(zip(actions, percepts)):
            self._transitions[(percept, a)] = nxt
            weights = self._weights.get(percept)
            if weights is None:
                weights = self._weights[percept] = [0.0] * self.step_arities[step]
                self._step_of[percept] = step
            self._update(weights, a, reward)
            self._probs[percept] = _softmax(weights, 2.0 * self.beta)
            percept = nxt
        self.version += 1

    def q_min_bound(self) -> float:
        per_step = [1.0 / n for n in self.step_arities]
        for percept, probs in self._probs.items():
            step = self._step_of[percept]
            m = min(probs)
            if m < per_step[step]:
                per_step[step] = m
        out = 1.0
        for m in per_step:
            out *= m
        return out

    def copy(self) -> "MapPolicy":
        dup = MapPolicy(self.step_arities, self.beta, self._update)
        dup._weights = {k: list(v) for k, v in self._weights.items()}
        dup._probs = {k: list(v) for k, v in self._probs.items()}
        dup._step_of = dict(self._step_of)
        dup._transitions = dict(self._transitions)
        dup.version = self.version
        return dup

    def dump_state(self) -> str:
        lines = []
        for percept in sorted(self._weights):
            w = " ".join(repr(v) for v in self._weights[percept])
            lines.append(f"{percept or '.'} {w}")
        return "\n".join(lines)


@dataclass
class RewardedHistory:
    """Ordered rewarded epochs (sequence, reward); the agent's whole memory."""

    entries: list[tuple[ActionSequence, float]] = field(default_factory=list)

    def append(self, actions: ActionSequence, reward: float) -> None:
        if not (reward > 0.0):
            raise ContractViolation("rewarded history only holds rewards > 0")
        self.entries.append((tuple(actions), float(reward)))

    def __len__(self) -> int:
        return len(self.entries)

    def key(self, truncate: int | None = None):
        entries = self.entries if truncate is None else self.entries[:truncate]
        return tuple(a for a, _ in entries)


def replay_history(policy, history: RewardedHistory,
                   env: DseEnvironment | None = None):
    """Apply a rewarded history to a policy; returns the policy.

    Map policies need the epoch percepts, which are recomputed from the
    (deterministic) environment when one is given.
    """
    for actions, reward in history.entries:
        percepts = env.evaluate(actions).percepts if env is not None else None
        policy.update_on_reward(actions, reward, percepts)
    return policy


def winning_probability(policy, env: DseEnvironment,
                        limit: int = 2**24) -> float:
    """Total policy mass on rewarded sequences.

    Binary trees use an exact O(layers) recursion: every subtree hanging off
    the correct path is either entirely rewarded or entirely not, and the
    policy mass of a whole subtree given its root prefix is one.  Other
    environments are enumerated with exact (fsum) accumulation.
    """
    if isinstance(env, BinaryTreeEnv) and getattr(policy, "layers", None) == env.layers:
        l, k = env.layers, env.reward_exponent
        path = env.correct_path
        terms = []
        prefix_prob = 1.0
        if isinstance(policy, HValueTreePolicy):
            get = policy._p1.get
            node = 1
            for d, bit in enumerate(path):
                p1 = get(node, 0.5)
                p_correct = p1 if bit == 1 else 1.0 - p1
                if d >= l - k:
                    terms.append(prefix_prob * (1.0 - p_correct))
                prefix_prob *= p_correct
                node = 2 * node + bit
        else:
            for d in range(l):
                probs = policy.prefix_conditional(path[:d], d)
                p_correct = probs[path[d]]
                if d >= l - k:
                    terms.append(prefix_prob * (1.0 - p_correct))
                prefix_prob *= p_correct
        terms.append(prefix_prob)
        return min(math.fsum(terms), 1.0)
    if env.space_size() > limit:
        raise SpaceNotEnumerable(
            f"{env.space_size()} sequences exceed enumeration limit {limit}"
        )
    return min(math.fsum(policy.sequence_probability(seq)
                         for seq in env.rewarded_sequences(limit)), 1.0)


def q_min_bound(policy) -> float:
    """Policy-only lower bound on the winning probability."""
    return policy.q_min_bound()
