"""Deterministic strictly epochal environments.

An environment here is a pure function from a full epoch's action sequence to
a percept sequence and a scalar reward.  Epochs have fixed length, the
environment resets after each one, and two evaluations of the same sequence
are always identical.  Action sequences are plain tuples of per-step action
indices; percepts are opaque string identifiers (for the built-in
environments: the action prefix that reaches the node).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ActionSequence = tuple[int, ...]

#: Largest sequence space that brute-force enumeration will walk.
DEFAULT_ENUMERATION_LIMIT = 2**24


class SpaceNotEnumerable(RuntimeError):
    """Sequence space exceeds the configured enumeration limit."""


class ContractViolation(ValueError):
    """An argument broke a documented precondition."""


@dataclass(frozen=True)
class EpochOutcome:
    """Percept sequence and reward returned for one epoch."""

    percepts: tuple[str, ...]
    reward: float

    def __post_init__(self):
        if not (self.reward >= 0.0):
            raise ContractViolation(f"reward must be >= 0, got {self.reward}")


class DseEnvironment:
    """Base class for deterministic strictly epochal environments.

    Subclasses provide ``epoch_length``, ``step_arities`` and ``evaluate``;
    everything else has generic implementations.  Instances are immutable
    after construction and safe to share between concurrently simulated
    agents.
    """

    epoch_length: int
    step_arities: tuple[int, ...]

    def evaluate(self, actions: ActionSequence) -> EpochOutcome:
        raise NotImplementedError

    def reward_of(self, actions: ActionSequence) -> float:
        """Reward only; override when cheaper than building percepts."""
        return self.evaluate(actions).reward

    def is_rewarded(self, actions: ActionSequence) -> bool:
        return self.reward_of(actions) > 0.0

    def space_size(self) -> int:
        return math.prod(self.step_arities)

    def validate_actions(self, actions: ActionSequence) -> None:
        if len(actions) != self.epoch_length:
            raise ContractViolation(
                f"sequence length {len(actions)} != epoch length {self.epoch_length}"
            )
        for step, (a, arity) in enumerate(zip(actions, self.step_arities)):
            if not (0 <= a < arity):
                raise ContractViolation(
                    f"action {a} at step {step} outside [0, {arity})"
                )

    def all_sequences(self, limit: int = DEFAULT_ENUMERATION_LIMIT):
        """Yield every action sequence in row-major order (first step slowest)."""
        if self.space_size() > limit:
            raise SpaceNotEnumerable(
                f"{self.space_size()} sequences exceed enumeration limit {limit}"
            )
        seq = [0] * self.epoch_length
        arities = self.step_arities
        while True:
            yield tuple(seq)
            step = self.epoch_length - 1
            while step >= 0:
                seq[step] += 1
                if seq[step] < arities[step]:
                    break
                seq[step] = 0
                step -= 1
            if step < 0:
                return

    def rewarded_sequences(self, limit: int = DEFAULT_ENUMERATION_LIMIT):
        """Yield every sequence with reward > 0 (generic: full enumeration)."""
        for seq in self.all_sequences(limit):
            if self.reward_of(seq) > 0.0:
                yield seq


def prefix_percept(prefix) -> str:
    """Canonical percept id for a node: the action prefix reaching it."""
    if all(a <= 9 for a in prefix):
        return "".join(str(a) for a in prefix)
    return ",".join(str(a) for a in prefix)


class BinaryTreeEnv(DseEnvironment):
    """Binary decision tree with one fully-rewarded path.

    The agent makes ``layers`` binary decisions per epoch.  Following
    ``correct_path`` exactly earns ``2**reward_exponent``; a sequence whose
    longest correct prefix has length ``x < layers`` earns
    ``floor(2**(reward_exponent + x - layers))``, which is zero once the
    deviation happens early enough.  Exactly ``2**reward_exponent`` sequences
    earn a positive reward.
    """

    def __init__(self, layers: int, reward_exponent: int,
                 correct_path: ActionSequence | None = None,
                 path_seed: int | None = None):
        if layers < 1:
            raise ContractViolation("layers must be >= 1")
        if not (0 <= reward_exponent <= layers):
            raise ContractViolation(
                f"reward_exponent must be in [0, {layers}], got {reward_exponent}"
            )
        if correct_path is None:
            # Results are path-invariant by symmetry; the default is seeded so
            # runs stay reproducible without pinning a fixed path everywhere.
            rng = np.random.default_rng(0 if path_seed is None else path_seed)
            correct_path = tuple(int(b) for b in rng.integers(0, 2, size=layers))
        correct_path = tuple(int(b) for b in correct_path)
        if len(correct_path) != layers or any(b not in (0, 1) for b in correct_path):
            raise ContractViolation("correct_path must be `layers` bits")
        self.epoch_length = layers
        self.step_arities = (2,) * layers
        self.layers = layers
        self.reward_exponent = reward_exponent
        self.correct_path = correct_path
        self._path_int = 0
        for b in correct_path:
            self._path_int = (self._path_int << 1) | b

    def correct_prefix_length(self, actions: ActionSequence) -> int:
        x = 0
        for a, c in zip(actions, self.correct_path):
            if a != c:
                break
            x += 1
        return x

    def reward_for_prefix_length(self, x: int) -> float:
        e = self.reward_exponent + x - self.layers
        return float(1 << e) if e >= 0 else 0.0

    def reward_of(self, actions: ActionSequence) -> float:
        return self.reward_for_prefix_length(self.correct_prefix_length(actions))

    def evaluate(self, actions: ActionSequence) -> EpochOutcome:
        self.validate_actions(actions)
        percepts = tuple(prefix_percept(actions[: j + 1]) for j in range(self.layers))
        return EpochOutcome(percepts=percepts, reward=self.reward_of(actions))

    def rewarded_sequences(self, limit: int = DEFAULT_ENUMERATION_LIMIT):
        """Exactly the 2**reward_exponent rewarded leaves, without full enumeration.

        A leaf is rewarded iff it leaves the correct path at decision
        x >= layers - reward_exponent (any suffix) or never leaves it.
        """
        l, k = self.layers, self.reward_exponent
        if 2**k > limit:
            raise SpaceNotEnumerable(f"2^{k} rewarded leaves exceed limit {limit}")
        path = self.correct_path
        for x in range(l - k, l):
            head = path[:x] + (1 - path[x],)
            for tail_bits in range(2 ** (l - x - 1)):
                tail = tuple((tail_bits >> (l - x - 2 - j)) & 1 for j in range(l - x - 1))
                yield head + tail
        yield path

    def leaf_rewards(self) -> np.ndarray:
        """Reward per leaf index (sequence read as a big-endian bit string)."""
        l, k = self.layers, self.reward_exponent
        idx = np.arange(2**l, dtype=np.int64)
        diff = idx ^ self._path_int
        # leading matching bits: l - bit_length(diff)
        bit_length = np.zeros(2**l, dtype=np.int64)
        nz = diff > 0
        bit_length[nz] = np.floor(np.log2(diff[nz])).astype(np.int64) + 1
        x = l - bit_length
        e = k + x - l
        return np.where(e >= 0, np.exp2(np.maximum(e, 0)), 0.0)


class TableEnv(DseEnvironment):
    """Small environment defined by an explicit sequence-to-reward table.

    Sequences missing from the table have reward zero.  Percepts use the
    canonical prefix encoding, so the whole environment is determined by the
    reward table and the step arities.
    """

    def __init__(self, step_arities, rewards: dict):
        arities = tuple(int(a) for a in step_arities)
        if not arities or any(a < 1 for a in arities):
            raise ContractViolation("step arities must be positive")
        self.epoch_length = len(arities)
        self.step_arities = arities
        table = {}
        for seq, r in rewards.items():
            seq = tuple(int(a) for a in seq)
            r = float(r)
            if r <= 0.0:
                raise ContractViolation(f"table rewards must be > 0, got {r} for {seq}")
            self._check_shape(seq)
            table[seq] = r
        if not table:
            raise ContractViolation("environment needs at least one rewarded sequence")
        self._table = table

    def _check_shape(self, seq: ActionSequence) -> None:
        if len(seq) != self.epoch_length:
            raise ContractViolation(f"table sequence {seq} has wrong length")
        for a, arity in zip(seq, self.step_arities):
            if not (0 <= a < arity):
                raise ContractViolation(f"table sequence {seq} violates arity {arity}")

    def reward_of(self, actions: ActionSequence) -> float:
        return self._table.get(tuple(actions), 0.0)

    def evaluate(self, actions: ActionSequence) -> EpochOutcome:
        self.validate_actions(actions)
        percepts = tuple(prefix_percept(actions[: j + 1])
                         for j in range(self.epoch_length))
        return EpochOutcome(percepts=percepts, reward=self.reward_of(actions))

    def rewarded_sequences(self, limit: int = DEFAULT_ENUMERATION_LIMIT):
        yield from sorted(self._table)


def load_reward_table(path) -> TableEnv:
    """Read a ``bitstring,reward`` table file into a TableEnv.

    One rewarded sequence per line, UTF-8, '#' starts a comment.  Bit strings
    must all have the same length; arity is binary.
    """
    rewards = {}
    length = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                bits, value = line.split(",")
                seq = tuple(int(c) for c in bits.strip())
                reward = float(value)
            except ValueError as exc:
                raise ContractViolation(f"{path}:{lineno}: bad table line {raw!r}") from exc
            if any(b not in (0, 1) for b in seq):
                raise ContractViolation(f"{path}:{lineno}: non-binary bitstring {bits!r}")
            if length is None:
                length = len(seq)
            elif len(seq) != length:
                raise ContractViolation(f"{path}:{lineno}: inconsistent sequence length")
            rewards[seq] = reward
    if not rewards:
        raise ContractViolation(f"{path}: table defines no rewarded sequences")
    return TableEnv(step_arities=(2,) * length, rewards=rewards)


def count_rewarded(env: DseEnvironment, limit: int = DEFAULT_ENUMERATION_LIMIT) -> int:
    """Exact number of rewarded sequences, by brute-force enumeration."""
    if env.space_size() > limit:
        raise SpaceNotEnumerable(
            f"{env.space_size()} sequences exceed enumeration limit {limit}"
        )
    return sum(1 for seq in env.all_sequences(limit) if env.reward_of(seq) > 0.0)
