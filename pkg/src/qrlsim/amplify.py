"""Amplitude-amplification machinery for epoch-oracle exploration.

Two interchangeable backends simulate the amplified measurement that ends a
block of quantum epochs:

* ``statevector`` keeps the full signed-real amplitude vector over the
  sequence space and applies the oracle sign flip plus the reflection about
  the initial state explicitly.
* ``analytic`` uses the closed-form success law ``G(Q, k)`` together with the
  fact that amplification preserves relative probabilities inside the
  rewarded set (and inside its complement), so outcomes can be drawn without
  touching a state vector.

Creating the oracle costs ``alpha_o`` environment epochs per iteration, so a
block of ``k`` iterations plus its verification epoch consumes
``alpha_o * k + 1`` epochs total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import ActionSequence, BinaryTreeEnv, ContractViolation, DseEnvironment
from .policy import HValueTreePolicy
from .seeding import RngStream, as_stream

STATEVECTOR_DIM_LIMIT = 2**20


def grover_success_prob(q: float, k: int) -> float:
    """Probability of measuring a rewarded sequence after k iterations."""
    if not (0.0 <= q <= 1.0):
        raise ContractViolation(f"Q must be in [0, 1], got {q}")
    if k < 0:
        raise ContractViolation(f"k must be >= 0, got {k}")
    return math.sin((2 * k + 1) * math.asin(math.sqrt(q))) ** 2


def q_kmax(k_max: int) -> float:
    """Smallest winning probability that k_max iterations amplify to one."""
    if k_max < 0:
        raise ContractViolation(f"k_max must be >= 0, got {k_max}")
    return math.sin(math.pi / (2.0 * (2 * k_max + 1))) ** 2


def q_max_threshold(alpha_o: int, k: int, tol: float = 1e-9) -> float:
    """Turnover winning probability for k-iteration play.

    Numerical root of ``G(Q, k) / (alpha_o k + 1) - Q``: below the returned
    value, amplified play yields rewards at a higher per-epoch rate than
    classical play.  The root taken is the upper edge of the advantage
    region connected to Q = 0 (for k >= 5 further disconnected slivers of
    advantage exist at larger Q; the threshold that steers a learning agent,
    whose Q grows from small values, is this first crossing, which is also
    the reading that decreases monotonically in both arguments).  Returns 0
    when amplified play never wins.
    """
    if alpha_o < 1 or k < 1:
        raise ContractViolation("alpha_o and k must be >= 1")
    denom = alpha_o * k + 1

    def f(q: float) -> float:
        return grover_success_prob(q, k) / denom - q

    # all roots lie below 1/denom, where G <= 1 pins f negative
    grid = np.linspace(0.0, 1.0 / denom, 8193)
    vals = [f(q) for q in grid]
    bracket = None
    for i in range(1, len(grid) - 1):
        if vals[i] > 0.0 >= vals[i + 1]:
            bracket = (grid[i], grid[i + 1])
            break
    if bracket is None:
        return 0.0
    lo, hi = bracket
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo < tol:
            break
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# sequence-space indexing

def seq_to_index(actions: ActionSequence, arities) -> int:
    idx = 0
    for a, n in zip(actions, arities):
        idx = idx * n + a
    return idx


def index_to_seq(idx: int, arities) -> ActionSequence:
    out = [0] * len(arities)
    for step in range(len(arities) - 1, -1, -1):
        n = arities[step]
        out[step] = idx % n
        idx //= n
    return tuple(out)


# ---------------------------------------------------------------------------
# statevector backend

@dataclass
class AmplitudeState:
    """Signed-real amplitudes over the sequence space plus the fixed data of
    the iteration: the reference (initial) state and the rewarded mask."""

    amplitudes: np.ndarray
    reference: np.ndarray
    rewarded_mask: np.ndarray
    arities: tuple[int, ...]

    def norm_squared(self) -> float:
        return float(np.dot(self.amplitudes, self.amplitudes))

    def rewarded_mass(self) -> float:
        amp = self.amplitudes[self.rewarded_mask]
        return float(np.dot(amp, amp))


def _probability_vector(policy, env: DseEnvironment) -> np.ndarray:
    if isinstance(policy, HValueTreePolicy) and env.step_arities == (2,) * env.epoch_length:
        v = np.ones(1)
        get = policy._p1.get
        for depth in range(policy.layers):
            p1 = np.array([get(n, 0.5) for n in range(1 << depth, 2 << depth)])
            nxt = np.empty(2 * v.size)
            nxt[0::2] = v * (1.0 - p1)
            nxt[1::2] = v * p1
            v = nxt
        return v
    return np.array([policy.sequence_probability(seq) for seq in env.all_sequences()])


def statevector_prepare(policy, env: DseEnvironment,
                        limit: int = STATEVECTOR_DIM_LIMIT) -> AmplitudeState:
    """Initial action state: amplitude sqrt(policy probability) per sequence."""
    dim = env.space_size()
    if dim > limit:
        raise ContractViolation(f"sequence space {dim} exceeds statevector limit {limit}")
    probs = _probability_vector(policy, env)
    if isinstance(env, BinaryTreeEnv):
        mask = env.leaf_rewards() > 0.0
    else:
        mask = np.array([env.reward_of(seq) > 0.0 for seq in env.all_sequences()])
    amplitudes = np.sqrt(probs)
    return AmplitudeState(amplitudes=amplitudes, reference=amplitudes.copy(),
                          rewarded_mask=mask, arities=tuple(env.step_arities))


def grover_iterate(state: AmplitudeState) -> AmplitudeState:
    """One iteration: oracle sign flip, then reflection about the reference.

    The reflection is applied as ``1 - 2|psi><psi|``; the resulting global
    sign alternation is unobservable in measurement statistics.
    """
    amp = state.amplitudes.copy()
    amp[state.rewarded_mask] = -amp[state.rewarded_mask]
    proj = float(np.dot(state.reference, amp))
    amp -= (2.0 * proj) * state.reference
    return AmplitudeState(amplitudes=amp, reference=state.reference,
                          rewarded_mask=state.rewarded_mask, arities=state.arities)


def statevector_measure(state: AmplitudeState, rng) -> ActionSequence:
    """Draw one sequence with probability amplitude squared."""
    stream = as_stream(rng)
    probs = state.amplitudes * state.amplitudes
    cdf = np.cumsum(probs)
    u = stream.uniform() * cdf[-1]
    idx = int(np.searchsorted(cdf, u, side="right"))
    idx = min(idx, probs.size - 1)
    return index_to_seq(idx, state.arities)


def measure_batch(state: AmplitudeState, n: int, gen: np.random.Generator) -> np.ndarray:
    """Vectorized measurement: n sequence indices drawn independently."""
    probs = state.amplitudes * state.amplitudes
    cdf = np.cumsum(probs)
    u = gen.random(n) * cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), probs.size - 1)


# ---------------------------------------------------------------------------
# analytic backend

class _TreeConditionalSampler:
    """Exact conditional sampling on a binary tree without enumeration.

    A sequence is rewarded iff it stays on the correct path for at least
    ``layers - reward_exponent`` decisions; each deviation point owns a whole
    subtree whose conditional suffix distribution is just the policy itself.
    """

    def __init__(self, policy, env: BinaryTreeEnv):
        self.policy = policy
        self.env = env
        l, kk = env.layers, env.reward_exponent
        path = env.correct_path
        p_correct = []
        prefix = [1.0]
        for d in range(l):
            probs = policy.prefix_conditional(path[:d], d)
            pc = probs[path[d]]
            p_correct.append(pc)
            prefix.append(prefix[-1] * pc)
        self.p_correct = p_correct
        self.prefix = prefix
        dev = [prefix[d] * (1.0 - p_correct[d]) for d in range(l)]
        self.rewarded_weights = dev[l - kk:] + [prefix[l]]
        self.unrewarded_weights = dev[: l - kk]
        # term rounding can push the float sum a hair past 1 near lock-in
        self.q = min(math.fsum(self.rewarded_weights), 1.0)

    def _suffix(self, head: ActionSequence, stream: RngStream) -> ActionSequence:
        l = self.env.layers
        policy = self.policy
        bits = list(head)
        if isinstance(policy, HValueTreePolicy):
            node = 1
            for b in bits:
                node = 2 * node + b
            get = policy._p1.get
            for _ in range(l - len(bits)):
                b = 1 if stream.uniform() < get(node, 0.5) else 0
                bits.append(b)
                node = 2 * node + b
        else:
            for step in range(len(bits), l):
                probs = policy.prefix_conditional(tuple(bits), step)
                bits.append(1 if stream.uniform() < probs[1] else 0)
        return tuple(bits)

    def _draw(self, weights, offset: int, has_full_path: bool,
              stream: RngStream) -> ActionSequence:
        total = math.fsum(weights)
        if total <= 0.0:
            raise ContractViolation("conditional sampling from a zero-mass set")
        u = stream.uniform() * total
        acc = 0.0
        pick = len(weights) - 1
        for i, w in enumerate(weights):
            acc += w
            if u < acc:
                pick = i
                break
        path = self.env.correct_path
        if has_full_path and pick == len(weights) - 1:
            return path
        d = offset + pick
        head = path[:d] + (1 - path[d],)
        return self._suffix(head, stream)

    def sample_rewarded(self, stream: RngStream) -> ActionSequence:
        l, kk = self.env.layers, self.env.reward_exponent
        return self._draw(self.rewarded_weights, l - kk, True, stream)

    def sample_unrewarded(self, stream: RngStream) -> ActionSequence:
        return self._draw(self.unrewarded_weights, 0, False, stream)


class _EnumeratedConditionalSampler:
    """Conditional sampling by full enumeration (small generic spaces)."""

    def __init__(self, policy, env: DseEnvironment, limit: int = 2**16):
        if env.space_size() > limit:
            raise ContractViolation(
                f"analytic sampling would enumerate {env.space_size()} sequences"
            )
        seqs = list(env.all_sequences())
        probs = np.array([policy.sequence_probability(s) for s in seqs])
        mask = np.array([env.reward_of(s) > 0.0 for s in seqs])
        self.seqs = seqs
        self.q = min(float(math.fsum(probs[mask])), 1.0)
        self.rew_idx = np.flatnonzero(mask)
        self.unrew_idx = np.flatnonzero(~mask)
        self.rew_cdf = np.cumsum(probs[mask])
        self.unrew_cdf = np.cumsum(probs[~mask])

    def _pick(self, idx, cdf, stream: RngStream) -> ActionSequence:
        if idx.size == 0 or cdf[-1] <= 0.0:
            raise ContractViolation("conditional sampling from a zero-mass set")
        u = stream.uniform() * cdf[-1]
        j = min(int(np.searchsorted(cdf, u, side="right")), idx.size - 1)
        return self.seqs[idx[j]]

    def sample_rewarded(self, stream: RngStream) -> ActionSequence:
        return self._pick(self.rew_idx, self.rew_cdf, stream)

    def sample_unrewarded(self, stream: RngStream) -> ActionSequence:
        return self._pick(self.unrew_idx, self.unrew_cdf, stream)


def _conditional_sampler(policy, env: DseEnvironment):
    if isinstance(env, BinaryTreeEnv) and getattr(policy, "layers", None) == env.layers:
        return _TreeConditionalSampler(policy, env)
    return _EnumeratedConditionalSampler(policy, env)


# ---------------------------------------------------------------------------
# outcomes and search

@dataclass(frozen=True)
class GroverOutcome:
    """Result of one amplified block: k iterations plus verification epoch."""

    measured: ActionSequence
    iterations_k: int
    epochs_consumed: int
    rewarded: bool
    reward: float


@dataclass(frozen=True)
class SearchParams:
    """Exploration-search knobs.

    ``k_strategy`` selects the iteration count per attempt: ``boyer`` draws k
    uniformly below the growing bound m (capped at ``k_max`` when set);
    ``fixed`` always plays exactly ``k_max`` iterations, the regime of the
    iteration-limited speedup analysis (a device capped at k_max coherent
    iterations gains nothing from shorter bursts while the winning
    probability is below the k_max amplification threshold).
    """

    lam: float = 6.0 / 5.0
    alpha_o: int = 2
    k_max: int | None = None
    attempt_budget: int | None = None
    k_strategy: str = "boyer"

    def __post_init__(self):
        if not (1.0 < self.lam < 4.0 / 3.0):
            raise ContractViolation(f"lambda must be in (1, 4/3), got {self.lam}")
        if self.alpha_o < 1:
            raise ContractViolation(f"alpha_o must be >= 1, got {self.alpha_o}")
        if self.k_max is not None and self.k_max < 1:
            raise ContractViolation(f"k_max must be >= 1 when set, got {self.k_max}")
        if self.attempt_budget is not None and self.attempt_budget < 1:
            raise ContractViolation("attempt_budget must be >= 1 when set")
        if self.k_strategy not in ("boyer", "fixed"):
            raise ContractViolation(f"unknown k strategy {self.k_strategy!r}")
        if self.k_strategy == "fixed" and self.k_max is None:
            raise ContractViolation("fixed k strategy needs k_max")


@dataclass(frozen=True)
class SearchResult:
    """Outcome of an exponential search; ``outcome`` is None only when a
    budget ran out, and ``total_epochs`` then carries the epochs spent."""

    outcome: GroverOutcome | None
    total_epochs: int
    attempts: int
    attempt_ks: tuple[int, ...]

    @property
    def budget_exceeded(self) -> bool:
        return self.outcome is None


class _AnalyticAttempts:
    def __init__(self, policy, env, alpha_o: int):
        self.sampler = _conditional_sampler(policy, env)
        self.env = env
        self.alpha_o = alpha_o
        self.q = self.sampler.q

    def run(self, k: int, stream: RngStream) -> GroverOutcome:
        g = grover_success_prob(self.q, k)
        if stream.uniform() < g:
            seq = self.sampler.sample_rewarded(stream)
        else:
            seq = self.sampler.sample_unrewarded(stream)
        reward = self.env.reward_of(seq)
        return GroverOutcome(measured=seq, iterations_k=k,
                             epochs_consumed=self.alpha_o * k + 1,
                             rewarded=reward > 0.0, reward=reward)


class _StatevectorAttempts:
    def __init__(self, policy, env, alpha_o: int):
        self.initial = statevector_prepare(policy, env)
        self.env = env
        self.alpha_o = alpha_o
        self.q = self.initial.rewarded_mass()

    def run(self, k: int, stream: RngStream) -> GroverOutcome:
        state = self.initial
        for _ in range(k):
            state = grover_iterate(state)
        seq = statevector_measure(state, stream)
        reward = self.env.reward_of(seq)
        return GroverOutcome(measured=seq, iterations_k=k,
                             epochs_consumed=self.alpha_o * k + 1,
                             rewarded=reward > 0.0, reward=reward)


BACKENDS = {"analytic": _AnalyticAttempts, "statevector": _StatevectorAttempts}


def analytic_grover_sample(policy, env: DseEnvironment, k: int, rng,
                           alpha_o: int = 2) -> GroverOutcome:
    """One amplified block sampled from the closed-form outcome law."""
    if k < 0:
        raise ContractViolation(f"k must be >= 0, got {k}")
    return _AnalyticAttempts(policy, env, alpha_o).run(k, as_stream(rng))


def exponential_search(policy, env: DseEnvironment, params: SearchParams,
                       q_min: float, rng, backend: str = "analytic",
                       epoch_budget: int | None = None,
                       attempts_factory=None) -> SearchResult:
    """Search with unknown winning probability until a reward is found.

    Each attempt draws k uniformly from {0, ..., ceil(m) - 1} (capped at
    ``params.k_max`` when set), runs the amplified block, and plays one
    verification epoch; on failure m grows by ``params.lam`` up to
    ``sqrt(1 / q_min)``.  Stops early when the attempt budget or the optional
    epoch budget is exhausted.
    """
    if not (0.0 < q_min <= 1.0):
        raise ContractViolation(f"q_min must be in (0, 1], got {q_min}")
    if backend not in BACKENDS:
        raise ContractViolation(f"unknown backend {backend!r}")
    stream = as_stream(rng)
    attempts_impl = (attempts_factory or BACKENDS[backend])(policy, env, params.alpha_o)
    m_cap = math.sqrt(1.0 / q_min)
    m = 1.0
    total_epochs = 0
    attempts = 0
    ks: list[int] = []
    while True:
        if params.attempt_budget is not None and attempts >= params.attempt_budget:
            return SearchResult(None, total_epochs, attempts, tuple(ks))
        if epoch_budget is not None and total_epochs >= epoch_budget:
            return SearchResult(None, total_epochs, attempts, tuple(ks))
        if params.k_strategy == "fixed":
            k = params.k_max
        else:
            k = stream.randint_below(math.ceil(m))
            if params.k_max is not None and k > params.k_max:
                k = params.k_max
        outcome = attempts_impl.run(k, stream)
        attempts += 1
        ks.append(k)
        total_epochs += outcome.epochs_consumed
        if outcome.rewarded:
            return SearchResult(outcome, total_epochs, attempts, tuple(ks))
        m = min(params.lam * m, m_cap)
