"""Exact oracles and estimators for the distributional and learning-time laws.

The central object is the rewarded-history distribution: the probability of
seeing a particular ordered list of rewarded sequences.  For enumerable
instances it is computed exactly (the chance that interval j ends with
sequence a is the policy mass of a divided by the winning probability in that
interval), and ensemble simulations are compared against it with total
variation distance under multinomial error bounds.

Learning-time summaries and the quadratic / k_max-limited speedup bound
checks live here too, together with the interval-law tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as scipy_stats

from . import thresholds
from .agents import AgentTrace
from .env import ContractViolation, DseEnvironment
from .policy import winning_probability
from .amplify import q_kmax


def tv_distance(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def multinomial_tv_bound(probs, n: int, sigma: float = thresholds.SIGMA_DIST) -> float:
    """TV fluctuation allowance for an n-sample empirical distribution:
    sigma/2 times the summed per-category binomial standard errors."""
    return 0.5 * sigma * sum(math.sqrt(p * (1.0 - p) / n) for p in probs)


def two_sample_tv_bound(probs, n1: int, n2: int,
                        sigma: float = thresholds.SIGMA_DIST) -> float:
    return 0.5 * sigma * sum(math.sqrt(p * (1.0 - p) * (1.0 / n1 + 1.0 / n2))
                             for p in probs)


def history_label(key) -> str:
    """Stable text form of a truncated rewarded history: epochs joined by '>'."""
    parts = []
    for seq in key:
        if all(a <= 9 for a in seq):
            parts.append("".join(str(a) for a in seq))
        else:
            parts.append(",".join(str(a) for a in seq))
    return ">".join(parts)


@dataclass
class RewardedHistoryDistribution:
    """Probabilities over rewarded histories truncated at J rewards."""

    j_depth: int
    probs: dict = field(default_factory=dict)

    def total(self) -> float:
        return math.fsum(self.probs.values())

    def labeled(self) -> dict[str, float]:
        return {history_label(k): v for k, v in sorted(self.probs.items())}


def exact_history_distribution(initial_policy, env: DseEnvironment, j_depth: int,
                               branch_limit: int = thresholds.HISTORY_BRANCH_LIMIT
                               ) -> RewardedHistoryDistribution:
    """Exact law of the first ``j_depth`` rewarded sequences.

    Walks the tree of rewarded histories, carrying a scratch policy per
    branch; each interval contributes policy_mass(sequence) / Q for the
    policy in force during that interval.
    """
    rewarded = list(env.rewarded_sequences())
    if len(rewarded) ** j_depth > branch_limit:
        raise ContractViolation(
            f"{len(rewarded)}^{j_depth} histories exceed limit {branch_limit}"
        )
    dist = RewardedHistoryDistribution(j_depth=j_depth)

    def walk(policy, key, prob):
        if len(key) == j_depth:
            dist.probs[key] = prob
            return
        q = winning_probability(policy, env)
        for seq in rewarded:
            mass = policy.sequence_probability(seq)
            if mass <= 0.0:
                continue
            branch = policy.copy()
            outcome = env.evaluate(seq)
            branch.update_on_reward(seq, outcome.reward, outcome.percepts)
            walk(branch, key + (seq,), prob * (mass / q))

    walk(initial_policy.copy(), (), 1.0)
    return dist


def empirical_history_distribution(traces, j_depth: int) -> RewardedHistoryDistribution:
    """Frequency table of truncated rewarded histories across traces."""
    counts: dict = {}
    n = 0
    for trace in traces:
        if len(trace.rewarded_history) < j_depth:
            raise ContractViolation(
                f"trace reached only {len(trace.rewarded_history)} rewards, need {j_depth}"
            )
        key = trace.rewarded_history.key(j_depth)
        counts[key] = counts.get(key, 0) + 1
        n += 1
    if n == 0:
        raise ContractViolation("no traces given")
    dist = RewardedHistoryDistribution(j_depth=j_depth)
    dist.probs = {k: c / n for k, c in counts.items()}
    return dist


def learning_time(trace: AgentTrace, q_l: float) -> int | None:
    """First epoch with post-update winning probability >= q_l, None if never."""
    if trace.q_initial >= q_l:
        return 0
    for j, q in enumerate(trace.q_after):
        if q >= q_l:
            return trace.reward_epochs[j]
    return None


@dataclass
class LearningTimeSummary:
    q_l: float
    n: int
    mean_t: float
    std_t: float
    se_t: float
    mean_j: float
    se_j: float
    censored_count: int
    interval_means: list[float]
    interval_counts: list[int]

    @classmethod
    def from_traces(cls, traces, q_l: float) -> "LearningTimeSummary":
        ts, js = [], []
        censored = 0
        intervals: dict[int, list[int]] = {}
        for trace in traces:
            t = learning_time(trace, q_l)
            if t is None:
                censored += 1
                continue
            ts.append(t)
            j = 0 if t == 0 else next(i for i, q in enumerate(trace.q_after) if q >= q_l) + 1
            js.append(j)
            prev = 0
            for idx in range(j):
                e = trace.reward_epochs[idx]
                intervals.setdefault(idx, []).append(e - prev)
                prev = e
        if not ts:
            raise ContractViolation("every trace was censored")
        ts_arr = np.array(ts, dtype=np.float64)
        js_arr = np.array(js, dtype=np.float64)
        n = ts_arr.size
        std_t = float(ts_arr.std(ddof=1)) if n > 1 else 0.0
        std_j = float(js_arr.std(ddof=1)) if n > 1 else 0.0
        means = [float(np.mean(intervals[j])) for j in sorted(intervals)]
        counts = [len(intervals[j]) for j in sorted(intervals)]
        return cls(q_l=q_l, n=n, mean_t=float(ts_arr.mean()), std_t=std_t,
                   se_t=std_t / math.sqrt(n), mean_j=float(js_arr.mean()),
                   se_j=std_j / math.sqrt(n), censored_count=censored,
                   interval_means=means, interval_counts=counts)

    def __post_init__(self):
        if self.mean_t < self.mean_j:
            raise ContractViolation("mean learning time below mean reward count")


@dataclass(frozen=True)
class BoundCheck:
    """One verdict line: tolerance checks leave the sigma margin empty."""

    name: str
    measured: float
    bound: float
    sigma_margin: float | None
    passed: bool
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        margin = "" if self.sigma_margin is None else f"{self.sigma_margin:.3f}"
        return f"{self.name},{self.measured:.6g},{self.bound:.6g},{margin},{verdict}"


def theorem2_bound_check(classical: LearningTimeSummary,
                         hybrid: LearningTimeSummary,
                         alpha_s: float = 9.0 / 4.0,
                         alpha_o: int = 1,
                         sigma: float = thresholds.SIGMA_MEAN) -> BoundCheck:
    """Quadratic speedup: hybrid mean learning time against
    alpha * sqrt(classical mean time * mean rewards-to-learn)."""
    if classical.q_l != hybrid.q_l:
        raise ContractViolation("summaries use different learning thresholds")
    alpha = alpha_s * alpha_o
    tc, j = classical.mean_t, classical.mean_j
    if tc == 0.0 or hybrid.mean_t == 0.0:
        return BoundCheck("theorem2", hybrid.mean_t, alpha * math.sqrt(tc * j),
                          sigma_margin=float("inf"), passed=True,
                          details={"alpha_hat": 0.0})
    bound = alpha * math.sqrt(tc * j)
    d_tc = 0.5 * alpha * math.sqrt(j / tc)
    d_j = 0.5 * alpha * math.sqrt(tc / j)
    var_bound = (d_tc * classical.se_t) ** 2 + (d_j * classical.se_j) ** 2
    se = math.sqrt(hybrid.se_t ** 2 + var_bound)
    margin = (bound - hybrid.mean_t) / se if se > 0 else float("inf")
    alpha_hat = hybrid.mean_t / math.sqrt(tc * j)
    return BoundCheck("theorem2", hybrid.mean_t, bound, margin,
                      passed=margin >= -sigma,
                      details={"alpha_hat": alpha_hat,
                               "mean_t_classical": tc, "mean_j": j})


def theorem3_bound_check(classical: LearningTimeSummary,
                         nisq: LearningTimeSummary,
                         alpha_o: int, k_max: int, q_l: float,
                         sigma: float = thresholds.SIGMA_MEAN) -> BoundCheck:
    """Iteration-limited speedup: nisq mean learning time against
    (alpha_o pi^2 / 16) * classical mean time / k_max."""
    if k_max < 1:
        raise ContractViolation("k_max limited check needs k_max >= 1")
    if not (q_l < q_kmax(k_max)):
        raise ContractViolation(
            f"q_l={q_l} outside the validity region (< q_kmax={q_kmax(k_max):.6g})"
        )
    coef = alpha_o * math.pi ** 2 / 16.0 / k_max
    bound = coef * classical.mean_t
    se = math.sqrt(nisq.se_t ** 2 + (coef * classical.se_t) ** 2)
    margin = (bound - nisq.mean_t) / se if se > 0 else float("inf")
    extreme = alpha_o * classical.mean_t / (4.0 * k_max)
    return BoundCheck(f"theorem3_kmax{k_max}", nisq.mean_t, bound, margin,
                      passed=margin >= -sigma,
                      details={"extreme_case_estimate": extreme,
                               "ratio": nisq.mean_t / classical.mean_t
                               if classical.mean_t else float("nan")})


@dataclass
class RewardCurve:
    mean: np.ndarray
    stderr: np.ndarray
    n_alive: np.ndarray


def average_reward_curve(traces, horizon: int) -> RewardCurve:
    """Mean observed reward per epoch index across an ensemble."""
    sums = np.zeros(horizon)
    sumsq = np.zeros(horizon)
    counts = np.zeros(horizon, dtype=np.int64)
    for trace in traces:
        if trace.rewards is None:
            raise ContractViolation("curve needs traces recorded with epochs")
        r = trace.rewards[:horizon]
        m = r.size
        sums[:m] += r
        sumsq[:m] += r * r
        counts[:m] += 1
    alive = np.maximum(counts, 1)
    mean = sums / alive
    var = np.maximum(sumsq / alive - mean * mean, 0.0)
    with np.errstate(invalid="ignore"):
        corr = np.where(counts > 1, counts / np.maximum(counts - 1, 1), 1.0)
    stderr = np.sqrt(var * corr / alive)
    mean[counts == 0] = np.nan
    stderr[counts == 0] = np.nan
    return RewardCurve(mean=mean, stderr=stderr, n_alive=counts)


def expected_reward(policy, env: DseEnvironment, limit: int = 2**24) -> float:
    """Exact one-epoch expected reward under the policy, by enumeration."""
    return math.fsum(env.reward_of(seq) * policy.sequence_probability(seq)
                     for seq in env.rewarded_sequences(limit))


def ks_geometric(samples, q: float):
    """Kolmogorov-Smirnov test of interval lengths against geometric(q).

    The continuous-CDF KS test is conservative for a discrete law; the check
    is for non-rejection, never for confirmation.
    """
    result = scipy_stats.kstest(samples, scipy_stats.geom(q).cdf)
    return float(result.statistic), float(result.pvalue)


def chi2_two_sample(counts_a: dict, counts_b: dict):
    """Two-sample chi-square homogeneity test over history keys."""
    keys = sorted(set(counts_a) | set(counts_b))
    table = np.array([[counts_a.get(k, 0) for k in keys],
                      [counts_b.get(k, 0) for k in keys]], dtype=np.float64)
    result = scipy_stats.chi2_contingency(table)
    return float(result.statistic), float(result.pvalue)
