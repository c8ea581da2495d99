"""Named invariant suites behind ``qrlsim verify``.

Each suite returns a list of :class:`~qrlsim.stats.BoundCheck`; a suite
passes when every check does.  The suites pin the reference instances and
ensemble sizes; ``scale`` shrinks ensembles for quick smoke runs and must be
left at 1.0 for real verification.
"""

from __future__ import annotations

import csv
import math
import time
from pathlib import Path

import numpy as np

from . import thresholds
from .agents import ModeSwitchRule, StopRule, run_classical, run_hybrid
from .amplify import (
    SearchParams,
    analytic_grover_sample,
    exponential_search,
    grover_iterate,
    grover_success_prob,
    measure_batch,
    q_kmax,
    q_max_threshold,
    seq_to_index,
    statevector_prepare,
)
from .env import BinaryTreeEnv, ContractViolation, TableEnv
from .policy import HValueTreePolicy, MapPolicy, winning_probability
from .seeding import as_stream, derive_rng
from .stats import (
    BoundCheck,
    LearningTimeSummary,
    chi2_two_sample,
    empirical_history_distribution,
    exact_history_distribution,
    ks_geometric,
    multinomial_tv_bound,
    theorem2_bound_check,
    theorem3_bound_check,
    tv_distance,
    two_sample_tv_bound,
)

SUITES = ("amplify", "theorem1", "theorem2", "theorem3", "interval-laws", "all")


def _scaled(n: int, scale: float) -> int:
    return max(int(round(n * scale)), 100)


def _tolerance_check(name: str, measured: float, bound: float) -> BoundCheck:
    return BoundCheck(name, measured, bound, sigma_margin=None,
                      passed=measured <= bound)


def _random_tree_instance(rng):
    layers = int(rng.integers(2, 11))
    exponent = int(rng.integers(0, layers + 1))
    env = BinaryTreeEnv(layers, exponent, path_seed=int(rng.integers(0, 2**31)))
    policy = HValueTreePolicy(layers, beta=0.1)
    for _ in range(int(rng.integers(0, 15))):
        seq = tuple(int(b) for b in rng.integers(0, 2, size=layers))
        policy.update_on_reward(seq, float(rng.uniform(0.5, 4.0)))
    return policy, env


def suite_amplify(scale: float = 1.0, seed: int = 2024) -> list[BoundCheck]:
    checks = []

    t0 = time.perf_counter()
    qmax = q_max_threshold(1, 1)
    elapsed = time.perf_counter() - t0
    checks.append(_tolerance_check("q_max_value", abs(qmax - 0.3964), 5e-4))
    checks.append(_tolerance_check("q_max_runtime_s", elapsed, 1.0))
    checks.append(_tolerance_check(
        "q_max_root_residual",
        abs(grover_success_prob(qmax, 1) / 2.0 - qmax), 1e-8))
    checks.append(BoundCheck(
        "q_max_monotone", q_max_threshold(2, 1), qmax, None,
        passed=q_max_threshold(2, 1) < qmax and q_max_threshold(1, 2) < qmax))

    worst_qk = max(abs(grover_success_prob(q_kmax(k), k) - 1.0) for k in range(51))
    checks.append(_tolerance_check("q_kmax_identity", worst_qk, 1e-12))
    checks.append(BoundCheck(
        "q_kmax_monotone", q_kmax(2), q_kmax(1), None,
        passed=all(q_kmax(k + 1) < q_kmax(k) for k in range(20))))

    # G-law, norm conservation and in-set ratio preservation over random trees
    rng = np.random.default_rng(seed)
    worst_g = worst_norm = worst_ratio = 0.0
    for _ in range(100):
        policy, env = _random_tree_instance(rng)
        q = winning_probability(policy, env)
        state = statevector_prepare(policy, env)
        probs = state.reference**2
        mask = state.rewarded_mask
        for k in range(26):
            if k > 0:
                state = grover_iterate(state)
            worst_norm = max(worst_norm, abs(state.norm_squared() - 1.0))
            mass = state.rewarded_mass()
            worst_g = max(worst_g, abs(mass - grover_success_prob(q, k)))
            if mass > 1e-6:
                cond = state.amplitudes[mask] ** 2 / mass
                ref_cond = probs[mask] / q
                worst_ratio = max(worst_ratio, float(np.max(np.abs(cond - ref_cond))))
    checks.append(_tolerance_check("g_law_statevector", worst_g, 1e-10))
    checks.append(_tolerance_check("norm_conservation", worst_norm, 1e-12))
    checks.append(_tolerance_check("ratio_preservation", worst_ratio, 1e-10))

    checks.extend(_backend_equivalence(scale, seed))
    checks.extend(_search_outcome_equivalence(scale, seed))
    checks.extend(_turnover_straddle(scale, seed))
    return checks


def _search_outcome_equivalence(scale: float, seed: int) -> list[BoundCheck]:
    """Joint law of (first rewarded sequence, epochs consumed) agrees between
    the analytic and statevector search backends."""
    env = BinaryTreeEnv(5, 2, path_seed=2)
    params = SearchParams(lam=6 / 5, alpha_o=1)
    n = _scaled(10**5, scale)
    joint = {}
    for half, backend in enumerate(("analytic", "statevector")):
        counts: dict = {}
        for i in range(n):
            policy = HValueTreePolicy(5, beta=0.1)
            result = exponential_search(policy, env, params,
                                        policy.q_min_bound(),
                                        derive_rng(seed + 40, half * n + i),
                                        backend=backend)
            key = (result.outcome.measured, result.total_epochs)
            counts[key] = counts.get(key, 0) + 1
        joint[backend] = counts
    keys = set(joint["analytic"]) | set(joint["statevector"])
    tv = 0.5 * sum(abs(joint["analytic"].get(k, 0) / n
                       - joint["statevector"].get(k, 0) / n) for k in keys)
    pooled = [(joint["analytic"].get(k, 0) + joint["statevector"].get(k, 0))
              / (2 * n) for k in keys]
    bound = two_sample_tv_bound(pooled, n, n)
    return [_tolerance_check("search_outcome_equivalence_tv", tv, bound)]


def _backend_equivalence(scale: float, seed: int) -> list[BoundCheck]:
    """Analytic and statevector outcome distributions on an l=6 tree."""
    env = BinaryTreeEnv(6, 2, path_seed=7)
    policy = HValueTreePolicy(6, beta=0.1)
    rng = np.random.default_rng(seed + 1)
    for _ in range(6):
        seq = tuple(int(b) for b in rng.integers(0, 2, size=6))
        policy.update_on_reward(seq, float(rng.uniform(0.5, 3.0)))
    q = winning_probability(policy, env)
    n = _scaled(10**6, scale)
    dim = env.space_size()
    probs = np.array([policy.sequence_probability(s) for s in env.all_sequences()])
    mask = env.leaf_rewards() > 0
    checks = []
    for k in (1, 2, 3):
        g = grover_success_prob(q, k)
        outcome_probs = np.where(mask, g * probs / q, (1.0 - g) * probs / (1.0 - q))
        state = statevector_prepare(policy, env)
        for _ in range(k):
            state = grover_iterate(state)
        sv_counts = np.bincount(
            measure_batch(state, n, derive_rng(seed + 10 + k, 0)), minlength=dim)
        stream = as_stream(derive_rng(seed + 20 + k, 0))
        an_counts = np.zeros(dim, dtype=np.int64)
        for _ in range(n):
            out = analytic_grover_sample(policy, env, k, stream, alpha_o=1)
            an_counts[seq_to_index(out.measured, env.step_arities)] += 1
        tv = 0.5 * float(np.abs(sv_counts / n - an_counts / n).sum())
        bound = two_sample_tv_bound(outcome_probs, n, n)
        checks.append(_tolerance_check(f"backend_equivalence_k{k}", tv, bound))
    return checks


def _turnover_straddle(scale: float, seed: int) -> list[BoundCheck]:
    """Per-epoch reward rate of k=1 play straddles the classical rate around
    the turnover threshold (alpha_o=1)."""
    n = _scaled(10**6, scale)
    checks = []
    for q_target, name in ((0.35, "turnover_below"), (0.45, "turnover_above")):
        rewarded = int(round(q_target * 20))
        env = TableEnv((20,), {(i,): 1.0 for i in range(rewarded)})
        policy = MapPolicy((20,), beta=0.1)
        stream = as_stream(derive_rng(seed + 30, rewarded))
        wins = 0
        for _ in range(n):
            out = analytic_grover_sample(policy, env, 1, stream, alpha_o=1)
            wins += out.rewarded
        g_hat = wins / n
        rate_q = g_hat / 2.0  # alpha_o * k + 1 = 2 epochs per attempt
        se = math.sqrt(g_hat * (1.0 - g_hat) / n) / 2.0
        margin = (rate_q - q_target) / se
        if name == "turnover_below":
            passed = margin >= thresholds.SIGMA_MEAN
        else:
            passed = margin <= -thresholds.SIGMA_MEAN
        checks.append(BoundCheck(name, rate_q, q_target, margin, passed=passed))
    return checks


def _theorem1_instance():
    env = BinaryTreeEnv(3, 1, path_seed=5)
    policy = HValueTreePolicy(3, beta=0.1)
    return policy, env


def brute_force_history_probability(initial_policy, env, history,
                                    tail_tol: float = 1e-13) -> float:
    """Epoch-level enumerator for one rewarded history.

    Sums the probability of every epoch-by-epoch realization: for each
    interval, the chance of t - 1 unrewarded epochs followed by the target
    sequence, accumulated term by term until the remaining geometric tail is
    below ``tail_tol``.  Independent of the closed-form interval ratio used
    by ``exact_history_distribution``.
    """
    policy = initial_policy.copy()
    total = 1.0
    for actions, _reward in history:
        q = math.fsum(policy.sequence_probability(s)
                      for s in env.rewarded_sequences())
        mass = policy.sequence_probability(actions)
        interval = 0.0
        survive = 1.0
        while survive * mass > tail_tol * q:
            interval += survive * mass
            survive *= 1.0 - q
        total *= interval
        outcome = env.evaluate(actions)
        policy.update_on_reward(actions, outcome.reward, outcome.percepts)
    return total


def suite_theorem1(scale: float = 1.0, seed: int = 11,
                   out_dir=None) -> list[BoundCheck]:
    policy0, env = _theorem1_instance()
    j_depth = 2
    exact = exact_history_distribution(policy0, env, j_depth)

    checks = []
    checks.append(_tolerance_check(
        "exact_normalization", abs(exact.total() - 1.0), 1e-10))
    worst = 0.0
    for key, prob in exact.probs.items():
        history = [(a, env.reward_of(a)) for a in key]
        brute = brute_force_history_probability(policy0, env, history)
        worst = max(worst, abs(prob - brute))
    checks.append(_tolerance_check("exact_vs_epoch_enumerator", worst, 1e-10))

    n = _scaled(10**5, scale)
    stop = StopRule(max_rewards=j_depth)
    params = SearchParams(lam=6 / 5, alpha_o=1)
    classical, hybrid = [], []
    for i in range(n):
        classical.append(run_classical(policy0.copy(), env, stop,
                                       derive_rng(seed, i), record_epochs=False))
        hybrid.append(run_hybrid(policy0.copy(), env, params,
                                 ModeSwitchRule.always_quantum(), stop,
                                 derive_rng(seed + 1, i), record_epochs=False))
    emp_c = empirical_history_distribution(classical, j_depth)
    emp_h = empirical_history_distribution(hybrid, j_depth)
    bound = multinomial_tv_bound(exact.probs.values(), n)
    checks.append(_tolerance_check(
        "tv_classical_vs_exact", tv_distance(emp_c.probs, exact.probs), bound))
    checks.append(_tolerance_check(
        "tv_hybrid_vs_exact", tv_distance(emp_h.probs, exact.probs), bound))
    counts_c = {k: int(round(v * n)) for k, v in emp_c.probs.items()}
    counts_h = {k: int(round(v * n)) for k, v in emp_h.probs.items()}
    _stat, pvalue = chi2_two_sample(counts_c, counts_h)
    checks.append(BoundCheck("chi2_classical_vs_hybrid", pvalue,
                             thresholds.TEST_ALPHA, None,
                             passed=pvalue > thresholds.TEST_ALPHA))

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, dist in (("exact", exact), ("classical", emp_c), ("hybrid", emp_h)):
            with open(out / f"history_{name}.csv", "w", newline="",
                      encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["history", "probability"])
                for label, prob in dist.labeled().items():
                    writer.writerow([label, repr(float(prob))])
    return checks


def suite_interval_laws(scale: float = 1.0, seed: int = 23) -> list[BoundCheck]:
    env = BinaryTreeEnv(12, 5, path_seed=0)
    q0 = 2**5 / 2**12
    n = _scaled(10**4, scale)
    stop = StopRule(max_rewards=1)

    first = np.empty(n)
    for i in range(n):
        trace = run_classical(HValueTreePolicy(12, beta=0.1), env, stop,
                              derive_rng(seed, i), record_epochs=False)
        first[i] = trace.reward_epochs[0]
    se = first.std(ddof=1) / math.sqrt(n)
    margin = (first.mean() - 1.0 / q0) / se
    checks = [BoundCheck("classical_mean_first_interval", float(first.mean()),
                         1.0 / q0, float(margin),
                         passed=abs(margin) <= thresholds.SIGMA_MEAN)]
    _stat, pvalue = ks_geometric(first, q0)
    checks.append(BoundCheck("classical_interval_ks", pvalue,
                             thresholds.TEST_ALPHA, None,
                             passed=pvalue > thresholds.TEST_ALPHA))

    params = SearchParams(lam=6 / 5, alpha_o=1)
    hybrid_first = np.empty(n)
    for i in range(n):
        trace = run_hybrid(HValueTreePolicy(12, beta=0.1), env, params,
                           ModeSwitchRule.always_quantum(), stop,
                           derive_rng(seed + 1, i), record_epochs=False)
        hybrid_first[i] = trace.total_epochs
    bound = (9.0 / 4.0) / math.sqrt(q0)
    se_h = hybrid_first.std(ddof=1) / math.sqrt(n)
    margin_h = (bound - hybrid_first.mean()) / se_h
    checks.append(BoundCheck(
        "hybrid_mean_first_interval", float(hybrid_first.mean()), bound,
        float(margin_h), passed=margin_h >= -thresholds.SIGMA_MEAN,
        details={"alpha_s_hat": float(hybrid_first.mean() * math.sqrt(q0))}))
    checks.extend(_per_interval_laws(n // 2, seed + 2))
    return checks


def _per_interval_laws(n: int, seed: int) -> list[BoundCheck]:
    """Later intervals: classical mean t_j tracks 1/Q_j, hybrid mean t_j stays
    below (9/4) / sqrt(Q_j), interval by interval."""
    env = BinaryTreeEnv(12, 5, path_seed=0)
    stop = StopRule(max_rewards=3)
    params = SearchParams(lam=6 / 5, alpha_o=1)
    checks = []
    for mode in ("classical", "hybrid"):
        per_j = {0: ([], []), 1: ([], []), 2: ([], [])}
        for i in range(n):
            policy = HValueTreePolicy(12, beta=0.1)
            if mode == "classical":
                trace = run_classical(policy, env, stop, derive_rng(seed, i),
                                      record_epochs=False)
            else:
                trace = run_hybrid(policy, env, params,
                                   ModeSwitchRule.always_quantum(), stop,
                                   derive_rng(seed + 1, i), record_epochs=False)
            for j, t_j in enumerate(trace.intervals()):
                per_j[j][0].append(t_j)
                per_j[j][1].append(trace.q_in_interval(j))
        for j, (ts, qs) in per_j.items():
            ts = np.array(ts, dtype=np.float64)
            qs = np.array(qs, dtype=np.float64)
            if mode == "classical":
                target = np.mean(1.0 / qs)
                se = math.sqrt(ts.var(ddof=1) / ts.size
                               + (1.0 / qs).var(ddof=1) / qs.size)
                margin = (ts.mean() - target) / se
                passed = abs(margin) <= thresholds.SIGMA_MEAN
                name = f"classical_interval_t{j}_vs_inverse_q"
            else:
                target = np.mean((9.0 / 4.0) / np.sqrt(qs))
                se = math.sqrt(ts.var(ddof=1) / ts.size
                               + ((9.0 / 4.0) / np.sqrt(qs)).var(ddof=1) / qs.size)
                margin = (target - ts.mean()) / se
                passed = margin >= -thresholds.SIGMA_MEAN
                name = f"hybrid_interval_t{j}_vs_quadratic_bound"
            checks.append(BoundCheck(name, float(ts.mean()), float(target),
                                     float(margin), passed=passed))
    return checks


def _learning_ensemble(mode: str, n: int, seed: int, q_learn: float,
                       k_max: int | None = None,
                       budget: int = 10**6) -> LearningTimeSummary:
    env = BinaryTreeEnv(12, 5, path_seed=0)
    stop = StopRule(q_threshold=q_learn, max_epochs=budget)
    params = SearchParams(lam=6 / 5, alpha_o=1, k_max=k_max,
                          k_strategy="fixed" if mode == "nisq" else "boyer")
    switch = ModeSwitchRule.on_q_threshold(q_max_threshold(1, 1))
    traces = []
    for i in range(n):
        policy = HValueTreePolicy(12, beta=0.1)
        rng = derive_rng(seed, i)
        if mode == "classical":
            traces.append(run_classical(policy, env, stop, rng, record_epochs=False))
        else:
            traces.append(run_hybrid(policy, env, params, switch, stop, rng,
                                     record_epochs=False))
    return LearningTimeSummary.from_traces(traces, q_learn)


def suite_theorem2(scale: float = 1.0, seed: int = 37) -> list[BoundCheck]:
    n = _scaled(10**4, scale)
    q_learn = 0.3
    classical = _learning_ensemble("classical", n, seed, q_learn)
    hybrid = _learning_ensemble("hybrid", n, seed + 1, q_learn)
    check = theorem2_bound_check(classical, hybrid, alpha_s=9.0 / 4.0, alpha_o=1)
    censored = BoundCheck("theorem2_censored_traces",
                          classical.censored_count + hybrid.censored_count, 0,
                          None,
                          passed=classical.censored_count + hybrid.censored_count == 0)
    return [check, censored]


def suite_theorem3(scale: float = 1.0, seed: int = 53) -> list[BoundCheck]:
    n = _scaled(10**4, scale)
    q_learn = 0.025  # below q_kmax(4) ~ 0.0302, above the fresh Q = 2^-7
    classical = _learning_ensemble("classical", n, seed, q_learn)
    checks = []
    ratios = []
    for k_max in (1, 2, 4):
        nisq = _learning_ensemble("nisq", n, seed + k_max, q_learn, k_max=k_max)
        check = theorem3_bound_check(classical, nisq, alpha_o=1,
                                     k_max=k_max, q_l=q_learn)
        ratios.append(check.details["ratio"])
        checks.append(check)
    checks.append(BoundCheck("theorem3_ratio_monotone", ratios[-1], ratios[0],
                             None,
                             passed=ratios[0] > ratios[1] > ratios[2]))
    return checks


def run_suite(name: str, out_dir=None, scale: float = 1.0) -> list[BoundCheck]:
    if name not in SUITES:
        raise ContractViolation(f"unknown suite {name!r}; choose from {SUITES}")
    if name == "amplify":
        return suite_amplify(scale)
    if name == "theorem1":
        return suite_theorem1(scale, out_dir=out_dir)
    if name == "theorem2":
        return suite_theorem2(scale)
    if name == "theorem3":
        return suite_theorem3(scale)
    if name == "interval-laws":
        return suite_interval_laws(scale)
    checks = []
    for sub in ("amplify", "theorem1", "theorem2", "theorem3", "interval-laws"):
        checks.extend(run_suite(sub, out_dir=out_dir, scale=scale))
    return checks
