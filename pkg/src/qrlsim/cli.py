"""Command-line experiment runner.

``qrlsim simulate`` drives an ensemble from a config file and emits CSVs,
``qrlsim verify`` runs the named invariant suite, ``qrlsim analyze``
recomputes summaries from a previous run's agents.csv, and ``qrlsim config``
prints the documented schema with defaults.

Output schemas (comma-separated, header row, '.' decimal, no locale):

* curve.csv:   epoch,mean_reward,stderr,n_alive
* agents.csv:  agent_id,T,J,censored,total_epochs
* history CSVs (verify theorem1 --out): history,probability

Determinism: a fixed config and master seed reproduce agents.csv
byte-for-byte.  The only environment influence is QRLSIM_WORKERS (worker
process count); curve bytes are additionally fixed for a fixed worker count.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .agents import run_classical, run_hybrid
from .config import RunConfig, default_text
from .env import ContractViolation
from .seeding import derive_rng
from .stats import learning_time


class CurveAccumulator:
    """Streaming mean/stderr per epoch so ensembles never hold all traces."""

    def __init__(self, horizon: int):
        self.horizon = horizon
        self.sums = np.zeros(horizon)
        self.sumsq = np.zeros(horizon)
        self.counts = np.zeros(horizon, dtype=np.int64)

    def add(self, rewards: np.ndarray) -> None:
        r = rewards[: self.horizon]
        m = r.size
        self.sums[:m] += r
        self.sumsq[:m] += r * r
        self.counts[:m] += 1

    def merge(self, other: "CurveAccumulator") -> None:
        self.sums += other.sums
        self.sumsq += other.sumsq
        self.counts += other.counts

    def rows(self):
        for i in range(self.horizon):
            n = int(self.counts[i])
            if n == 0:
                yield (i + 1, "", "", 0)
                continue
            mean = self.sums[i] / n
            var = max(self.sumsq[i] / n - mean * mean, 0.0)
            if n > 1:
                var *= n / (n - 1)
            stderr = (var / n) ** 0.5
            yield (i + 1, repr(float(mean)), repr(float(stderr)), n)


def run_one_agent(config: RunConfig, env, agent_index: int):
    rng = derive_rng(config.seed, agent_index)
    policy = config.make_policy(env)
    stop = config.stop_rule()
    if config.mode == "classical":
        return run_classical(policy, env, stop, rng,
                             record_epochs=config.record_curve)
    return run_hybrid(policy, env, config.search_params(), config.switch(),
                      stop, rng, backend=config.backend,
                      record_epochs=config.record_curve,
                      firewall=config.firewall, q_min_rule=config.q_min_rule,
                      curve_counts_quantum=config.curve_accounting == "all_epochs")


def _agent_row(config: RunConfig, trace, agent_index: int):
    if config.q_learn is not None:
        t = learning_time(trace, config.q_learn)
        t = trace.total_epochs if t is None else t
    else:
        t = trace.total_epochs
    return (agent_index, t, len(trace.rewarded_history),
            int(trace.censored), trace.total_epochs)


def _run_block(config_text: str, lo: int, hi: int):
    config = RunConfig.from_text(config_text)
    env = config.make_env()
    rows = []
    curve = CurveAccumulator(config.horizon) if (config.record_curve and config.horizon) else None
    for idx in range(lo, hi):
        trace = run_one_agent(config, env, idx)
        rows.append(_agent_row(config, trace, idx))
        if curve is not None:
            curve.add(trace.rewards)
    return rows, curve


def worker_count() -> int:
    raw = os.environ.get("QRLSIM_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ContractViolation(f"QRLSIM_WORKERS must be an integer, got {raw!r}")
    return max(n, 1)


def simulate(config: RunConfig, out_dir=None, seed=None) -> dict:
    """Run the configured ensemble; returns the written file paths."""
    if seed is not None:
        config.seed = seed
    if out_dir is not None:
        config.out_dir = str(out_dir)
    config.validate()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = config.to_text()
    n = config.ensemble
    workers = worker_count()
    blocks = []
    if workers == 1 or n < 2 * workers:
        blocks.append(_run_block(text, 0, n))
    else:
        step = (n + workers - 1) // workers
        spans = [(lo, min(lo + step, n)) for lo in range(0, n, step)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            # chunk order, not completion order, fixes the reduction order
            blocks = list(pool.map(_run_block, [text] * len(spans),
                                   [s[0] for s in spans], [s[1] for s in spans]))

    paths = {}
    agents_path = out / "agents.csv"
    with open(agents_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["agent_id", "T", "J", "censored", "total_epochs"])
        for rows, _ in blocks:
            writer.writerows(rows)
    paths["agents"] = agents_path

    if config.record_curve and config.horizon:
        curve = CurveAccumulator(config.horizon)
        for _, partial in blocks:
            curve.merge(partial)
        curve_path = out / "curve.csv"
        with open(curve_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "mean_reward", "stderr", "n_alive"])
            writer.writerows(curve.rows())
        paths["curve"] = curve_path

    config_path = out / "config.ini"
    with open(config_path, "w", encoding="utf-8") as fh:
        fh.write(text)
    paths["config"] = config_path
    return paths


def analyze(in_dir) -> str:
    """Recompute ensemble summaries from a run's agents.csv."""
    path = Path(in_dir) / "agents.csv"
    ts, js, totals = [], [], []
    censored = 0
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if int(row["censored"]):
                censored += 1
            else:
                ts.append(float(row["T"]))
                js.append(float(row["J"]))
            totals.append(float(row["total_epochs"]))
    lines = [f"agents,{len(totals)}", f"censored,{censored}"]
    if ts:
        ts_a, js_a = np.array(ts), np.array(js)
        lines += [
            f"mean_T,{float(ts_a.mean())!r}",
            f"std_T,{float(ts_a.std(ddof=1)) if ts_a.size > 1 else 0.0!r}",
            f"mean_J,{float(js_a.mean())!r}",
            f"mean_total_epochs,{float(np.mean(totals))!r}",
        ]
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="qrlsim",
                                     description="hybrid agent ensemble simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run an ensemble from a config file")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--out", default=None)

    p_ver = sub.add_parser("verify", help="run an invariant suite")
    p_ver.add_argument("--suite", required=True)
    p_ver.add_argument("--out", default=None,
                       help="directory for suite artifacts (history CSVs)")
    p_ver.add_argument("--scale", type=float, default=1.0,
                       help="ensemble scale factor (1.0 = specified sizes)")

    p_ana = sub.add_parser("analyze", help="recompute summaries from agents.csv")
    p_ana.add_argument("--in", dest="in_dir", required=True)

    p_cfg = sub.add_parser("config", help="configuration schema tools")
    p_cfg.add_argument("--print-defaults", action="store_true")

    args = parser.parse_args(argv)

    if args.command == "simulate":
        config = RunConfig.load(args.config)
        paths = simulate(config, out_dir=args.out, seed=args.seed)
        for name, path in paths.items():
            print(f"{name}: {path}")
        return 0
    if args.command == "verify":
        from .verify import run_suite
        checks = run_suite(args.suite, out_dir=args.out, scale=args.scale)
        ok = True
        lines = []
        for check in checks:
            lines.append(check.line())
            print(lines[-1])
            ok = ok and check.passed
        if args.out is not None:
            report = Path(args.out)
            report.mkdir(parents=True, exist_ok=True)
            with open(report / "report.csv", "w", encoding="utf-8") as fh:
                fh.write("name,measured,bound,sigma_margin,verdict\n")
                fh.write("\n".join(lines) + "\n")
        return 0 if ok else 1
    if args.command == "analyze":
        sys.stdout.write(analyze(args.in_dir))
        return 0
    if args.command == "config":
        if args.print_defaults:
            sys.stdout.write(default_text())
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
