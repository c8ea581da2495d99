"""Run configuration: flat sectioned key-value files, fully validated.

Every tunable of the simulator is reachable from here; a config plus a
master seed pins a run byte-for-byte.  ``RunConfig.to_text`` and
``RunConfig.from_text`` round-trip losslessly, and ``default_text`` prints
the documented schema with defaults.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, fields

from .agents import ModeSwitchRule, StopRule
from .amplify import SearchParams, q_max_threshold
from .env import BinaryTreeEnv, ContractViolation, load_reward_table
from .policy import HValueTreePolicy, MapPolicy


@dataclass
class RunConfig:
    # [env]
    env_type: str = "binary_tree"          # binary_tree | table
    layers: int = 12
    reward_exponent: int = 5
    path_seed: int = 0
    correct_path: str | None = None        # explicit bit string overrides path_seed
    table_file: str | None = None
    # [agent]
    policy: str = "h_tree"                 # h_tree | map
    beta: float = 0.1
    update_rule: str = "additive"
    initial_h: float = 0.0
    # [search]
    backend: str = "analytic"              # analytic | statevector
    alpha_o: int = 2
    lam: float = 6.0 / 5.0
    k_max: int | None = None
    attempt_budget: int | None = None
    k_strategy: str = "auto"               # auto | boyer | fixed
    q_min_rule: str = "policy"             # policy | empirical
    # [switch]
    switch_rule: str = "q_threshold"
    q_stop: float | None = None            # default: q_max_threshold(alpha_o, 1)
    switch_window: int = 50
    switch_frequency: float = 0.3964
    j_stop: int | None = None
    # [run]
    mode: str = "hybrid"                   # classical | hybrid | nisq
    ensemble: int = 100
    seed: int = 0
    horizon: int | None = None
    q_learn: float | None = None
    max_rewards: int | None = None
    record_curve: bool = True
    curve_accounting: str = "all_epochs"   # all_epochs | verification_only
    firewall: bool = False
    # [output]
    out_dir: str = "out"

    def validate(self) -> "RunConfig":
        if self.env_type not in ("binary_tree", "table"):
            raise ContractViolation(f"unknown env type {self.env_type!r}")
        if self.env_type == "table" and not self.table_file:
            raise ContractViolation("table env needs table_file")
        if self.policy not in ("h_tree", "map"):
            raise ContractViolation(f"unknown policy {self.policy!r}")
        if self.mode not in ("classical", "hybrid", "nisq"):
            raise ContractViolation(f"unknown mode {self.mode!r}")
        if self.mode == "nisq" and self.k_max is None:
            raise ContractViolation("nisq mode needs k_max")
        if self.ensemble < 1:
            raise ContractViolation("ensemble must be >= 1")
        if self.horizon is None and self.q_learn is None and self.max_rewards is None:
            raise ContractViolation("need at least one of horizon/q_learn/max_rewards")
        if self.record_curve and self.horizon is None:
            raise ContractViolation("curve recording needs a horizon")
        if self.backend not in ("analytic", "statevector"):
            raise ContractViolation(f"unknown backend {self.backend!r}")
        if self.q_min_rule not in ("policy", "empirical"):
            raise ContractViolation(f"unknown q_min rule {self.q_min_rule!r}")
        if self.k_strategy not in ("auto", "boyer", "fixed"):
            raise ContractViolation(f"unknown k strategy {self.k_strategy!r}")
        if self.curve_accounting not in ("all_epochs", "verification_only"):
            raise ContractViolation(
                f"unknown curve accounting {self.curve_accounting!r}")
        if self.switch_rule not in ("always_quantum", "q_threshold",
                                    "reward_frequency", "reward_count"):
            raise ContractViolation(f"unknown switch rule {self.switch_rule!r}")
        if self.switch_rule == "reward_count" and self.j_stop is None:
            raise ContractViolation("reward_count switch needs j_stop")
        # constructor validation for the composed pieces
        self.search_params()
        return self

    # ------------------------------------------------------------------
    # builders

    def make_env(self):
        if self.env_type == "table":
            return load_reward_table(self.table_file)
        path = None
        if self.correct_path is not None:
            path = tuple(int(c) for c in self.correct_path)
        return BinaryTreeEnv(self.layers, self.reward_exponent,
                             correct_path=path, path_seed=self.path_seed)

    def make_policy(self, env):
        if self.policy == "h_tree":
            if any(a != 2 for a in env.step_arities):
                raise ContractViolation("h_tree policy needs a binary environment")
            return HValueTreePolicy(env.epoch_length, self.beta, self.initial_h)
        return MapPolicy(env.step_arities, self.beta, self.update_rule)

    def search_params(self) -> SearchParams:
        strategy = self.k_strategy
        if strategy == "auto":
            # the k_max-limited (nisq) regime plays its full coherent budget
            strategy = "fixed" if self.mode == "nisq" else "boyer"
        return SearchParams(lam=self.lam, alpha_o=self.alpha_o,
                            k_max=self.k_max, attempt_budget=self.attempt_budget,
                            k_strategy=strategy)

    def stop_rule(self) -> StopRule:
        return StopRule(q_threshold=self.q_learn, max_rewards=self.max_rewards,
                        max_epochs=self.horizon)

    def switch(self) -> ModeSwitchRule:
        if self.switch_rule == "always_quantum":
            return ModeSwitchRule.always_quantum()
        if self.switch_rule == "q_threshold":
            q_stop = self.q_stop
            if q_stop is None:
                q_stop = q_max_threshold(self.alpha_o, 1)
            return ModeSwitchRule.on_q_threshold(q_stop)
        if self.switch_rule == "reward_frequency":
            return ModeSwitchRule.on_reward_frequency(self.switch_window,
                                                      self.switch_frequency)
        return ModeSwitchRule.on_reward_count(self.j_stop)

    # ------------------------------------------------------------------
    # serialization

    _SECTIONS = {
        "env": ("env_type", "layers", "reward_exponent", "path_seed",
                "correct_path", "table_file"),
        "agent": ("policy", "beta", "update_rule", "initial_h"),
        "search": ("backend", "alpha_o", "lam", "k_max", "attempt_budget",
                   "k_strategy", "q_min_rule"),
        "switch": ("switch_rule", "q_stop", "switch_window", "switch_frequency",
                   "j_stop"),
        "run": ("mode", "ensemble", "seed", "horizon", "q_learn", "max_rewards",
                "record_curve", "curve_accounting", "firewall"),
        "output": ("out_dir",),
    }
    _FILE_KEYS = {"lam": "lambda"}

    def to_text(self) -> str:
        parser = configparser.ConfigParser()
        for section, names in self._SECTIONS.items():
            parser[section] = {}
            for name in names:
                value = getattr(self, name)
                key = self._FILE_KEYS.get(name, name)
                if value is None:
                    text = ""
                elif isinstance(value, float):
                    text = repr(value)  # shortest exact round-trip
                else:
                    text = str(value)
                parser[section][key] = text
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser()
        parser.read_string(text)
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        known = {}
        for section, names in cls._SECTIONS.items():
            for name in names:
                known[(section, cls._FILE_KEYS.get(name, name))] = name
        for section in parser.sections():
            for key, raw in parser[section].items():
                name = known.get((section, key))
                if name is None:
                    raise ContractViolation(f"unknown config key [{section}] {key}")
                kwargs[name] = cls._parse_value(name, raw, types[name])
        config = cls(**kwargs)
        return config.validate()

    @staticmethod
    def _parse_value(name: str, raw: str, type_str: str):
        raw = raw.strip()
        if raw == "" or raw == "None":
            if "None" in type_str:
                return None
            raise ContractViolation(f"config key {name} needs a value")
        if type_str.startswith("bool"):
            if raw not in ("True", "False", "true", "false", "1", "0"):
                raise ContractViolation(f"bad boolean for {name}: {raw!r}")
            return raw in ("True", "true", "1")
        if type_str.startswith("int"):
            return int(raw)
        if type_str.startswith("float"):
            return float(raw)
        return raw

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def default_text() -> str:
    """The documented schema: every key with its default value."""
    return RunConfig().to_text()
