"""Run configuration: flat ``key = value`` files, CLI overrides and validation."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..group.agent import RULES
from ..learners import ALGORITHMS, LearnerConfig


class ConfigError(ValueError):
    pass


def _learner_defaults() -> dict[str, LearnerConfig]:
    return {alg: LearnerConfig.defaults(alg) for alg in ALGORITHMS}


@dataclass
class RunConfig:
    env: str = "cartpole"
    env_params: dict[str, Any] = field(default_factory=dict)
    agents: list[str] = field(default_factory=lambda: ["a2c", "ppo", "acer"])
    learners: dict[str, LearnerConfig] = field(default_factory=_learner_defaults)
    rule: str = "combo"
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3, 4])
    total_steps: int = 200_000
    exchange_interval: str | int = "episode"
    phi_fraction: float = 0.8
    out: str | None = None
    deterministic: bool = False
    smoothing_window: int = 10
    ar_steps: list[int] = field(default_factory=list)

    @property
    def agent_names(self) -> list[str]:
        """Roster names: the algorithm, suffixed _2, _3... for repeats."""
        seen: dict[str, int] = {}
        names = []
        for alg in self.agents:
            seen[alg] = seen.get(alg, 0) + 1
            names.append(alg if seen[alg] == 1 else f"{alg}_{seen[alg]}")
        return names

    @property
    def effective_rule(self) -> str:
        """The rule in effect: a roster of one has no group, so it reports as ``single``."""
        return "single" if len(self.agents) == 1 else self.rule

    def resolved_ar_steps(self) -> list[int]:
        if self.ar_steps:
            return sorted(set(self.ar_steps))
        return sorted({max(1, self.total_steps // 4), max(1, self.total_steps // 2), self.total_steps})

    def validate(self) -> "RunConfig":
        errs = []
        if self.env not in ("cartpole", "gridworld"):
            errs.append(f"unknown env {self.env!r}")
        if not self.agents:
            errs.append("at least one agent is required")
        for alg in self.agents:
            if alg not in ALGORITHMS:
                errs.append(f"unknown algorithm {alg!r}")
        if len(self.agents) > 0xFFFF:
            errs.append("too many agents")
        if self.rule not in RULES:
            errs.append(f"rule must be one of {RULES}")
        if not self.seeds:
            errs.append("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            errs.append("seeds must be distinct")
        if any(s < 0 or s >= 1 << 64 for s in self.seeds):
            errs.append("seeds must be unsigned 64-bit integers")
        if self.total_steps < 1:
            errs.append("steps must be positive")
        if self.exchange_interval != "episode":
            try:
                if int(self.exchange_interval) < 1:
                    raise ValueError
            except (TypeError, ValueError):
                errs.append("exchange_interval must be 'episode' or a positive integer")
        if self.phi_fraction <= 0:
            errs.append("phi_fraction must be > 0")
        if self.smoothing_window < 1:
            errs.append("smoothing window must be >= 1")
        for alg, lc in self.learners.items():
            try:
                lc.validate()
            except ValueError as exc:
                errs.append(str(exc))
        if errs:
            raise ConfigError("; ".join(errs))
        return self

    def replace(self, **changes) -> "RunConfig":
        new = dataclasses.replace(self, **changes)
        new.learners = {k: dataclasses.replace(v) for k, v in self.learners.items()}
        new.env_params = dict(self.env_params)
        return new


_TOP_KEYS = {
    "env": "env", "agents": "agents", "rule": "rule", "seeds": "seeds", "steps": "total_steps",
    "total_steps": "total_steps", "exchange_interval": "exchange_interval", "phi_fraction": "phi_fraction",
    "out": "out", "deterministic": "deterministic", "window": "smoothing_window",
    "smoothing_window": "smoothing_window", "ar_steps": "ar_steps",
}
_ENV_KEYS = {"max_episode_steps": int, "size": int, "map_file": str, "step_cost": float, "goal_reward": float}


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _int_list(text: str) -> list[int]:
    return [int(x, 0) for x in text.replace(" ", "").split(",") if x]


def _coerce(value: str, kind) -> Any:
    if kind is bool or kind == "bool":
        return _parse_bool(value)
    if kind in (int, "int"):
        return int(value, 0)
    if kind in (float, "float"):
        return float(value)
    if kind in ("tuple[int, ...]",):
        return tuple(_int_list(value))
    return value.strip()


def apply_setting(cfg: RunConfig, key: str, value: str) -> None:
    """Apply one ``key = value`` pair (file line or ``--set``)."""
    key = key.strip().lower().replace("-", "_")
    value = value.strip()
    try:
        if key in _TOP_KEYS:
            attr = _TOP_KEYS[key]
            if attr == "agents":
                cfg.agents = [a.strip().lower() for a in value.split(",") if a.strip()]
            elif attr in ("seeds", "ar_steps"):
                setattr(cfg, attr, _int_list(value))
            elif attr == "exchange_interval":
                cfg.exchange_interval = "episode" if value.lower() == "episode" else int(value)
            elif attr == "deterministic":
                cfg.deterministic = _parse_bool(value)
            elif attr in ("total_steps", "smoothing_window"):
                setattr(cfg, attr, int(float(value)))
            elif attr == "phi_fraction":
                cfg.phi_fraction = float(value)
            else:
                setattr(cfg, attr, value.lower() if attr in ("env", "rule") else value)
            return
        prefix, _, name = key.partition(".")
        if not name:
            raise ConfigError(f"unknown config key {key!r}")
        if prefix == "env":
            if name not in _ENV_KEYS:
                raise ConfigError(f"unknown env parameter {name!r}")
            cfg.env_params[name] = _ENV_KEYS[name](value)
            return
        targets = list(cfg.learners) if prefix in ("learner", "all") else [prefix]
        for alg in targets:
            if alg not in cfg.learners:
                raise ConfigError(f"unknown config section {prefix!r}")
            lc = cfg.learners[alg]
            ftypes = {f.name: f.type for f in dataclasses.fields(lc)}
            if name not in ftypes or name == "algorithm":
                raise ConfigError(f"unknown learner parameter {name!r}")
            setattr(lc, name, _coerce(value, ftypes[name]))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from exc


def parse_config_text(text: str, cfg: RunConfig | None = None) -> RunConfig:
    cfg = cfg or RunConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        apply_setting(cfg, key, value)
    return cfg


def load_config(path, cfg: RunConfig | None = None) -> RunConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), cfg)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ",".join(str(x) for x in v)
    if v is None:
        return ""
    return str(v)


def dump_config(cfg: RunConfig) -> str:
    """Every resolved hyperparameter as ``key = value`` lines (re-loadable)."""
    lines = [
        f"env = {cfg.env}",
        *(f"env.{k} = {_fmt(v)}" for k, v in sorted(cfg.env_params.items())),
        f"agents = {_fmt(cfg.agents)}",
        f"rule = {cfg.rule}",
        f"seeds = {_fmt(cfg.seeds)}",
        f"steps = {cfg.total_steps}",
        f"exchange_interval = {cfg.exchange_interval}",
        f"phi_fraction = {cfg.phi_fraction!r}",
        f"deterministic = {_fmt(cfg.deterministic)}",
        f"window = {cfg.smoothing_window}",
        f"ar_steps = {_fmt(cfg.resolved_ar_steps())}",
    ]
    if cfg.out:
        lines.append(f"out = {cfg.out}")
    for alg in sorted(cfg.learners):
        for name, value in cfg.learners[alg].items():
            if name != "algorithm":
                lines.append(f"{alg}.{name} = {_fmt(value)}")
    return "\n".join(lines) + "\n"
