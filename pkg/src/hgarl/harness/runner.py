"""The outer training loop: one group per seed, all agents stepped to the budget."""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field

from ..envs import make_env
from ..group import Bus, GroupAgent
from ..learners import make_learner
from ..records import MetricRecord
from ..rng import agent_seed, derive_seed
from .config import RunConfig

log = logging.getLogger(__name__)


@dataclass
class SeedResult:
    seed: int
    records: list[MetricRecord]
    events: list[dict]
    models: dict[str, tuple[bytes, bytes]]
    real_steps: dict[str, int] = field(default_factory=dict)

    @property
    def numerical_failures(self) -> int:
        return sum(e["kind"] == "numerical_failure" for e in self.events)


@dataclass
class ExperimentResult:
    config: RunConfig
    seeds: list[SeedResult]

    @property
    def records(self) -> list[MetricRecord]:
        return [r for s in self.seeds for r in s.records]

    @property
    def events(self) -> list[dict]:
        return [e for s in self.seeds for e in s.events]

    @property
    def all_seeds_failed(self) -> bool:
        return all(s.numerical_failures > 0 for s in self.seeds)


def build_agents(config: RunConfig, seed: int) -> list[GroupAgent]:
    names = config.agent_names
    id_names = dict(enumerate(names))
    bus = Bus(id_names) if config.rule != "single" else None
    agents = []
    for aid, (alg, name) in enumerate(zip(config.agents, names)):
        a_seed = agent_seed(seed, name)
        env = make_env(config.env, **config.env_params)
        learner = make_learner(config.learners[alg], env.spec, a_seed)
        agents.append(GroupAgent(
            aid, name, learner, env, config.rule, bus, derive_seed(a_seed, "env"), id_names,
            phi_fraction=config.phi_fraction, exchange_interval=config.exchange_interval,
            report_rule=config.effective_rule, seed=seed))
    specs = {a.env.spec for a in agents}
    if len(specs) != 1:
        raise ValueError("all agents in a group must share one environment spec")
    return agents


def _run_agent(agent: GroupAgent, steps: int) -> None:
    for _ in range(steps):
        agent.step()


def run_seed(config: RunConfig, seed: int, on_decision=None) -> SeedResult:
    agents = build_agents(config, seed)
    for a in agents:
        a.on_decision = on_decision
    # every agent starts out holding every member's initial models
    for a in agents:
        a.publish()
    for a in agents:
        a.receive()
    if config.deterministic or len(agents) == 1:
        for _ in range(config.total_steps):
            for a in agents:
                a.step()
    else:
        threads = [threading.Thread(target=_run_agent, args=(a, config.total_steps), name=a.name)
                   for a in agents]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
    records = sorted((r for a in agents for r in a.records), key=lambda r: (r.agent_id, r.episode))
    events = [e for a in agents for e in a.events]
    models = {a.name: a.learner.export_models() for a in agents}
    return SeedResult(seed, records, events, models, {a.name: a.env.real_steps for a in agents})


def run_experiment(config: RunConfig, on_decision=None, write: bool = True) -> ExperimentResult:
    """Run every seed in turn; write outputs to ``config.out`` when set."""
    config.validate()
    results = []
    for seed in config.seeds:
        log.info("seed %d: %s agents=%s rule=%s steps=%d", seed, config.env, config.agent_names,
                 config.rule, config.total_steps)
        results.append(run_seed(config, seed, on_decision))
    result = ExperimentResult(config, results)
    if write and config.out:
        from .emit import write_outputs
        write_outputs(result, config.out)
    return result
