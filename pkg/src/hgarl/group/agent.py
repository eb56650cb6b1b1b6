"""One group member's training loop, advanced one time step at a time."""
from __future__ import annotations

import logging
from collections import Counter

from ..learners import Learner, NumericalError
from ..nn import forward
from ..records import MetricRecord
from .adoption import maybe_adopt
from .bus import Bus, PolicySet
from .messages import KnowledgeMessage
from .rules import JOINT, ComboState, default_phi, rule_combo, rule_pa, rule_pm

log = logging.getLogger(__name__)

RULES = ("single", "pa", "pm", "combo")


class GroupAgent:
    """Owns a learner and its environment; talks to peers only through the bus.

    ``exchange_interval`` is ``"episode"`` (send/receive at every episode start)
    or a positive number of learner updates.
    """

    def __init__(self, agent_id: int, name: str, learner: Learner, env, rule: str, bus: Bus | None,
                 env_seed: int, names: dict[int, str], phi_fraction: float = 0.8,
                 exchange_interval="episode", report_rule: str | None = None, seed: int = 0):
        if rule not in RULES:
            raise ValueError(f"unknown rule {rule!r}")
        self.agent_id = agent_id
        self.name = name
        self.learner = learner
        self.env = env
        self.rule = rule
        self.report_rule = report_rule or rule
        self.bus = bus if rule != "single" else None
        self.names = names
        self.seed = seed
        self.exchange_interval = exchange_interval
        self.policy_set = PolicySet(agent_id, learner.policy, learner.value)
        self.combo = ComboState(default_phi(env.spec.action_count, phi_fraction))
        self.env_seed = env_seed
        self.obs = None
        self.t = 0
        self.episode = 0
        self.episode_reward = 0.0
        self.ar: float | None = None
        self.sent = 0
        self.episode_sources: Counter = Counter()
        self.episode_adoptions: list[str] = []
        self.records: list[MetricRecord] = []
        self.events: list[dict] = []
        self.decisions = 0
        self.on_decision = None  # optional hook(agent, SelectionDecision)

    # -- knowledge exchange ------------------------------------------------
    def message(self) -> KnowledgeMessage:
        policy, value = self.learner.export_models()
        self.sent += 1
        return KnowledgeMessage(self.agent_id, policy, value, self.ar, self.sent, self.t)

    def publish(self) -> None:
        if self.bus is not None:
            self.bus.publish(self.message())

    def receive(self) -> int:
        if self.bus is None:
            return 0
        return self.policy_set.absorb(self.bus.drain(self.agent_id))

    def exchange(self) -> None:
        self.publish()
        self.receive()

    # -- main loop ---------------------------------------------------------
    def _source_label(self, source) -> str:
        if source == JOINT:
            return "joint"
        if source == self.agent_id:
            return "self"
        return self.names[source]

    def _select(self, own_action, dist):
        ps = self.policy_set
        ps.set_owner(self.learner.policy, self.learner.value, self.ar)
        if self.rule == "single" or len(ps) == 1:
            # a policy set holding only the owner degenerates to the owner's own sampled action
            if self.rule == "combo":
                self.combo.counts[self.agent_id] += 1
            return own_action, self.agent_id, None
        probs = {self.agent_id: dist.probs}
        for pid, member in ps.peers.items():
            probs[pid] = forward(member.policy, self.obs).probs
        if self.rule == "pa":
            decision = rule_pa(ps, self.obs, probs)
        elif self.rule == "pm":
            decision = rule_pm(ps, self.obs, probs)
        else:
            decision = rule_combo(self.agent_id, ps, self.env, self.obs, self.combo, own_action, probs)
        if self.on_decision is not None:
            self.on_decision(self, decision)
        peer_probs = {self.names[k]: v for k, v in probs.items() if k != self.agent_id}
        return decision.action, decision.source, peer_probs

    def step(self) -> MetricRecord | None:
        """Advance one time step; returns a record when an episode completes."""
        if self.obs is None:
            self.obs = self.env.reset(self.env_seed)
        obs = self.obs
        own_action, dist, value = self.learner.act(obs)
        action, source, peer_probs = self._select(own_action, dist)
        self.decisions += 1
        res = self.env.step(action)
        self.t += 1
        self.learner.record_step(obs, action, res.reward, res.observation, res.terminal, dist, value, peer_probs)
        self.episode_reward += res.reward
        self.episode_sources[self._source_label(source)] += 1
        self.obs = res.observation

        if self.learner.ready_to_update():
            if self.rule == "combo":
                report = maybe_adopt(self.agent_id, self.combo.counts, self.policy_set, self.learner)
                if report.adopted:
                    src = self.names[report.source]
                    self.episode_adoptions.append(src)
                    self.events.append({"kind": "adoption", "seed": self.seed, "agent": self.name,
                                        "source": src, "step": self.t, "value_adopted": report.took_value})
            self.combo.reset()
            try:
                self.learner.update()
            except NumericalError as exc:
                self._abort(str(exc))
                return None
            if self.exchange_interval != "episode" and self.learner.updates % int(self.exchange_interval) == 0:
                self.exchange()

        if res.terminal:
            return self._finish_episode()
        return None

    def _finish_episode(self) -> MetricRecord:
        rec = MetricRecord(self.seed, self.name, self.learner.algorithm, self.report_rule, self.episode,
                           self.t, self.episode_reward, list(self.episode_adoptions),
                           dict(self.episode_sources))
        self.records.append(rec)
        self.ar = self.episode_reward
        self.episode += 1
        self._new_episode()
        if self.exchange_interval == "episode":
            self.exchange()
        return rec

    def _new_episode(self) -> None:
        self.episode_reward = 0.0
        self.episode_sources = Counter()
        self.episode_adoptions = []
        self.obs = self.env.reset()

    def _abort(self, reason: str) -> None:
        log.error("agent %s: numerical failure at step %d (%s); episode aborted", self.name, self.t, reason)
        self.events.append({"kind": "numerical_failure", "seed": self.seed, "agent": self.name,
                            "step": self.t, "episode": self.episode, "reason": reason})
        self.learner.clear_batch()
        self.combo.reset()
        self._new_episode()
