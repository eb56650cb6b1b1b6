"""In-process message bus with latest-wins mailboxes, and the policy set."""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass

import numpy as np

from ..nn import FormatError, MlpModel, deserialize, forward
from .messages import KnowledgeMessage, ar_key

log = logging.getLogger(__name__)


class Mailbox:
    """Latest message per sender; puts and drains never block for long."""

    def __init__(self):
        self._lock = threading.Lock()
        self._latest: dict[int, KnowledgeMessage] = {}

    def put(self, msg: KnowledgeMessage) -> bool:
        with self._lock:
            old = self._latest.get(msg.sender_id)
            if old is not None and old.update_counter >= msg.update_counter:
                return False
            self._latest[msg.sender_id] = msg
            return True

    def drain(self) -> list[KnowledgeMessage]:
        with self._lock:
            out = [self._latest[k] for k in sorted(self._latest)]
            self._latest.clear()
        return out

    def __len__(self) -> int:
        with self._lock:
            return len(self._latest)


class Bus:
    """Multiple producers, one mailbox per consumer."""

    def __init__(self, agent_ids):
        self.mailboxes = {int(a): Mailbox() for a in agent_ids}

    def publish(self, msg: KnowledgeMessage) -> None:
        for aid, box in self.mailboxes.items():
            if aid != msg.sender_id:
                box.put(msg)

    def drain(self, agent_id: int) -> list[KnowledgeMessage]:
        return self.mailboxes[agent_id].drain()


@dataclass
class Member:
    agent_id: int
    policy: MlpModel
    value: MlpModel | None
    ar: float | None
    update_counter: int = -1
    policy_bytes: bytes | None = None
    value_bytes: bytes | None = None

    def value_at(self, obs, probs: np.ndarray | None = None) -> float:
        """V(s) from a V-head, or sum_a pi(a|s) Q(s,a) from a Q-head."""
        out = forward(self.value, obs)
        if out.shape[-1] == 1:
            return float(out[0])
        if probs is None:
            probs = forward(self.policy, obs).probs
        return float(np.dot(probs, out))


class PolicySet:
    """The owner's live models plus the latest models received from each peer."""

    def __init__(self, owner_id: int, owner_policy: MlpModel, owner_value: MlpModel | None):
        self.owner_id = owner_id
        self.owner = Member(owner_id, owner_policy, owner_value, None)
        self.peers: dict[int, Member] = {}
        self.rejected = 0

    def set_owner(self, policy: MlpModel, value: MlpModel | None, ar: float | None) -> None:
        self.owner.policy = policy
        self.owner.value = value
        self.owner.ar = ar

    def absorb(self, messages) -> int:
        """Fold drained messages in; stale or mis-shaped ones are dropped. Returns accepted count."""
        accepted = 0
        for msg in messages:
            if msg.sender_id == self.owner_id:
                continue
            known = self.peers.get(msg.sender_id)
            if known is not None and known.update_counter >= msg.update_counter:
                continue
            try:
                policy = deserialize(msg.policy_model)
                value = deserialize(msg.value_model) if msg.value_model is not None else None
            except FormatError as exc:
                log.error("protocol error from agent %d: %s", msg.sender_id, exc)
                self.rejected += 1
                continue
            if not policy.same_architecture(self.owner.policy) or (
                    value is not None and value.layer_dims[:-1] != self.owner.policy.layer_dims[:-1]):
                log.error("protocol error from agent %d: layer_dims %s do not match group architecture %s",
                          msg.sender_id, policy.layer_dims, self.owner.policy.layer_dims)
                self.rejected += 1
                continue
            self.peers[msg.sender_id] = Member(msg.sender_id, policy, value, msg.accumulated_reward,
                                               msg.update_counter, msg.policy_model, msg.value_model)
            accepted += 1
        return accepted

    def members(self) -> list[Member]:
        """All members ordered by agent id (owner included)."""
        out = [self.owner, *self.peers.values()]
        return sorted(out, key=lambda m: m.agent_id)

    def __len__(self) -> int:
        return 1 + len(self.peers)

    def __contains__(self, agent_id: int) -> bool:
        return agent_id == self.owner_id or agent_id in self.peers

    def __getitem__(self, agent_id: int) -> Member:
        return self.owner if agent_id == self.owner_id else self.peers[agent_id]

    def ar_table(self) -> dict[int, float | None]:
        return {m.agent_id: m.ar for m in self.members()}

    def best_scored(self) -> int | None:
        """Agent with the strictly highest AR, or None on ties / nobody scored."""
        table = self.ar_table()
        ordered = sorted(table.items(), key=lambda kv: ar_key(kv[1]), reverse=True)
        if not ordered or ordered[0][1] is None:
            return None
        if len(ordered) > 1 and ar_key(ordered[1][1]) == ar_key(ordered[0][1]):
            return None
        return ordered[0][0]
