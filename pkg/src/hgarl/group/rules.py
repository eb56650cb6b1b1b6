"""Action selection over a policy set: PA, PM and Combo."""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..nn import forward
from .bus import PolicySet
from .messages import ar_key

log = logging.getLogger(__name__)

JOINT = "joint"
PM_FLOOR = 1e-12


@dataclass
class SelectionDecision:
    action: int
    source: int | str          # agent id, or JOINT for PA/PM
    probs: dict[int, np.ndarray]
    candidates: list[int] = field(default_factory=list)
    v_acc: dict[int, float] = field(default_factory=dict)
    chosen_peer: int | None = None
    nll: float | None = None
    lookaheads: int = 0
    skipped: list[int] = field(default_factory=list)


@dataclass
class ComboState:
    """Per-batch accumulators for the owner: V_acc per peer and usage counts N_i^k."""

    phi: float
    v_acc: dict[int, float] = field(default_factory=dict)
    counts: Counter = field(default_factory=Counter)

    def reset(self) -> None:
        self.v_acc = {}
        self.counts = Counter()

    @property
    def steps(self) -> int:
        return sum(self.counts.values())


def default_phi(action_count: int, fraction: float = 0.8) -> float:
    """``fraction`` of the NLL of a uniform policy, i.e. fraction * ln|A|."""
    return fraction * math.log(action_count)


def policy_probs(policy_set: PolicySet, obs) -> dict[int, np.ndarray]:
    return {m.agent_id: forward(m.policy, obs).probs for m in policy_set.members()}


def _probs(policy_set, obs, probs):
    return probs if probs is not None else policy_probs(policy_set, obs)


def rule_pa(policy_set: PolicySet, obs, probs: dict | None = None) -> SelectionDecision:
    """argmax_a sum_m pi_m(a|s); ties go to the lowest action index."""
    probs = _probs(policy_set, obs, probs)
    total = np.sum([probs[k] for k in sorted(probs)], axis=0)
    return SelectionDecision(int(np.argmax(total)), JOINT, probs)


def rule_pm(policy_set: PolicySet, obs, probs: dict | None = None) -> SelectionDecision:
    """argmax_a prod_m pi_m(a|s), evaluated as a sum of logs (probabilities floored at 1e-12)."""
    probs = _probs(policy_set, obs, probs)
    total = np.sum([np.log(np.maximum(probs[k], PM_FLOOR)) for k in sorted(probs)], axis=0)
    return SelectionDecision(int(np.argmax(total)), JOINT, probs)


def rule_combo(owner_id: int, policy_set: PolicySet, env, obs, state: ComboState, own_action: int,
               probs: dict | None = None) -> SelectionDecision:
    """Reward filter, accumulated next-state value argmax, then NLL threshold.

    Candidate actions are each peer's greedy action; next states come from
    ``env.lookahead`` so the real environment is not advanced.  A lookahead
    that ends the episode is valued 0.
    """
    probs = _probs(policy_set, obs, probs)
    own_ar = ar_key(policy_set[owner_id].ar)
    candidates = [m.agent_id for m in policy_set.members()
                  if m.agent_id != owner_id and ar_key(m.ar) > own_ar]
    decision = SelectionDecision(own_action, owner_id, probs, candidates=candidates)
    best, best_v = None, -math.inf
    for m_id in candidates:
        member = policy_set[m_id]
        if member.value is None:
            log.warning("agent %d has no value model; skipped as Combo candidate", m_id)
            decision.skipped.append(m_id)
            continue
        a_m = int(np.argmax(probs[m_id]))
        nxt = env.lookahead(a_m)
        decision.lookaheads += 1
        v = 0.0 if nxt.terminal else member.value_at(nxt.observation)
        state.v_acc[m_id] = state.v_acc.get(m_id, 0.0) + v
        if state.v_acc[m_id] > best_v:
            best, best_v = m_id, state.v_acc[m_id]
    decision.v_acc = {k: state.v_acc[k] for k in candidates if k in state.v_acc}
    if best is not None:
        a_best = int(np.argmax(probs[best]))
        p = float(probs[best][a_best])
        nll = -math.log(p) if p > 0 else math.inf
        decision.chosen_peer = best
        decision.nll = nll
        if nll < state.phi:
            decision.action = a_best
            decision.source = best
    state.counts[decision.source] += 1
    return decision
