"""Model adoption at batch boundaries (Combo only)."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction

from ..nn import forward
from .bus import PolicySet
from .messages import ar_key

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdoptionReport:
    adopted: bool
    source: int | None = None
    took_value: bool = False
    reason: str = ""


def adoption_source(owner_id: int, counts: dict, batch_size: int, ar_table: dict) -> tuple[int | None, str]:
    """The peer k satisfying all three conditions, if any.

    1. N_i^k is strictly the largest usage count;
    2. N_i^k >= N/2 (exact rational comparison);
    3. AR_k is the strict maximum over the group (unscored counts as -inf).
    """
    usage = {k: v for k, v in counts.items() if v > 0}
    if not usage:
        return None, "no selections recorded"
    top = max(usage.values())
    leaders = [k for k, v in usage.items() if v == top]
    if len(leaders) != 1:
        return None, "usage tie for first rank"
    k = leaders[0]
    if k == owner_id or not isinstance(k, int):
        return None, "own (or joint) decisions rank first"
    if Fraction(usage[k]) < Fraction(batch_size, 2):
        return None, f"N_i^k={usage[k]} < N/2={batch_size / 2}"
    ar_k = ar_key(ar_table.get(k))
    others = [ar_key(v) for j, v in ar_table.items() if j != k]
    if ar_table.get(k) is None or any(ar_k <= o for o in others):
        return None, "agent k does not hold the strictly highest accumulated reward"
    return k, "all conditions hold"


def maybe_adopt(owner_id: int, counts: dict, policy_set: PolicySet, learner, batch_size: int | None = None
                ) -> AdoptionReport:
    """Import k's models into ``learner`` when k qualifies, and relabel the pending batch.

    The pending batch becomes k's dataset: its collection-time action
    probabilities are replaced by those of the adopted policy.
    """
    n = batch_size if batch_size is not None else learner.batch_size
    k, reason = adoption_source(owner_id, counts, n, policy_set.ar_table())
    if k is None:
        return AdoptionReport(False, reason=reason)
    peer = policy_set[k]
    took_value = learner.import_models(peer.policy_bytes, peer.value_bytes)
    if len(learner.batch):
        obs = learner.batch.obs
        learner.batch.relabel(forward(learner.policy, obs).probs)
    log.info("agent %d adopted models of agent %d (value=%s)", owner_id, k, took_value)
    return AdoptionReport(True, k, took_value, reason)
