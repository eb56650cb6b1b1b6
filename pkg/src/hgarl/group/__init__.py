"""Knowledge exchange, action-selection rules and model adoption."""
from .adoption import AdoptionReport, adoption_source, maybe_adopt
from .agent import RULES, GroupAgent
from .bus import Bus, Mailbox, Member, PolicySet
from .messages import (KnowledgeMessage, ar_key, decode_frame, decode_message, encode_frame,
                       encode_message, recv_frame, send_frame)
from .rules import JOINT, ComboState, SelectionDecision, default_phi, policy_probs, rule_combo, rule_pa, rule_pm

__all__ = [
    "AdoptionReport", "adoption_source", "maybe_adopt", "RULES", "GroupAgent", "Bus", "Mailbox", "Member",
    "PolicySet", "KnowledgeMessage", "ar_key", "decode_frame", "decode_message", "encode_frame",
    "encode_message", "recv_frame", "send_frame", "JOINT", "ComboState", "SelectionDecision", "default_phi",
    "policy_probs", "rule_combo", "rule_pa", "rule_pm",
]
