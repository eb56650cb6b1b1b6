"""Per-episode metric records shared by the agent loop and the harness."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class MetricRecord:
    seed: int
    agent_id: str
    algorithm: str
    rule: str
    episode: int
    end_step: int
    episode_reward: float
    adopted_from: list[str] = field(default_factory=list)
    sources: dict[str, int] = field(default_factory=dict)

    @property
    def adopted(self) -> bool:
        return bool(self.adopted_from)
