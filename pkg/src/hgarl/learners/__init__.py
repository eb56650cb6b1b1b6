"""A2C, PPO and ACER behind one learner interface."""
from .a2c import A2CLearner
from .acer import ACERLearner, DataIntegrityError, retrace, retrace_targets
from .base import (ALGORITHMS, Learner, LearnerConfig, NumericalError, ReplayBuffer,
                   TrajectoryBatch, bootstrap_returns)
from .ppo import PPOLearner, clipped_objective

LEARNERS = {"a2c": A2CLearner, "ppo": PPOLearner, "acer": ACERLearner}


def make_learner(config: LearnerConfig, spec, seed: int) -> Learner:
    return LEARNERS[config.algorithm](config, spec, seed)


__all__ = [
    "A2CLearner", "ACERLearner", "PPOLearner", "Learner", "LearnerConfig", "TrajectoryBatch",
    "ReplayBuffer", "NumericalError", "DataIntegrityError", "ALGORITHMS", "LEARNERS",
    "make_learner", "retrace", "retrace_targets", "bootstrap_returns", "clipped_objective",
]
