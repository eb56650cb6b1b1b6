"""Common learner interface, trajectory storage and optimizers."""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Any

import numpy as np

from ..envs import EnvSpec
from ..nn import SOFTMAX, VALUE, MlpModel, deserialize, forward, serialize
from ..rng import derive_seed, make_rng

ALGORITHMS = ("a2c", "ppo", "acer")
PROB_FLOOR = 1e-8


class NumericalError(ArithmeticError):
    """Non-finite loss or gradient; the update was not applied."""


@dataclass
class LearnerConfig:
    algorithm: str
    gamma: float = 0.99
    learning_rate: float = 7e-4
    batch_size: int = 5
    clip_epsilon: float = 0.2
    truncation_c: float = 10.0
    ppo_epochs: int = 4
    ppo_minibatch: int = 64
    ppo_adv_norm: bool = True
    replay_capacity: int = 250
    replay_ratio: int = 4
    replay_start: int = 10
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    optimizer: str = "sgd"
    max_grad_norm: float = 0.5
    hidden: tuple[int, ...] = (64, 64)

    @classmethod
    def defaults(cls, algorithm: str) -> "LearnerConfig":
        algorithm = algorithm.lower()
        if algorithm == "a2c":
            return cls("a2c", batch_size=5)
        if algorithm == "ppo":
            return cls("ppo", batch_size=256, learning_rate=3e-4, entropy_coef=0.0)
        if algorithm == "acer":
            return cls("acer", batch_size=20)
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")

    def validate(self) -> "LearnerConfig":
        errors = []
        if self.algorithm not in ALGORITHMS:
            errors.append(f"algorithm must be one of {ALGORITHMS}")
        if not 0.0 < self.gamma <= 1.0:
            errors.append("gamma must be in (0, 1]")
        if self.learning_rate <= 0:
            errors.append("learning_rate must be > 0")
        for name in ("batch_size", "ppo_epochs", "ppo_minibatch", "replay_capacity"):
            if int(getattr(self, name)) < 1:
                errors.append(f"{name} must be a positive integer")
        if self.replay_ratio < 0 or self.replay_start < 0:
            errors.append("replay_ratio and replay_start must be >= 0")
        if self.clip_epsilon <= 0:
            errors.append("clip_epsilon must be > 0")
        if self.truncation_c < 1:
            errors.append("truncation_c must be >= 1")
        if self.entropy_coef < 0 or self.value_coef < 0:
            errors.append("entropy_coef and value_coef must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            errors.append("optimizer must be 'sgd' or 'adam'")
        if self.max_grad_norm < 0:
            errors.append("max_grad_norm must be >= 0 (0 disables clipping)")
        if not self.hidden or any(int(h) < 1 for h in self.hidden):
            errors.append("hidden must list positive layer widths")
        if errors:
            raise ValueError(f"{self.algorithm}: " + "; ".join(errors))
        return self

    def items(self) -> list[tuple[str, Any]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


@dataclass
class TrajectoryBatch:
    """Contiguous steps collected by one agent since its last update."""

    obs: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    next_obs: list = field(default_factory=list)
    terminals: list = field(default_factory=list)
    behavior_probs: list = field(default_factory=list)   # full mu(.|s_t)
    policy_probs: list = field(default_factory=list)     # full pi(.|s_t) at collection
    values: list = field(default_factory=list)           # own V(s_t) estimate
    peer_probs: dict = field(default_factory=dict)       # peer id -> {step index: probs}

    def __len__(self) -> int:
        return len(self.actions)

    def append(self, obs, action, reward, next_obs, terminal, behavior_probs, policy_probs, value,
               peer_probs: dict | None = None) -> None:
        t = len(self.actions)
        self.obs.append(np.asarray(obs, dtype=np.float64))
        self.actions.append(int(action))
        self.rewards.append(float(reward))
        self.next_obs.append(np.asarray(next_obs, dtype=np.float64))
        self.terminals.append(bool(terminal))
        self.behavior_probs.append(np.asarray(behavior_probs, dtype=np.float64))
        self.policy_probs.append(np.asarray(policy_probs, dtype=np.float64))
        self.values.append(float(value))
        for peer, probs in (peer_probs or {}).items():
            self.peer_probs.setdefault(peer, {})[t] = np.asarray(probs, dtype=np.float64)

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "obs": np.array(self.obs),
            "actions": np.array(self.actions, dtype=np.int64),
            "rewards": np.array(self.rewards),
            "next_obs": np.array(self.next_obs),
            "terminals": np.array(self.terminals, dtype=bool),
            "mu": np.array(self.behavior_probs),
            "pi_old": np.array(self.policy_probs),
            "values": np.array(self.values),
        }

    def relabel(self, policy_probs: np.ndarray) -> None:
        """Replace collection-time probabilities (and behavior probs) after adoption."""
        probs = np.asarray(policy_probs, dtype=np.float64)
        self.policy_probs = list(probs)
        self.behavior_probs = list(np.maximum(probs, PROB_FLOOR))


class ReplayBuffer:
    """Ring buffer of trajectory segments, each keeping its behavior probabilities."""

    def __init__(self, capacity: int, seed: int):
        self.capacity = int(capacity)
        self.segments: list[dict[str, np.ndarray]] = []
        self.next_slot = 0
        self.rng = make_rng(seed)

    def __len__(self) -> int:
        return len(self.segments)

    def add(self, segment: dict[str, np.ndarray]) -> None:
        seg = {k: v.copy() for k, v in segment.items()}
        if len(self.segments) < self.capacity:
            self.segments.append(seg)
        else:
            self.segments[self.next_slot] = seg
        self.next_slot = (self.next_slot + 1) % self.capacity

    def sample(self) -> dict[str, np.ndarray] | None:
        if not self.segments:
            return None
        return self.segments[int(self.rng.integers(len(self.segments)))]


class Optimizer:
    """Gradient-norm clipping followed by an SGD or Adam step (minimization)."""

    def __init__(self, kind: str, lr: float, max_grad_norm: float, n_params: int,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.kind = kind
        self.lr = lr
        self.max_grad_norm = max_grad_norm
        self.betas = betas
        self.eps = eps
        self.n = n_params
        self.reset()

    def reset(self) -> None:
        self.m = np.zeros(self.n)
        self.v = np.zeros(self.n)
        self.t = 0

    def step(self, model: MlpModel, grad: np.ndarray) -> float:
        norm = float(np.sqrt(grad @ grad))
        if self.max_grad_norm > 0 and norm > self.max_grad_norm:
            grad = grad * (self.max_grad_norm / norm)
        if self.kind == "sgd":
            delta = self.lr * grad
        else:
            b1, b2 = self.betas
            self.t += 1
            self.m = b1 * self.m + (1 - b1) * grad
            self.v = b2 * self.v + (1 - b2) * grad * grad
            mhat = self.m / (1 - b1**self.t)
            vhat = self.v / (1 - b2**self.t)
            delta = self.lr * mhat / (np.sqrt(vhat) + self.eps)
        model.params -= delta.astype(np.float32)
        return norm


def check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalError("non-finite loss or gradient")


def bootstrap_returns(rewards, terminals, last_value: float, gamma: float) -> np.ndarray:
    """n-step discounted returns inside a batch, bootstrapped with ``last_value``.

    ``last_value`` is V(s_{t+1}) of the final step and is ignored if that step is
    terminal.  A terminal in the middle of the batch cuts the sum.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    terminals = np.asarray(terminals, dtype=bool)
    out = np.empty_like(rewards)
    running = float(last_value)
    for t in range(len(rewards) - 1, -1, -1):
        if terminals[t]:
            running = rewards[t]
        else:
            running = rewards[t] + gamma * running
        out[t] = running
    return out


def entropy_logit_grad(probs: np.ndarray, logp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row entropy H and dH/dlogits."""
    h = -(probs * logp).sum(axis=1)
    return h, -probs * (logp + h[:, None])


class Learner:
    """act / record_step / ready_to_update / update / export_models / import_models."""

    algorithm = ""
    value_kind = "v"

    def __init__(self, config: LearnerConfig, spec: EnvSpec, seed: int):
        self.config = config.validate()
        self.spec = spec
        self.rng = make_rng(derive_seed(seed, "act"))
        init_rng = make_rng(derive_seed(seed, "init"))
        dims = [spec.observation_dim, *map(int, config.hidden)]
        self.policy = MlpModel.initialized(dims + [spec.action_count], SOFTMAX, init_rng)
        value_out = spec.action_count if self.value_kind == "q" else 1
        self.value = MlpModel.initialized(dims + [value_out], VALUE, init_rng)
        self.policy_opt = Optimizer(config.optimizer, config.learning_rate, config.max_grad_norm,
                                    self.policy.n_params)
        self.value_opt = Optimizer(config.optimizer, config.learning_rate, config.max_grad_norm,
                                   self.value.n_params)
        self.batch = TrajectoryBatch()
        self.updates = 0
        self.diagnostics: dict[str, float] = {}

    @property
    def batch_size(self) -> int:
        return self.config.batch_size

    def distribution(self, obs):
        return forward(self.policy, obs)

    def state_value(self, obs, probs=None) -> float:
        out = forward(self.value, obs)
        if self.value_kind == "q":
            if probs is None:
                probs = forward(self.policy, obs).probs
            return float(np.dot(probs, out))
        return float(out[0])

    def sample(self, probs: np.ndarray) -> int:
        u = self.rng.random()
        action = int(np.searchsorted(np.cumsum(probs), u, side="right"))
        return min(action, len(probs) - 1)

    def act(self, obs):
        """Sample an action from the own policy: (action, distribution, value estimate)."""
        dist = self.distribution(obs)
        action = self.sample(dist.probs)
        return action, dist, self.state_value(obs, dist.probs)

    def record_step(self, obs, action, reward, next_obs, terminal, dist, value, peer_probs=None) -> None:
        probs = np.maximum(dist.probs, PROB_FLOOR)
        self.batch.append(obs, action, reward, next_obs, terminal, probs, dist.probs, value, peer_probs)

    def ready_to_update(self) -> bool:
        return len(self.batch) >= self.batch_size

    def clear_batch(self) -> None:
        self.batch = TrajectoryBatch()

    def update(self) -> dict[str, float]:
        data = self.batch.arrays()
        self.clear_batch()
        diag = self._update(data)
        self.updates += 1
        self.diagnostics = diag
        return diag

    def _update(self, data: dict[str, np.ndarray]) -> dict[str, float]:
        raise NotImplementedError

    def _apply(self, g_pi: np.ndarray, g_v: np.ndarray) -> tuple[float, float]:
        check_finite(g_pi, g_v)
        return self.policy_opt.step(self.policy, g_pi), self.value_opt.step(self.value, g_v)

    def export_models(self) -> tuple[bytes, bytes]:
        return serialize(self.policy), serialize(self.value)

    def value_compatible(self, value_model: MlpModel) -> bool:
        return value_model.layer_dims == self.value.layer_dims and value_model.head == VALUE

    def import_models(self, policy_bytes: bytes, value_bytes: bytes | None = None) -> bool:
        """Replace the policy (and the value net if its head kind matches).

        Returns whether the value model was taken over.  Optimizer state of a
        replaced model is reset.
        """
        policy = deserialize(policy_bytes)
        if not policy.same_architecture(self.policy):
            raise ValueError(f"incompatible policy architecture {policy.layer_dims}")
        self.policy = policy
        self.policy_opt.reset()
        took_value = False
        if value_bytes is not None:
            value = deserialize(value_bytes)
            if self.value_compatible(value):
                self.value = value
                self.value_opt.reset()
                took_value = True
        return took_value
