"""Seedable, snapshot-able episodic environments with discrete actions."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .rng import make_rng


class ProtocolError(RuntimeError):
    """Environment used out of contract (e.g. stepping after a terminal)."""


@dataclass(frozen=True)
class EnvSpec:
    observation_dim: int
    action_count: int
    max_episode_steps: int
    reward_range: tuple[float, float]

    def __post_init__(self):
        if self.observation_dim < 1:
            raise ValueError("observation_dim must be positive")
        if self.action_count < 2:
            raise ValueError("action_count must be >= 2")
        if self.max_episode_steps < 1:
            raise ValueError("max_episode_steps must be >= 1")


@dataclass(frozen=True)
class StepResult:
    observation: np.ndarray
    reward: float
    terminal: bool


@dataclass(frozen=True)
class EnvState:
    data: Any
    rng_state: dict | None
    steps: int
    terminal: bool


class Env:
    """Base class.  Subclasses implement ``_initial_state``, ``_advance`` and ``_observe``.

    ``real_steps`` counts transitions made through :meth:`step` only;
    :meth:`lookahead` leaves it (and everything else) untouched.
    """

    name = "env"
    spec: EnvSpec

    def __init__(self):
        self.rng = make_rng(0)
        self.state: Any = None
        self.steps = 0
        self.terminal = True
        self.real_steps = 0

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = make_rng(seed)
        self.state = self._initial_state()
        self.steps = 0
        self.terminal = False
        return self._observe()

    def step(self, action: int) -> StepResult:
        result = self._transition(action)
        self.real_steps += 1
        return result

    def _transition(self, action: int) -> StepResult:
        if self.terminal:
            raise ProtocolError("step() called on a terminal environment; call reset() first")
        action = int(action)
        if not 0 <= action < self.spec.action_count:
            raise ProtocolError(f"action {action} outside [0, {self.spec.action_count})")
        reward, done = self._advance(action)
        self.steps += 1
        if self.steps >= self.spec.max_episode_steps:
            done = True
        self.terminal = done
        return StepResult(self._observe(), float(reward), bool(done))

    def snapshot(self) -> EnvState:
        return EnvState(copy.deepcopy(self.state), self.rng.bit_generator.state, self.steps, self.terminal)

    def restore(self, snap: EnvState) -> None:
        self.state = copy.deepcopy(snap.data)
        if snap.rng_state is not None:
            self.rng.bit_generator.state = snap.rng_state
        self.steps = snap.steps
        self.terminal = snap.terminal

    def lookahead(self, action: int) -> StepResult:
        """Result of taking ``action`` now, without consuming a real transition."""
        snap = self.snapshot()
        try:
            return self._transition(action)
        finally:
            self.restore(snap)

    def _initial_state(self):
        raise NotImplementedError

    def _advance(self, action: int) -> tuple[float, bool]:
        raise NotImplementedError

    def _observe(self) -> np.ndarray:
        raise NotImplementedError


class CartPole(Env):
    """Classic cart-pole balancing (Barto, Sutton & Anderson, 1983), Euler integration.

    Reward is +1 for every step including the failing one.
    """

    name = "cartpole"
    gravity = 9.8
    masscart = 1.0
    masspole = 0.1
    total_mass = masspole + masscart
    length = 0.5
    polemass_length = masspole * length
    force_mag = 10.0
    tau = 0.02
    theta_threshold = 12 * 2 * math.pi / 360
    x_threshold = 2.4

    def __init__(self, max_episode_steps: int = 200):
        super().__init__()
        self.spec = EnvSpec(4, 2, int(max_episode_steps), (1.0, 1.0))

    def _initial_state(self):
        return self.rng.uniform(-0.05, 0.05, size=4)

    def _advance(self, action):
        x, x_dot, theta, theta_dot = self.state
        force = self.force_mag if action == 1 else -self.force_mag
        costheta = math.cos(theta)
        sintheta = math.sin(theta)
        temp = (force + self.polemass_length * theta_dot**2 * sintheta) / self.total_mass
        thetaacc = (self.gravity * sintheta - costheta * temp) / (
            self.length * (4.0 / 3.0 - self.masspole * costheta**2 / self.total_mass))
        xacc = temp - self.polemass_length * thetaacc * costheta / self.total_mass
        x = x + self.tau * x_dot
        x_dot = x_dot + self.tau * xacc
        theta = theta + self.tau * theta_dot
        theta_dot = theta_dot + self.tau * thetaacc
        self.state = np.array([x, x_dot, theta, theta_dot])
        failed = abs(x) > self.x_threshold or abs(theta) > self.theta_threshold
        return 1.0, failed

    def _observe(self):
        return np.array(self.state, dtype=np.float64)


# up, right, down, left
_MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))


class GridWorld(Env):
    """Deterministic grid navigation; observation is a one-hot of the agent cell.

    Each move costs ``step_cost``; entering the goal pays ``goal_reward`` and ends
    the episode.  Bumping into a wall or the border leaves the agent in place.
    """

    name = "gridworld"

    def __init__(self, size: int = 4, walls=(), start=(0, 0), goal=None,
                 max_episode_steps: int = 100, step_cost: float = -0.01, goal_reward: float = 1.0):
        super().__init__()
        self.rows = self.cols = int(size)
        self._configure(set(map(tuple, walls)), tuple(start),
                        tuple(goal) if goal is not None else (self.rows - 1, self.cols - 1),
                        max_episode_steps, step_cost, goal_reward)

    def _configure(self, walls, start, goal, max_episode_steps, step_cost, goal_reward):
        self.walls = frozenset(walls)
        self.start = start
        self.goal = goal
        self.step_cost = float(step_cost)
        self.goal_reward = float(goal_reward)
        for cell in (start, goal):
            if not self._inside(cell) or cell in self.walls:
                raise ValueError(f"start/goal cell {cell} is outside the grid or a wall")
        self.spec = EnvSpec(self.rows * self.cols, 4, int(max_episode_steps),
                            (min(self.step_cost, self.goal_reward), max(self.step_cost, self.goal_reward)))

    @classmethod
    def from_map(cls, text: str, **kwargs) -> "GridWorld":
        """Build from a text map: ``#`` wall, ``S`` start, ``G`` goal, ``.`` floor."""
        lines = [ln.rstrip("\n") for ln in text.splitlines() if ln.strip()]
        if not lines or len({len(ln) for ln in lines}) != 1:
            raise ValueError("map must be a non-empty rectangle")
        walls, start, goal = set(), None, None
        for r, line in enumerate(lines):
            for c, ch in enumerate(line):
                if ch == "#":
                    walls.add((r, c))
                elif ch == "S":
                    start = (r, c)
                elif ch == "G":
                    goal = (r, c)
                elif ch != ".":
                    raise ValueError(f"unknown map character {ch!r} at row {r}, col {c}")
        if start is None or goal is None:
            raise ValueError("map needs exactly one S and one G")
        env = cls.__new__(cls)
        Env.__init__(env)
        env.rows, env.cols = len(lines), len(lines[0])
        env._configure(walls, start, goal, kwargs.get("max_episode_steps", 100),
                       kwargs.get("step_cost", -0.01), kwargs.get("goal_reward", 1.0))
        return env

    @classmethod
    def from_file(cls, path, **kwargs) -> "GridWorld":
        return cls.from_map(Path(path).read_text(encoding="utf-8"), **kwargs)

    def _inside(self, cell) -> bool:
        return 0 <= cell[0] < self.rows and 0 <= cell[1] < self.cols

    @property
    def position(self) -> tuple[int, int]:
        return self.state

    def _initial_state(self):
        return self.start

    def _advance(self, action):
        dr, dc = _MOVES[action]
        nxt = (self.state[0] + dr, self.state[1] + dc)
        if self._inside(nxt) and nxt not in self.walls:
            self.state = nxt
        if self.state == self.goal:
            return self.goal_reward, True
        return self.step_cost, False

    def _observe(self):
        obs = np.zeros(self.rows * self.cols)
        obs[self.state[0] * self.cols + self.state[1]] = 1.0
        return obs


ENVS = {"cartpole": CartPole, "gridworld": GridWorld}


def make_env(name: str, **params) -> Env:
    name = name.lower()
    if name not in ENVS:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVS)}")
    if name == "gridworld" and params.get("map_file"):
        path = params.pop("map_file")
        params.pop("size", None)
        return GridWorld.from_file(path, **params)
    params.pop("map_file", None)
    return ENVS[name](**params)
