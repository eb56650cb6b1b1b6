"""ACER without the trust-region step: Retrace critic targets, truncated
importance weights and the bias-correction term, plus experience replay.
"""
from __future__ import annotations

import numpy as np

from ..nn import MlpModel, backward_from_cache, forward, forward_cache, log_softmax
from ..rng import derive_seed
from .base import Learner, ReplayBuffer, check_finite, entropy_logit_grad


class DataIntegrityError(ValueError):
    """Stored behavior probabilities are unusable (zero for the taken action)."""


def truncation_weights(rho, c: float):
    """(min(c, rho), max(0, 1 - c/rho)) elementwise."""
    rho = np.asarray(rho, dtype=np.float64)
    with np.errstate(divide="ignore"):
        correction = np.maximum(0.0, 1.0 - c / rho)
    return np.minimum(c, rho), correction


def retrace(rewards, terminals, q_taken, v_next, rho, gamma: float, c: float) -> np.ndarray:
    """Backward recursion

        Q_ret[t] = R[t] + gamma V(s[t+1]) + gamma min(c, rho[t+1]) (Q_ret[t+1] - Q[t+1])

    A terminal step ends the recursion with Q_ret = R; the last step of a
    non-terminal segment uses R + gamma V(s_end+1) with no correction term.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    n = len(rewards)
    out = np.empty(n)
    rho_bar = np.minimum(c, np.asarray(rho, dtype=np.float64))
    for t in range(n - 1, -1, -1):
        if terminals[t]:
            out[t] = rewards[t]
        elif t == n - 1:
            out[t] = rewards[t] + gamma * v_next[t]
        else:
            out[t] = rewards[t] + gamma * v_next[t] + gamma * rho_bar[t + 1] * (out[t + 1] - q_taken[t + 1])
    return out


def _evaluate(policy: MlpModel, q_net: MlpModel, obs):
    p = forward(policy, obs).probs
    q = forward(q_net, obs)
    return p, q, (p * q).sum(axis=1)


def retrace_targets(data: dict, q_net: MlpModel, policy: MlpModel, gamma: float, c: float) -> np.ndarray:
    """Q_ret for a stored segment; importance weights pi(a|s)/mu(a|s) from ``data['mu']``."""
    actions = data["actions"]
    idx = np.arange(len(actions))
    mu_taken = data["mu"][idx, actions]
    if np.any(mu_taken <= 0) or not np.all(np.isfinite(mu_taken)):
        raise DataIntegrityError("behavior probability of a taken action must be positive")
    p, q, _ = _evaluate(policy, q_net, data["obs"])
    _, _, v_next = _evaluate(policy, q_net, data["next_obs"])
    rho = p[idx, actions] / mu_taken
    return retrace(data["rewards"], data["terminals"], q[idx, actions], v_next, rho, gamma, c)


def actor_coefficients(policy: MlpModel, q_net: MlpModel, data: dict, q_ret: np.ndarray, c: float):
    """Frozen weights of the actor gradient at the current parameters.

    taken[t]  = min(c, rho_t) (Q_ret[t] - V(s_t))
    others[t, a] = max(0, 1 - c/rho_t(a)) pi(a|s_t) (Q(s_t, a) - V(s_t))
    """
    actions = data["actions"]
    idx = np.arange(len(actions))
    p, q, v = _evaluate(policy, q_net, data["obs"])
    mu = np.maximum(data["mu"], 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho_all = np.where(mu > 0, p / np.where(mu > 0, mu, 1.0), np.inf)
    rho_bar, _ = truncation_weights(rho_all[idx, actions], c)
    _, corr = truncation_weights(rho_all, c)
    taken = rho_bar * (q_ret - v)
    others = corr * p * (q - v[:, None])
    return taken, others


def acer_policy_loss_and_grad(policy: MlpModel, obs, actions, taken, others, entropy_coef: float):
    """L = -mean(taken log pi(a_t|s_t) + sum_a others[a] log pi(a|s_t)) - beta mean(H)."""
    z, cache = forward_cache(policy, np.asarray(obs, dtype=np.float64))
    logp = log_softmax(z)
    p = np.exp(logp)
    n = len(actions)
    idx = np.arange(n)
    ent, d_ent = entropy_logit_grad(p, logp)
    loss = -np.mean(taken * logp[idx, actions] + (others * logp).sum(axis=1)) - entropy_coef * ent.mean()
    dz = p * (taken + others.sum(axis=1))[:, None] - others
    dz[idx, actions] -= taken
    dz = (dz - entropy_coef * d_ent) / n
    return float(loss), backward_from_cache(policy, cache, dz), float(ent.mean())


def critic_loss_and_grad(q_net: MlpModel, obs, actions, q_ret, value_coef: float):
    """L = value_coef * mean(0.5 (Q(s_t, a_t) - Q_ret[t])^2); its gradient is
    value_coef * (Q - Q_ret) grad Q, i.e. descent along (Q_ret - Q) grad Q."""
    z, cache = forward_cache(q_net, np.asarray(obs, dtype=np.float64))
    n = len(actions)
    idx = np.arange(n)
    err = z[idx, actions] - q_ret
    loss = value_coef * 0.5 * np.mean(err**2)
    dz = np.zeros_like(z)
    dz[idx, actions] = value_coef * err / n
    return float(loss), backward_from_cache(q_net, cache, dz)


class ACERLearner(Learner):
    algorithm = "acer"
    value_kind = "q"

    def __init__(self, config, spec, seed):
        super().__init__(config, spec, seed)
        self.replay = ReplayBuffer(config.replay_capacity, derive_seed(seed, "replay"))
        self.replay_skipped = 0

    def _train_segment(self, data):
        cfg = self.config
        q_ret = retrace_targets(data, self.value, self.policy, cfg.gamma, cfg.truncation_c)
        taken, others = actor_coefficients(self.policy, self.value, data, q_ret, cfg.truncation_c)
        lp, g_pi, ent = acer_policy_loss_and_grad(self.policy, data["obs"], data["actions"], taken, others,
                                                  cfg.entropy_coef)
        lv, g_v = critic_loss_and_grad(self.value, data["obs"], data["actions"], q_ret, cfg.value_coef)
        check_finite(np.array([lp, lv]))
        self._apply(g_pi, g_v)
        return lp, lv, ent

    def _update(self, data):
        lp, lv, ent = self._train_segment(data)
        self.replay.add(data)
        replayed = 0
        if self.config.replay_ratio and len(self.replay) >= self.config.replay_start:
            for _ in range(self.config.replay_ratio):
                seg = self.replay.sample()
                if seg is None:
                    self.replay_skipped += 1
                    continue
                self._train_segment(seg)
                replayed += 1
        return {"policy_loss": lp, "value_loss": lv, "entropy": ent, "replayed": replayed,
                "replay_skipped": self.replay_skipped}
