"""Advantage actor-critic with n-step bootstrapped advantages."""
from __future__ import annotations

import numpy as np

from ..nn import MlpModel, backward_from_cache, forward, forward_cache, log_softmax
from .base import Learner, bootstrap_returns, check_finite, entropy_logit_grad


def one_step_advantage(reward: float, gamma: float, v_next: float, v_now: float, terminal: bool) -> float:
    """A(s,a) = Q(s,a) - V(s) with Q = r + gamma V(s') (Q = r at a terminal s')."""
    q = reward if terminal else reward + gamma * v_next
    return q - v_now


def a2c_targets(value_net: MlpModel, data: dict, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Returns and advantages; both are constants for the gradient step."""
    values = forward(value_net, data["obs"])[:, 0]
    last_value = 0.0 if data["terminals"][-1] else float(forward(value_net, data["next_obs"][-1])[0])
    returns = bootstrap_returns(data["rewards"], data["terminals"], last_value, gamma)
    return returns, returns - values


def policy_loss_and_grad(policy: MlpModel, obs, actions, advantages, entropy_coef: float):
    """L = -mean(A log pi(a|s)) - beta mean(H(pi(.|s)))."""
    z, cache = forward_cache(policy, np.asarray(obs, dtype=np.float64))
    logp = log_softmax(z)
    p = np.exp(logp)
    n = len(actions)
    idx = np.arange(n)
    ent, d_ent = entropy_logit_grad(p, logp)
    loss = -np.mean(advantages * logp[idx, actions]) - entropy_coef * ent.mean()
    dz = p * advantages[:, None]
    dz[idx, actions] -= advantages
    dz = (dz - entropy_coef * d_ent) / n
    return float(loss), backward_from_cache(policy, cache, dz), float(ent.mean())


def value_loss_and_grad(value_net: MlpModel, obs, returns, value_coef: float):
    """L = value_coef * mean(0.5 (V(s) - R)^2)."""
    z, cache = forward_cache(value_net, np.asarray(obs, dtype=np.float64))
    err = z[:, 0] - returns
    n = len(returns)
    loss = value_coef * 0.5 * np.mean(err**2)
    dz = np.zeros_like(z)
    dz[:, 0] = value_coef * err / n
    return float(loss), backward_from_cache(value_net, cache, dz)


def a2c_losses(policy, value_net, data, returns, advantages, config):
    lp, g_pi, ent = policy_loss_and_grad(policy, data["obs"], data["actions"], advantages, config.entropy_coef)
    lv, g_v = value_loss_and_grad(value_net, data["obs"], returns, config.value_coef)
    return lp, lv, g_pi, g_v, ent


class A2CLearner(Learner):
    algorithm = "a2c"
    value_kind = "v"

    def _update(self, data):
        returns, adv = a2c_targets(self.value, data, self.config.gamma)
        lp, lv, g_pi, g_v, ent = a2c_losses(self.policy, self.value, data, returns, adv, self.config)
        check_finite(np.array([lp, lv]))
        gn_pi, gn_v = self._apply(g_pi, g_v)
        return {"policy_loss": lp, "value_loss": lv, "entropy": ent,
                "grad_norm_policy": gn_pi, "grad_norm_value": gn_v}
