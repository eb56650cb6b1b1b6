"""PPO with the clipped surrogate objective."""
from __future__ import annotations

import numpy as np

from ..nn import MlpModel, backward_from_cache, forward_cache, log_softmax
from ..rng import derive_seed, make_rng
from .a2c import a2c_targets, value_loss_and_grad
from .base import Learner, check_finite, entropy_logit_grad


def clipped_objective(ratio, advantage, epsilon: float):
    """Per-step min(r A, clip(r, 1-eps, 1+eps) A) and its derivative w.r.t. r.

    The derivative is A where the unclipped term is the active minimum and 0
    where the clipped (constant in r) term is.
    """
    ratio = np.asarray(ratio, dtype=np.float64)
    advantage = np.asarray(advantage, dtype=np.float64)
    unclipped = ratio * advantage
    clipped = np.clip(ratio, 1.0 - epsilon, 1.0 + epsilon) * advantage
    obj = np.minimum(unclipped, clipped)
    d_ratio = np.where(unclipped <= clipped, advantage, 0.0)
    return obj, d_ratio


def ppo_policy_loss_and_grad(policy: MlpModel, obs, actions, old_logp, advantages,
                             epsilon: float, entropy_coef: float):
    """L = -mean(L_clip) - beta mean(H)."""
    z, cache = forward_cache(policy, np.asarray(obs, dtype=np.float64))
    logp = log_softmax(z)
    p = np.exp(logp)
    n = len(actions)
    idx = np.arange(n)
    ratio = np.exp(logp[idx, actions] - old_logp)
    obj, d_ratio = clipped_objective(ratio, advantages, epsilon)
    ent, d_ent = entropy_logit_grad(p, logp)
    loss = -obj.mean() - entropy_coef * ent.mean()
    # d ratio / d logits = ratio * (onehot - p)
    coef = d_ratio * ratio
    dz = p * coef[:, None]
    dz[idx, actions] -= coef
    dz = (dz - entropy_coef * d_ent) / n
    clip_frac = float(np.mean(np.abs(ratio - 1.0) > epsilon))
    return float(loss), backward_from_cache(policy, cache, dz), float(obj.mean()), clip_frac


def normalize(adv: np.ndarray) -> np.ndarray:
    if len(adv) < 2:
        return adv - adv.mean()
    return (adv - adv.mean()) / (adv.std() + 1e-8)


class PPOLearner(Learner):
    algorithm = "ppo"
    value_kind = "v"

    def __init__(self, config, spec, seed):
        super().__init__(config, spec, seed)
        self.shuffle_rng = make_rng(derive_seed(seed, "ppo-shuffle"))

    def _update(self, data):
        cfg = self.config
        returns, adv = a2c_targets(self.value, data, cfg.gamma)
        if cfg.ppo_adv_norm:
            adv = normalize(adv)
        n = len(adv)
        idx = np.arange(n)
        old_logp = np.log(np.maximum(data["pi_old"][idx, data["actions"]], 1e-300))
        mb = min(cfg.ppo_minibatch, n)
        stats = {"policy_loss": 0.0, "value_loss": 0.0, "surrogate": 0.0, "clip_fraction": 0.0}
        steps = 0
        for _ in range(cfg.ppo_epochs):
            order = self.shuffle_rng.permutation(n)
            for start in range(0, n, mb):
                sel = order[start:start + mb]
                lp, g_pi, surr, cf = ppo_policy_loss_and_grad(
                    self.policy, data["obs"][sel], data["actions"][sel], old_logp[sel], adv[sel],
                    cfg.clip_epsilon, cfg.entropy_coef)
                lv, g_v = value_loss_and_grad(self.value, data["obs"][sel], returns[sel], cfg.value_coef)
                check_finite(np.array([lp, lv]))
                self._apply(g_pi, g_v)
                stats["policy_loss"] += lp
                stats["value_loss"] += lv
                stats["surrogate"] += surr
                stats["clip_fraction"] += cf
                steps += 1
        return {k: v / steps for k, v in stats.items()}
