"""Independent reference computations used by the tests."""
from __future__ import annotations

import numpy as np

from hgarl.nn import MlpModel, forward_cache


def fd_grad(loss, model: MlpModel, h: float = 1e-3) -> np.ndarray:
    """Central finite differences of ``loss()`` w.r.t. every parameter of ``model``.

    The step actually applied is measured from the float32 storage, so rounding
    of the perturbed parameter does not bias the quotient.
    """
    grad = np.empty(model.n_params)
    for j in range(model.n_params):
        orig = model.params[j]
        model.params[j] = orig + np.float32(h)
        plus_val, f_plus = float(model.params[j]), loss()
        model.params[j] = orig - np.float32(h)
        minus_val, f_minus = float(model.params[j]), loss()
        model.params[j] = orig
        grad[j] = (f_plus - f_minus) / (plus_val - minus_val)
    return grad


def rel_err(analytic, numeric, floor: float = 1e-4) -> np.ndarray:
    a = np.asarray(analytic)
    n = np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def clear_of_kinks(model: MlpModel, obs, margin: float = 0.02) -> bool:
    """True when no hidden pre-activation is within ``margin`` of the rectifier kink."""
    x = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    h = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        z = h @ w.astype(np.float64) + b
        if np.any(np.abs(z) < margin):
            return False
        h = np.maximum(z, 0)
    return True


def retrace_forward(rewards, terminals, q_taken, v_next, rho, gamma, c):
    """Forward expansion of the Retrace recursion, one explicit sum per start step.

    Q_ret[t] = sum_k (prod_{j=t+1..k} gamma*min(c, rho[j])) * (R[k] + gamma V[k+1] - gamma min(c,rho[k+1]) Q[k+1])
    where the trailing correction is absent at the segment end, and a terminal
    at k contributes R[k] only and stops the sum.
    """
    n = len(rewards)
    out = np.empty(n)
    for t in range(n):
        total = 0.0
        weight = 1.0
        for k in range(t, n):
            if terminals[k]:
                total += weight * rewards[k]
                break
            term = rewards[k] + gamma * v_next[k]
            if k + 1 < n:
                term -= gamma * min(c, rho[k + 1]) * q_taken[k + 1]
            total += weight * term
            if k + 1 < n:
                weight *= gamma * min(c, rho[k + 1])
        out[t] = total
    return out


def brute_force_return(rewards, terminal_last: bool, v_last_next: float, gamma: float) -> np.ndarray:
    """Discounted return from every step of a segment, bootstrapped at the end."""
    n = len(rewards)
    out = np.empty(n)
    for t in range(n):
        g = 0.0
        for k in range(t, n):
            g += gamma ** (k - t) * rewards[k]
        if not terminal_last:
            g += gamma ** (n - t) * v_last_next
        out[t] = g
    return out


def exhaustive_argmax(scores) -> int:
    """Lowest index attaining the maximum, by explicit scan."""
    best, best_i = None, None
    for i, s in enumerate(scores):
        if best is None or s > best:
            best, best_i = s, i
    return best_i


def adoption_oracle(owner, counts: dict, n: int, ar: dict):
    """Direct transcription of the three adoption conditions."""
    for k in ar:
        if k == owner:
            continue
        nk = counts.get(k, 0)
        ranks_first = all(nk > counts.get(j, 0) for j in set(counts) | set(ar) if j != k)
        half = 2 * nk >= n
        scored = ar[k] is not None
        highest = scored and all(ar[j] is None or ar[k] > ar[j] for j in ar if j != k)
        if ranks_first and half and highest:
            return k
    return None
