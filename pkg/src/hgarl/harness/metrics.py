"""AR_N tables, the T/T_G speed-up statistic and plot-ready learning curves."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass

import numpy as np

from ..records import MetricRecord


def smoothed_series(records, window: int = 10) -> dict[tuple[str, int], tuple[np.ndarray, np.ndarray]]:
    """(agent, seed) -> (end steps, trailing-mean episode rewards)."""
    grouped: dict[tuple[str, int], list[MetricRecord]] = defaultdict(list)
    for r in records:
        grouped[(r.agent_id, r.seed)].append(r)
    out = {}
    for key, recs in grouped.items():
        recs.sort(key=lambda r: r.end_step)
        steps = np.array([r.end_step for r in recs], dtype=np.int64)
        rewards = np.array([r.episode_reward for r in recs], dtype=np.float64)
        csum = np.concatenate([[0.0], np.cumsum(rewards)])
        idx = np.arange(1, len(rewards) + 1)
        lo = np.maximum(0, idx - window)
        out[key] = (steps, (csum[idx] - csum[lo]) / (idx - lo))
    return out


def _value_at(steps: np.ndarray, values: np.ndarray, n: int) -> float | None:
    k = int(np.searchsorted(steps, n, side="right")) - 1
    return None if k < 0 else float(values[k])


def _agent_seed_values(series, agent: str, n: int) -> list[float | None]:
    return [_value_at(*series[key], n) for key in sorted(k for k in series if k[0] == agent)]


def compute_ar_at(records, n: int, window: int = 10) -> dict[str, float | None]:
    """Per agent: mean over seeds of the smoothed reward of the last episode ending at or before step n.

    None (unscored) when any seed has no completed episode by step n.
    """
    series = smoothed_series(records, window)
    out = {}
    for agent in sorted({k[0] for k in series}):
        vals = _agent_seed_values(series, agent, n)
        out[agent] = None if any(v is None for v in vals) else float(np.mean(vals))
    return out


def mean_curve(records, agent: str, window: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Seed-mean smoothed curve evaluated at every episode end where all seeds are scored."""
    series = smoothed_series([r for r in records if r.agent_id == agent], window)
    if not series:
        return np.array([], dtype=np.int64), np.array([])
    points = np.unique(np.concatenate([s for s, _ in series.values()]))
    steps, vals = [], []
    for n in points:
        v = _agent_seed_values(series, agent, int(n))
        if any(x is None for x in v):
            continue
        steps.append(int(n))
        vals.append(float(np.mean(v)))
    return np.array(steps, dtype=np.int64), np.array(vals)


@dataclass
class SpeedupReport:
    agent: str
    algorithm: str
    rule: str
    peak: float | None
    t_group: int | None
    t_single: int | None
    r: float
    threshold: float | None

    def as_dict(self) -> dict:
        d = asdict(self)
        d["r"] = _json_float(self.r)
        return d


def _json_float(x: float):
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf"
    return x


def _meta(records) -> tuple[dict[str, str], set[int]]:
    algs: dict[str, str] = {}
    for r in records:
        algs.setdefault(r.agent_id, r.algorithm)
    return algs, {r.seed for r in records}


def compute_speedup(group_records, single_records, satisfactory_threshold: float | None = None,
                    window: int = 10, satisfactory_fraction: float = 0.2) -> list[SpeedupReport]:
    """r = T / T_G per agent present in both record sets.

    T_G is the earliest step where the group agent's seed-mean smoothed curve
    reaches its maximum; T is the earliest step where the single agent's
    curve reaches that same value.  r is inf if the single agent never does,
    nan if the group peak is below the satisfactory threshold (default:
    ``satisfactory_fraction`` of the single agent's best smoothed reward,
    when that best is positive).
    """
    g_alg, g_seeds = _meta(group_records)
    s_alg, s_seeds = _meta(single_records)
    common = sorted(set(g_alg) & set(s_alg))
    if not common:
        raise ValueError("group and single record sets share no agent")
    if g_seeds != s_seeds:
        raise ValueError(f"seed sets differ: group {sorted(g_seeds)} vs single {sorted(s_seeds)}")
    reports = []
    for agent in common:
        if g_alg[agent] != s_alg[agent]:
            raise ValueError(f"agent {agent}: algorithm {g_alg[agent]} vs {s_alg[agent]}")
        rule = next(r.rule for r in group_records if r.agent_id == agent)
        g_steps, g_vals = mean_curve(group_records, agent, window)
        s_steps, s_vals = mean_curve(single_records, agent, window)
        threshold = satisfactory_threshold
        if threshold is None and len(s_vals) and s_vals.max() > 0:
            # a fraction of a non-positive best score is not a meaningful bar; no threshold then
            threshold = satisfactory_fraction * float(s_vals.max())
        if not len(g_vals):
            reports.append(SpeedupReport(agent, g_alg[agent], rule, None, None, None, math.nan, threshold))
            continue
        peak = float(g_vals.max())
        t_g = int(g_steps[int(np.argmax(g_vals))])
        if threshold is not None and peak < threshold:
            reports.append(SpeedupReport(agent, g_alg[agent], rule, peak, t_g, None, math.nan, threshold))
            continue
        hit = np.nonzero(s_vals >= peak)[0]
        if not len(hit):
            reports.append(SpeedupReport(agent, g_alg[agent], rule, peak, t_g, None, math.inf, threshold))
            continue
        t_s = int(s_steps[hit[0]])
        reports.append(SpeedupReport(agent, g_alg[agent], rule, peak, t_g, t_s, t_s / t_g, threshold))
    return reports


def curve_table(records, agent: str, total_steps: int, window: int = 10, points: int = 100):
    """Rows (step, mean, std, std/sqrt(seeds), seeds) on an even step grid.

    std is the population standard deviation across seeds.
    """
    series = smoothed_series([r for r in records if r.agent_id == agent], window)
    n_seeds = len(series)
    rows = []
    for n in np.linspace(total_steps / points, total_steps, points):
        n = int(round(n))
        vals = _agent_seed_values(series, agent, n)
        if not vals or any(v is None for v in vals):
            continue
        arr = np.array(vals)
        std = float(arr.std())
        rows.append((n, float(arr.mean()), std, std / math.sqrt(n_seeds), n_seeds))
    return rows
