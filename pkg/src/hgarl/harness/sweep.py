"""Interval-narrowing search for the Combo NLL threshold fraction."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import RunConfig
from .metrics import compute_ar_at

log = logging.getLogger(__name__)


@dataclass
class SweepPoint:
    phi_fraction: float
    ar: dict[str, float | None]

    @property
    def score(self) -> float:
        vals = [v for v in self.ar.values() if v is not None]
        return float(np.mean(vals)) if vals else float("-inf")


def run_evaluator(config: RunConfig) -> Callable[[float], dict[str, float | None]]:
    """Short run at a given phi fraction -> per-agent AR_N at the end of the budget."""
    from .runner import run_experiment

    def evaluate(phi_fraction: float):
        cfg = config.replace(phi_fraction=phi_fraction, out=None)
        result = run_experiment(cfg, write=False)
        return compute_ar_at(result.records, cfg.total_steps, cfg.smoothing_window)
    return evaluate


def phi_sweep(config: RunConfig | None, phi_low: float, phi_high: float, rounds: int,
              evaluate: Callable[[float], dict] | None = None) -> list[SweepPoint]:
    """Evaluate both ends and the midpoint, keep the half whose end scores better, repeat.

    Every evaluation is returned in the order it was made; values already
    evaluated are reused, so ``rounds`` rounds cost ``rounds + 2`` runs.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if phi_low > phi_high:
        raise ValueError("phi_low must not exceed phi_high")
    if evaluate is None:
        if config is None:
            raise ValueError("either a config or an evaluate callable is required")
        evaluate = run_evaluator(config)
    cache: dict[float, SweepPoint] = {}
    order: list[SweepPoint] = []

    def point(phi: float) -> SweepPoint:
        if phi not in cache:
            cache[phi] = SweepPoint(phi, evaluate(phi))
            order.append(cache[phi])
            log.info("phi_fraction=%.4f score=%.4f", phi, cache[phi].score)
        return cache[phi]

    if phi_low == phi_high:
        log.warning("degenerate phi interval [%g, %g]; single evaluation", phi_low, phi_high)
        point(phi_low)
        return order
    lo, hi = phi_low, phi_high
    for _ in range(rounds):
        mid = 0.5 * (lo + hi)
        p_lo, _, p_hi = point(lo), point(mid), point(hi)
        if p_lo.score >= p_hi.score:
            hi = mid
        else:
            lo = mid
    return order


def best_point(points: list[SweepPoint]) -> SweepPoint:
    return max(points, key=lambda p: p.score)
