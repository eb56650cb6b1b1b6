"""CSV / JSON / gnuplot output of a finished experiment."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from ..records import MetricRecord
from .config import dump_config
from .metrics import compute_ar_at, curve_table

BASE_COLUMNS = ["seed", "agent_id", "algorithm", "rule", "episode", "end_step", "episode_reward",
                "adopted_from", "src_self", "src_joint"]


def csv_text(records, roster: list[str]) -> str:
    """Metric CSV; one ``src_<peer>`` column per roster member."""
    if not records:
        raise ValueError("no records to emit")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BASE_COLUMNS + [f"src_{name}" for name in roster])
    for r in records:
        w.writerow([r.seed, r.agent_id, r.algorithm, r.rule, r.episode, r.end_step, repr(float(r.episode_reward)),
                    ";".join(r.adopted_from), r.sources.get("self", 0), r.sources.get("joint", 0),
                    *(r.sources.get(name, 0) for name in roster)])
    return buf.getvalue()


def read_csv(path) -> list[MetricRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            sources = {}
            for key, val in row.items():
                if key.startswith("src_") and int(val):
                    sources[key[4:]] = int(val)
            out.append(MetricRecord(int(row["seed"]), row["agent_id"], row["algorithm"], row["rule"],
                                    int(row["episode"]), int(row["end_step"]), float(row["episode_reward"]),
                                    [s for s in row["adopted_from"].split(";") if s], sources))
    return out


def _ar_table(records, steps, window):
    return {str(n): compute_ar_at(records, n, window) for n in steps}


def summary(result) -> dict:
    cfg = result.config
    records = result.records
    return {
        "env": cfg.env,
        "env_params": cfg.env_params,
        "agents": cfg.agent_names,
        "algorithms": cfg.agents,
        "rule": cfg.effective_rule,
        "configured_rule": cfg.rule,
        "seeds": cfg.seeds,
        "total_steps": cfg.total_steps,
        "phi_fraction": cfg.phi_fraction,
        "exchange_interval": cfg.exchange_interval,
        "smoothing_window": cfg.smoothing_window,
        "episodes": {name: sum(r.agent_id == name for r in records) for name in cfg.agent_names},
        "ar_n": _ar_table(records, cfg.resolved_ar_steps(), cfg.smoothing_window),
        "adoptions": [e for e in result.events if e["kind"] == "adoption"],
        "numerical_failures": [e for e in result.events if e["kind"] == "numerical_failure"],
    }


def curve_text(records, agent: str, total_steps: int, window: int) -> str:
    lines = ["# step mean std std_over_sqrt_seeds seeds"]
    for step, mean, std, sem, n in curve_table(records, agent, total_steps, window):
        lines.append(f"{step} {mean!r} {std!r} {sem!r} {n}")
    return "\n".join(lines) + "\n"


def write_outputs(result, out_dir) -> Path:
    out = Path(out_dir)
    records = result.records
    if not records:
        raise ValueError("no completed episodes; nothing to emit")
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "curves").mkdir(exist_ok=True)
        (out / "models").mkdir(exist_ok=True)
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc
    cfg = result.config
    (out / "metrics.csv").write_text(csv_text(records, cfg.agent_names), encoding="utf-8", newline="")
    (out / "summary.json").write_text(json.dumps(summary(result), indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    (out / "config.txt").write_text(dump_config(cfg), encoding="utf-8")
    for name in cfg.agent_names:
        (out / "curves" / f"{name}.dat").write_text(
            curve_text(records, name, cfg.total_steps, cfg.smoothing_window), encoding="utf-8")
    for seed_result in result.seeds:
        for name, (policy, value) in seed_result.models.items():
            (out / "models" / f"seed{seed_result.seed}_{name}_policy.hgrl").write_bytes(policy)
            (out / "models" / f"seed{seed_result.seed}_{name}_value.hgrl").write_bytes(value)
    return out
