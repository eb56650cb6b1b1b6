"""Command line: ``hgarl run``, ``hgarl speedup``, ``hgarl phisweep``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import (ConfigError, RunConfig, compute_speedup, dump_config, load_config, phi_sweep, read_csv,
                      run_experiment)
from .harness.config import apply_setting
from .harness.sweep import best_point

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat 'key = value' config file; flags override it")
    p.add_argument("--env", choices=["cartpole", "gridworld"])
    p.add_argument("--agents", help="comma-separated roster, e.g. a2c,ppo,acer")
    p.add_argument("--rule", choices=["single", "pa", "pm", "combo"])
    p.add_argument("--seeds", help="comma-separated seeds")
    p.add_argument("--steps", type=float, help="time-step budget per agent")
    p.add_argument("--exchange-interval", help="'episode' or a number of updates")
    p.add_argument("--phi-fraction", type=float)
    p.add_argument("--window", type=int, help="smoothing window in episodes")
    p.add_argument("--out")
    p.add_argument("--deterministic", action="store_true", default=None,
                   help="round-robin interleaving in one thread (bit-reproducible)")
    p.add_argument("--ppo-adv-norm", dest="ppo_adv_norm", action="store_true", default=None)
    p.add_argument("--no-ppo-adv-norm", dest="ppo_adv_norm", action="store_false")
    p.add_argument("--optimizer", choices=["sgd", "adam"], help="optimizer for every learner")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="any config key, e.g. ppo.batch_size=2048 or env.max_episode_steps=500")
    p.add_argument("-v", "--verbose", action="store_true")


def build_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    flags = {
        "env": args.env, "agents": args.agents, "rule": args.rule, "seeds": args.seeds,
        "steps": None if args.steps is None else str(int(args.steps)),
        "exchange_interval": args.exchange_interval,
        "phi_fraction": None if args.phi_fraction is None else repr(args.phi_fraction),
        "window": None if args.window is None else str(args.window), "out": args.out,
    }
    for key, value in flags.items():
        if value is not None:
            apply_setting(cfg, key, value)
    if args.deterministic:
        cfg.deterministic = True
    if args.ppo_adv_norm is not None:
        cfg.learners["ppo"].ppo_adv_norm = args.ppo_adv_norm
    if args.optimizer:
        apply_setting(cfg, "learner.optimizer", args.optimizer)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        apply_setting(cfg, *item.split("=", 1))
    return cfg.validate()


def cmd_run(args) -> int:
    cfg = build_config(args)
    if args.dump_config:
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    if cfg.rule == "single" and args.exchange_interval:
        raise ConfigError("rule=single does not exchange knowledge; drop --exchange-interval")
    result = run_experiment(cfg)
    for seed in result.seeds:
        by_agent: dict[str, list[float]] = {}
        for r in seed.records:
            by_agent.setdefault(r.agent_id, []).append(r.episode_reward)
        summary = ", ".join(f"{a}: {len(v)} eps, last10={sum(v[-10:]) / len(v[-10:]):.2f}"
                            for a, v in sorted(by_agent.items()) if v)
        print(f"seed {seed.seed}: {summary}")
    if cfg.out:
        print(f"outputs written to {cfg.out}")
    return EXIT_NUMERICAL if result.all_seeds_failed else EXIT_OK


def _load_run(path: Path):
    summary = json.loads((path / "summary.json").read_text(encoding="utf-8"))
    return summary, read_csv(path / "metrics.csv")


def cmd_speedup(args) -> int:
    g_sum, g_recs = _load_run(Path(args.group))
    s_sum, s_recs = _load_run(Path(args.single))
    if g_sum["env"] != s_sum["env"] or g_sum.get("env_params") != s_sum.get("env_params"):
        raise ConfigError(f"environment mismatch: {g_sum['env']} vs {s_sum['env']}")
    window = args.window or g_sum.get("smoothing_window", 10)
    reports = compute_speedup(g_recs, s_recs, args.threshold, window)
    print(f"{'agent':<10} {'rule':<7} {'peak':>10} {'T_G':>9} {'T':>9} {'r':>9}")
    for rep in reports:
        peak = "-" if rep.peak is None else f"{rep.peak:.2f}"
        print(f"{rep.agent:<10} {rep.rule:<7} {peak:>10} {str(rep.t_group):>9} {str(rep.t_single):>9} "
              f"{rep.r:>9.2f}")
    payload = [rep.as_dict() for rep in reports]
    out = Path(args.out) if args.out else Path(args.group) / "speedup.json"
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_phisweep(args) -> int:
    cfg = build_config(args)
    if cfg.rule != "combo":
        raise ConfigError("the phi sweep tunes the Combo threshold; use --rule combo")
    points = phi_sweep(cfg, args.low, args.high, args.rounds)
    print(f"{'phi_fraction':>12}  score  per-agent AR_N")
    for p in points:
        ar = ", ".join(f"{k}={'unscored' if v is None else f'{v:.2f}'}" for k, v in sorted(p.ar.items()))
        print(f"{p.phi_fraction:>12.4f}  {p.score:.3f}  {ar}")
    best = best_point(points)
    print(f"best phi_fraction: {best.phi_fraction:.4f}")
    if cfg.out:
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        rows = [{"phi_fraction": p.phi_fraction, "score": p.score, "ar_n": p.ar} for p in points]
        (Path(cfg.out) / "phisweep.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n",
                                                      encoding="utf-8")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hgarl", description="Heterogeneous group-agent RL experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="train a group (or single agents) over several seeds")
    _add_run_options(run)
    run.add_argument("--dump-config", action="store_true", help="print the resolved configuration and exit")
    run.set_defaults(func=cmd_run)
    sp = sub.add_parser("speedup", help="T/T_G of a group run against a single-agent run")
    sp.add_argument("--group", required=True)
    sp.add_argument("--single", required=True)
    sp.add_argument("--threshold", type=float, help="satisfactory level (default: 20%% of single best)")
    sp.add_argument("--window", type=int)
    sp.add_argument("--out", help="JSON report path (default: <group>/speedup.json)")
    sp.add_argument("-v", "--verbose", action="store_true")
    sp.set_defaults(func=cmd_speedup)
    ps = sub.add_parser("phisweep", help="narrow a phi_fraction interval by short Combo runs")
    _add_run_options(ps)
    ps.add_argument("--low", type=float, required=True)
    ps.add_argument("--high", type=float, required=True)
    ps.add_argument("--rounds", type=int, default=3)
    ps.set_defaults(func=cmd_phisweep)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, FileNotFoundError) as exc:
        if args.command == "speedup":
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        raise


if __name__ == "__main__":
    sys.exit(main())
