"""Command-line entry point.

Subcommands: train, eval, inspect, sim-run, export.  Every command validates
its full configuration before writing anything; exit status 0 means the
command's outputs were fully produced.  Log verbosity comes from the
FEDDRIVE_LOG environment variable (debug/info/warning/error).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, load_run_config
from .container import ContainerError, load_container
from .ddpg import policy_action
from .evaluation import evaluate, export_csv, export_json, summaries_from_json
from .federation import round_reports_csv, run_training
from .nn import MlpParams, mlp_from_parts
from .sim.world import TrafficWorld

log = logging.getLogger("feddrive")


def _setup_logging() -> None:
    level = os.environ.get("FEDDRIVE_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format="%(levelname)s %(message)s")


def load_actor(path: str | Path) -> MlpParams:
    """Actor weights from any checkpoint kind (mlp, agent, or global round)."""
    arrays, meta = load_container(path)
    kind = meta.get("kind")
    if kind == "mlp":
        return mlp_from_parts(meta["net"], arrays["params"])
    if kind in ("agent", "global_round"):
        return mlp_from_parts(meta["actor_net"], arrays["actor_params"])
    raise ContainerError(f"{path}: unknown checkpoint kind {kind!r}")


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_run_config(
        args.config,
        seed=args.seed,
        rounds=args.rounds,
        agents=args.agents,
        episodes=args.episodes,
        serial=args.serial,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    log.info(
        "training: %d agents x %d rounds x %d episodes (seed %d, %s)",
        cfg.federation.agents,
        cfg.federation.rounds,
        cfg.federation.episodes_per_round,
        cfg.master_seed,
        "serial" if args.serial else "parallel",
    )
    _, reports = run_training(cfg.federation, out_dir=out_dir, config_hash=cfg.config_hash)
    (out_dir / "round_reports.csv").write_text(round_reports_csv(reports))
    manifest = {
        "command": "train",
        "config_hash": cfg.config_hash,
        "master_seed": cfg.master_seed,
        "seed_derivation": "episode_seed = splitmix64_chain(master_seed, agent_id, episode_idx)",
        "build": f"feddrive {__version__}",
        "agents": cfg.federation.agents,
        "rounds": cfg.federation.rounds,
        "episodes_per_round": cfg.federation.episodes_per_round,
        "checkpoints": [r.checkpoint_path for r in reports],
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for r in reports:
        mean = sum(s.mean_reward for s in r.per_agent) / len(r.per_agent)
        log.info("round %d: mean reward %.3f", r.round_idx, mean)
    log.info("wrote %d checkpoints and round_reports.csv to %s", len(reports), out_dir)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config, seed=args.seed)
    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        raise ConfigError(f"checkpoint not found: {ckpt}")
    actor = load_actor(ckpt)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = evaluate(actor, cfg.eval_protocol, policy_id=args.policy_id)
    export_csv([summary], out_dir / "eval_summary.csv")
    export_json([summary], out_dir / "eval_summary.json")
    for row in summary.rows:
        log.info(
            "distance %6.1f m: %d/%d reached, %d collisions",
            row.distance_m,
            row.successes,
            row.episodes,
            row.collisions,
        )
    log.info("wrote eval_summary.csv and eval_summary.json to %s", out_dir)
    return 0


def _describe_net(label: str, net_meta: dict) -> str:
    sizes = net_meta["layer_sizes"]
    count = sum(a * b + b for a, b in zip(sizes, sizes[1:]))
    return f"{label}: sizes {sizes}, activations {net_meta['activations']}, {count} parameters"


def cmd_inspect(args: argparse.Namespace) -> int:
    arrays, meta = load_container(args.checkpoint)
    kind = meta.get("kind", "unknown")
    print(f"checkpoint kind: {kind}")
    if kind == "mlp":
        print(_describe_net("net", meta["net"]))
    elif kind == "agent":
        print(_describe_net("actor", meta["actor_net"]))
        print(_describe_net("critic", meta["critic_net"]))
        print(f"agent id: {meta['agent_id']}, episodes trained: {meta['episodes_trained']}")
    elif kind == "global_round":
        print(_describe_net("actor", meta["actor_net"]))
        print(_describe_net("critic", meta["critic_net"]))
        print(f"round index: {meta['round_idx']}")
        episodes = arrays["agent_episodes"]
        print(f"per-agent episodes: {episodes.tolist()} (total {int(episodes.sum())})")
        print(f"config hash: {meta.get('config_hash') or '(none)'}")
    else:
        raise ContainerError(f"unknown checkpoint kind {kind!r}")
    return 0


TRACE_COLUMNS = (
    "step",
    "time_s",
    "pos_x_m",
    "pos_y_m",
    "speed_mps",
    "accel_mps2",
    "reward",
    "collided",
    "reached",
    "braking",
    "waiting",
    "moving",
    "cause",
)


def cmd_sim_run(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config, seed=args.seed)
    actor = None
    if args.checkpoint is not None:
        ckpt = Path(args.checkpoint)
        if not ckpt.is_file():
            raise ConfigError(f"checkpoint not found: {ckpt}")
        actor = load_actor(ckpt)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "trace.csv"

    world = TrafficWorld(cfg.scenario)
    obs = world.reset(args.episode_seed)
    sc = cfg.scenario
    with open(trace_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_COLUMNS)
        step = 0
        while True:
            if actor is not None:
                action = policy_action(actor, obs.as_vector(), sc.accel_min_mps2, sc.accel_max_mps2)
            else:
                action = args.accel
            out = world.step(action)
            o, fl = out.observation, out.flags
            writer.writerow(
                [
                    step,
                    repr(world.time_s),
                    repr(o.pos_x),
                    repr(o.pos_y),
                    repr(o.speed),
                    repr(o.acceleration),
                    repr(out.reward),
                    int(fl.collided),
                    int(fl.reached_destination),
                    int(fl.braking),
                    int(fl.waiting_at_light),
                    int(fl.speed_nonzero),
                    out.cause,
                ]
            )
            obs = o
            step += 1
            if out.done:
                break
    log.info("episode ended after %d steps (%s); trace at %s", step, world.cause, trace_path)
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    src = Path(args.summary)
    if not src.is_file():
        raise ConfigError(f"summary file not found: {src}")
    summaries = summaries_from_json(src)
    export_csv(summaries, args.out)
    log.info("wrote %s", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="feddrive", description=__doc__)
    parser.add_argument("--version", action="version", version=f"feddrive {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run federated training")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--seed", type=int, default=None, help="override master_seed")
    p_train.add_argument("--serial", action="store_true", help="force serial agent execution")
    p_train.add_argument("--rounds", type=int, default=None)
    p_train.add_argument("--agents", type=int, default=None)
    p_train.add_argument("--episodes", type=int, default=None, help="episodes per agent per round")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a frozen policy over the distance protocol")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--policy-id", default="policy")
    p_eval.set_defaults(func=cmd_eval)

    p_inspect = sub.add_parser("inspect", help="print checkpoint architecture and metadata")
    p_inspect.add_argument("checkpoint")
    p_inspect.set_defaults(func=cmd_inspect)

    p_sim = sub.add_parser("sim-run", help="roll out one episode and write a step trace")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--checkpoint", default=None, help="drive with this actor instead of a constant")
    p_sim.add_argument("--accel", type=float, default=0.0, help="constant acceleration when no checkpoint")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--episode-seed", type=int, default=0)
    p_sim.set_defaults(func=cmd_sim_run)

    p_export = sub.add_parser("export", help="convert an eval summary JSON to CSV")
    p_export.add_argument("--summary", required=True)
    p_export.add_argument("--out", required=True)
    p_export.set_defaults(func=cmd_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ContainerError, ValueError) as exc:
        log.error("%s", exc)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.error("failed: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
