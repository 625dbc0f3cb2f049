"""Synchronous federated training: local rounds, episode-weighted averaging, broadcast.

Each round every agent trains a fixed number of episodes in its own
environment, then ships only its flattened actor/critic weights and episode
count to the aggregator.  No observations, actions, rewards, or replay
contents cross that boundary.  Aggregation is the episode-weighted mean
``sum(n_i * w_i) / sum(n_i)``, summed in ascending agent-id order so that
concurrent and serial execution produce bit-identical results.
"""

from __future__ import annotations

import dataclasses
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .container import save_container
from .ddpg import DdpgAgent, DdpgHyperparams, soft_update, train_episode
from .metrics import EpisodeMetrics
from .nn import MlpParams, flatten_params, mlp_meta, params_like, unflatten_params
from .seeding import derive_seed
from .sim.world import ScenarioConfig, TrafficWorld

OPTIMIZER_RESET = "reset"
OPTIMIZER_KEEP_LOCAL = "keep-local"


class AgentTrainingError(RuntimeError):
    """A member agent failed during its local training phase."""

    def __init__(self, agent_id: int, cause: BaseException):
        self.agent_id = agent_id
        super().__init__(f"agent {agent_id} failed during local training: {cause}")


@dataclass(frozen=True)
class AgentUpdate:
    """The only payload an agent may send to the aggregator."""

    agent_id: int
    actor_weights: np.ndarray
    critic_weights: np.ndarray
    episodes: int  # n_i for this round

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("an update must carry at least one episode")


@dataclass
class GlobalModel:
    actor: MlpParams
    critic: MlpParams
    target_actor: MlpParams
    target_critic: MlpParams
    round_idx: int = 0


@dataclass(frozen=True)
class AgentRoundStats:
    agent_id: int
    mean_reward: float
    collisions: int
    episodes: int
    episode_rewards: tuple[float, ...] = ()


@dataclass(frozen=True)
class RoundReport:
    round_idx: int
    per_agent: tuple[AgentRoundStats, ...]
    aggregation_wall_s: float
    checkpoint_path: str | None


@dataclass(frozen=True)
class FederationConfig:
    agents: int = 10
    rounds: int = 5
    episodes_per_round: int = 100
    hp: DdpgHyperparams = dataclasses.field(default_factory=DdpgHyperparams)
    scenarios: tuple[ScenarioConfig, ...] = ()  # one shared, or one per agent
    master_seed: int = 0
    optimizer_state: str = OPTIMIZER_RESET
    parallel: bool = False

    def __post_init__(self):
        if self.agents < 1 or self.rounds < 1 or self.episodes_per_round < 1:
            raise ValueError("agents, rounds, and episodes_per_round must all be >= 1")
        if self.optimizer_state not in (OPTIMIZER_RESET, OPTIMIZER_KEEP_LOCAL):
            raise ValueError(f"optimizer_state must be 'reset' or 'keep-local', got {self.optimizer_state!r}")
        if len(self.scenarios) not in (1, self.agents):
            raise ValueError("provide one shared scenario or one per agent")

    def scenario_for(self, agent_id: int) -> ScenarioConfig:
        return self.scenarios[0] if len(self.scenarios) == 1 else self.scenarios[agent_id]


def _validate_update(update: AgentUpdate) -> None:
    # runtime privacy assertion: exactly these four fields, weights + a count
    names = tuple(f.name for f in dataclasses.fields(update))
    if names != ("agent_id", "actor_weights", "critic_weights", "episodes"):
        raise TypeError(f"unexpected AgentUpdate fields: {names}")
    if not isinstance(update.actor_weights, np.ndarray) or update.actor_weights.ndim != 1:
        raise TypeError("actor_weights must be a flat array")
    if not isinstance(update.critic_weights, np.ndarray) or update.critic_weights.ndim != 1:
        raise TypeError("critic_weights must be a flat array")


def aggregate(updates: list[AgentUpdate]) -> tuple[np.ndarray, np.ndarray]:
    """Episode-weighted mean of actor and critic weight vectors.

    Summation runs in ascending agent-id order, so the result is invariant
    under permutations of the input list, bit for bit.
    """
    if not updates:
        raise ValueError("cannot aggregate an empty update list")
    ordered = sorted(updates, key=lambda u: u.agent_id)
    actor_len = ordered[0].actor_weights.shape[0]
    critic_len = ordered[0].critic_weights.shape[0]
    # summing deviations from the first agent keeps consensus (and the
    # single-agent case) exact: all deviations are 0.0, so the base returns
    # unchanged instead of round-tripping through (n*w)/n
    actor_base = ordered[0].actor_weights
    critic_base = ordered[0].critic_weights
    total = 0
    actor_dev = np.zeros(actor_len)
    critic_dev = np.zeros(critic_len)
    for u in ordered:
        _validate_update(u)
        if u.actor_weights.shape[0] != actor_len or u.critic_weights.shape[0] != critic_len:
            raise ValueError(f"agent {u.agent_id}: weight vector length mismatch")
        actor_dev += u.episodes * (u.actor_weights - actor_base)
        critic_dev += u.episodes * (u.critic_weights - critic_base)
        total += u.episodes
    return actor_base + actor_dev / total, critic_base + critic_dev / total


def broadcast(global_model: GlobalModel, agents: list[DdpgAgent], optimizer_state: str = OPTIMIZER_RESET) -> None:
    """Overwrite every agent's online nets with the global weights.

    Local targets re-sync to the new online weights; replay buffers are kept.
    """
    for agent in agents:
        agent.actor = unflatten_params(agent.actor, flatten_params(global_model.actor))
        agent.critic = unflatten_params(agent.critic, flatten_params(global_model.critic))
        agent.target_actor = params_like(agent.actor)
        agent.target_critic = params_like(agent.critic)
        if optimizer_state == OPTIMIZER_RESET:
            agent.reset_optimizers()


def _train_agent_round(
    config: FederationConfig, agent: DdpgAgent, round_idx: int
) -> tuple[AgentUpdate, AgentRoundStats, list[EpisodeMetrics]]:
    world = TrafficWorld(config.scenario_for(agent.agent_id))
    episodes: list[EpisodeMetrics] = []
    for e in range(config.episodes_per_round):
        episode_idx = round_idx * config.episodes_per_round + e
        episode_seed = derive_seed(config.master_seed, agent.agent_id, episode_idx)
        rng = np.random.Generator(np.random.PCG64(derive_seed(episode_seed, 1)))
        episodes.append(train_episode(agent, world, derive_seed(episode_seed, 0), rng))
    update = AgentUpdate(
        agent_id=agent.agent_id,
        actor_weights=flatten_params(agent.actor),
        critic_weights=flatten_params(agent.critic),
        episodes=config.episodes_per_round,
    )
    stats = AgentRoundStats(
        agent_id=agent.agent_id,
        mean_reward=float(np.mean([m.total_reward for m in episodes])),
        collisions=sum(m.collided for m in episodes),
        episodes=len(episodes),
        episode_rewards=tuple(m.total_reward for m in episodes),
    )
    return update, stats, episodes


def run_round(
    config: FederationConfig,
    global_model: GlobalModel,
    agents: list[DdpgAgent],
    round_idx: int,
    out_dir: Path | None = None,
    config_hash: str = "",
) -> RoundReport:
    """One federated round: local training, aggregation, global update, broadcast."""
    results: list[tuple[AgentUpdate, AgentRoundStats, list[EpisodeMetrics]]] = [None] * len(agents)

    def run_one(i: int) -> None:
        try:
            results[i] = _train_agent_round(config, agents[i], round_idx)
        except Exception as exc:
            raise AgentTrainingError(agents[i].agent_id, exc) from exc

    if config.parallel and len(agents) > 1:
        with ThreadPoolExecutor(max_workers=len(agents)) as pool:
            futures = [pool.submit(run_one, i) for i in range(len(agents))]
            for f in futures:
                f.result()
    else:
        for i in range(len(agents)):
            run_one(i)

    updates = [r[0] for r in results]
    stats = tuple(r[1] for r in results)

    t0 = time.perf_counter()
    actor_flat, critic_flat = aggregate(updates)
    global_model.actor = unflatten_params(global_model.actor, actor_flat)
    global_model.critic = unflatten_params(global_model.critic, critic_flat)
    global_model.target_actor = soft_update(global_model.target_actor, global_model.actor, config.hp.tau)
    global_model.target_critic = soft_update(global_model.target_critic, global_model.critic, config.hp.tau)
    global_model.round_idx = round_idx
    wall = time.perf_counter() - t0

    broadcast(global_model, agents, config.optimizer_state)

    ckpt_path = None
    if out_dir is not None:
        ckpt_path = str(save_round_checkpoint(Path(out_dir), global_model, updates, config_hash))
    return RoundReport(round_idx=round_idx, per_agent=stats, aggregation_wall_s=wall, checkpoint_path=ckpt_path)


def save_round_checkpoint(
    out_dir: Path, global_model: GlobalModel, updates: list[AgentUpdate], config_hash: str
) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    ordered = sorted(updates, key=lambda u: u.agent_id)
    path = out_dir / f"round_{global_model.round_idx}.ckpt"
    arrays = {
        "actor_params": flatten_params(global_model.actor),
        "critic_params": flatten_params(global_model.critic),
        "target_actor_params": flatten_params(global_model.target_actor),
        "target_critic_params": flatten_params(global_model.target_critic),
        "agent_episodes": np.array([u.episodes for u in ordered], dtype=np.int64),
    }
    meta = {
        "kind": "global_round",
        "round_idx": global_model.round_idx,
        "actor_net": mlp_meta(global_model.actor),
        "critic_net": mlp_meta(global_model.critic),
        "agent_ids": [u.agent_id for u in ordered],
        "config_hash": config_hash,
    }
    save_container(path, arrays, meta)
    manifest = {
        "round_idx": global_model.round_idx,
        "agent_episodes": {str(u.agent_id): u.episodes for u in ordered},
        "config_hash": config_hash,
    }
    (out_dir / f"round_{global_model.round_idx}.manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    return path


def init_global_model(hp: DdpgHyperparams, master_seed: int) -> GlobalModel:
    template = DdpgAgent.create(hp, seed=derive_seed(master_seed, 0xF0), agent_id=-1)
    return GlobalModel(
        actor=template.actor,
        critic=template.critic,
        target_actor=params_like(template.actor),
        target_critic=params_like(template.critic),
        round_idx=0,
    )


def run_training(
    config: FederationConfig, out_dir: Path | None = None, config_hash: str = ""
) -> tuple[GlobalModel, list[RoundReport]]:
    """Run all federated rounds from a fresh global init; returns model and reports."""
    global_model = init_global_model(config.hp, config.master_seed)
    agents = [
        DdpgAgent.create(config.hp, seed=derive_seed(config.master_seed, 0xA0, i), agent_id=i)
        for i in range(config.agents)
    ]
    broadcast(global_model, agents, config.optimizer_state)
    reports = []
    for r in range(config.rounds):
        reports.append(run_round(config, global_model, agents, r, out_dir, config_hash))
    return global_model, reports


def round_reports_csv(reports: list[RoundReport]) -> str:
    lines = ["round,agent_id,mean_reward,collisions,episodes"]
    for report in reports:
        for s in report.per_agent:
            lines.append(f"{report.round_idx},{s.agent_id},{s.mean_reward!r},{s.collisions},{s.episodes}")
    return "\n".join(lines) + "\n"
