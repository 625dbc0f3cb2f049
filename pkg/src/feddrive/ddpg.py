"""Single-agent DDPG: replay buffer, OU exploration, actor-critic updates.

The critic regresses onto the target-network bootstrap value
``y = r + gamma * (1 - done) * Q'(s', mu'(s'))`` and the actor ascends the
deterministic policy gradient through the critic.  Episode truncation at the
step budget does not cut the bootstrap: only collision and arrival are
environment terminals.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, replace

import numpy as np

from .container import save_container, load_container
from .metrics import EpisodeMetrics, RolloutTrace, metrics_from_trace
from .nn import (
    AdamState,
    LayerParams,
    MlpParams,
    adam_step,
    backward,
    flatten_params,
    forward,
    init_adam,
    init_params,
    mlp_from_parts,
    mlp_meta,
    params_like,
    unflatten_params,
)
from .seeding import derive_seed
from .sim.world import CAUSE_COLLISION, CAUSE_DESTINATION, EgoObservation, TrafficWorld

STATE_DIM = 6
ACTION_DIM = 1

# Fixed divisors applied to raw observations before they enter the networks
# (positions and goal distance in units of 100 m, speed of a 20 m/s limit,
# heading of pi, acceleration of 5 m/s^2).  Raw meters-scale inputs saturate
# tanh layers; this keeps them O(1).  The same constant applies everywhere a
# network consumes an observation, so checkpoints need no extra metadata.
OBS_SCALE = np.array([100.0, 100.0, 20.0, math.pi, 5.0, 100.0])


def normalize_obs(vec: np.ndarray) -> np.ndarray:
    return np.asarray(vec, dtype=np.float64) / OBS_SCALE


@dataclass(frozen=True)
class Transition:
    state: np.ndarray  # (6,)
    action: float
    reward: float
    next_state: np.ndarray  # (6,)
    done: bool  # environment terminal (collision/arrival), not truncation


@dataclass(frozen=True)
class Batch:
    states: np.ndarray  # (n, 6)
    actions: np.ndarray  # (n, 1)
    rewards: np.ndarray  # (n, 1)
    next_states: np.ndarray  # (n, 6)
    dones: np.ndarray  # (n, 1) float 0/1


class ReplayBuffer:
    """Fixed-capacity ring buffer; eviction is strictly oldest-first."""

    def __init__(self, capacity: int = 50_000, state_dim: int = STATE_DIM):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._states = np.zeros((capacity, state_dim))
        self._actions = np.zeros((capacity, 1))
        self._rewards = np.zeros((capacity, 1))
        self._next_states = np.zeros((capacity, state_dim))
        self._dones = np.zeros((capacity, 1))
        self._write = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def store(self, t: Transition) -> None:
        if not (
            np.all(np.isfinite(t.state))
            and np.all(np.isfinite(t.next_state))
            and math.isfinite(t.action)
            and math.isfinite(t.reward)
        ):
            raise ValueError("transition contains non-finite values")
        i = self._write
        self._states[i] = t.state
        self._actions[i, 0] = t.action
        self._rewards[i, 0] = t.reward
        self._next_states[i] = t.next_state
        self._dones[i, 0] = 1.0 if t.done else 0.0
        self._write = (self._write + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform with-replacement draw over stored items."""
        if self._size < batch_size:
            raise ValueError(f"buffer holds {self._size} transitions, need {batch_size}")
        idx = rng.integers(0, self._size, size=batch_size)
        return Batch(
            states=self._states[idx].copy(),
            actions=self._actions[idx].copy(),
            rewards=self._rewards[idx].copy(),
            next_states=self._next_states[idx].copy(),
            dones=self._dones[idx].copy(),
        )


@dataclass(frozen=True)
class OuNoiseState:
    """Mean-reverting exploration noise: x += theta*(mu - x)*dt + sigma*sqrt(dt)*z."""

    x: float = 0.0
    mu: float = 0.0
    theta: float = 0.15
    sigma: float = 0.2
    dt: float = 1.0

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("theta must be > 0")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


def ou_sample(state: OuNoiseState, rng: np.random.Generator) -> tuple[float, OuNoiseState]:
    z = rng.standard_normal()
    x = state.x + state.theta * (state.mu - state.x) * state.dt + state.sigma * math.sqrt(state.dt) * z
    return x, replace(state, x=x)


def ou_stationary_variance(theta: float, sigma: float, dt: float) -> float:
    """Closed-form variance of the discrete recurrence (an AR(1) process)."""
    a = 1.0 - theta * dt
    return sigma**2 * dt / (1.0 - a * a)


@dataclass(frozen=True)
class DdpgHyperparams:
    gamma: float = 0.99
    tau: float = 0.005
    actor_lr: float = 5e-4
    critic_lr: float = 5e-4
    batch_size: int = 64
    buffer_capacity: int = 50_000
    accel_min_mps2: float = -4.5
    accel_max_mps2: float = 2.6
    actor_hidden: tuple[int, ...] = (400, 300)
    critic_hidden: tuple[int, ...] = (400, 300)
    ou_mu: float = 0.0
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    ou_dt: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValueError("learning rates must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.accel_min_mps2 >= self.accel_max_mps2:
            raise ValueError("accel bounds must satisfy min < max")


def scale_action(u: float | np.ndarray, a_min: float, a_max: float):
    """Affine map from the tanh range [-1, 1] onto [a_min, a_max]."""
    return a_min + (u + 1.0) * 0.5 * (a_max - a_min)


def policy_action(actor: MlpParams, obs_vec: np.ndarray, a_min: float, a_max: float) -> float:
    """Deterministic (noise-free) action for one raw observation vector."""
    out, _ = forward(actor, normalize_obs(obs_vec).reshape(1, -1))
    a = float(scale_action(out[0, 0], a_min, a_max))
    if not math.isfinite(a):
        raise ValueError("actor produced a non-finite action")
    return a


@dataclass
class DdpgAgent:
    agent_id: int
    hp: DdpgHyperparams
    actor: MlpParams
    critic: MlpParams
    target_actor: MlpParams
    target_critic: MlpParams
    actor_adam: AdamState
    critic_adam: AdamState
    buffer: ReplayBuffer
    noise: OuNoiseState
    episodes_trained: int = 0

    @classmethod
    def create(cls, hp: DdpgHyperparams, seed: int, agent_id: int = 0) -> "DdpgAgent":
        actor = init_params(
            [STATE_DIM, *hp.actor_hidden, ACTION_DIM],
            ["relu"] * len(hp.actor_hidden) + ["tanh"],
            seed=derive_seed(seed, 1),
        )
        critic = init_params(
            [STATE_DIM + ACTION_DIM, *hp.critic_hidden, 1],
            ["relu"] * len(hp.critic_hidden) + ["identity"],
            seed=derive_seed(seed, 2),
        )
        return cls(
            agent_id=agent_id,
            hp=hp,
            actor=actor,
            critic=critic,
            target_actor=params_like(actor),
            target_critic=params_like(critic),
            actor_adam=init_adam(actor),
            critic_adam=init_adam(critic),
            buffer=ReplayBuffer(hp.buffer_capacity),
            noise=OuNoiseState(x=hp.ou_mu, mu=hp.ou_mu, theta=hp.ou_theta, sigma=hp.ou_sigma, dt=hp.ou_dt),
        )

    def reset_optimizers(self) -> None:
        self.actor_adam = init_adam(self.actor)
        self.critic_adam = init_adam(self.critic)


def select_action(agent: DdpgAgent, obs: EgoObservation, explore: bool, rng: np.random.Generator) -> float:
    """Actor output scaled to the acceleration range, plus OU noise when exploring."""
    hp = agent.hp
    a = policy_action(agent.actor, obs.as_vector(), hp.accel_min_mps2, hp.accel_max_mps2)
    if explore:
        noise, agent.noise = ou_sample(agent.noise, rng)
        a += noise * 0.5 * (hp.accel_max_mps2 - hp.accel_min_mps2)
        a = float(np.clip(a, hp.accel_min_mps2, hp.accel_max_mps2))
    return a


def critic_targets(agent: DdpgAgent, batch: Batch) -> np.ndarray:
    """Bellman targets y = r + gamma * (1 - done) * Q'(s', mu'(s'))."""
    hp = agent.hp
    next_u, _ = forward(agent.target_actor, batch.next_states)
    next_a = scale_action(next_u, hp.accel_min_mps2, hp.accel_max_mps2)
    next_q, _ = forward(agent.target_critic, np.hstack([batch.next_states, next_a]))
    return batch.rewards + hp.gamma * (1.0 - batch.dones) * next_q


def critic_update(agent: DdpgAgent, batch: Batch) -> float:
    """One Adam step on the critic toward the Bellman targets; returns the pre-step MSE."""
    y = critic_targets(agent, batch)
    n = batch.states.shape[0]
    q, cache = forward(agent.critic, np.hstack([batch.states, batch.actions]))
    err = q - y
    loss = float(np.mean(err**2))
    if not math.isfinite(loss):
        raise ValueError("non-finite critic loss")
    grads, _ = backward(agent.critic, cache, 2.0 * err / n)
    agent.critic, agent.critic_adam = adam_step(agent.critic, grads, agent.critic_adam, agent.hp.critic_lr)
    return loss


def policy_gradient(
    actor: MlpParams, critic: MlpParams, states: np.ndarray, a_min: float, a_max: float
) -> tuple[tuple[LayerParams, ...], float]:
    """Gradient of mean Q(s, mu(s)) w.r.t. actor parameters, and the objective value."""
    n = states.shape[0]
    u, actor_cache = forward(actor, states)
    actions = scale_action(u, a_min, a_max)
    q, critic_cache = forward(critic, np.hstack([states, actions]))
    objective = float(np.mean(q))
    _, input_grad = backward(critic, critic_cache, np.full_like(q, 1.0 / n))
    dq_da = input_grad[:, states.shape[1]:]
    du = dq_da * 0.5 * (a_max - a_min)
    grads, _ = backward(actor, actor_cache, du)
    return grads, objective


def actor_update(agent: DdpgAgent, batch: Batch) -> float:
    """Gradient-ascent step on mean Q(s, mu(s)); returns the pre-step objective."""
    hp = agent.hp
    grads, objective = policy_gradient(
        agent.actor, agent.critic, batch.states, hp.accel_min_mps2, hp.accel_max_mps2
    )
    _ascend_actor(agent, grads)
    return objective


def apply_policy_gradient(agent: DdpgAgent, actor_cache, dq_da: np.ndarray) -> None:
    """Ascend the actor along an externally supplied dQ/da (chained through scaling)."""
    du = dq_da * 0.5 * (agent.hp.accel_max_mps2 - agent.hp.accel_min_mps2)
    grads, _ = backward(agent.actor, actor_cache, du)
    _ascend_actor(agent, grads)


def _ascend_actor(agent: DdpgAgent, grads: tuple[LayerParams, ...]) -> None:
    ascent = tuple(LayerParams(weights=-g.weights, bias=-g.bias) for g in grads)
    agent.actor, agent.actor_adam = adam_step(agent.actor, ascent, agent.actor_adam, agent.hp.actor_lr)


def soft_update(target: MlpParams, source: MlpParams, tau: float) -> MlpParams:
    """Elementwise convex combination tau*source + (1-tau)*target."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    t, s = flatten_params(target), flatten_params(source)
    if t.shape != s.shape:
        raise ValueError(f"shape mismatch: target {t.shape} vs source {s.shape}")
    return unflatten_params(target, tau * s + (1.0 - tau) * t)


def train_episode(
    agent: DdpgAgent,
    world: TrafficWorld,
    episode_seed: int,
    rng: np.random.Generator,
) -> EpisodeMetrics:
    """Run one exploratory episode with per-step updates once the buffer is warm."""
    hp = agent.hp
    obs = world.reset(episode_seed)
    agent.noise = replace(agent.noise, x=hp.ou_mu)
    speeds: list[float] = []
    rewards: list[float] = []
    while True:
        action = select_action(agent, obs, explore=True, rng=rng)
        out = world.step(action)
        terminal = out.cause in (CAUSE_COLLISION, CAUSE_DESTINATION)
        agent.buffer.store(
            Transition(
                state=normalize_obs(obs.as_vector()),
                action=action,
                reward=out.reward,
                next_state=normalize_obs(out.observation.as_vector()),
                done=terminal,
            )
        )
        speeds.append(out.observation.speed)
        rewards.append(out.reward)
        if len(agent.buffer) >= hp.batch_size:
            batch = agent.buffer.sample(hp.batch_size, rng)
            critic_update(agent, batch)
            actor_update(agent, batch)
            agent.target_actor = soft_update(agent.target_actor, agent.actor, hp.tau)
            agent.target_critic = soft_update(agent.target_critic, agent.critic, hp.tau)
        obs = out.observation
        if out.done:
            break
    agent.episodes_trained += 1
    trace = RolloutTrace(
        speeds_mps=tuple(speeds),
        rewards=tuple(rewards),
        step_length_s=world.scenario.step_length_s,
        cause=world.cause,
        distance_traveled_m=world.distance_traveled_m,
        route_freeflow_s=world.route_freeflow_time_s,
        traveled_freeflow_s=world.traveled_freeflow_time_s,
    )
    return metrics_from_trace(trace)


# ---------------------------------------------------------------- checkpoints


def save_agent_checkpoint(path, agent: DdpgAgent) -> None:
    """Four networks, both optimizer states, the episode counter, and hyperparameters."""
    arrays = {
        "actor_params": flatten_params(agent.actor),
        "critic_params": flatten_params(agent.critic),
        "target_actor_params": flatten_params(agent.target_actor),
        "target_critic_params": flatten_params(agent.target_critic),
        "actor_adam_m": agent.actor_adam.m,
        "actor_adam_v": agent.actor_adam.v,
        "critic_adam_m": agent.critic_adam.m,
        "critic_adam_v": agent.critic_adam.v,
    }
    meta = {
        "kind": "agent",
        "agent_id": agent.agent_id,
        "episodes_trained": agent.episodes_trained,
        "actor_net": mlp_meta(agent.actor),
        "critic_net": mlp_meta(agent.critic),
        "actor_adam_t": agent.actor_adam.t,
        "critic_adam_t": agent.critic_adam.t,
        "hyperparams": dataclasses.asdict(agent.hp),
    }
    save_container(path, arrays, meta)


def load_agent_checkpoint(path) -> DdpgAgent:
    arrays, meta = load_container(path)
    if meta.get("kind") != "agent":
        raise ValueError(f"{path}: not an agent checkpoint (kind={meta.get('kind')!r})")
    hp_raw = dict(meta["hyperparams"])
    hp_raw["actor_hidden"] = tuple(hp_raw["actor_hidden"])
    hp_raw["critic_hidden"] = tuple(hp_raw["critic_hidden"])
    hp = DdpgHyperparams(**hp_raw)
    agent = DdpgAgent.create(hp, seed=0, agent_id=int(meta["agent_id"]))
    agent.actor = mlp_from_parts(meta["actor_net"], arrays["actor_params"])
    agent.critic = mlp_from_parts(meta["critic_net"], arrays["critic_params"])
    agent.target_actor = mlp_from_parts(meta["actor_net"], arrays["target_actor_params"])
    agent.target_critic = mlp_from_parts(meta["critic_net"], arrays["target_critic_params"])
    agent.actor_adam = replace(agent.actor_adam, m=arrays["actor_adam_m"], v=arrays["actor_adam_v"], t=int(meta["actor_adam_t"]))
    agent.critic_adam = replace(agent.critic_adam, m=arrays["critic_adam_m"], v=arrays["critic_adam_v"], t=int(meta["critic_adam_t"]))
    agent.episodes_trained = int(meta["episodes_trained"])
    return agent
