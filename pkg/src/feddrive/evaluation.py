"""Frozen-policy evaluation: collision counts, travel delay, and average speed
per destination distance, with CSV/JSON export.

Each requested distance is realized as a straight corridor whose destination
node sits exactly that far from the start, so the straight-line start-to-goal
distance equals the requested value.  The same episode seeds are reused for
every distance and every policy, which makes comparisons between policies
paired rather than independent.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .ddpg import policy_action
from .metrics import RolloutTrace, average_speed, metrics_from_trace, travel_delay
from .nn import MlpParams
from .seeding import derive_seed
from .sim.network import straight_corridor
from .sim.world import ScenarioConfig, SpawnSpec, TrafficWorld

Policy = MlpParams | Callable[[np.ndarray], float]


class InfeasibleDistanceError(ValueError):
    """Requested destination distance cannot be realized on the corridor."""


@dataclass(frozen=True)
class EvalTemplate:
    """Scenario shape shared by all evaluation distances."""

    step_length_s: float = 1.0
    max_steps: int = 900
    destination_tolerance_m: float = 5.0
    speed_limit_mps: float = 20.0
    overrun_m: float = 50.0
    road_length_m: float | None = None  # fixed corridor length; None sizes it per distance
    background_count: int = 0
    background_spawns: tuple[SpawnSpec, ...] = ()
    accel_min_mps2: float = -4.5
    accel_max_mps2: float = 2.6
    bg_speed_factor_min: float = 0.8
    bg_speed_factor_max: float = 1.0
    master_seed: int = 0


@dataclass(frozen=True)
class EvalProtocol:
    episodes: int = 20
    distances_m: tuple[float, ...] = (10.0, 20.0, 52.0, 107.0, 207.0)
    template: EvalTemplate = field(default_factory=EvalTemplate)
    seeds: tuple[int, ...] | None = None  # one per episode; derived from the template seed if None

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if not self.distances_m or any(d <= 0 for d in self.distances_m):
            raise ValueError("distances must be positive")
        if self.seeds is not None and len(self.seeds) != self.episodes:
            raise ValueError("need exactly one seed per episode")

    def episode_seeds(self) -> tuple[int, ...]:
        if self.seeds is not None:
            return self.seeds
        return tuple(derive_seed(self.template.master_seed, 0xE7A1, e) for e in range(self.episodes))


@dataclass(frozen=True)
class DistanceResult:
    distance_m: float
    episodes: int
    collisions: int
    timeouts: int
    successes: int
    mean_travel_delay_s: float | None  # over successful episodes; None if none succeeded
    mean_avg_speed_mps: float
    success_rate: float


@dataclass(frozen=True)
class EvalSummary:
    policy_id: str
    rows: tuple[DistanceResult, ...]


def realize_scenario(template: EvalTemplate, distance_m: float) -> ScenarioConfig:
    """Corridor scenario with the destination at an exact straight-line distance."""
    if template.road_length_m is not None and distance_m > template.road_length_m:
        raise InfeasibleDistanceError(
            f"distance {distance_m} m exceeds the corridor; feasible range is "
            f"(0, {template.road_length_m}] m"
        )
    net = straight_corridor(
        distance_m,
        overrun_m=template.overrun_m,
        speed_limit_mps=template.speed_limit_mps,
    )
    return ScenarioConfig(
        network=net,
        ego_route="ego",
        destination_node="dest",
        destination_tolerance_m=template.destination_tolerance_m,
        background_count=template.background_count,
        background_spawns=template.background_spawns,
        step_length_s=template.step_length_s,
        max_steps=template.max_steps,
        master_seed=template.master_seed,
        accel_min_mps2=template.accel_min_mps2,
        accel_max_mps2=template.accel_max_mps2,
        bg_speed_factor_min=template.bg_speed_factor_min,
        bg_speed_factor_max=template.bg_speed_factor_max,
    )


def rollout(world: TrafficWorld, policy: Policy, episode_seed: int,
            a_min: float, a_max: float) -> RolloutTrace:
    """Greedy episode: no exploration noise, bit-reproducible per seed."""
    obs = world.reset(episode_seed)
    speeds: list[float] = []
    rewards: list[float] = []
    while True:
        if isinstance(policy, MlpParams):
            action = policy_action(policy, obs.as_vector(), a_min, a_max)
        else:
            action = float(policy(obs.as_vector()))
        out = world.step(action)
        speeds.append(out.observation.speed)
        rewards.append(out.reward)
        obs = out.observation
        if out.done:
            break
    return RolloutTrace(
        speeds_mps=tuple(speeds),
        rewards=tuple(rewards),
        step_length_s=world.scenario.step_length_s,
        cause=world.cause,
        distance_traveled_m=world.distance_traveled_m,
        route_freeflow_s=world.route_freeflow_time_s,
        traveled_freeflow_s=world.traveled_freeflow_time_s,
    )


def evaluate(policy: Policy, protocol: EvalProtocol, policy_id: str = "policy") -> EvalSummary:
    """Roll out the policy over every (distance, seed) condition and aggregate."""
    if isinstance(policy, MlpParams):
        if policy.in_dim != 6 or policy.out_dim != 1:
            raise ValueError(
                f"actor must map 6 state components to 1 action, got {policy.in_dim}->{policy.out_dim}"
            )
    t = protocol.template
    seeds = protocol.episode_seeds()
    rows = []
    for d_idx, distance in enumerate(protocol.distances_m):
        world = TrafficWorld(realize_scenario(t, distance))
        traces = [
            rollout(world, policy, derive_seed(seeds[e], d_idx), t.accel_min_mps2, t.accel_max_mps2)
            for e in range(protocol.episodes)
        ]
        metrics = [metrics_from_trace(tr) for tr in traces]
        successes = [m for m in metrics if m.reached]
        rows.append(
            DistanceResult(
                distance_m=distance,
                episodes=len(metrics),
                collisions=sum(m.collided for m in metrics),
                timeouts=sum(m.timed_out for m in metrics),
                successes=len(successes),
                mean_travel_delay_s=(
                    float(np.mean([m.travel_delay_s for m in successes])) if successes else None
                ),
                mean_avg_speed_mps=float(np.mean([m.average_speed_mps for m in metrics])),
                success_rate=len(successes) / len(metrics),
            )
        )
    return EvalSummary(policy_id=policy_id, rows=tuple(rows))


CSV_COLUMNS = (
    "policy_id",
    "distance_m",
    "episodes",
    "collisions",
    "mean_travel_delay_s",
    "mean_avg_speed_mps",
    "success_rate",
)


def export_csv(summaries: list[EvalSummary], path: str | Path) -> None:
    """One row per (policy, distance); full-precision floats via repr."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for summary in summaries:
            for row in summary.rows:
                writer.writerow(
                    [
                        summary.policy_id,
                        repr(row.distance_m),
                        row.episodes,
                        row.collisions,
                        "" if row.mean_travel_delay_s is None else repr(row.mean_travel_delay_s),
                        repr(row.mean_avg_speed_mps),
                        repr(row.success_rate),
                    ]
                )


def export_json(summaries: list[EvalSummary], path: str | Path) -> None:
    """JSON mirror of the CSV with identical fields."""
    payload = [
        {
            "policy_id": s.policy_id,
            "distance_m": r.distance_m,
            "episodes": r.episodes,
            "collisions": r.collisions,
            "timeouts": r.timeouts,
            "successes": r.successes,
            "mean_travel_delay_s": r.mean_travel_delay_s,
            "mean_avg_speed_mps": r.mean_avg_speed_mps,
            "success_rate": r.success_rate,
        }
        for s in summaries
        for r in s.rows
    ]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def summaries_from_json(path: str | Path) -> list[EvalSummary]:
    """Rebuild summaries from the JSON mirror (used by the export command)."""
    payload = json.loads(Path(path).read_text())
    by_policy: dict[str, list[DistanceResult]] = {}
    for item in payload:
        by_policy.setdefault(item["policy_id"], []).append(
            DistanceResult(
                distance_m=float(item["distance_m"]),
                episodes=int(item["episodes"]),
                collisions=int(item["collisions"]),
                timeouts=int(item["timeouts"]),
                successes=int(item["successes"]),
                mean_travel_delay_s=(
                    None if item["mean_travel_delay_s"] is None else float(item["mean_travel_delay_s"])
                ),
                mean_avg_speed_mps=float(item["mean_avg_speed_mps"]),
                success_rate=float(item["success_rate"]),
            )
        )
    return [EvalSummary(policy_id=pid, rows=tuple(rows)) for pid, rows in by_policy.items()]


__all__ = [
    "EvalProtocol",
    "EvalSummary",
    "EvalTemplate",
    "DistanceResult",
    "InfeasibleDistanceError",
    "average_speed",
    "travel_delay",
    "evaluate",
    "export_csv",
    "export_json",
    "realize_scenario",
    "rollout",
    "summaries_from_json",
]
